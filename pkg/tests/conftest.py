"""Shared fixtures: the standard exterior W(r) = (1 + r)^-2 at E = 10 (and
its relativistic twin c = 10, E = c^2 + 10) carried through the pipeline once
per session."""
import math

import numpy as np
import pytest

from invscat import (EnergyContext, ShiftedPowerProfile, ZeroProfile, abel_transform, reconstruct_chi,
                     sample_deflection)
from invscat.radial import RadialScatteringContext

E_NR = 10.0
C_REL = 10.0
E_REL = C_REL**2 + 10.0


@pytest.fixture(scope="session")
def standard_profile():
    return ShiftedPowerProfile(1.0, 2.0, 1.0)


@pytest.fixture(scope="session")
def nr_ctx():
    return EnergyContext(E_NR)


@pytest.fixture(scope="session")
def rel_ctx():
    return EnergyContext(E_REL, C_REL)


@pytest.fixture(scope="session")
def rc_nr(nr_ctx, standard_profile):
    return RadialScatteringContext.build(nr_ctx, standard_profile)


@pytest.fixture(scope="session")
def rc_rel(rel_ctx, standard_profile):
    return RadialScatteringContext.build(rel_ctx, standard_profile)


@pytest.fixture(scope="session", params=["nonrel", "rel"])
def rc_any(request, rc_nr, rc_rel):
    return rc_nr if request.param == "nonrel" else rc_rel


@pytest.fixture(scope="session")
def rc_free_nr(nr_ctx):
    return RadialScatteringContext.build(nr_ctx, ZeroProfile(1.0))


@pytest.fixture(scope="session")
def rc_free_rel(rel_ctx):
    return RadialScatteringContext.build(rel_ctx, ZeroProfile(1.0))


@pytest.fixture(scope="session")
def pipeline_nr(rc_nr):
    curve = sample_deflection(rc_nr)
    table = abel_transform(curve)
    return curve, table, reconstruct_chi(table)


@pytest.fixture(scope="session")
def pipeline_rel(rc_rel):
    curve = sample_deflection(rc_rel)
    table = abel_transform(curve)
    return curve, table, reconstruct_chi(table)


def free_g(ctx, q):
    """Straight-line sweep: k q g = pi."""
    return math.pi / (ctx.angular_factor * np.asarray(q, dtype=float))
