"""Fixed-energy classical and relativistic scattering by short-range fields.

Forward problem: trajectories, free asymptotes and the scattering map for
-grad V + B v (and its relativistic analogue).  Inverse problem for
spherically symmetric exteriors: deflection function g(q), Abel integral,
perihelion function chi and recovery of the potential near infinity.
"""
from .dynamics import (AsymptoteData, EnergyContext, NontrappingReport, Trajectory, energy_threshold,
                       integrate, nontrapping_constants, scattering_map, shoot_from_minus_infinity,
                       verify_escape)
from .fields import (BumpMagneticField, FieldModel, PointCloud, RadialPotential, RadialProfile,
                     ShiftedPowerProfile, ShortRangeBounds, SoftCoreProfile, ZeroProfile, audit_bounds,
                     check_closedness, eval_force, free_field, radial_field, shortrange_norm, standard_field)
from .inversion import (AbelTable, ChiTable, ReconstructionResult, abel_transform, consistency_check_H,
                        reconstruct_chi, reconstruct_W)
from .radial import (DeflectionCurve, RadialScatteringContext, compute_beta, compute_beta_prime,
                     deflection_ode, deflection_quadrature, r_min, r_min_derivative, sample_deflection)
from .scatmap import AngleRecord, BoundaryDatum, deflection_from_map, extract_boundary_data, map_samples

__version__ = "0.1.0"
