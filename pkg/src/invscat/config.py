"""Run configuration: a single JSON document, validated with line-precise errors.

Example::

    {
      "regime": "nonrel",
      "E": 10.0,
      "field": {"kind": "shifted_power", "A": 1.0, "alpha": 2.0, "R": 1.0},
      "R": 1.0,
      "tolerances": {"ode": 1e-10, "inversion": 1e-3, "abel": 1e-6},
      "grids": {"q_per_decade": 96, "q_decades": 2, "sigma_n": 128, "s_n": 200, "s_max_factor": 5},
      "simulate": {"impact_parameters": [5.0, 10.0], "random": 4, "boundary": true},
      "seed": 0
    }

Units are natural (m = e = 1).  ``c`` is required for the relativistic
regime and must be absent or null otherwise.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .dynamics import EnergyContext
from .fields import (BumpMagneticField, FieldModel, RadialProfile, ShiftedPowerProfile, SoftCoreProfile,
                     ZeroProfile, radial_field)

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "DEFAULTS"]

DEFAULTS = {
    "regime": "nonrel",
    "c": None,
    "n": 2,
    "field": {"kind": "shifted_power", "A": 1.0, "alpha": 2.0, "R": 1.0},
    "tolerances": {"ode": 1e-10, "quadrature": 1e-12, "inversion": 1e-3, "abel": 1e-6, "cross": 1e-5},
    "grids": {"q_per_decade": 96, "q_decades": 2.0, "sigma_n": 128, "s_n": 200, "s_max_factor": 5.0},
    "simulate": {"impact_parameters": [], "random": 0, "boundary": False},
    "seed": 0,
}

_PROFILES = {
    "shifted_power": (ShiftedPowerProfile, ("A", "alpha", "R")),
    "soft_core": (SoftCoreProfile, ("A", "alpha", "R")),
    "zero": (ZeroProfile, ("R", "alpha")),
}


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` carries the source position."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


def _locate(text: str | None, keys: tuple) -> int | None:
    """Line of the innermost key of a dotted path, found by scanning the raw text."""
    if not text:
        return None
    pos = 0
    for k in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(str(k))).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1 if pos else None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "field":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    source: str | None = None
    text: str | None = field(default=None, repr=False)

    @property
    def regime(self) -> str:
        return self.raw["regime"]

    @property
    def ctx(self) -> EnergyContext:
        return EnergyContext(float(self.raw["E"]), None if self.regime == "nonrel" else float(self.raw["c"]))

    @property
    def tolerances(self) -> dict:
        return self.raw["tolerances"]

    @property
    def grids(self) -> dict:
        return self.raw["grids"]

    @property
    def R(self) -> float:
        return float(self.raw.get("R", self.profile.R))

    @property
    def profile(self) -> RadialProfile:
        f = self.raw["field"]
        cls, names = _PROFILES[f["kind"]]
        return cls(**{k: float(f[k]) for k in names if k in f})

    def model(self) -> FieldModel:
        f = self.raw["field"]
        mag = None
        if f.get("magnetic"):
            m = f["magnetic"]
            direction = m.get("direction") or [1.0] + [0.0] * (self.raw["n"] - 1)
            mag = BumpMagneticField(float(m["kappa"]), float(m["radius"]), direction)
        return radial_field(self.profile, int(self.raw["n"]), core_radius=f.get("core_radius"),
                            magnetic=mag, name=f["kind"])

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw.update(kw)
        return parse_config(raw, self.source, self.text)

    def error(self, message: str, *keys) -> ConfigError:
        return ConfigError(message, self.source, _locate(self.text, keys))


def _positive(cfg: RunConfig, value, *keys):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
        raise cfg.error(f"{'.'.join(map(str, keys))} must be a positive number, got {value!r}", *keys)


def parse_config(obj: dict, source: str | None = None, text: str | None = None) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("top level must be a JSON object", source, 1)
    unknown = set(obj) - set(DEFAULTS) - {"E", "R", "name"}
    probe = RunConfig(obj, source, text)
    if unknown:
        k = sorted(unknown)[0]
        raise probe.error(f"unknown key {k!r}", k)
    if "E" not in obj:
        raise ConfigError("missing required key 'E'", source, None)
    raw = _merge(DEFAULTS, obj)
    cfg = RunConfig(raw, source, text)
    if raw["regime"] not in ("nonrel", "rel"):
        raise cfg.error(f"regime must be 'nonrel' or 'rel', got {raw['regime']!r}", "regime")
    _positive(cfg, raw["E"], "E")
    if raw["regime"] == "rel":
        if raw["c"] is None:
            raise cfg.error("relativistic regime requires c", "regime")
        _positive(cfg, raw["c"], "c")
        if not raw["E"] > raw["c"] ** 2:
            raise cfg.error(f"relativistic energy must exceed c^2 = {raw['c'] ** 2}", "E")
    elif raw["c"] is not None:
        raise cfg.error("c must be null in the nonrelativistic regime", "c")
    if not isinstance(raw["n"], int) or raw["n"] < 2:
        raise cfg.error("n must be an integer >= 2", "n")
    f = raw["field"]
    if not isinstance(f, dict) or f.get("kind") not in _PROFILES:
        raise cfg.error(f"field.kind must be one of {sorted(_PROFILES)}", "field", "kind")
    for k in _PROFILES[f["kind"]][1]:
        if k in f and k != "A":
            _positive(cfg, f[k], "field", k)
    if "alpha" in f and not f["alpha"] > 1:
        raise cfg.error("field.alpha must exceed 1", "field", "alpha")
    if "R" in raw:
        _positive(cfg, raw["R"], "R")
    for k, v in raw["tolerances"].items():
        _positive(cfg, v, "tolerances", k)
    for k, v in raw["grids"].items():
        _positive(cfg, v, "grids", k)
    for k in ("q_per_decade", "sigma_n", "s_n"):
        if int(raw["grids"][k]) != raw["grids"][k] or raw["grids"][k] < 4:
            raise cfg.error(f"grids.{k} must be an integer >= 4", "grids", k)
    qs = raw["simulate"].get("impact_parameters", [])
    if not isinstance(qs, list) or any(not isinstance(q, (int, float)) or q < 0 for q in qs):
        raise cfg.error("simulate.impact_parameters must be a list of nonnegative numbers",
                        "simulate", "impact_parameters")
    if sorted(qs) != qs:
        raise cfg.error("simulate.impact_parameters must be sorted", "simulate", "impact_parameters")
    try:
        cfg.model()
    except (ValueError, TypeError, KeyError) as exc:
        raise cfg.error(f"invalid field: {exc}", "field") from None
    return cfg


def load_config(path) -> RunConfig:
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", path, exc.lineno) from None
    return parse_config(obj, path, text)
