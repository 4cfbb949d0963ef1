"""Experiment configuration files.

A configuration is a flat list of ``key = value`` lines.  ``# comments`` and
blank lines are ignored and a ``[section]`` header prefixes the keys that
follow it, so ``[scale]`` then ``kind = uniform`` is the same as
``scale.kind = uniform``.  List values are comma separated.  Example::

    scale.kind = uniform
    scale.a = 1
    scale.b = 10
    scale.h = 0.001
    lagrangian = x^2/t + t*v^2
    group.g0 = t*exp(s)
    group.g1 = x
    init.x0 = 1
    init.v0 = 0.1

For ``scale.kind = dyadic`` the keys ``scale.a`` and ``scale.b`` are the
integer exponent range of ``{2**n}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ConfigTypeError, MissingKey, UnknownKey
from .timescale import TimeScale, dyadic_scale, make_timescale, uniform_scale

KEYS = (
    "scale.kind", "scale.a", "scale.b", "scale.h", "scale.points",
    "lagrangian", "dimension",
    "group.g0", "group.g1",
    "generator.zeta", "generator.xi",
    "init.x0", "init.v0",
    "solver.variant", "solver.tol",
    "symmetry.s_samples",
    "output.dir",
)
SCALE_KINDS = ("uniform", "points", "dyadic")
VARIANTS = ("nonshifted", "shifted", "both")
_SCALE_KEYS = {"uniform": {"scale.a", "scale.b", "scale.h"}, "points": {"scale.points"},
               "dyadic": {"scale.a", "scale.b"}}


@dataclass
class ExperimentSpec:
    scale_kind: str
    lagrangian: str
    x0: list[float]
    v0: list[float]
    dimension: int = 1
    scale_a: float | None = None
    scale_b: float | None = None
    scale_h: float | None = None
    scale_points: list[float] | None = None
    group_g0: str | None = None
    group_g1: list[str] | None = None
    generator_zeta: str | None = None
    generator_xi: list[str] | None = None
    variant: str = "both"
    tol: float = 1e-12
    s_samples: list[float] = field(default_factory=lambda: [-0.5, 0.0, 0.5])
    output_dir: str = "out"

    @property
    def variants(self) -> list[str]:
        return ["nonshifted", "shifted"] if self.variant == "both" else [self.variant]

    @property
    def has_group(self) -> bool:
        return self.group_g0 is not None

    def build_scale(self) -> TimeScale:
        if self.scale_kind == "uniform":
            return uniform_scale(self.scale_a, self.scale_b, self.scale_h)
        if self.scale_kind == "dyadic":
            return dyadic_scale(int(self.scale_a), int(self.scale_b))
        return make_timescale(self.scale_points)


def _split(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _float(key, value, line) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigTypeError(f"{key}: expected a number, got {value!r}", line) from None
    if not math.isfinite(out):
        raise ConfigTypeError(f"{key}: value must be finite", line)
    return out


def _floats(key, value, line) -> list[float]:
    parts = _split(value)
    if not parts:
        raise ConfigTypeError(f"{key}: expected a comma-separated list of numbers", line)
    return [_float(key, p, line) for p in parts]


def _int(key, value, line) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigTypeError(f"{key}: expected an integer, got {value!r}", line) from None


def read_pairs(text: str) -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line number)`` pairs; rejects unknown and repeated keys."""
    pairs: dict[str, tuple[str, int]] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if section:
            key = f"{section}.{key}"
        if key not in KEYS:
            raise UnknownKey(f"unknown key {key!r}", lineno)
        if key in pairs:
            raise ConfigError(f"key {key!r} repeated (first on line {pairs[key][1]})", lineno)
        if not value:
            raise ConfigTypeError(f"{key}: empty value", lineno)
        pairs[key] = (value, lineno)
    return pairs


def parse_config_text(text: str) -> ExperimentSpec:
    pairs = read_pairs(text)
    for key in ("scale.kind", "lagrangian", "init.x0", "init.v0"):
        if key not in pairs:
            raise MissingKey(f"missing required key {key!r}")

    kind, kline = pairs["scale.kind"]
    if kind not in SCALE_KINDS:
        raise ConfigTypeError(f"scale.kind: expected one of {SCALE_KINDS}, got {kind!r}", kline)
    present = {k for k in pairs if k.startswith("scale.") and k != "scale.kind"}
    for key in sorted(_SCALE_KEYS[kind] - present):
        raise MissingKey(f"scale.kind = {kind} requires {key!r}")
    for key in sorted(present - _SCALE_KEYS[kind]):
        raise ConfigError(f"{key} does not apply to scale.kind = {kind}", pairs[key][1])

    def get(key, conv, default=None):
        if key not in pairs:
            return default
        value, line = pairs[key]
        return conv(key, value, line)

    dim = get("dimension", _int, 1)
    if dim < 1:
        raise ConfigTypeError("dimension must be at least 1", pairs["dimension"][1])

    def vec(key):
        value, line = pairs[key]
        vals = _floats(key, value, line)
        if len(vals) != dim:
            raise ConfigTypeError(f"{key}: expected {dim} values, got {len(vals)}", line)
        return vals

    def exprs(key):
        value, line = pairs[key]
        parts = _split(value)
        if len(parts) != dim:
            raise ConfigTypeError(f"{key}: expected {dim} expressions, got {len(parts)}", line)
        return parts

    if ("group.g0" in pairs) != ("group.g1" in pairs):
        missing = "group.g1" if "group.g0" in pairs else "group.g0"
        raise MissingKey(f"{missing!r} is required when the other group key is given")
    if ("generator.zeta" in pairs) != ("generator.xi" in pairs):
        missing = "generator.xi" if "generator.zeta" in pairs else "generator.zeta"
        raise MissingKey(f"{missing!r} is required when the other generator key is given")
    if "group.g0" not in pairs and "generator.zeta" not in pairs:
        raise MissingKey("either group.g0/group.g1 or generator.zeta/generator.xi is required")

    variant = pairs.get("solver.variant", ("both", 0))
    if variant[0] not in VARIANTS:
        raise ConfigTypeError(f"solver.variant: expected one of {VARIANTS}, got {variant[0]!r}", variant[1])
    tol = get("solver.tol", _float, 1e-12)
    if tol <= 0:
        raise ConfigTypeError("solver.tol must be positive", pairs["solver.tol"][1])
    s_samples = get("symmetry.s_samples", _floats, [-0.5, 0.0, 0.5])

    return ExperimentSpec(
        scale_kind=kind,
        lagrangian=pairs["lagrangian"][0],
        x0=vec("init.x0"),
        v0=vec("init.v0"),
        dimension=dim,
        scale_a=get("scale.a", _int if kind == "dyadic" else _float),
        scale_b=get("scale.b", _int if kind == "dyadic" else _float),
        scale_h=get("scale.h", _float),
        scale_points=get("scale.points", _floats),
        group_g0=pairs["group.g0"][0] if "group.g0" in pairs else None,
        group_g1=exprs("group.g1") if "group.g1" in pairs else None,
        generator_zeta=pairs["generator.zeta"][0] if "generator.zeta" in pairs else None,
        generator_xi=exprs("generator.xi") if "generator.xi" in pairs else None,
        variant=variant[0],
        tol=tol,
        s_samples=s_samples,
        output_dir=pairs.get("output.dir", ("out", 0))[0],
    )


def parse_config(path) -> ExperimentSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror or err}") from None
    return parse_config_text(text)
