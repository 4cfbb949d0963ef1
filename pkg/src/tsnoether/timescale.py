"""Finite time scales, grid functions and the exact delta/nabla calculus on them.

Every point of a finite time scale is isolated, so all derivatives are plain
difference quotients and all integrals are weighted sums.  rd-continuity holds
for every function on such a scale and is therefore never checked.

Points are addressed by index; a coordinate is looked up with exact float
equality against the stored values.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DomainMismatch,
    DuplicatePoint,
    NonDivisibleRange,
    NonFiniteValue,
    NotStrictlyIncreasing,
    PointNotInScale,
    ReversedBounds,
    TooFewPoints,
)

# domain kind -> (points dropped at the start, points dropped at the end)
DOMAINS = {
    "full": (0, 0),
    "kappa": (0, 1),
    "kappa_low": (1, 0),
    "kappa_both": (1, 1),
    "kappa2": (0, 2),
}
_KIND_OF = {v: k for k, v in DOMAINS.items()}


class TimeScale:
    """A finite, strictly increasing set of at least three real points.

    ``mu[i] = sigma(t_i) - t_i`` and ``nu[i] = t_i - rho(t_i)``, with the
    conventions ``sigma(b) = b`` and ``rho(a) = a`` so that ``mu[-1]`` and
    ``nu[0]`` are zero.
    """

    __slots__ = ("points", "mu", "nu", "_index")

    def __init__(self, points: Sequence[float]):
        pts = np.array(points, dtype=float).ravel()
        if not np.all(np.isfinite(pts)):
            raise NonFiniteValue("time scale points must be finite")
        pts = np.sort(pts)
        if pts.size and np.any(np.diff(pts) == 0):
            dup = pts[1:][np.diff(pts) == 0][0]
            raise DuplicatePoint(f"point {dup!r} appears more than once")
        if pts.size < 3:
            raise TooFewPoints(f"a time scale needs at least 3 points, got {pts.size}")
        pts.setflags(write=False)
        mu = np.zeros_like(pts)
        nu = np.zeros_like(pts)
        mu[:-1] = pts[1:] - pts[:-1]
        nu[1:] = mu[:-1]
        mu.setflags(write=False)
        nu.setflags(write=False)
        self.points = pts
        self.mu = mu
        self.nu = nu
        self._index = {float(p): i for i, p in enumerate(pts)}

    def __len__(self) -> int:
        return self.points.size

    def __repr__(self) -> str:
        return f"TimeScale(n={len(self)}, a={self.a!r}, b={self.b!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeScale) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    def index(self, t: float) -> int:
        try:
            return self._index[float(t)]
        except KeyError:
            raise PointNotInScale(f"{t!r} is not a point of {self!r}") from None

    def sigma(self, t: float) -> float:
        i = self.index(t)
        return float(self.points[min(i + 1, len(self) - 1)])

    def rho(self, t: float) -> float:
        i = self.index(t)
        return float(self.points[max(i - 1, 0)])

    def graininess(self, t: float) -> float:
        return float(self.mu[self.index(t)])

    def backward_graininess(self, t: float) -> float:
        return float(self.nu[self.index(t)])

    def domain_slice(self, kind: str) -> slice:
        lo, hi = _domain(kind)
        return slice(lo, len(self) - hi)

    def domain_points(self, kind: str) -> np.ndarray:
        return self.points[self.domain_slice(kind)]


def _domain(kind: str) -> tuple[int, int]:
    try:
        return DOMAINS[kind]
    except KeyError:
        raise DomainMismatch(f"unknown domain kind {kind!r}") from None


def make_timescale(points: Sequence[float]) -> TimeScale:
    return TimeScale(points)


def uniform_scale(a: float, b: float, h: float) -> TimeScale:
    """``t_k = a + k h`` for ``k = 0..N`` with the last point set to ``b`` exactly."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(h)):
        raise NonFiniteValue("a, b and h must be finite")
    if not a < b:
        raise ReversedBounds(f"need a < b, got a={a!r}, b={b!r}")
    if not h > 0:
        raise NonDivisibleRange(f"step must be positive, got {h!r}")
    ratio = (b - a) / h
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise NonDivisibleRange(f"(b - a)/h = {ratio!r} is not an integer")
    pts = a + h * np.arange(n + 1, dtype=float)
    pts[-1] = b
    return TimeScale(pts)


def dyadic_scale(n_lo: int, n_hi: int) -> TimeScale:
    """The scale ``{2**n : n_lo <= n <= n_hi}``, on which sigma(t) = 2t."""
    return TimeScale([2.0**n for n in range(n_lo, n_hi + 1)])


def image_scale(ts: TimeScale, v: Callable[[float], float]) -> TimeScale:
    """The image ``v(T)`` of a strictly increasing map, as a new time scale."""
    vals = np.array([float(v(float(t))) for t in ts.points])
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("map produced non-finite values")
    bad = np.nonzero(np.diff(vals) <= 0)[0]
    if bad.size:
        k = int(bad[0])
        raise NotStrictlyIncreasing(
            f"v({ts.points[k + 1]!r}) = {vals[k + 1]!r} <= v({ts.points[k]!r}) = {vals[k]!r}"
        )
    return TimeScale(vals)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Vector samples of dimension ``d`` on one domain restriction of a scale.

    ``values`` has shape ``(m, d)`` where ``m`` is the point count of the
    domain ``domain_kind``.
    """

    scale: TimeScale
    values: np.ndarray
    domain_kind: str = "full"

    def __post_init__(self):
        lo, hi = _domain(self.domain_kind)
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[1] < 1:
            raise DomainMismatch(f"values must have shape (m, d), got {vals.shape}")
        expected = len(self.scale) - lo - hi
        if vals.shape[0] != expected:
            raise DomainMismatch(
                f"{self.domain_kind} domain of {self.scale!r} has {expected} points, got {vals.shape[0]} values"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, scale: TimeScale, f: Callable, domain_kind: str = "full") -> "GridFunction":
        ts = scale.domain_points(domain_kind)
        return cls(scale, np.array([np.atleast_1d(f(float(t))) for t in ts], dtype=float), domain_kind)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def offset(self) -> int:
        """Scale index of the first stored value."""
        return DOMAINS[self.domain_kind][0]

    @property
    def t(self) -> np.ndarray:
        return self.scale.domain_points(self.domain_kind)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        i = self.scale.index(t) - self.offset
        if not 0 <= i < len(self):
            raise DomainMismatch(f"{t!r} lies outside the {self.domain_kind} domain")
        return self.values[i]

    def restrict(self, kind: str) -> "GridFunction":
        lo, hi = _domain(kind)
        mlo, mhi = _domain(self.domain_kind)
        if lo < mlo or hi < mhi:
            raise DomainMismatch(f"cannot restrict {self.domain_kind} to the larger domain {kind}")
        n = len(self.scale)
        return GridFunction(self.scale, self.values[lo - mlo : n - hi - mlo], kind)

    def to_csv(self, path=None) -> str:
        """Serialize as ``t,f_1,...,f_d`` rows; returns the text, writing it if ``path`` is given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"f_{i + 1}" for i in range(self.dim)])
        for t, row in zip(self.t, self.values):
            w.writerow([fmt(t)] + [fmt(val) for val in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, scale: TimeScale, text: str) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        ts = [float(r[0]) for r in rows[1:]]
        vals = [[float(c) for c in r[1:]] for r in rows[1:]]
        first, last = scale.index(ts[0]), scale.index(ts[-1])
        kind = _KIND_OF.get((first, len(scale) - 1 - last))
        if kind is None:
            raise DomainMismatch("CSV rows do not cover a known domain")
        return cls(scale, np.array(vals), kind)


def fmt(value: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(value))


def _shift(kind: str, dlo: int, dhi: int) -> str:
    lo, hi = _domain(kind)
    new = _KIND_OF.get((lo + dlo, hi + dhi))
    if new is None:
        raise DomainMismatch(f"derivative of a {kind} function has no supported domain")
    return new


def delta_derivative(f: GridFunction) -> GridFunction:
    """Forward quotient ``(f(sigma(t)) - f(t)) / mu(t)``; drops the last point of the domain."""
    kind = _shift(f.domain_kind, 0, 1)
    lo, _ = _domain(f.domain_kind)
    mu = f.scale.mu[lo : lo + len(f) - 1, None]
    return GridFunction(f.scale, (f.values[1:] - f.values[:-1]) / mu, kind)


def nabla_derivative(f: GridFunction) -> GridFunction:
    """Backward quotient ``(f(t) - f(rho(t))) / nu(t)``; drops the first point of the domain."""
    kind = _shift(f.domain_kind, 1, 0)
    lo, _ = _domain(f.domain_kind)
    nu = f.scale.nu[lo + 1 : lo + len(f), None]
    return GridFunction(f.scale, (f.values[1:] - f.values[:-1]) / nu, kind)


def _bounds(f: GridFunction, t_lo: float, t_hi: float) -> tuple[int, int]:
    i, j = f.scale.index(t_lo), f.scale.index(t_hi)
    if i > j:
        raise ReversedBounds(f"lower bound {t_lo!r} exceeds upper bound {t_hi!r}")
    return i, j


def _weighted_fsum(weights: np.ndarray, vals: np.ndarray) -> np.ndarray:
    prods = weights[:, None] * vals
    return np.array([math.fsum(prods[:, c]) for c in range(vals.shape[1])])


def delta_integral(f: GridFunction, t_lo: float, t_hi: float) -> np.ndarray:
    """``sum of mu(tau) f(tau)`` over ``t_lo <= tau < t_hi``."""
    i, j = _bounds(f, t_lo, t_hi)
    off = f.offset
    if i < j and (i - off < 0 or j - 1 - off >= len(f)):
        raise DomainMismatch("integrand is not defined on every summed point")
    return _weighted_fsum(f.scale.mu[i:j], f.values[i - off : j - off])


def nabla_integral(f: GridFunction, t_lo: float, t_hi: float) -> np.ndarray:
    """``sum of nu(tau) f(tau)`` over ``t_lo < tau <= t_hi``."""
    i, j = _bounds(f, t_lo, t_hi)
    off = f.offset
    if i < j and (i + 1 - off < 0 or j - off >= len(f)):
        raise DomainMismatch("integrand is not defined on every summed point")
    return _weighted_fsum(f.scale.nu[i + 1 : j + 1], f.values[i + 1 - off : j + 1 - off])


def delta_antiderivative(f: GridFunction) -> GridFunction:
    """``U(t) = int_a^t f`` on the full scale; requires ``f`` on ``kappa`` or larger."""
    ts = f.scale
    g = f.restrict("kappa") if f.domain_kind != "kappa" else f
    out = np.zeros((len(ts), f.dim))
    np.cumsum(ts.mu[:-1, None] * g.values, axis=0, out=out[1:])
    return GridFunction(ts, out, "full")


def nabla_antiderivative(f: GridFunction, kind: str = "full") -> GridFunction:
    """``V(t) = int_a^t f nabla`` on ``kind``; ``f`` must cover ``(a, t]`` for every ``t`` in ``kind``.

    ``kind="full"`` needs ``f`` on ``kappa_low``; ``kind="kappa"`` needs ``f``
    on ``kappa_both``.
    """
    ts = f.scale
    lo, hi = _domain(kind)
    if lo != 0:
        raise DomainMismatch("a nabla antiderivative is anchored at a; its domain must contain a")
    g = f.restrict(_KIND_OF[(1, hi)])
    out = np.zeros((len(ts) - hi, f.dim))
    np.cumsum(ts.nu[1 : len(ts) - hi, None] * g.values, axis=0, out=out[1:])
    return GridFunction(ts, out, kind)


def nabla_sigma(ts: TimeScale) -> GridFunction:
    """``nabla sigma(t) = mu(t)/nu(t)`` at the interior points; identically 1 on uniform grids."""
    return GridFunction(ts, ts.mu[1:-1] / ts.nu[1:-1], "kappa_both")


def sigma_shift(f: GridFunction) -> GridFunction:
    """``f^sigma = f o sigma`` on the domain with the last point removed."""
    kind = _shift(f.domain_kind, 0, 1)
    return GridFunction(f.scale, f.values[1:], kind)
