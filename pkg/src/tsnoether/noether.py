"""One-parameter symmetry groups and the time-scale Noether conserved quantity.

For a group ``g_s(t, x) = (g0(s, t), g1(s, x))`` with generator
``X = zeta(t) d/dt + xi(x) d/dx`` the conserved quantity along solutions of
the non-shifted Euler-Lagrange equation is::

    I(t) = zeta(sigma t) [L - p.dx] + xi(x(sigma t)) . p
           + int_a^t zeta [nabla_sigma dL/dt - nabla(L - p.dx)] nabla tau

with every ``L``-term evaluated at ``(t, x(t), dx(t))`` and ``p = dL/dv``.
Dropping the integral gives the older quantity ``C``; it is not conserved
when ``zeta`` is non-zero and the scale is not continuous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import DomainMismatch, InconsistentRichardson, NotStrictlyIncreasing, TimeScaleError, VariantMismatch
from .timescale import (
    GridFunction,
    TimeScale,
    delta_derivative,
    fmt,
    image_scale,
    nabla_antiderivative,
    nabla_derivative,
    nabla_sigma,
)
from .variational import ELSolution, Lagrangian, second_el_residual

DRIFT_FLOOR = 1e-30


# ------------------------------------------------------------------- groups

class SymmetryGroup:
    """``g0(s, t) -> float`` and ``g1(s, x) -> R^d``.

    Built either from closures or, with :meth:`from_text`, from expressions;
    expression groups keep their trees so generators can be taken exactly.
    """

    def __init__(self, g0: Callable[[float, float], float],
                 g1: Callable[[float, np.ndarray], np.ndarray], dim: int = 1):
        self.g0 = g0
        self.g1 = lambda s, x: np.atleast_1d(np.asarray(g1(s, np.asarray(x, float)), float))
        self.dim = dim
        self.g0_expr: ex.Expr | None = None
        self.g1_exprs: list[ex.Expr] | None = None

    @classmethod
    def from_text(cls, g0: str, g1: str | Sequence[str], dim: int = 1) -> "SymmetryGroup":
        g1_list = [g1] if isinstance(g1, str) else list(g1)
        if len(g1_list) != dim:
            raise ValueError(f"need {dim} space-action expressions, got {len(g1_list)}")
        e0 = ex.bind(ex.parse(g0), ["s", "t"])
        xs = [f"x{i}" for i in range(1, dim + 1)]
        aliases = {"x": "x1"} if dim == 1 else {}
        e1 = [ex.bind(ex.parse(src), ["s"] + xs, aliases) for src in g1_list]
        f0 = ex.compile_expr(e0, ["s", "t"])
        f1 = ex.compile_many(e1, ["s"] + xs)
        grp = cls(lambda s, t: f0(float(s), float(t)),
                  lambda s, x: np.array(f1(float(s), *np.ravel(x).tolist())), dim)
        grp.g0_expr, grp.g1_exprs = e0, e1
        return grp

    @classmethod
    def identity(cls, dim: int = 1) -> "SymmetryGroup":
        return cls.from_text("t", ["x"] if dim == 1 else [f"x{i}" for i in range(1, dim + 1)], dim)

    def identity_error(self, t_samples: Sequence[float], x_samples: Sequence) -> float:
        """Largest deviation of ``g0(0, .)`` and ``g1(0, .)`` from the identity."""
        err = max((abs(self.g0(0.0, t) - t) for t in t_samples), default=0.0)
        for xv in x_samples:
            xv = np.atleast_1d(np.asarray(xv, float))
            err = max(err, float(np.max(np.abs(self.g1(0.0, xv) - xv))))
        return err


# --------------------------------------------------------------- generators

@dataclass
class Generator:
    """Infinitesimal generator ``(zeta, xi)`` of a one-parameter group."""

    zeta: Callable[[float], float]
    xi: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    provenance: str = "analytic"

    @classmethod
    def from_text(cls, zeta: str, xi: str | Sequence[str], dim: int = 1) -> "Generator":
        xi_list = [xi] if isinstance(xi, str) else list(xi)
        if len(xi_list) != dim:
            raise ValueError(f"need {dim} xi expressions, got {len(xi_list)}")
        ez = ex.bind(ex.parse(zeta), ["t"])
        xs = [f"x{i}" for i in range(1, dim + 1)]
        aliases = {"x": "x1"} if dim == 1 else {}
        exi = [ex.bind(ex.parse(src), xs, aliases) for src in xi_list]
        return cls._from_exprs(ez, exi, dim, "analytic")

    @classmethod
    def _from_exprs(cls, ez: ex.Expr, exi: list[ex.Expr], dim: int, provenance: str) -> "Generator":
        xs = [f"x{i}" for i in range(1, dim + 1)]
        fz = ex.compile_expr(ez, ["t"])
        fxi = ex.compile_many(exi, xs)
        gen = cls(lambda t: fz(float(t)), lambda x: np.array(fxi(*np.ravel(x).tolist())), dim, provenance)
        gen.zeta_expr, gen.xi_exprs = ez, exi
        return gen

    def zeta_batch(self, t: np.ndarray) -> np.ndarray:
        return np.array([self.zeta(float(ti)) for ti in t], dtype=float)

    def xi_batch(self, x: np.ndarray) -> np.ndarray:
        return np.array([np.atleast_1d(self.xi(xi)) for xi in x], dtype=float).reshape(len(x), self.dim)

    def scaled(self, c: float) -> "Generator":
        z, xi = self.zeta, self.xi
        return Generator(lambda t: c * z(t), lambda x: c * np.asarray(xi(x)), self.dim, self.provenance)


def extract_generator(G: SymmetryGroup, ts: TimeScale | None = None, probe_points: Sequence[float] = (),
                      ds: float = 1e-6, probe_x: Sequence | None = None) -> Generator:
    """``zeta = d/ds g0(s, t)`` and ``xi = d/ds g1(s, x)`` at ``s = 0``.

    Expression groups are differentiated symbolically.  Closure groups use a
    central difference with step ``ds``, after checking on the probe points
    that steps ``ds`` and ``ds/2`` agree to 1e-4 relative.
    """
    if not ds > 0:
        raise ValueError("ds must be positive")
    d = G.dim
    if G.g0_expr is not None and G.g1_exprs is not None:
        zero = {"s": ex.ZERO}
        ez = ex.fold(ex.substitute(ex.differentiate(G.g0_expr, "s"), zero))
        exi = [ex.fold(ex.substitute(ex.differentiate(e, "s"), zero)) for e in G.g1_exprs]
        return Generator._from_exprs(ez, exi, d, "analytic")

    def zeta_h(t, h):
        return (G.g0(h, t) - G.g0(-h, t)) / (2 * h)

    def xi_h(x, h):
        x = np.atleast_1d(np.asarray(x, float))
        return (G.g1(h, x) - G.g1(-h, x)) / (2 * h)

    t_probe = list(probe_points) or (list(ts.points[:: max(1, len(ts) // 16)]) if ts is not None else [1.0])
    x_probe = list(probe_x) if probe_x is not None else [np.full(d, t) for t in t_probe]
    for t in t_probe:
        _richardson(zeta_h(t, ds), zeta_h(t, ds / 2), f"zeta({t!r})")
    for xv in x_probe:
        _richardson(xi_h(xv, ds), xi_h(xv, ds / 2), f"xi({xv!r})")
    return Generator(lambda t: zeta_h(t, ds), lambda x: xi_h(x, ds), d, f"finite-difference(ds={ds!r})")


def _richardson(a, b, what: str, rtol: float = 1e-4):
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    if np.any(np.abs(a - b) > rtol * np.maximum(np.abs(a), np.abs(b)) + 1e-12):
        raise InconsistentRichardson(f"{what}: step ds gives {a}, ds/2 gives {b}; group is not smooth at s=0")


# ------------------------------------------------------------ admissibility

@dataclass
class AdmissibilityEntry:
    s: float
    image_is_time_scale: bool
    strictly_increasing: bool
    inverse_delta_exists: bool
    delta_nonzero: bool
    image: TimeScale | None = field(default=None, repr=False)
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.image_is_time_scale and self.strictly_increasing and self.inverse_delta_exists \
            and self.delta_nonzero


@dataclass
class AdmissibilityReport:
    entries: list[AdmissibilityEntry]
    identity_error: float

    @property
    def passed(self) -> bool:
        return self.identity_error <= 1e-12 and all(e.passed for e in self.entries)

    def summary(self) -> str:
        lines = [f"admissibility: {'PASS' if self.passed else 'FAIL'} (identity error {self.identity_error:.3e})"]
        for e in self.entries:
            flags = (f"image={_pf(e.image_is_time_scale)} increasing={_pf(e.strictly_increasing)} "
                     f"inverse={_pf(e.inverse_delta_exists)} delta_nonzero={_pf(e.delta_nonzero)}")
            lines.append(f"  s={fmt(e.s)}: {flags}" + (f" ({e.detail})" if e.detail else ""))
        return "\n".join(lines)


def _pf(flag: bool) -> str:
    return "pass" if flag else "FAIL"


def admissibility_check(G: SymmetryGroup, ts: TimeScale, s_samples: Sequence[float]) -> AdmissibilityReport:
    """Check the admissibility conditions of the time map at each sampled ``s``.

    On a finite scale the image, once strictly increasing, is again a finite
    scale, the inverse map's delta derivative always exists and every function
    is rd-continuous; those conditions are reported as satisfied whenever the
    map is strictly increasing.
    """
    entries = []
    for s in s_samples:
        s = float(s)
        detail = ""
        image = None
        try:
            image = image_scale(ts, lambda t: G.g0(s, t))
            increasing = True
        except NotStrictlyIncreasing as err:
            increasing, detail = False, str(err)
        except TimeScaleError as err:
            increasing, detail = False, str(err)
        vals = np.array([G.g0(s, float(t)) for t in ts.points])
        dg = (vals[1:] - vals[:-1]) / ts.mu[:-1]
        nonzero = bool(np.all(dg != 0) and np.all(np.isfinite(dg)))
        if not nonzero and not detail:
            detail = "delta of the time map vanishes"
        entries.append(AdmissibilityEntry(s, image is not None, increasing, image is not None, nonzero, image, detail))
    xs = [np.full(G.dim, float(t)) for t in ts.points[:: max(1, len(ts) // 16)]]
    ident = G.identity_error(ts.points[:: max(1, len(ts) // 16)], xs)
    return AdmissibilityReport(entries, ident)


# ---------------------------------------------------------------- invariance

@dataclass
class InvarianceEntry:
    s: float
    max_interval_diff: float
    max_pointwise_diff: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_interval_diff <= self.threshold


@dataclass
class InvarianceReport:
    entries: list[InvarianceEntry]
    action: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def summary(self) -> str:
        lines = [f"invariance: {'PASS' if self.passed else 'FAIL'} (action {fmt(self.action)})"]
        for e in self.entries:
            lines.append(f"  s={fmt(e.s)}: {_pf(e.passed)} interval diff {e.max_interval_diff:.3e} "
                         f"(threshold {e.threshold:.3e}), pointwise diff {e.max_pointwise_diff:.3e}")
        return "\n".join(lines)


def transformed_integrand(L: Lagrangian, G: SymmetryGroup, x: GridFunction, s: float) -> np.ndarray:
    """``L(g0(t), g1(x(t)), delta(g1 o x)(t) / delta g0(t)) * delta g0(t)`` on T^kappa."""
    ts = x.scale
    t = ts.points
    tau = np.array([G.g0(s, float(ti)) for ti in t])
    y = np.array([G.g1(s, xi) for xi in x.values]).reshape(len(t), x.dim)
    mu = ts.mu[:-1]
    dg0 = (tau[1:] - tau[:-1]) / mu
    dy = (y[1:] - y[:-1]) / mu[:, None]
    return L.value_batch(tau[:-1], y[:-1], dy / dg0[:, None]) * dg0


def invariance_check(L: Lagrangian, G: SymmetryGroup, ts: TimeScale, x: GridFunction,
                     s_samples: Sequence[float]) -> InvarianceReport:
    """Compare the action of ``x`` with that of the transformed path on every subinterval.

    All ``[t_i, t_j]`` pairs are covered: with ``D`` the prefix sum of
    ``mu (L - L_s)``, the largest interval difference is ``max D - min D``.
    """
    if x.scale != ts or x.domain_kind != "full":
        raise DomainMismatch("path must be a full-domain grid function on the given scale")
    v = delta_derivative(x)
    f = L.value_batch(v.t, x.values[:-1], v.values)
    mu = ts.mu[:-1]
    action = math.fsum(mu * f)
    thr = 1e-10 * (1 + abs(action))
    entries = []
    for s in s_samples:
        g = transformed_integrand(L, G, x, float(s))
        D = np.concatenate([[0.0], np.cumsum(mu * f) - np.cumsum(mu * g)])
        entries.append(InvarianceEntry(float(s), float(D.max() - D.min()), float(np.max(np.abs(f - g))), thr))
    return InvarianceReport(entries, action)


def infinitesimal_invariance_residual(L: Lagrangian, gen: Generator, x: GridFunction) -> GridFunction:
    """``dL/dt zeta + dL/dx . xi + p . delta[xi o x] + (L - p.dx) delta zeta`` on T^kappa."""
    if x.domain_kind != "full":
        raise DomainMismatch("path must be a full-domain grid function")
    ts = x.scale
    v = delta_derivative(x)
    tk, xk, vk = v.t, x.values[:-1], v.values
    zeta = GridFunction(ts, gen.zeta_batch(ts.points), "full")
    xi = GridFunction(ts, gen.xi_batch(x.values), "full")
    dzeta = delta_derivative(zeta).values[:, 0]
    dxi = delta_derivative(xi).values
    p = L.dv_batch(tk, xk, vk)
    energy = L.value_batch(tk, xk, vk) - np.sum(p * vk, axis=1)
    r = (L.dt_batch(tk, xk, vk) * zeta.values[:-1, 0] + np.sum(L.dx_batch(tk, xk, vk) * xi.values[:-1], axis=1)
         + np.sum(p * dxi, axis=1) + energy * dzeta)
    return GridFunction(ts, r, "kappa")


# ------------------------------------------------------ conserved quantities

def _energy_terms(L: Lagrangian, x: GridFunction, shifted: bool = False):
    """``(v, p, L - p.dx)`` on T^kappa at ``(t, x or x^sigma, dx)``."""
    v = delta_derivative(x)
    xa = x.values[1:] if shifted else x.values[:-1]
    p = L.dv_batch(v.t, xa, v.values)
    e = L.value_batch(v.t, xa, v.values) - np.sum(p * v.values, axis=1)
    return v, p, e


def correction_integrand(L: Lagrangian, gen: Generator, x: GridFunction) -> GridFunction:
    """``zeta [nabla_sigma dL/dt - nabla(L - p.dx)]`` on the interior points."""
    ts = x.scale
    v, p, e = _energy_terms(L, x)
    ft = L.dt_batch(v.t[1:], x.values[1:-1], v.values[1:])
    de = nabla_derivative(GridFunction(ts, e, "kappa")).values[:, 0]
    zeta = gen.zeta_batch(ts.points[1:-1])
    return GridFunction(ts, zeta * (nabla_sigma(ts).values[:, 0] * ft - de), "kappa_both")


def _boundary_part(L, gen, x, shifted):
    ts = x.scale
    v, p, e = _energy_terms(L, x, shifted)
    zeta_s = gen.zeta_batch(ts.points[1:])
    xi_s = gen.xi_batch(x.values[1:])
    return zeta_s * e + np.sum(xi_s * p, axis=1)


def _require_solution(sol: ELSolution, L: Lagrangian, allow_shifted: bool):
    if sol.variant != "nonshifted" and not allow_shifted:
        raise VariantMismatch("the conserved quantity concerns the non-shifted equation; "
                              "pass allow_shifted=True to evaluate it on a shifted solution")
    if sol.x.dim != L.dim:
        raise DomainMismatch("solution and Lagrangian dimensions differ")


def noether_I(L: Lagrangian, gen: Generator, sol: ELSolution | GridFunction,
              allow_shifted: bool = False) -> GridFunction:
    """The conserved quantity on T^kappa (its integral is anchored at ``a``)."""
    x = sol
    if isinstance(sol, ELSolution):
        _require_solution(sol, L, allow_shifted)
        x = sol.x
    ts = x.scale
    integral = nabla_antiderivative(correction_integrand(L, gen, x), kind="kappa").values[:, 0]
    return GridFunction(ts, _boundary_part(L, gen, x, False) + integral, "kappa")


def bt_quantity_C(L: Lagrangian, gen: Generator, sol: ELSolution | GridFunction,
                  shifted_args: bool = True) -> GridFunction:
    """``zeta(sigma t) [L - p.dx] + xi(x(sigma t)) . p`` on T^kappa, without the integral term.

    With ``shifted_args`` the ``L``-terms are evaluated at ``(t, x^sigma, dx)``.
    """
    x = sol.x if isinstance(sol, ELSolution) else sol
    return GridFunction(x.scale, _boundary_part(L, gen, x, shifted_args), "kappa")


# --------------------------------------------------------------------- drift

@dataclass(frozen=True)
class DriftStats:
    initial: float
    max_abs: float
    relative: float
    index: int

    def line(self, name: str) -> str:
        return (f"{name}: q(t0)={fmt(self.initial)} max|q-q(t0)|={self.max_abs:.6e} "
                f"relative={self.relative:.6e} at index {self.index}")


def drift_report(q) -> DriftStats:
    """Deviation of a scalar series from its first value."""
    vals = np.asarray(q.values if isinstance(q, GridFunction) else q, dtype=float)
    vals = vals.reshape(len(vals), -1)[:, 0]
    if vals.size == 0:
        raise ValueError("empty series")
    dev = np.abs(vals - vals[0])
    k = int(np.argmax(dev))
    return DriftStats(float(vals[0]), float(dev[k]), float(dev[k] / max(abs(vals[0]), DRIFT_FLOOR)), k)


@dataclass
class ConservationReport:
    label: str
    I: GridFunction
    C: GridFunction
    nabla_I: GridFunction
    second_el: GridFunction
    drift_I: DriftStats
    drift_C: DriftStats

    def to_csv(self, path=None) -> str:
        """Columns ``t, I, C, nabla_I, second_el_residual``; one row per point, blanks where undefined."""
        ts = self.I.scale
        cols = [self.I, self.C, self.nabla_I, self.second_el]
        lines = ["t,I,C,nabla_I,second_el_residual"]
        for k, t in enumerate(ts.points):
            row = [fmt(t)]
            for g in cols:
                j = k - g.offset
                row.append(fmt(g.values[j, 0]) if 0 <= j < len(g) else "")
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    def summary(self) -> str:
        nab = float(np.max(np.abs(self.nabla_I.values))) if len(self.nabla_I) else 0.0
        return "\n".join([f"[{self.label}]", self.drift_I.line("I"), self.drift_C.line("C"),
                          f"max|nabla I|={nab:.6e}",
                          f"max|second EL residual|={float(np.max(np.abs(self.second_el.values))):.6e}"])


def conservation_report(L: Lagrangian, gen: Generator, sol: ELSolution, label: str | None = None,
                        shifted_args: bool = True) -> ConservationReport:
    """``I`` and ``C`` with their drifts along one solution (any variant)."""
    I = noether_I(L, gen, sol, allow_shifted=True)
    C = bt_quantity_C(L, gen, sol, shifted_args=shifted_args)
    return ConservationReport(label or sol.variant, I, C, nabla_derivative(I), second_el_residual(L, sol.x),
                              drift_report(I), drift_report(C))
