"""Lagrangians, time-scale Euler-Lagrange residuals and initial-value solvers.

Two Euler-Lagrange forms are supported on a finite scale ``t_0 < ... < t_N``:

* non-shifted: ``nabla[dL/dv(t, x, dx)] = nabla_sigma * dL/dx(t, x, dx)`` on the
  interior points, where ``dx`` is the delta derivative of ``x``;
* shifted: ``delta[dL/dv(t, x^sigma, dx)] = dL/dx(t, x^sigma, dx)``.

Both are solved forward from ``(x(a), dx(a))`` one point at a time with a
Newton iteration for the new velocity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import DimensionMismatch, DomainMismatch, NewtonDivergence, SingularJacobian
from .timescale import GridFunction, TimeScale, delta_derivative, fmt, nabla_derivative, nabla_sigma

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 50



class Lagrangian:
    """``L(t, x, v)`` with its first partials, for ``x, v`` in R^d.

    Partials not supplied are taken by central differences.  Pointwise
    methods take ``x`` and ``v`` as length-``d`` arrays; the ``*_batch``
    variants take ``t`` of shape ``(n,)`` and ``x, v`` of shape ``(n, d)``.
    """

    symbolic = False

    def __init__(self, dim: int, L: Callable, dL_dt: Callable | None = None,
                 dL_dx: Callable | None = None, dL_dv: Callable | None = None):
        if dim < 1:
            raise DimensionMismatch("dimension must be at least 1")
        self.dim = dim
        self._L = L
        self._dt = dL_dt
        self._dx = dL_dx
        self._dv = dL_dv

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"

    # pointwise -------------------------------------------------------------
    def value(self, t, x, v) -> float:
        return float(self._L(t, np.asarray(x, float), np.asarray(v, float)))

    def dt(self, t, x, v) -> float:
        if self._dt is not None:
            return float(self._dt(t, np.asarray(x, float), np.asarray(v, float)))
        h = _fd_step(t)
        return (self.value(t + h, x, v) - self.value(t - h, x, v)) / (2 * h)

    def dx(self, t, x, v) -> np.ndarray:
        if self._dx is not None:
            return np.atleast_1d(np.asarray(self._dx(t, np.asarray(x, float), np.asarray(v, float)), float))
        return _fd_grad(lambda y: self.value(t, y, v), np.asarray(x, float))

    def dv(self, t, x, v) -> np.ndarray:
        if self._dv is not None:
            return np.atleast_1d(np.asarray(self._dv(t, np.asarray(x, float), np.asarray(v, float)), float))
        return _fd_grad(lambda w: self.value(t, x, w), np.asarray(v, float))

    # batch -------------------------------------------------------------------
    def value_batch(self, t, x, v) -> np.ndarray:
        return np.array([self.value(ti, xi, vi) for ti, xi, vi in zip(t, x, v)])

    def dt_batch(self, t, x, v) -> np.ndarray:
        return np.array([self.dt(ti, xi, vi) for ti, xi, vi in zip(t, x, v)])

    def dx_batch(self, t, x, v) -> np.ndarray:
        return np.array([self.dx(ti, xi, vi) for ti, xi, vi in zip(t, x, v)]).reshape(len(t), self.dim)

    def dv_batch(self, t, x, v) -> np.ndarray:
        return np.array([self.dv(ti, xi, vi) for ti, xi, vi in zip(t, x, v)]).reshape(len(t), self.dim)

    def grads(self, t, x, v) -> tuple[np.ndarray, np.ndarray]:
        """``(dL/dx, dL/dv)`` in one call."""
        return self.dx(t, x, v), self.dv(t, x, v)

    def hessians(self, t, x, v):
        """``(d2L/dv dv, d2L/dx_i dv_j)`` or ``None`` when Newton must difference."""
        return None

    def validate(self, samples: Sequence[tuple], rtol: float = 1e-5) -> float:
        """Largest relative mismatch between the partials and central differences.

        Raises ``ValueError`` if it exceeds ``rtol``.
        """
        worst = 0.0
        for t, x, v in samples:
            x = np.atleast_1d(np.asarray(x, float))
            v = np.atleast_1d(np.asarray(v, float))
            h = _fd_step(t)
            num_t = (self.value(t + h, x, v) - self.value(t - h, x, v)) / (2 * h)
            pairs = [(self.dt(t, x, v), num_t),
                     (self.dx(t, x, v), _fd_grad(lambda y: self.value(t, y, v), x)),
                     (self.dv(t, x, v), _fd_grad(lambda w: self.value(t, x, w), v))]
            for exact, approx in pairs:
                exact, approx = np.atleast_1d(exact), np.atleast_1d(approx)
                err = np.max(np.abs(exact - approx) / np.maximum(1.0, np.abs(exact)))
                worst = max(worst, float(err))
        if worst > rtol:
            raise ValueError(f"partial derivatives disagree with finite differences (relative {worst:.2e})")
        return worst


def _fd_step(z) -> float:
    return 6e-6 * max(1.0, abs(float(z)))


def _fd_grad(f: Callable[[np.ndarray], float], z: np.ndarray) -> np.ndarray:
    g = np.empty(z.size)
    for i in range(z.size):
        h = _fd_step(z[i])
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (f(zp) - f(zm)) / (2 * h)
    return g


class SymbolicLagrangian(Lagrangian):
    """A Lagrangian given as expression text in ``t``, ``x1..xd``, ``v1..vd``.

    All partials, and the second derivatives used by Newton, are symbolic.
    """

    symbolic = True

    def __init__(self, source: str | ex.Expr, dim: int = 1):
        names, aliases = ex.variables_for(dim, extra=("t",))
        tree = ex.parse(source) if isinstance(source, str) else source
        self.source = source if isinstance(source, str) else ex.to_source(source)
        self.expr = ex.bind(tree, names, aliases)
        self.dim = dim
        xs = [f"x{i}" for i in range(1, dim + 1)]
        vs = [f"v{i}" for i in range(1, dim + 1)]
        self.d_t = ex.differentiate(self.expr, "t")
        self.d_x = [ex.differentiate(self.expr, n) for n in xs]
        self.d_v = [ex.differentiate(self.expr, n) for n in vs]
        self.d_vv = [[ex.differentiate(e, n) for n in vs] for e in self.d_v]
        self.d_xv = [[ex.differentiate(e, n) for n in vs] for e in self.d_x]
        self._args = ["t"] + xs + vs
        c = lambda e: ex.compile_expr(e, self._args)  # noqa: E731
        cn = lambda e: ex.compile_numpy(e, self._args)  # noqa: E731
        self._f = c(self.expr)
        self._ft = c(self.d_t)
        self._fx = [c(e) for e in self.d_x]
        self._fv = [c(e) for e in self.d_v]
        self._fgrad = ex.compile_many(self.d_x + self.d_v, self._args)
        self._fhess = ex.compile_many([e for row in self.d_vv + self.d_xv for e in row], self._args)
        self._nf = cn(self.expr)
        self._nft = cn(self.d_t)
        self._nfx = [cn(e) for e in self.d_x]
        self._nfv = [cn(e) for e in self.d_v]

    def __repr__(self):
        return f"SymbolicLagrangian({self.source!r}, dim={self.dim})"

    def _a(self, t, x, v):
        xs = x.tolist() if isinstance(x, np.ndarray) and x.ndim == 1 else np.ravel(x).tolist()
        vs = v.tolist() if isinstance(v, np.ndarray) and v.ndim == 1 else np.ravel(v).tolist()
        return (float(t), *xs, *vs)

    def value(self, t, x, v):
        return self._f(*self._a(t, x, v))

    def dt(self, t, x, v):
        return self._ft(*self._a(t, x, v))

    def dx(self, t, x, v):
        a = self._a(t, x, v)
        return np.array([f(*a) for f in self._fx])

    def dv(self, t, x, v):
        a = self._a(t, x, v)
        return np.array([f(*a) for f in self._fv])

    def grads(self, t, x, v):
        vals = self._fgrad(*self._a(t, x, v))
        d = self.dim
        return np.array(vals[:d]), np.array(vals[d:])

    def hessians(self, t, x, v):
        vals = np.array(self._fhess(*self._a(t, x, v)))
        d = self.dim
        return vals[: d * d].reshape(d, d), vals[d * d :].reshape(d, d)

    def _na(self, t, x, v):
        x = np.asarray(x, float).reshape(len(t), self.dim)
        v = np.asarray(v, float).reshape(len(t), self.dim)
        return (np.asarray(t, float), *x.T, *v.T)

    def value_batch(self, t, x, v):
        return self._nf(*self._na(t, x, v))

    def dt_batch(self, t, x, v):
        return self._nft(*self._na(t, x, v))

    def dx_batch(self, t, x, v):
        a = self._na(t, x, v)
        return np.stack([f(*a) for f in self._nfx], axis=1)

    def dv_batch(self, t, x, v):
        a = self._na(t, x, v)
        return np.stack([f(*a) for f in self._nfv], axis=1)


# ------------------------------------------------------------------ solution

@dataclass(frozen=True)
class ELSolution:
    """Trajectory returned by the solvers.

    ``v`` is the delta derivative of ``x`` recomputed from the stored
    positions and ``p`` the momenta ``dL/dv`` evaluated with it (shifted
    positions for the shifted variant).
    """

    scale: TimeScale
    x: GridFunction
    v: GridFunction
    p: GridFunction
    variant: str
    residual: GridFunction
    newton_iterations: np.ndarray = field(repr=False)
    newton_residuals: np.ndarray = field(repr=False)

    def to_csv(self, path=None) -> str:
        """Columns ``t, x_1..x_d, v_1..v_d, p_1..p_d, el_residual`` with one row per point.

        Cells are empty where a quantity is undefined (``v``, ``p`` at ``b``;
        the residual outside its domain).  ``el_residual`` is the max-norm
        over components.
        """
        d = self.x.dim
        head = ["t"] + [f"x_{i}" for i in range(1, d + 1)] + [f"v_{i}" for i in range(1, d + 1)] \
            + [f"p_{i}" for i in range(1, d + 1)] + ["el_residual"]
        n = len(self.scale)
        res = np.max(np.abs(self.residual.values), axis=1)
        roff = self.residual.offset
        lines = [",".join(head)]
        for k in range(n):
            row = [fmt(self.scale.points[k])] + [fmt(c) for c in self.x.values[k]]
            if k < len(self.v):
                row += [fmt(c) for c in self.v.values[k]] + [fmt(c) for c in self.p.values[k]]
            else:
                row += [""] * (2 * d)
            j = k - roff
            row.append(fmt(res[j]) if 0 <= j < len(res) else "")
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text


# ----------------------------------------------------------------- residuals

def _check(L: Lagrangian, x: GridFunction):
    if x.domain_kind != "full":
        raise DomainMismatch("trajectory must be given on the full scale")
    if x.dim != L.dim:
        raise DimensionMismatch(f"trajectory has dimension {x.dim}, Lagrangian has {L.dim}")


def _reconstruction_noise(L: Lagrangian, t, xarg, v, x) -> np.ndarray:
    """Momentum-equivalent magnitude of the positions that ``dx`` is formed from.

    ``dx = (x_{k+1} - x_k)/mu_k`` inherits rounding relative to
    ``(|x_k| + |x_{k+1}|)/mu_k``, which reaches the momentum through
    ``d2L/dv2`` (estimated by central differences).
    """
    ts = x.scale
    mag = (np.abs(x.values[1:]) + np.abs(x.values[:-1])) / ts.mu[:-1, None]
    out = np.zeros((len(v), 1))
    for j in range(v.shape[1]):
        h = 1e-6 * np.maximum(1.0, np.abs(v[:, j]))
        up, dn = v.copy(), v.copy()
        up[:, j] += h
        dn[:, j] -= h
        col = (L.dv_batch(t, xarg, up) - L.dv_batch(t, xarg, dn)) / (2 * h[:, None])
        out = np.maximum(out, np.max(np.abs(col), axis=1, keepdims=True) * mag[:, j:j + 1])
    return out


def _nonshifted_terms(L: Lagrangian, x: GridFunction):
    """Residual on kappa_both and a per-point magnitude of the terms it cancels."""
    _check(L, x)
    ts = x.scale
    v = delta_derivative(x)
    tk = v.t
    xk = x.values[:-1]
    p = GridFunction(ts, L.dv_batch(tk, xk, v.values), "kappa")
    dp = nabla_derivative(p).values
    fx = L.dx_batch(tk[1:], xk[1:], v.values[1:])
    ns = nabla_sigma(ts).values
    force = ns * fx
    res = dp - force
    nu = ts.nu[1:-1, None]
    noise = _reconstruction_noise(L, tk, xk, v.values, x)
    scale = (np.abs(p.values[1:]) + np.abs(p.values[:-1]) + noise[1:] + noise[:-1]) / nu + np.abs(force)
    return GridFunction(ts, res, "kappa_both"), scale


def el_residual_nonshifted(L: Lagrangian, x: GridFunction) -> GridFunction:
    """``nabla[dL/dv(t, x, dx)] - nabla_sigma(t) dL/dx(t, x, dx)`` at every interior point."""
    return _nonshifted_terms(L, x)[0]


def _shifted_terms(L: Lagrangian, x: GridFunction):
    _check(L, x)
    ts = x.scale
    v = delta_derivative(x)
    tk = v.t
    xs = x.values[1:]
    P = L.dv_batch(tk, xs, v.values)
    mu = ts.mu[:-2, None]
    dP = (P[1:] - P[:-1]) / mu
    fx = L.dx_batch(tk[:-1], xs[:-1], v.values[:-1])
    res = dP - fx
    noise = _reconstruction_noise(L, tk, xs, v.values, x)
    scale = (np.abs(P[1:]) + np.abs(P[:-1]) + noise[1:] + noise[:-1]) / mu + np.abs(fx)
    return GridFunction(ts, res, "kappa2"), scale


def el_residual_shifted(L: Lagrangian, x: GridFunction) -> GridFunction:
    """``delta[dL/dv(t, x^sigma, dx)] - dL/dx(t, x^sigma, dx)`` for ``t, sigma(t)`` in T^kappa."""
    return _shifted_terms(L, x)[0]


def second_el_residual(L: Lagrangian, x: GridFunction) -> GridFunction:
    """``nabla_sigma dL/dt + nabla[dx . dL/dv - L]`` on the interior points.

    Zero on every interior point exactly when the trajectory also satisfies
    the second (DuBois-Reymond type) Euler-Lagrange condition.
    """
    _check(L, x)
    ts = x.scale
    v = delta_derivative(x)
    tk = v.t
    xk = x.values[:-1]
    pv = np.sum(v.values * L.dv_batch(tk, xk, v.values), axis=1)
    g = GridFunction(ts, pv - L.value_batch(tk, xk, v.values), "kappa")
    ft = L.dt_batch(tk[1:], xk[1:], v.values[1:])
    h = nabla_sigma(ts).values[:, 0] * ft + nabla_derivative(g).values[:, 0]
    return GridFunction(ts, h, "kappa_both")


# -------------------------------------------------------------------- Newton

def _maxabs(a: np.ndarray) -> float:
    vals = [abs(c) for c in a.tolist()]
    return math.nan if any(c != c for c in vals) else max(vals)


def _solve_linear(J: np.ndarray, F: np.ndarray, step: int) -> np.ndarray:
    if not np.all(np.isfinite(J)):
        raise SingularJacobian(step, f"non-finite Jacobian at step {step}")
    if J.shape == (1, 1):
        if J[0, 0] == 0:
            raise SingularJacobian(step)
        return F / J[0, 0]
    try:
        return np.linalg.solve(J, F)
    except np.linalg.LinAlgError:
        raise SingularJacobian(step) from None


def _fd_jacobian(F: Callable, v: np.ndarray, F0: np.ndarray) -> np.ndarray:
    d = v.size
    J = np.empty((d, d))
    for j in range(d):
        h = max(1e-7, 1e-7 * abs(v[j]))
        w = v.copy()
        w[j] += h
        J[:, j] = (F(w) - F0) / h
    return J


def newton(system: Callable, jacobian: Callable | None, v0: np.ndarray,
           max_iter: int, step: int) -> tuple[np.ndarray, int, float]:
    """Solve ``F(v) = 0`` from ``v0``.

    ``system(v)`` returns ``(F, threshold)`` and iteration stops once
    ``max|F| <= threshold``.  ``jacobian`` may be ``None``, in which case a
    forward-difference Jacobian is used.  Returns ``(v, iterations, max|F|)``.
    """
    v = np.array(v0, dtype=float)
    it = 0
    while True:
        Fv, thr = system(v)
        r = _maxabs(Fv)
        if not np.isfinite(r):
            raise NewtonDivergence(step, r)
        if r <= thr:
            return v, it, r
        if it >= max_iter:
            raise NewtonDivergence(step, r)
        Jv = jacobian(v) if jacobian is not None else _fd_jacobian(lambda w: system(w)[0], v, Fv)
        v = v - _solve_linear(np.atleast_2d(Jv), Fv, step)
        it += 1


def _prepare(L: Lagrangian, ts: TimeScale, x0, v0, tol):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    if x0.shape != (L.dim,) or v0.shape != (L.dim,):
        raise DimensionMismatch(f"initial data must have dimension {L.dim}")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(v0))):
        raise ValueError("initial data must be finite")
    if not tol > 0:
        raise ValueError("tol must be positive")
    return x0, v0


def _finish(L, ts, x, variant, iters, fres, tol):
    xg = GridFunction(ts, x, "full")
    v = delta_derivative(xg)
    if variant == "nonshifted":
        res, scale = _nonshifted_terms(L, xg)
        p = GridFunction(ts, L.dv_batch(v.t, x[:-1], v.values), "kappa")
    else:
        res, scale = _shifted_terms(L, xg)
        p = GridFunction(ts, L.dv_batch(v.t, x[1:], v.values), "kappa")
    bad = np.abs(res.values) > tol * np.maximum(1.0, scale)
    if np.any(bad):
        k = int(np.argwhere(bad)[0, 0])
        raise NewtonDivergence(k + res.offset, float(np.abs(res.values[k]).max()),
                               f"post-check failed at point {k + res.offset}: "
                               f"residual {np.abs(res.values[k]).max():.3e} exceeds tolerance")
    return ELSolution(ts, xg, v, p, variant, res, np.asarray(iters), np.asarray(fres))


def solve_el_nonshifted(L: Lagrangian, ts: TimeScale, x0, v0, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> ELSolution:
    """Step the non-shifted equation forward from ``x(a) = x0``, ``dx(a) = v0``.

    At each interior ``t_k`` the momentum balance
    ``dL/dv(t_k, x_k, v_k) = p_{k-1} + mu_k dL/dx(t_k, x_k, v_k)`` is solved for
    ``v_k`` and ``x_{k+1} = x_k + mu_k v_k``.  The tolerance is relative to the
    magnitude of the balanced terms (floored at 1).
    """
    x0, v0 = _prepare(L, ts, x0, v0, tol)
    n, d = len(ts), L.dim
    t, mu = ts.points, ts.mu
    x = np.empty((n, d))
    x[0] = x0
    x[1] = x0 + mu[0] * v0
    p_prev = L.dv(t[0], x0, v0)
    v = v0
    iters, fres = [0], [0.0]
    jac_ok = L.hessians(t[0], x0, v0) is not None
    for k in range(1, n - 1):
        tk, xk, mk = float(t[k]), x[k], float(mu[k])

        def system(w, tk=tk, xk=xk, mk=mk, p_prev=p_prev):
            fx, fv = L.grads(tk, xk, w)
            force = mk * fx
            thr = tol * max(1.0, _maxabs(p_prev) + _maxabs(force))
            return fv - force - p_prev, thr

        def jacobian(w, tk=tk, xk=xk, mk=mk):
            hvv, hxv = L.hessians(tk, xk, w)
            return hvv - mk * hxv

        v, it, r = newton(system, jacobian if jac_ok else None, v, max_iter, k)
        p_prev = L.dv(tk, xk, v)
        x[k + 1] = xk + mk * v
        iters.append(it)
        fres.append(r)
    return _finish(L, ts, x, "nonshifted", iters, fres, tol)


def shifted_initial_momentum(L: Lagrangian, t0: float, x1: np.ndarray, v0: np.ndarray) -> np.ndarray:
    """First momentum of the shifted scheme, evaluated at the shifted position ``x(sigma(a))``."""
    return L.dv(t0, x1, v0)


def solve_el_shifted(L: Lagrangian, ts: TimeScale, x0, v0, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> ELSolution:
    """Step the shifted equation forward from ``x(a) = x0``, ``dx(a) = v0``.

    ``p_k = p_{k-1} + mu_{k-1} dL/dx(t_{k-1}, x_k, v_{k-1})`` and then
    ``dL/dv(t_k, x_k + mu_k v_k, v_k) = p_k`` is solved for ``v_k``.
    """
    x0, v0 = _prepare(L, ts, x0, v0, tol)
    n, d = len(ts), L.dim
    t, mu = ts.points, ts.mu
    x = np.empty((n, d))
    x[0] = x0
    x[1] = x0 + mu[0] * v0
    p = shifted_initial_momentum(L, float(t[0]), x[1], v0)
    v = v0
    iters, fres = [0], [0.0]
    jac_ok = L.hessians(t[0], x0, v0) is not None
    for k in range(1, n - 1):
        p = p + mu[k - 1] * L.dx(float(t[k - 1]), x[k], v)
        tk, xk, mk = float(t[k]), x[k], float(mu[k])
        thr = tol * max(1.0, _maxabs(p))

        def system(w, tk=tk, xk=xk, mk=mk, p=p, thr=thr):
            return L.dv(tk, xk + mk * w, w) - p, thr

        def jacobian(w, tk=tk, xk=xk, mk=mk):
            hvv, hxv = L.hessians(tk, xk + mk * w, w)
            return hvv + mk * hxv.T

        v, it, r = newton(system, jacobian if jac_ok else None, v, max_iter, k)
        x[k + 1] = xk + mk * v
        iters.append(it)
        fres.append(r)
    return _finish(L, ts, x, "shifted", iters, fres, tol)


def solve_el(L: Lagrangian, ts: TimeScale, x0, v0, variant: str = "nonshifted",
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ELSolution:
    if variant == "nonshifted":
        return solve_el_nonshifted(L, ts, x0, v0, tol, max_iter)
    if variant == "shifted":
        return solve_el_shifted(L, ts, x0, v0, tol, max_iter)
    raise ValueError(f"unknown variant {variant!r}")
