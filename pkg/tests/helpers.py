"""Random scales, grid functions and Lagrangian/symmetry pairs shared by the tests."""
import numpy as np

from tsnoether import Generator, SymbolicLagrangian, make_timescale

EPS = np.finfo(float).eps


def random_scale(rng, n=None, a=None, gap=(0.1, 1.0), span=None):
    """Scattered scale ``a + cumsum(gaps)`` with log-uniform gaps.

    With ``span`` the gaps are rescaled so the scale covers ``[a, a + span]``
    and only the ratio ``gap[1]/gap[0]`` matters.
    """
    n = int(rng.integers(3, 60)) if n is None else n
    a = float(rng.uniform(-3, 3)) if a is None else a
    gaps = np.exp(rng.uniform(np.log(gap[0]), np.log(gap[1]), n - 1))
    if span is not None:
        gaps *= span / gaps.sum()
    return make_timescale(np.concatenate([[a], a + np.cumsum(gaps)]))


def random_increasing(rng, n):
    return np.cumsum(np.exp(rng.uniform(-2, 1, n))) + rng.uniform(-5, 5)


def within_ulps(lhs, rhs, scale, ulps=4):
    """``|lhs - rhs| <= ulps * eps * scale`` elementwise, ``scale`` being the size of the terms involved."""
    lhs, rhs, scale = np.asarray(lhs), np.asarray(rhs), np.asarray(scale)
    return bool(np.all(np.abs(lhs - rhs) <= ulps * EPS * scale))


def ulp_ratio(lhs, rhs, scale):
    return float(np.max(np.abs(np.asarray(lhs) - rhs) / (EPS * np.asarray(scale) + 1e-300)))


# Quadratic Lagrangians with an exact variational symmetry.  Each factory
# returns (L, generator, x0, v0, needs_positive_time).
def _translation(rng):
    a, b, c = rng.uniform(0.5, 2), rng.uniform(0, 0.05), rng.uniform(-1, 1)
    L = SymbolicLagrangian(f"({a!r} + {b!r}*t^2)*v^2/2 + {c!r}*v")
    return L, Generator.from_text("0", "1"), [rng.uniform(-1, 1)], [rng.uniform(-1, 1)], False


def _scaling(rng):
    al, be, ga = rng.uniform(0.2, 1), rng.uniform(0.5, 2), rng.uniform(-0.3, 0.3)
    L = SymbolicLagrangian(f"{al!r}*x^2/t + {be!r}*t*v^2 + {ga!r}*x*v")
    return L, Generator.from_text("t", "0"), [rng.uniform(0.5, 1.5)], [rng.uniform(-0.3, 0.3)], True


def _time_translation(rng):
    k, c = rng.uniform(0.1, 1), rng.uniform(-0.3, 0.3)
    L = SymbolicLagrangian(f"v^2/2 - {k!r}*x^2/2 + {c!r}*x*v")
    return L, Generator.from_text("1", "0"), [rng.uniform(-1, 1)], [rng.uniform(-1, 1)], False


def _rotation(rng):
    k, m = rng.uniform(0.1, 1), rng.uniform(0.5, 2)
    L = SymbolicLagrangian(f"{m!r}*(v1^2 + v2^2)/2 - {k!r}*(x1^2 + x2^2)/2", dim=2)
    gen = Generator.from_text("0", ["-x2", "x1"], dim=2)
    return L, gen, list(rng.uniform(-1, 1, 2)), list(rng.uniform(-1, 1, 2)), False


SYMMETRIC_FAMILIES = (_translation, _scaling, _time_translation, _rotation)


def random_symmetric_problem(rng, family=None):
    family = SYMMETRIC_FAMILIES[int(rng.integers(len(SYMMETRIC_FAMILIES)))] if family is None else family
    return family(rng)


def noether_scale(rng, positive_time=False, max_points=10_000, span=10.0):
    """Scale of at most ``max_points`` points with gaps log-uniform in [1e-3, 1e-2], cut at ``a + span``.

    The span cap keeps ``|x|`` and the momentum sensitivity bounded, so the
    rounding floor of a backward difference of I stays well under 1e-8.
    """
    n = int(np.exp(rng.uniform(np.log(3), np.log(max_points))))
    a = 1.0 if positive_time else float(rng.uniform(-3, 3))
    pts = np.concatenate([[a], a + np.cumsum(np.exp(rng.uniform(np.log(1e-3), np.log(1e-2), n - 1)))])
    pts = pts[pts <= a + span]
    return make_timescale(pts if len(pts) >= 3 else np.array([a, a + 1e-3, a + 2e-3]))


# Random expressions that stay finite and smooth for t, x, v in [0.5, 2].
EXPR_VARS = ("t", "x", "v")


def random_expr(rng, depth=3):
    """Source text of a random expression; denominators, logs and roots are kept positive."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return str(rng.choice(EXPR_VARS))
        return repr(round(float(rng.uniform(-3, 3)), 3))
    u = random_expr(rng, depth - 1)
    w = random_expr(rng, depth - 1)
    kind = int(rng.integers(10))
    if kind == 0:
        return f"({u}) + ({w})"
    if kind == 1:
        return f"({u}) - ({w})"
    if kind == 2:
        return f"({u}) * ({w})"
    if kind == 3:
        return f"({u}) / (1.5 + ({w})^2)"
    if kind == 4:
        return f"({u})^{int(rng.integers(0, 4))}"
    if kind == 5:
        return f"(1 + ({u})^2)^(sin({w}))"
    if kind == 6:
        return f"-({u})"
    if kind == 7:
        return f"{rng.choice(['sin', 'cos'])}({u})"
    if kind == 8:
        return f"exp(sin({u}))"
    return f"{rng.choice(['log', 'sqrt'])}(1 + ({u})^2)"


def random_env(rng):
    return {name: float(rng.uniform(0.5, 2)) for name in EXPR_VARS}
