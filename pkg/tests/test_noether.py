import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import SYMMETRIC_FAMILIES, noether_scale, random_scale, random_symmetric_problem
from tsnoether import (
    Generator,
    GridFunction,
    SymbolicLagrangian,
    SymmetryGroup,
    admissibility_check,
    bt_quantity_C,
    conservation_report,
    drift_report,
    dyadic_scale,
    extract_generator,
    invariance_check,
    make_timescale,
    noether_I,
    solve_el_nonshifted,
    solve_el_shifted,
    uniform_scale,
)
from tsnoether.errors import InconsistentRichardson, VariantMismatch
from tsnoether.noether import correction_integrand, infinitesimal_invariance_residual
from tsnoether.timescale import nabla_antiderivative, nabla_derivative
from tsnoether.variational import second_el_residual

BT = SymbolicLagrangian("x^2/t + t*v^2")
FREE = SymbolicLagrangian("v^2/2")
SCALING = SymmetryGroup.from_text("t*exp(s)", "x")
ZETA_T = Generator.from_text("t", "0")


def line(ts):
    return GridFunction(ts, ts.points.copy())


def test_group_identity_at_zero():
    assert SCALING.identity_error([1.0, 2.5], [[1.0], [-3.0]]) == 0
    assert SymmetryGroup.from_text("t + s^2 + 1", "x").identity_error([1.0], [[0.0]]) == 1


def test_admissibility_of_scaling_group():
    rep = admissibility_check(SCALING, make_timescale([1, 2, 4, 8]), [-1, 0, 1, math.log(2)])
    assert rep.passed
    assert np.allclose(rep.entries[-1].image.points, [2, 4, 8, 16], rtol=1e-15)
    assert "PASS" in rep.summary()


def test_admissibility_identity_group():
    assert admissibility_check(SymmetryGroup.identity(), make_timescale([0, 1, 2]), [-1, 0, 1]).passed


def test_admissibility_degenerate_time_map():
    G = SymmetryGroup.from_text("t*(1 - s)", "x")
    rep = admissibility_check(G, make_timescale([1, 2, 3]), [0, 1])
    assert not rep.passed
    bad = rep.entries[1]
    assert not bad.delta_nonzero and not bad.strictly_increasing
    assert rep.entries[0].passed


def test_generator_extraction():
    gen = extract_generator(SCALING)
    assert gen.provenance == "analytic"
    assert gen.zeta(3.0) == 3.0 and gen.xi(np.array([5.0]))[0] == 0.0
    ident = extract_generator(SymmetryGroup.identity())
    assert ident.zeta(2.0) == 0 and ident.xi(np.array([1.0]))[0] == 0


def test_numeric_generator():
    G = SymmetryGroup(lambda s, t: t * math.exp(s), lambda s, x: x)
    gen = extract_generator(G, make_timescale([1, 2, 3]), probe_points=[2.0], ds=1e-6)
    assert gen.provenance.startswith("finite-difference")
    assert abs(gen.zeta(2.0) - 2) <= 1e-9


def test_numeric_generator_rejects_kinked_group():
    G = SymmetryGroup(lambda s, t: t + s + 1e-3 * math.copysign(abs(s) ** 0.5, s), lambda s, x: x)
    with pytest.raises(InconsistentRichardson):
        extract_generator(G, make_timescale([1, 2, 3]), probe_points=[1.0, 2.0])


def test_invariance_of_bt_lagrangian():
    ts = make_timescale([1, 1.5, 2, 3, 3.5, 5])
    x = GridFunction(ts, np.cos(ts.points))
    rep = invariance_check(BT, SCALING, ts, x, [-1, -0.5, 0, 0.5, 1])
    assert rep.passed
    assert max(e.max_pointwise_diff for e in rep.entries) <= 1e-13


def test_identity_group_is_exactly_invariant():
    ts = random_scale(np.random.default_rng(3))
    x = GridFunction(ts, np.sin(ts.points))
    rep = invariance_check(FREE, SymmetryGroup.identity(), ts, x, [-0.3, 0.7])
    assert all(e.max_interval_diff == 0 for e in rep.entries)


def test_free_particle_is_not_scale_invariant():
    ts = make_timescale([1, 2, 3, 4])
    rep = invariance_check(FREE, SCALING, ts, line(ts), [-0.5, 0, 0.5])
    assert not rep.passed
    assert [e.passed for e in rep.entries] == [False, True, False]
    assert "FAIL" in rep.summary()


def test_infinitesimal_residual_examples():
    rng = np.random.default_rng(5)
    ts = random_scale(rng, a=1.0)
    x = GridFunction(ts, rng.normal(size=len(ts)))
    r = infinitesimal_invariance_residual(BT, ZETA_T, x)
    assert r.domain_kind == "kappa"
    assert np.abs(r.values).max() <= 1e-12 * (1 + np.abs(BT.value_batch(ts.points[:-1], x.values[:-1],
                                                                              np.diff(x.values, axis=0) / ts.mu[:-1, None])).max())
    zero = Generator.from_text("0", "0")
    assert np.all(infinitesimal_invariance_residual(BT, zero, x).values == 0)
    v = np.diff(x.values[:, 0]) / ts.mu[:-1]
    assert np.allclose(infinitesimal_invariance_residual(FREE, ZETA_T, x).values[:, 0], -0.5 * v ** 2, rtol=1e-14)


def test_identity_path_gives_zero_I_on_any_scale():
    for ts in (make_timescale([1, 2, 3]), dyadic_scale(0, 6), random_scale(np.random.default_rng(1), a=1.0)):
        I = noether_I(BT, ZETA_T, line(ts))
        assert np.abs(I.values).max() <= 1e-12


def test_C_on_identity_path():
    C = bt_quantity_C(BT, ZETA_T, line(make_timescale([1, 2, 3])))
    assert C.values[:, 0].tolist() == [6.0, 7.5]


def test_C_on_dyadic_scale_uses_sigma_2t():
    ts = dyadic_scale(0, 5)
    x = GridFunction(ts, np.sqrt(ts.points))
    v = np.diff(x.values[:, 0]) / ts.mu[:-1]
    t = ts.points[:-1]
    expected = 2 * t * (x.values[1:, 0] ** 2 / t - t * v ** 2)
    assert np.allclose(bt_quantity_C(BT, ZETA_T, x).values[:, 0], expected, rtol=1e-15)


def test_shifted_solution_requires_override():
    sol = solve_el_shifted(BT, uniform_scale(1, 2, 0.1), [1.0], [0.1])
    with pytest.raises(VariantMismatch):
        noether_I(BT, ZETA_T, sol)
    assert len(noether_I(BT, ZETA_T, sol, allow_shifted=True)) == len(sol.scale) - 1


def test_correction_integrand_is_zeta_times_second_el_residual():
    ts = uniform_scale(1, 10, 1e-2)
    sol = solve_el_nonshifted(BT, ts, [1.0], [0.1])
    H = second_el_residual(BT, sol.x).values[:, 0]
    integrand = correction_integrand(BT, ZETA_T, sol.x).values[:, 0]
    assert np.array_equal(integrand, ts.points[1:-1] * H)
    assert np.abs(H).max() > 1e-4


def test_C_without_shift_is_I_minus_correction():
    rng = np.random.default_rng(8)
    ts = random_scale(rng, a=1.0)
    sol = solve_el_nonshifted(BT, ts, [1.0], [0.2])
    I = noether_I(BT, ZETA_T, sol).values[:, 0]
    C = bt_quantity_C(BT, ZETA_T, sol, shifted_args=False).values[:, 0]
    corr = nabla_antiderivative(correction_integrand(BT, ZETA_T, sol.x), kind="kappa").values[:, 0]
    assert np.allclose(I - corr, C, rtol=0, atol=4e-16 * np.abs(I).max())


def test_matches_printed_formula_on_uniform_grid_only():
    def printed(ts, x):
        t = ts.points[:-1]
        xk = x[:-1]
        v = np.diff(x) / ts.mu[:-1]
        E = xk ** 2 / t - t * v ** 2
        integrand = -xk[1:] ** 2 / t[1:] + t[1:] * v[1:] ** 2 - t[1:] * np.diff(E) / ts.nu[1:-1]
        return ts.points[1:] * E + np.concatenate([[0.0], np.cumsum(ts.nu[1:-1] * integrand)])

    ts = uniform_scale(1, 3, 0.01)
    sol = solve_el_nonshifted(BT, ts, [1.0], [0.1])
    assert np.allclose(noether_I(BT, ZETA_T, sol).values[:, 0], printed(ts, sol.x.values[:, 0]), rtol=1e-13)
    ts = dyadic_scale(0, 6)
    sol = solve_el_nonshifted(BT, ts, [1.0], [0.1])
    I = noether_I(BT, ZETA_T, sol).values[:, 0]
    assert not np.allclose(I, printed(ts, sol.x.values[:, 0]), rtol=1e-6)
    assert drift_report(I).relative <= 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
@settings(max_examples=30, deadline=None)
def test_generator_scaling_scales_I(seed, c):
    rng = np.random.default_rng(seed)
    L, gen, x0, v0, pos = random_symmetric_problem(rng)
    ts = random_scale(rng, a=1.0 if pos else None)
    sol = solve_el_nonshifted(L, ts, x0, v0)
    I1 = noether_I(L, gen, sol).values
    Ic = noether_I(L, gen.scaled(c), sol).values
    # I can be a small difference of larger terms (angular momentum), so the
    # absolute slack follows the size of those terms
    terms = (1 + np.abs(sol.x.values).max()) * (1 + np.abs(sol.p.values).max())
    assert np.allclose(Ic, c * I1, rtol=1e-14, atol=1e-14 * abs(c) * terms)


@given(st.integers(0, 2**32 - 1), st.sampled_from(SYMMETRIC_FAMILIES))
@settings(max_examples=40, deadline=None)
def test_nabla_I_vanishes_on_solutions(seed, family):
    rng = np.random.default_rng(seed)
    L, gen, x0, v0, pos = family(rng)
    ts = noether_scale(rng, pos, max_points=2000)
    sol = solve_el_nonshifted(L, ts, x0, v0)
    assert np.abs(infinitesimal_invariance_residual(L, gen, sol.x).values).max() <= 1e-12
    I = noether_I(L, gen, sol)
    assert np.abs(nabla_derivative(I).values).max() <= 1e-8 * (1 + np.abs(I.values).max())


def test_nabla_I_on_dense_scales_is_at_rounding_level():
    # Beyond the span the property test uses, |nabla I| is bounded by the
    # rounding of the stored positions: eps |x| |d2L/dv2| / (mu nu).
    rng = np.random.default_rng(11)
    L, gen, x0, v0, _ = SYMMETRIC_FAMILIES[0](rng)
    ts = random_scale(rng, n=10_000, a=0.0, gap=(1, 30), span=2.0)
    sol = solve_el_nonshifted(L, ts, x0, v0)
    I = noether_I(L, gen, sol)
    nab = np.abs(nabla_derivative(I).values[:, 0])
    t = ts.points[1:-1]
    floor = np.finfo(float).eps * (np.abs(sol.x.values).max() + 1) * (2.0 + 0.05 * t ** 2) / (
        ts.mu[1:-1] * ts.nu[1:-1])
    assert np.all(nab <= 16 * floor)


def test_discrete_reduction():
    ts = random_scale(np.random.default_rng(2), n=200)
    sol = solve_el_nonshifted(FREE, ts, [0.3], [-0.7])
    I = noether_I(FREE, Generator.from_text("0", "1"), sol).values[:, 0]
    assert np.array_equal(I, sol.p.values[:, 0])
    assert np.abs(I - I[0]).max() <= 1e-12


def test_drift_report_examples():
    assert drift_report([2.0, 2.0, 2.0]).relative == 0
    assert drift_report([0.0, 0.0, 0.0]).relative == 0
    d = drift_report([1.0, 1.5, 0.5])
    assert (d.max_abs, d.relative, d.index) == (0.5, 0.5, 1)


def test_conservation_report_bt():
    ts = uniform_scale(1, 10, 1e-2)
    rep = conservation_report(BT, ZETA_T, solve_el_nonshifted(BT, ts, [1.0], [0.1]))
    assert rep.drift_I.relative <= 1e-12
    assert rep.drift_C.relative >= 1e2 * max(rep.drift_I.relative, 1e-16)
    rows = rep.to_csv().splitlines()
    assert rows[0] == "t,I,C,nabla_I,second_el_residual"
    assert len(rows) == len(ts) + 1
    assert rows[1].endswith(",,") and rows[-1] == f"{ts.b!r},,,,"
    assert "[nonshifted]" in rep.summary()
