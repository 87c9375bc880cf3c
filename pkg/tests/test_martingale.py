import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_centered
from mwlab.errors import IllConditionedError, UncenteredError
from mwlab.martingale import (
    apply_q,
    approximation_error,
    asymptotic_covariance,
    autocovariance_variance,
    cesaro_defect,
    decomposition_defect,
    martingale_difference,
    resolvent_approx,
    solve_poisson,
)
from mwlab.models import (
    FiniteMarkovModel,
    Observable,
    center_observable,
    iid_model,
    indicator,
    pair_chain,
    pair_coboundary,
    random_chain,
    simulate_path,
    simulate_paths,
    two_state,
    uniform_grid,
)

LAM = 0.1


@pytest.fixture(scope="module")
def iid3():
    model = iid_model([0.5, 0.3, 0.2])
    return model, center_observable(model, Observable([1.0, -2.0, 4.0]))


# ---------------------------------------------------------------- Q


def test_q_iid_kills_centered(iid3):
    model, f = iid3
    np.testing.assert_allclose(apply_q(model, f).values, 0.0, atol=1e-15)


def test_q_fixes_constants(chain03):
    np.testing.assert_allclose(apply_q(chain03, Observable(np.full(2, 2.5))).values, 2.5, rtol=1e-15)


def test_q_eigenfunction(chain03, ind03):
    np.testing.assert_allclose(apply_q(chain03, ind03).values, LAM * ind03.values, atol=1e-15)


# ---------------------------------------------------------------- Poisson


def test_poisson_zero(chain03):
    sol = solve_poisson(chain03, Observable(np.zeros(2)))
    np.testing.assert_allclose(sol.h, 0.0, atol=1e-15)


def test_poisson_two_state_gap(chain03, ind03):
    sol = solve_poisson(chain03, ind03)
    assert sol.h[0] - sol.h[1] == pytest.approx(1 / (0.3 + 0.6), abs=1e-13)
    assert sol.h[0] - sol.h[1] == pytest.approx(10 / 9, abs=1e-13)
    assert sol.centered


def test_poisson_random_20_state():
    model, f = random_centered(20, 99)
    sol = solve_poisson(model, f)
    assert sol.residual <= 1e-10
    assert abs(model.pi @ sol.h) <= 1e-10
    np.testing.assert_allclose(sol.h - model.apply(sol.h), f.values, atol=1e-10)


def test_poisson_uncentered_rejected(chain03):
    with pytest.raises(UncenteredError):
        solve_poisson(chain03, indicator(chain03, 0, centered=False))


def test_poisson_ill_conditioned_recommends_resolvent():
    # two well-mixed blocks joined by transitions of probability 1e-14
    e = 1e-14
    P = np.array([[0.5, 0.5 - e, e, 0], [0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5], [e, 0, 0.5, 0.5 - e]])
    model = FiniteMarkovModel.from_matrix(P)
    f = center_observable(model, Observable([1.0, 1.0, -1.0, -1.0]))
    with pytest.raises(IllConditionedError, match="resolvent_approx"):
        solve_poisson(model, f)


def test_poisson_grid_multiple_rhs():
    model = random_chain(6, np.random.default_rng(4))
    grid = uniform_grid(0, 1, 5)
    f = center_observable(model, Observable(np.random.default_rng(5).normal(size=(6, 5)), grid))
    sol = solve_poisson(model, f)
    for j in range(5):
        col = solve_poisson(model, Observable(f.values[:, j], centered=True)).h
        np.testing.assert_allclose(sol.h[:, j], col, atol=1e-12)


@given(st.integers(3, 50), st.integers(0, 2**32 - 1))
def test_poisson_invariants(m, seed):
    model, f = random_centered(m, seed)
    sol = solve_poisson(model, f)
    assert sol.residual <= 1e-10 and sol.mean <= 1e-10


# ---------------------------------------------------------------- resolvent


def test_resolvent_zero_and_eps_one(chain03, ind03):
    np.testing.assert_array_equal(resolvent_approx(chain03, Observable(np.zeros(2)), 0.3).values, 0.0)
    np.testing.assert_array_equal(resolvent_approx(chain03, ind03, 1.0).values, ind03.values)


def test_resolvent_small_eps_close_to_poisson(chain03, ind03):
    y = resolvent_approx(chain03, ind03, 1e-6)
    h = solve_poisson(chain03, ind03).h
    assert np.abs(y.values - h).max() <= 1e-4


def test_resolvent_series_matches_solve(chain03, ind03):
    eps = 0.01
    y = resolvent_approx(chain03, ind03, eps)
    ref = np.linalg.solve(np.eye(2) - (1 - eps) * chain03.dense, ind03.values)
    np.testing.assert_allclose(y.values, ref, atol=1e-13)


@pytest.mark.parametrize("eps", [0.0, -0.1, 1.5])
def test_resolvent_eps_range(chain03, ind03, eps):
    with pytest.raises(ValueError):
        resolvent_approx(chain03, ind03, eps)


def test_resolvent_converges_to_solution(chain03, ind03):
    gaps = [np.abs(resolvent_approx(chain03, ind03, e).values - solve_poisson(chain03, ind03).h).max() for e in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_cesaro_defect_vanishes(chain03, ind03):
    vals = [cesaro_defect(chain03, ind03, n) for n in (1, 10, 100, 1000)]
    # V_n f / n = g_n / n with g_n bounded, so the defect decays like 1/n
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] * 1000 <= vals[1] * 10 * (1 + 1e-9)


# ---------------------------------------------------------------- martingale differences


def test_md_iid(iid3):
    model, f = iid3
    md = martingale_difference(model, f)
    for w in range(3):
        for w2 in range(3):
            assert md(w, w2) == pytest.approx(f.values[w2], abs=1e-14)


def test_md_zero(chain03):
    md = martingale_difference(chain03, Observable(np.zeros(2)))
    assert np.all(md.along(np.array([0, 1, 1, 0])) == 0)


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_md_conditional_means_vanish(m, seed):
    model, f = random_centered(m, seed)
    md = martingale_difference(model, f)
    assert np.abs(md.conditional_means()).max() <= 1e-12
    P = model.dense
    explicit = np.array([sum(P[w, w2] * md(w, w2) for w2 in range(m)) for w in range(m)])
    assert np.abs(explicit).max() <= 1e-12


def test_md_variance_matches_long_path(chain03, ind03):
    md = martingale_difference(chain03, ind03)
    path = simulate_path(chain03, -1, 1_000_000, seed=7)
    d = md.along(path.states)
    assert md.sigma2 == pytest.approx(chain03.pi @ md.h**2 - chain03.pi @ md.Ph**2, rel=1e-14)
    assert np.mean(d * d) == pytest.approx(md.sigma2, rel=0.01)


# ---------------------------------------------------------------- covariance


def test_sigma2_iid(iid3):
    model, f = iid3
    assert asymptotic_covariance(model, f).sigma2 == pytest.approx(model.pi @ f.values**2, rel=1e-13)


def test_sigma2_fair_chain():
    model = two_state(0.5, 0.5)
    assert abs(asymptotic_covariance(model, indicator(model, 0)).sigma2 - 0.25) <= 1e-12


def test_sigma2_matches_autocovariance(chain03, ind03):
    s2 = asymptotic_covariance(chain03, ind03).sigma2
    gam0 = chain03.pi @ ind03.values**2
    series = gam0 + 2 * sum(chain03.pi @ (ind03.values * (np.linalg.matrix_power(chain03.dense, k) @ ind03.values)) for k in range(1, 201))
    assert abs(s2 - series) <= 1e-8
    value, tail = autocovariance_variance(chain03, ind03, 200)
    assert abs(s2 - value) <= 1e-8
    assert tail is not None and tail >= 0


@given(st.integers(3, 50), st.integers(0, 2**32 - 1))
def test_sigma2_two_routes(m, seed):
    model, f = random_centered(m, seed)
    s2 = asymptotic_covariance(model, f).sigma2
    value, tail = autocovariance_variance(model, f, 200)
    slack = 1e-8 + (tail or 0.0)
    assert abs(s2 - value) <= slack * max(1.0, abs(s2))


@given(st.integers(0, 2**32 - 1))
def test_grid_covariance_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    model = random_chain(5, rng)
    grid = uniform_grid(0, 1, 6)
    f = center_observable(model, Observable(rng.normal(size=(5, 6)), grid))
    cov = asymptotic_covariance(model, f)
    np.testing.assert_allclose(cov.K, cov.K.T, atol=1e-14)
    assert cov.min_eigenvalue() >= -1e-10
    u = rng.normal(size=6)
    scalar = Observable(f.values @ (grid.weights * u), centered=True)
    assert cov.form(u) == pytest.approx(asymptotic_covariance(model, scalar).sigma2, rel=1e-9, abs=1e-13)


def test_covariance_csv(chain03):
    grid = uniform_grid(0, 1, 3)
    f = center_observable(chain03, Observable([[1.0, 0, 2], [0, 1, -1]], grid))
    buf = io.StringIO()
    asymptotic_covariance(chain03, f).write_csv(buf)
    rows = [list(map(float, r.split(","))) for r in buf.getvalue().splitlines()]
    assert np.array(rows).shape == (3, 3)


def test_true_coboundary_has_zero_variance_and_leaves_k_invariant():
    base = random_chain(3, np.random.default_rng(8))
    pairs = pair_chain(base)
    cob = pair_coboundary(pairs, [0.7, -1.1, 2.0])
    assert abs(asymptotic_covariance(pairs, cob).sigma2) <= 1e-10
    rng = np.random.default_rng(9)
    f = center_observable(pairs, Observable(rng.normal(size=pairs.m)))
    g = f.with_values(f.values + cob.values)
    assert asymptotic_covariance(pairs, g).sigma2 == pytest.approx(asymptotic_covariance(pairs, f).sigma2, abs=1e-10)


# ---------------------------------------------------------------- approximation error


def test_approx_error_iid_and_zero_lag(iid3, chain03, ind03):
    model, f = iid3
    assert approximation_error(model, f, 17) == pytest.approx(0.0, abs=1e-14)
    assert approximation_error(chain03, ind03, 0) == 0.0


def test_approx_error_two_state(chain03, ind03):
    n = 1024
    md = martingale_difference(chain03, ind03)
    pi, Ph = chain03.pi, md.Ph
    closed = math.sqrt(2 * pi @ Ph**2 - 2 * pi @ (Ph * (np.linalg.matrix_power(chain03.dense, n) @ Ph)))
    val = approximation_error(chain03, ind03, n)
    assert abs(val - closed) <= 1e-10
    assert val / math.sqrt(n) < 0.05
    assert val <= 2 * math.sqrt(pi @ Ph**2) + 1e-15


def test_approx_error_monte_carlo(chain03, ind03):
    n, M = 1024, 10_000
    md = martingale_difference(chain03, ind03)
    states = simulate_paths(chain03, -1, n - 1, 21, range(M))
    sx = ind03.values[states[:, 1:]].sum(axis=1)
    sd = (md.h[states[:, 1:]] - md.Ph[states[:, :-1]]).sum(axis=1)
    mc = math.sqrt(np.mean((sx - sd) ** 2))
    assert mc == pytest.approx(approximation_error(chain03, ind03, n), rel=0.02)


def test_approx_error_grid_matches_scalar_points():
    model = random_chain(4, np.random.default_rng(2))
    grid = uniform_grid(0, 1, 1)
    vals = np.random.default_rng(3).normal(size=4)
    scalar = center_observable(model, Observable(vals))
    gridded = Observable(scalar.values[:, None], grid, 2.0, centered=True)
    # one grid point of weight 1 is the scalar case
    assert approximation_error(model, gridded, 9) == pytest.approx(approximation_error(model, scalar, 9), rel=1e-10)


@given(st.integers(2, 12), st.integers(0, 2**32 - 1), st.integers(1, 10_000))
def test_decomposition_identity_pathwise(m, seed, n):
    model, f = random_centered(m, seed)
    md = martingale_difference(model, f)
    states = simulate_path(model, -1, n - 1, seed).states
    scale = max(1.0, np.abs(md.Ph).max())
    assert decomposition_defect(md, f, states, n) <= 1e-10 * scale
