import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_centered
from mwlab.errors import InequalityViolation, PathTooShortError
from mwlab.maximal import (
    LL,
    DyadicComponents,
    PartialSums,
    brute_force_block_expectation,
    cormax2_check,
    doob_ratio,
    dyadic_components,
    dyadic_mds_defect,
    dyadic_tables,
    hopf_check,
    lil_normalizer,
    maximal_function,
    reconstruct_sums,
    verify_dyadic_inequality,
    write_slack_csv,
)
from mwlab.models import (
    Observable,
    RenewalSpec,
    build_renewal_chain,
    center_observable,
    iid_model,
    indicator,
    random_chain,
    simulate_path,
    uniform_grid,
)


@pytest.fixture(scope="module")
def iid_pm():
    """iid +-1 increments."""
    model = iid_model([0.5, 0.5])
    return model, Observable([1.0, -1.0], centered=True)


# ---------------------------------------------------------------- normalizers


def test_loglog_is_one_for_small_n():
    n = np.arange(1, 16)
    np.testing.assert_array_equal(LL(n), 1.0)
    assert LL(16) == pytest.approx(math.log(math.log(16)))
    assert lil_normalizer(4) == pytest.approx(math.sqrt(8))
    assert lil_normalizer(4, two=False) == pytest.approx(2.0)


# ---------------------------------------------------------------- partial sums and maximal functions


def test_partial_sum_increments(chain03, ind03):
    path = simulate_path(chain03, 0, 99, 1)
    S = PartialSums.from_path(ind03, path)
    np.testing.assert_allclose(np.diff(S.values), ind03.values[path.states[1:]], atol=1e-13)
    assert S.values[0] == ind03.values[path.states[0]]


def test_polygonal_interpolation():
    S = PartialSums(np.array([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_allclose(S.polygonal([0, 0.25, 0.375, 1.0]), [0.0, 1.0, 2.0, 10.0])


def test_maximal_function_trivial():
    assert maximal_function(PartialSums(np.zeros(50)), "M2") == 0.0
    assert maximal_function(PartialSums(np.ones(50)), "M1") == 1.0
    with pytest.raises(ValueError):
        maximal_function(PartialSums(np.ones(5)), "M3")


@given(st.integers(0, 2**32 - 1), st.integers(1, 400), st.integers(1, 400))
def test_m2_nondecreasing_in_horizon(seed, h1, h2):
    x = np.random.default_rng(seed).normal(size=800)
    S = PartialSums(x)
    lo, hi = sorted((h1, h2))
    assert maximal_function(S, "M2", lo) <= maximal_function(S, "M2", hi)
    assert maximal_function(S, "M1", lo) <= maximal_function(S, "M1", hi)


# ---------------------------------------------------------------- dyadic decomposition


def test_dyadic_iid(iid_pm):
    model, f = iid_pm
    path = simulate_path(model, -64, 64, 3)
    c = dyadic_components(model, f, path, 6)
    assert all(np.all(u == 0) for u in c.u) and c.u_top == 0
    assert all(np.all(dk == 0) for dk in c.d)
    np.testing.assert_array_equal(c.adapted, f.values[path.window(0, 64)])
    rep = verify_dyadic_inequality(c, PartialSums.from_path(f, path, 64))
    assert rep.lhs == pytest.approx(rep.pieces["adapted"]) and rep.slack >= 0


def test_dyadic_depth_zero(chain03, ind03):
    path = simulate_path(chain03, -1, 1, 5)
    c = dyadic_components(chain03, ind03, path, 0)
    s1 = ind03.values[path.at(0)]
    assert c.adapted[0] + c.e_top == pytest.approx(s1, abs=1e-15)
    assert c.e_top == pytest.approx(chain03.apply(ind03.values)[path.at(-1)], abs=1e-15)


def test_dyadic_reconstruction_two_state(chain03, ind03):
    path = simulate_path(chain03, -64, 64, 11)
    c = dyadic_components(chain03, ind03, path, 6)
    S = PartialSums.from_path(ind03, path, 64).values
    np.testing.assert_allclose(reconstruct_sums(c), S, atol=1e-9)


@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.integers(0, 7))
def test_dyadic_reconstruction_random(m, seed, d):
    model, f = random_centered(m, seed)
    n = 1 << d
    path = simulate_path(model, -n, n, seed)
    c = dyadic_components(model, f, path, d)
    np.testing.assert_allclose(reconstruct_sums(c), PartialSums.from_path(f, path, n).values, atol=1e-9)
    assert all(np.all(u >= 0) for u in c.u)


def test_dyadic_reconstruction_grid():
    model = random_chain(4, np.random.default_rng(1))
    f = center_observable(model, Observable(np.random.default_rng(2).normal(size=(4, 3)), uniform_grid(0, 1, 3), 1.5))
    path = simulate_path(model, -32, 32, 4)
    c = dyadic_components(model, f, path, 5)
    np.testing.assert_allclose(reconstruct_sums(c), PartialSums.from_path(f, path, 32).values, atol=1e-9)
    assert verify_dyadic_inequality(c, PartialSums.from_path(f, path, 32)).slack >= -1e-9


def test_dyadic_path_too_short(chain03, ind03):
    path = simulate_path(chain03, -100, 300, 0)
    with pytest.raises(PathTooShortError, match="-256"):
        dyadic_components(chain03, ind03, path, 8)


def test_dyadic_inequality_100_paths():
    model, f = random_centered(5, 12345)
    tables = dyadic_tables(model, f, 8)
    reps = []
    for s in range(100):
        path = simulate_path(model, -256, 256, 12345, s)
        c = dyadic_components(model, f, path, 8, tables)
        reps.append(verify_dyadic_inequality(c, PartialSums.from_path(f, path, 256), s))
    assert min(r.slack for r in reps) >= -1e-9
    buf = io.StringIO()
    write_slack_csv(reps, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path_id,d,lhs,rhs,slack" and len(lines) == 101


def test_zero_observable_both_sides_zero(chain03):
    f = Observable(np.zeros(2), centered=True)
    path = simulate_path(chain03, -16, 16, 0)
    rep = verify_dyadic_inequality(dyadic_components(chain03, f, path, 4), PartialSums.from_path(f, path, 16))
    assert rep.lhs == 0 and rep.rhs == 0


def test_violation_dumps_path(chain03, ind03, tmp_path):
    path = simulate_path(chain03, -4, 4, 0)
    c = dyadic_components(chain03, ind03, path, 2)
    broken = DyadicComponents(c.depth, 0 * c.adapted, [0 * x for x in c.d], [0 * x for x in c.e], 0 * c.e_top, None, path)
    sums = PartialSums(np.array([5.0, 0.0, 0.0, 0.0]))
    with pytest.raises(InequalityViolation, match="path_7.csv"):
        verify_dyadic_inequality(broken, sums, 7, tmp_path)
    assert (tmp_path / "path_7.csv").read_text().startswith("index,state")


@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_block_expectations_match_brute_force(m, seed):
    model, f = random_centered(m, seed)
    tables = dyadic_tables(model, f, 6)
    for k, h in enumerate(tables):
        np.testing.assert_allclose(h, brute_force_block_expectation(model, f, 1 << k), atol=1e-10)


@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_dyadic_martingale_property_exact(m, seed):
    model, f = random_centered(m, seed)
    assert dyadic_mds_defect(model, f, 7) <= 1e-10


def test_dyadic_martingale_property_empirical(chain03, ind03):
    # level 0: d_0 at block q given W_{2q-2}
    path = simulate_path(chain03, -(1 << 15), 1 << 15, 9)
    c = dyadic_components(chain03, ind03, path, 15)
    cond = path.at(2 * np.arange(c.d[0].size) - 2)
    for w in (0, 1):
        x = c.d[0][cond == w]
        assert abs(x.mean()) <= 5 * x.std() / math.sqrt(x.size)


# ---------------------------------------------------------------- weak type


def test_hopf_iid(iid_pm):
    model, f = iid_pm
    rep = hopf_check(model, f, [0.5, 1, 2], n=256, M=10_000, seed=12345)
    assert np.all(rep.slack >= 0)


def test_doob_trivial_cases(chain03, ind03, iid_pm):
    zero = doob_ratio(chain03, Observable(np.zeros(2), centered=True), 16, 1000, 0)
    assert zero.degenerate and not zero.exceeds
    model, f = iid_pm
    assert doob_ratio(model, f, 1, 1000, 0).ratio == 1.0


def test_doob_iid(iid_pm):
    model, f = iid_pm
    rep = doob_ratio(model, f, 1024, 10_000, 12345)
    assert rep.ratio <= 2 + 3 * rep.se


def test_doob_small_m_warns(iid_pm):
    model, f = iid_pm
    with pytest.warns(UserWarning, match="wide"):
        doob_ratio(model, f, 8, 200, 0)


def test_cormax2_iid_bounded(iid_pm):
    model, f = iid_pm
    tab = cormax2_check(model, f, 10, 2000, 12345)
    assert tab.bounded and np.all(tab.ratios > 0)


def test_cormax2_zero(chain03):
    tab = cormax2_check(chain03, Observable(np.zeros(2), centered=True), 6, 100, 0)
    assert np.all(tab.ratios == 0) and tab.bounded


def test_cormax2_renewal_informational():
    model = build_renewal_chain(RenewalSpec(3.0, 256))
    tab = cormax2_check(model, indicator(model, 0), 8, 200, 1, informational=True)
    assert tab.informational and np.all(np.isfinite(tab.ratios))
