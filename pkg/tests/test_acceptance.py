"""The eleven acceptance criteria at their stated tolerances and runtime budgets.

Each test records one "PASS/FAIL criterion N: ..." line; the lines are
printed as they happen and collected in a terminal summary section.
"""

import math
import time

import numpy as np
import pytest

from mwlab.conditions import autocovariance_sequence, gaussian_norm, mw2_norm
from mwlab.empirical import (
    EmpiricalSetup,
    bound_checks,
    coefficient_table,
    empirical_limit_experiment,
    load_oracle,
    mixing_coefficients,
    uniform_driver,
)
from mwlab.harness import load_config, run
from mwlab.limits import clt_experiment, counterexample_experiment, lil_experiment
from mwlab.martingale import asymptotic_covariance, autocovariance_variance, solve_poisson
from mwlab.maximal import (
    PartialSums,
    brute_force_block_expectation,
    doob_ratio,
    dyadic_components,
    dyadic_tables,
    hopf_check,
    verify_dyadic_inequality,
)
from mwlab.models import Observable, RenewalSpec, center_observable, indicator, iid_model, lebesgue_grid, random_chain, simulate_path, two_state, uniform_grid

SEED = 12345


@pytest.fixture
def report(record_property):
    def _report(n: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        record_property("acceptance", line)
        assert ok, line

    return _report


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


@pytest.fixture(scope="module")
def chains():
    """50 seeded random ergodic chains with 3 to 50 states and centered observables."""
    rng = np.random.default_rng(SEED)
    out = []
    for m in rng.integers(3, 51, size=50):
        model = random_chain(int(m), rng)
        out.append((model, center_observable(model, Observable(rng.normal(size=m)))))
    return out


def test_criterion_01_poisson_exactness(chains, report):
    with Timer() as t:
        sols = [solve_poisson(model, f) for model, f in chains]
    res = max(s.residual for s in sols)
    mean = max(s.mean for s in sols)
    ok = res <= 1e-10 and mean <= 1e-10 and t.elapsed < 5
    report(1, ok, f"max residual {res:.2e}, max |pi(h)| {mean:.2e} over 50 chains in {t.elapsed:.2f}s")


def test_criterion_02_variance_consistency(chains, report):
    with Timer() as t:
        worst = 0.0
        for model, f in chains:
            value, _ = autocovariance_variance(model, f, 400)
            worst = max(worst, abs(asymptotic_covariance(model, f).sigma2 - value))
        half = two_state(0.5, 0.5)
        quarter = abs(asymptotic_covariance(half, indicator(half, 0)).sigma2 - 0.25)
    ok = worst <= 1e-8 and quarter <= 1e-12 and t.elapsed < 5
    report(2, ok, f"max |sigma2 - autocovariance series| {worst:.2e}, a=b=1/2 error {quarter:.1e}, {t.elapsed:.2f}s")


def test_criterion_03_pathwise_dyadic(report):
    with Timer() as t:
        rng = np.random.default_rng(SEED)
        model = random_chain(5, rng)
        f = center_observable(model, Observable(rng.normal(size=5)))
        tables = dyadic_tables(model, f, 8)
        slack = math.inf
        for s in range(100):
            path = simulate_path(model, -256, 256, SEED, s)
            c = dyadic_components(model, f, path, 8, tables)
            slack = min(slack, verify_dyadic_inequality(c, PartialSums.from_path(f, path, 256), s).slack)
        brute = 0.0
        for m in range(2, 11):
            rng = np.random.default_rng(SEED + m)
            bm = random_chain(m, rng)
            bf = center_observable(bm, Observable(rng.normal(size=m)))
            for k, h in enumerate(dyadic_tables(bm, bf, 6)):
                brute = max(brute, float(np.abs(h - brute_force_block_expectation(bm, bf, 1 << k)).max()))
    ok = slack >= -1e-9 and brute <= 1e-10 and t.elapsed < 30
    report(3, ok, f"min slack {slack:.3g} over 100 paths, brute-force gap {brute:.1e}, {t.elapsed:.2f}s")


def test_criterion_04_mw2_iid_closed_form(report):
    with Timer() as t:
        model = iid_model([0.1, 0.2, 0.3, 0.4])
        f = center_observable(model, Observable([3.0, -1.0, 0.5, 2.0]))
        G = gaussian_norm(model, f)
        tr = mw2_norm(model, f, 40)
    closed = G / (1 - 2**-0.5)
    rel = abs(tr.value - closed) / closed
    geometric = np.allclose(tr.partials, G * np.cumsum(2.0 ** (-np.arange(41) / 2)), rtol=1e-13)
    ok = rel <= 1e-6 and geometric and t.elapsed < 1
    report(4, ok, f"depth-40 partial {tr.value:.12g} vs {closed:.12g} (rel {rel:.1e}), {t.elapsed:.3f}s")


def test_criterion_05_clt_band(report):
    chain = two_state(0.3, 0.6)
    with Timer() as t:
        res = clt_experiment(chain, indicator(chain, 0), 1 << 12, 5000, SEED)
    ks = res.summary["ks_statistic"]
    ok = res.verdicts["ks_statistic"]["passed"] and ks < 0.03 and t.elapsed < 60
    report(5, ok, f"KS {ks:.4f} < 0.03 (n=4096, M=5000), {t.elapsed:.2f}s")


def test_criterion_06_lil_band(report):
    chain = two_state(0.3, 0.6)
    with Timer() as t:
        res = lil_experiment(chain, indicator(chain, 0), 10_000_000, SEED)
    _, rows = res.tables["lil_trajectory"]
    below = all(r <= b for _, r, b in rows)
    x = res.summary["normalized_final"]
    ok = 0.7 <= x <= 1.2 and below and t.elapsed < 120
    report(6, ok, f"final running max / sigma = {x:.3f} in [0.7, 1.2], bound holds at {len(rows)} checkpoints: {below}, {t.elapsed:.2f}s")


def test_criterion_07_counterexample(report):
    with Timer() as t:
        res = counterexample_experiment(
            RenewalSpec(3.0, 4096),
            horizon=1_000_000,
            seed=SEED,
            variance_ns=(100, 1_000, 10_000, 100_000),
            checkpoints=(10_000, 100_000, 1_000_000),
            n_seeds=10,
            min_increasing=8,
        )
    inc = res.summary["variance_strictly_increasing"]
    k = res.summary["seeds_increasing"]
    ok = inc and k >= 8 and t.elapsed < 300
    report(7, ok, f"Var(S_n)/n strictly increasing: {inc}; max statistic increases 1e4 -> 1e6 for {k}/10 seeds (need 8), {t.elapsed:.1f}s")


def test_criterion_08_mixing_bounds(report):
    chain = two_state(0.3, 0.6)
    y = np.array([0.0, 1.0])
    with Timer() as t:
        worst = math.inf
        for p in (1.0, 2.0):
            setup = EmpiricalSetup(chain, uniform_grid(-0.5, 1.5, 64), p, y)
            table = coefficient_table(setup, 64)
            out = bound_checks(table, setup.F, setup.mu_grid, p)
            worst = min(worst, *(float(out[k].min()) for k in ("finite_measure_phi", "finite_measure_alpha", "integral_phi", "integral_alpha")))
        phi, _ = mixing_coefficients(chain, y, 64)
        spectral = max(chain.pi) * 0.1 ** np.arange(65)
        gap = float(np.abs(phi - spectral).max())
    ok = worst >= -1e-10 and gap <= 1e-10 and t.elapsed < 5
    report(8, ok, f"min slack {worst:.2e} over lags <= 64, phi vs spectral gap {gap:.1e}, {t.elapsed:.2f}s")


def test_criterion_09_empirical_process(report):
    with Timer() as t:
        setup = EmpiricalSetup(uniform_driver(), lebesgue_grid(0.0, 1.0, 512), 1.0)
        res = empirical_limit_experiment(setup, 4096, 2000, SEED)
        oracle = load_oracle(recompute=False)
    mean = res.summary["mean_scaled_distance"]
    rel = abs(mean - oracle["mean"]) / oracle["mean"]
    ok = rel <= 0.05 and t.elapsed < 180
    report(9, ok, f"mean sqrt(n) D = {mean:.4f} vs oracle {oracle['mean']:.4f} (rel {rel:.2%}), {t.elapsed:.2f}s")


def test_criterion_10_weak_type(report):
    model = iid_model([0.5, 0.5])
    f = Observable([1.0, -1.0], centered=True)
    with Timer() as t:
        hopf = hopf_check(model, f, [0.5, 1.0, 2.0], n=256, M=10_000, seed=SEED)
        doob = doob_ratio(model, f, 1024, 10_000, SEED)
    ok = bool(np.all(hopf.slack >= 0)) and doob.ratio <= 2 + 3 * doob.se and t.elapsed < 60
    report(10, ok, f"Hopf min slack {hopf.slack.min():.3f}, Doob ratio {doob.ratio:.3f} <= 2 + 3*{doob.se:.3f}, {t.elapsed:.2f}s")


@pytest.mark.parametrize("name", ["two_state_clt", "random_dyadic"])
def test_criterion_11_reproducibility(name, tmp_path, report):
    spec = load_config(name)
    a, b = run(spec, tmp_path / "a"), run(spec, tmp_path / "b")
    csvs = sorted(p.name for p in a.glob("*.csv"))
    same = bool(csvs) and all((a / n).read_bytes() == (b / n).read_bytes() for n in csvs)
    report(11, same, f"{name}: {len(csvs)} CSV files byte-identical across two runs")
