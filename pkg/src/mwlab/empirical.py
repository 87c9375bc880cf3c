"""Empirical-process observables: distances, dependence coefficients, bounds.

For observations Y_n = y(W_n) of a finite chain, the conditional cdf is a
matrix product: P(Y_n <= t | W_0 = w) = (P^n B)(w, t) with
B(w', t) = 1{y(w') <= t}.  Suprema over t are attained on the finite set
of observed values because every conditional cdf is a step function.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath
from typing import Callable

import numpy as np

from . import rng
from .conditions import SeriesTrace, geometric_tail
from .errors import PreconditionError
from .limits import ExperimentResult, dual_net, geometric_checkpoints
from .martingale import asymptotic_covariance
from .maximal import lil_normalizer
from .models import FiniteMarkovModel, Grid, Observable, PathStream, simulate_paths

BOUND_TOL = 1e-10


@dataclass(frozen=True)
class IidDriver:
    """iid observations through an inverse cdf applied to counter-based uniforms."""

    name: str
    ppf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]

    def sample(self, seed: int, stream: int, n: int) -> np.ndarray:
        return self.ppf(rng.uniforms(seed, stream, 0, n))


def uniform_driver() -> IidDriver:
    return IidDriver("uniform(0,1)", lambda u: u, lambda t: np.clip(t, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class EmpiricalSetup:
    """Observation model, measure mu on a grid and exponent p."""

    driver: FiniteMarkovModel | IidDriver
    mu_grid: Grid
    p: float = 1.0
    ymap: np.ndarray | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if isinstance(self.driver, FiniteMarkovModel):
            if self.ymap is None or np.shape(self.ymap) != (self.driver.m,):
                raise ValueError("Markov drivers need one observation value per state")
            object.__setattr__(self, "ymap", np.asarray(self.ymap, dtype=float))

    @property
    def is_markov(self) -> bool:
        return isinstance(self.driver, FiniteMarkovModel)

    @property
    def F(self) -> np.ndarray:
        """True cdf at the grid points."""
        t = self.mu_grid.points
        if self.is_markov:
            return self.driver.pi @ (self.ymap[:, None] <= t[None, :])
        return np.asarray(self.driver.cdf(t), dtype=float)

    def indicator_observable(self) -> Observable:
        """X_0(t) = 1{y(W_0) <= t} - F(t) as a grid observable."""
        if not self.is_markov:
            raise PreconditionError("state observable needs a Markov driver")
        B = (self.ymap[:, None] <= self.mu_grid.points[None, :]).astype(float)
        return Observable(B - self.F[None, :], self.mu_grid, self.p, centered=True)

    @property
    def degenerate(self) -> bool:
        """True when X_0 vanishes identically on the grid (e.g. constant Y)."""
        if self.is_markov:
            return bool(np.all(np.abs(self.indicator_observable().values) <= 1e-12))
        F = self.F
        return bool(np.all((F == 0) | (F == 1)))

    def moment_gates(self) -> dict:
        """Tail integral of F against mu (finite on a finite grid) and E|F_mu(Y)|^{2/p}."""
        t, w, F, p = self.mu_grid.points, self.mu_grid.weights, self.F, self.p
        tail = float(w @ np.where(t >= 0, (1 - F) ** p, F**p))
        if self.is_markov:
            Fmu = _f_mu(self.mu_grid, self.ymap)
            moment = float(self.driver.pi @ np.abs(Fmu) ** (2 / p))
        else:
            ys = self.driver.ppf((np.arange(4096) + 0.5) / 4096)
            moment = float(np.mean(np.abs(_f_mu(self.mu_grid, ys)) ** (2 / p)))
        return {"tail_integral": tail, "F_mu_moment": moment, "grid_points": int(t.size)}


def _f_mu(grid: Grid, x: np.ndarray) -> np.ndarray:
    """F_mu(x) = mu([0, x)) for x >= 0 and -mu([x, 0)) for x < 0, on the grid."""
    t, w = grid.points, grid.weights
    x = np.asarray(x, dtype=float)
    pos = ((t[None, :] >= 0) & (t[None, :] < x[:, None])) @ w
    neg = ((t[None, :] >= x[:, None]) & (t[None, :] < 0)) @ w
    return np.where(x >= 0, pos, -neg)


# ----------------------------------------------------------------------------
# distances


def empirical_cdf(sample: np.ndarray, t: np.ndarray) -> np.ndarray:
    s = np.sort(np.asarray(sample, dtype=float))
    return np.searchsorted(s, t, side="right") / s.size


def empirical_cdf_distance(sample, F, mu_grid: Grid, p: float) -> float:
    """D_{n,p}(mu) = ||F_n - F||_{L^p(mu)} on the grid; F is an array or a callable."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("empty sample")
    Fv = F(mu_grid.points) if callable(F) else np.asarray(F, dtype=float)
    return float(mu_grid.norm(empirical_cdf(sample, mu_grid.points) - Fv, p))


def read_sample_csv(path) -> np.ndarray:
    """One observation per row; a non-numeric first row is treated as a header."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0:
                    continue
                raise
    return np.array(values)


def _binned_distances(samples: np.ndarray, F: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    """D_{n,p} for each row of ``samples`` by counting observations per grid cell."""
    n = samples.shape[1]
    t = grid.points
    out = np.empty(samples.shape[0])
    for r in range(samples.shape[0]):
        idx = np.searchsorted(t, samples[r], side="left")  # y <= t_i  iff  idx <= i
        counts = np.bincount(idx, minlength=t.size + 1)[: t.size]
        Fn = np.cumsum(counts) / n
        out[r] = grid.norm(Fn - F, p)
    return out


def _sorted_distances(samples: np.ndarray, F: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    """Same statistic by sorting each sample (the brute-force reference)."""
    return np.array([grid.norm(empirical_cdf(s, grid.points) - F, p) for s in samples])


# ----------------------------------------------------------------------------
# dependence coefficients


@dataclass
class CoefficientTable:
    lags: np.ndarray
    phi_tilde: np.ndarray
    alpha_tilde: np.ndarray
    tau_check: np.ndarray
    tau: np.ndarray
    p: float
    slacks: dict = field(default_factory=dict)

    def write_csv(self, fh) -> None:
        cols = ["n", "phi_tilde", "alpha_tilde", "tau_check", "finite_measure_slack", "integral_phi_slack", "integral_alpha_slack"]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        nan = np.full(self.lags.size, np.nan)
        s_fin = self.slacks.get("finite_measure", nan)
        s_int_phi = self.slacks.get("integral_phi", nan)
        s_int_alpha = self.slacks.get("integral_alpha", nan)
        for i, n in enumerate(self.lags.tolist()):
            w.writerow([n] + [repr(float(x)) for x in (self.phi_tilde[i], self.alpha_tilde[i], self.tau_check[i], s_fin[i], s_int_phi[i], s_int_alpha[i])])


def _conditional_cdf_gaps(model: FiniteMarkovModel, B: np.ndarray, n_max: int):
    """Yield P^n B - F for n = 0..n_max (F = pi B)."""
    F = model.pi @ B
    C = B.astype(float)
    for _ in range(n_max + 1):
        yield C - F[None, :]
        C = model.apply(C)


def mixing_coefficients(driver, ymap=None, n_max: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """phi_tilde(n), alpha_tilde(n) for n = 0..n_max, exact for Markov drivers.

    An iid driver has both coefficients equal to 0 for n >= 1; at n = 0 the
    conditional cdf is the indicator itself.
    """
    if isinstance(driver, IidDriver):
        phi = np.zeros(n_max + 1)
        phi[0] = 1.0  # sup_t sup_y |1{y <= t} - F(t)| for a continuous law
        alpha = np.zeros(n_max + 1)
        alpha[0] = 0.5  # sup_t 2 F(t)(1 - F(t))
        return phi, alpha
    y = np.asarray(ymap, dtype=float)
    thresholds = np.unique(y)
    B = (y[:, None] <= thresholds[None, :]).astype(float)
    phi, alpha = [], []
    for gap in _conditional_cdf_gaps(driver, B, n_max):
        a = np.abs(gap)
        phi.append(float(a.max()))
        alpha.append(float((driver.pi @ a).max()))
    return np.array(phi), np.array(alpha)


def _tau_pair(pi: np.ndarray, gap: np.ndarray, w: np.ndarray, p: float) -> tuple[float, float]:
    """(tau_check, tau): the p-branch coefficient and the mixed L^2(L^p) norm."""
    inner = ((np.abs(gap) ** p) @ w) ** (1 / p)
    mixed = math.sqrt(max(float(pi @ (inner * inner)), 0.0))
    if p >= 2:
        return mixed, mixed
    pointwise = np.sqrt(np.maximum(pi @ (gap * gap), 0.0))
    return float((w @ pointwise**p) ** (1 / p)), mixed


def tau_branches(driver: FiniteMarkovModel, ymap, mu_grid: Grid, p: float, n: int) -> tuple[float, float]:
    """Both displayed tau_check formulas at lag n, regardless of p."""
    gap = _grid_gap(driver, ymap, mu_grid, n)
    w = mu_grid.weights
    low = float((w @ np.sqrt(driver.pi @ (gap * gap)) ** p) ** (1 / p))
    inner = ((np.abs(gap) ** p) @ w) ** (1 / p)
    high = math.sqrt(float(driver.pi @ (inner * inner)))
    return low, high


def _grid_gap(driver: FiniteMarkovModel, ymap, mu_grid: Grid, n: int) -> np.ndarray:
    B = (np.asarray(ymap, dtype=float)[:, None] <= mu_grid.points[None, :]).astype(float)
    F = driver.pi @ B
    C = B
    for _ in range(n):
        C = driver.apply(C)
    return C - F[None, :]


def tau_check(driver, ymap, mu_grid: Grid, p: float, n: int) -> float:
    if isinstance(driver, IidDriver):
        if n >= 1:
            return 0.0
        raise PreconditionError("lag 0 for an iid driver needs the law on the grid; use a Markov driver")
    return _tau_pair(driver.pi, _grid_gap(driver, ymap, mu_grid, n), mu_grid.weights, p)[0]


def coefficient_table(setup: EmpiricalSetup, n_max: int) -> CoefficientTable:
    """phi_tilde, alpha_tilde, tau_check and tau for lags 1..n_max."""
    lags = np.arange(1, n_max + 1)
    if not setup.is_markov:
        z = np.zeros(n_max)
        return CoefficientTable(lags, z, z.copy(), z.copy(), z.copy(), setup.p)
    phi, alpha = mixing_coefficients(setup.driver, setup.ymap, n_max)
    B = (setup.ymap[:, None] <= setup.mu_grid.points[None, :]).astype(float)
    tc, ta = [], []
    for n, gap in enumerate(_conditional_cdf_gaps(setup.driver, B, n_max)):
        if n == 0:
            continue
        a, b = _tau_pair(setup.driver.pi, gap, setup.mu_grid.weights, setup.p)
        tc.append(a)
        ta.append(b)
    return CoefficientTable(lags, phi[1:], alpha[1:], np.array(tc), np.array(ta), setup.p)


def bound_checks(table: CoefficientTable, F: np.ndarray, mu_grid: Grid, p: float) -> dict:
    """Slacks (bound - coefficient) of the phi/alpha bounds on tau.

    finite_measure: mu(R)^{1/p} phi and mu(R)^{1/p} alpha^{1/q}, q = max(2, p), against
    both tau and tau_check (needs a finite measure).  integral (1 <= p <= 2):
    sqrt(2) (int (F(1-F))^{p/2} dmu)^{1/p} phi^{1/2} and
    sqrt(2) (int min(alpha, F(1-F))^{p/2} dmu)^{1/p}, against tau_check.
    The integrals run over the whole grid.
    """
    if not mu_grid.finite:
        raise PreconditionError("the phi/alpha bounds of this check need a finite measure")
    mass = mu_grid.mass ** (1 / p)
    q = max(2.0, p)
    worst_tau = np.maximum(table.tau, table.tau_check)
    fin_phi = mass * table.phi_tilde
    fin_alpha = mass * table.alpha_tilde ** (1 / q)
    out = {
        "finite_measure_phi": fin_phi - worst_tau,
        "finite_measure_alpha": fin_alpha - worst_tau,
    }
    out["finite_measure"] = np.minimum(out["finite_measure_phi"], out["finite_measure_alpha"])
    w = mu_grid.weights
    var = F * (1 - F)
    if 1 <= p <= 2:
        phi_bound = math.sqrt(2) * float((w @ var ** (p / 2)) ** (1 / p)) * np.sqrt(table.phi_tilde)
        alpha_bound = np.array([math.sqrt(2) * float((w @ np.minimum(a, var) ** (p / 2)) ** (1 / p)) for a in table.alpha_tilde])
        out["integral_phi"] = phi_bound - table.tau_check
        out["integral_alpha"] = alpha_bound - table.tau_check
        out["integral_phi_bound"] = phi_bound
        out["integral_alpha_bound"] = alpha_bound
    else:
        nan = np.full(table.lags.size, np.nan)
        out["integral_phi"] = nan
        out["integral_alpha"] = nan.copy()
    table.slacks = out
    return out


# ----------------------------------------------------------------------------
# quantile integral and the summability series


def abs_quantile_steps(values, probs) -> tuple[np.ndarray, np.ndarray]:
    """Atoms a_1 < ... < a_K of |Y| (positive ones) and G(a_j) = P(|Y| > a_j), with G(0)."""
    v = np.abs(np.asarray(values, dtype=float))
    pr = np.asarray(probs, dtype=float)
    atoms = np.unique(v)
    atoms = atoms[atoms > 0]
    G0 = float(pr[v > 0].sum())
    G = np.array([float(pr[v > a].sum()) for a in atoms])
    return atoms, np.concatenate([[G0], G])


def quantile_abs(x, values, probs) -> np.ndarray:
    """Q(x) = inf{t >= 0 : P(|Y| > t) <= x} for finite-support Y."""
    atoms, G = abs_quantile_steps(values, probs)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for i, xi in enumerate(x):
        if xi >= G[0]:
            continue
        j = int(np.argmax(G[1:] <= xi))
        out[i] = atoms[j]
    return out


def quantile_integral(A: float, values, probs, p: float) -> float:
    """int_0^A x^{p/2 - 1} Q(x) dx in closed form (Q is a step function).

    On [G(a_j), G(a_{j-1})) Q equals a_j, and the power integrates to
    (2/p)(hi^{p/2} - lo^{p/2}).
    """
    if A <= 0:
        return 0.0
    atoms, G = abs_quantile_steps(values, probs)
    total = 0.0
    for j, a in enumerate(atoms):
        lo, hi = min(G[j + 1], A), min(G[j], A)
        if hi > lo:
            total += a * (2 / p) * (hi ** (p / 2) - lo ** (p / 2))
    return float(total)


def theomix_series(setup: EmpiricalSetup, branch: str, n_max: int, tol: float = 1e-14) -> SeriesTrace:
    """Summability series of the two sufficient conditions.

    (i)  sum n^{-1/2} phi_tilde(n)^{1/2}
    (ii) sum n^{-1/2} (int_0^{alpha_tilde(n)} x^{p/2-1} Q(x) dx)^{1/p}, mu Lebesgue
    """
    if branch not in ("i", "ii"):
        raise ValueError("branch is 'i' or 'ii'")
    if branch == "ii" and setup.mu_grid.kind != "lebesgue":
        raise PreconditionError("branch (ii) needs mu = Lebesgue measure")
    if not 1 <= setup.p <= 2:
        raise PreconditionError("the sufficient conditions are stated for 1 <= p <= 2")
    if not setup.is_markov:
        return SeriesTrace(f"theomix_{branch}", np.array([1]), np.array([0.0]), "zero", 0.0)
    phi, alpha = mixing_coefficients(setup.driver, setup.ymap, n_max)
    n = np.arange(1, n_max + 1)
    if branch == "i":
        raw = np.sqrt(phi[1:]) / np.sqrt(n)
    else:
        probs = setup.driver.pi
        raw = np.array([quantile_integral(a, setup.ymap, probs, setup.p) ** (1 / setup.p) for a in alpha[1:]]) / np.sqrt(n)
    first = raw[0]
    stop = n_max
    stopped = "n_max"
    if first == 0:
        stop, stopped = 1, "zero"
    else:
        small = np.flatnonzero(raw < tol * first)
        if small.size:
            stop, stopped = int(small[0]) + 1, "tolerance"
    terms = raw[:stop]
    return SeriesTrace(f"theomix_{branch}", n[:stop], terms, stopped, geometric_tail(terms))


def series_converges(trace: SeriesTrace) -> bool:
    return trace.stopped in ("zero", "tolerance") or trace.tail_bound is not None


# ----------------------------------------------------------------------------
# Monte Carlo


def _observations(setup: EmpiricalSetup, n: int, seed: int, streams) -> np.ndarray:
    if setup.is_markov:
        states = simulate_paths(setup.driver, 0, n - 1, seed, streams)
        return setup.ymap[states]
    return np.stack([setup.driver.sample(seed, s, n) for s in streams])


def scaled_distances(setup: EmpiricalSetup, n: int, M: int, seed: int, brute_force: bool = False, batch: int = 500) -> np.ndarray:
    """sqrt(n) D_{n,p}(mu) for streams 0..M-1."""
    F = setup.F
    dist = _sorted_distances if brute_force else _binned_distances
    out = []
    for lo in range(0, M, batch):
        Y = _observations(setup, n, seed, range(lo, min(M, lo + batch)))
        out.append(dist(Y, F, setup.mu_grid, setup.p))
    return math.sqrt(n) * np.concatenate(out)


def _exact_gamma(setup: EmpiricalSetup, u: np.ndarray) -> float:
    """Gamma(u) = lim ||int u(s) S_n(s) mu(ds)||_2 / sqrt(n), exactly."""
    w = setup.mu_grid.weights * u
    if setup.is_markov:
        f = setup.indicator_observable()
        scalar = Observable(f.values @ w, centered=True)
        return math.sqrt(max(asymptotic_covariance(setup.driver, scalar).sigma2, 0.0))
    F = setup.F
    C = np.minimum(F[:, None], F[None, :]) - F[:, None] * F[None, :]
    return math.sqrt(max(float(w @ C @ w), 0.0))


def empirical_limit_experiment(
    setup: EmpiricalSetup,
    n: int,
    M: int,
    seed: int,
    override: bool = False,
    net_size: int = 4,
    lil_horizon: int = 0,
) -> ExperimentResult:
    """Law of sqrt(n) D_{n,p}, dual-direction Gamma estimates and an optional LIL trajectory."""
    res = ExperimentResult("empirical", seed, (0, M - 1), config={"n": n, "M": M, "p": setup.p, "grid_points": setup.mu_grid.size})
    if 1 <= setup.p <= 2:
        trace = theomix_series(setup, "i", 256)
        res.summary["theomix_i_partial"] = trace.value
        res.summary["theomix_i_converges"] = series_converges(trace)
        if not series_converges(trace) and not override:
            raise PreconditionError("the summability condition is not certified; pass override=True to run anyway")
    res.summary["moment_gates"] = setup.moment_gates()
    if setup.degenerate:
        res.summary["degenerate"] = True
        res.summary["mean_scaled_distance"] = 0.0
        return res
    D = scaled_distances(setup, n, M, seed)
    res.samples = D
    res.summary.update(
        mean_scaled_distance=float(D.mean()),
        std_scaled_distance=float(D.std(ddof=1)),
        mean_standard_error=float(D.std(ddof=1) / math.sqrt(M)),
        quantiles={str(q): float(np.quantile(D, q)) for q in (0.1, 0.5, 0.9)},
    )
    # Gamma along dual directions; the constant direction is always included
    proxy = Observable(np.zeros((1, setup.mu_grid.size)), setup.mu_grid, setup.p)
    net = dual_net(proxy, net_size, seed)
    proj = _projected_sums(setup, n, M, seed, net)
    rows = []
    for i, u in enumerate(net):
        exact = _exact_gamma(setup, u)
        est = float(proj[:, i].std(ddof=1))
        rows.append((i, exact, est, est / math.sqrt(2 * (M - 1)) if M > 1 else float("nan")))
    res.summary["gamma_constant_direction"] = {"exact": rows[0][1], "estimate": rows[0][2], "se": rows[0][3]}
    res.summary["lambda_net_estimate"] = max(r[1] for r in rows)
    res.tables["empirical_gamma"] = (["direction", "exact", "estimate", "se"], rows)
    qs = np.linspace(0.01, 0.99, 99)
    res.tables["empirical_distance_quantiles"] = (["q", "scaled_distance"], list(zip(qs.tolist(), np.quantile(D, qs).tolist())))
    if lil_horizon:
        res.tables["empirical_lil"] = (["n", "ratio", "bound"], _lil_trajectory(setup, lil_horizon, seed, res.summary["lambda_net_estimate"]))
    return res


def _projected_sums(setup: EmpiricalSetup, n: int, M: int, seed: int, net: np.ndarray) -> np.ndarray:
    """int u(s) S_n(s) mu(ds) / sqrt(n) for each path and direction."""
    t = setup.mu_grid.points
    F = setup.F
    W = net * setup.mu_grid.weights[None, :]
    out = []
    for lo in range(0, M, 500):
        Y = _observations(setup, n, seed, range(lo, min(M, lo + 500)))
        rows = []
        for y in Y:
            idx = np.searchsorted(t, y, side="left")
            counts = np.cumsum(np.bincount(idx, minlength=t.size + 1)[: t.size])
            rows.append(W @ (counts - n * F))
        out.append(np.array(rows))
    return np.concatenate(out) / math.sqrt(n)


def _lil_trajectory(setup: EmpiricalSetup, horizon: int, seed: int, lam: float):
    """sqrt(n) D_{n,p} / sqrt(2 L(L(n))) at geometric checkpoints of one path (stream 0)."""
    t = setup.mu_grid.points
    F = setup.F
    ck = geometric_checkpoints(16, horizon)
    counts = np.zeros(t.size)
    done = 0
    rows = []
    if setup.is_markov:
        chunks = ((s, setup.ymap[st]) for s, st in PathStream(setup.driver, 0, horizon - 1, seed, 0).chunks(size=1 << 16))
    else:
        chunks = (
            (s, setup.driver.ppf(rng.uniforms(seed, 0, s, min(1 << 16, horizon - s))))
            for s in range(0, horizon, 1 << 16)
        )
    k = 0
    for start, y in chunks:
        for c in ck[(ck > start) & (ck <= start + y.size)]:
            part = y[done - start : c - start]
            idx = np.searchsorted(t, part, side="left")
            counts += np.bincount(idx, minlength=t.size + 1)[: t.size]
            done = int(c)
            Fn = np.cumsum(counts) / c
            ratio = math.sqrt(c) * setup.mu_grid.norm(Fn - F, setup.p) / float(lil_normalizer(c) / math.sqrt(c))
            rows.append((int(c), ratio, lam))
            k += 1
        rest = y[done - start :]
        if rest.size:
            idx = np.searchsorted(t, rest, side="left")
            counts += np.bincount(idx, minlength=t.size + 1)[: t.size]
            done = start + y.size
    return rows


# ----------------------------------------------------------------------------
# cached large-n oracle for the Wasserstein-type statistic


ORACLE_SEED = 987654321
ORACLE_FILE = "empirical_oracle.json"


def oracle_config(n: int = 100_000, M: int = 10_000, grid_points: int = 512, seed: int = ORACLE_SEED) -> dict:
    return {"driver": "uniform(0,1)", "p": 1.0, "grid": f"lebesgue[0,1]x{grid_points}", "n": n, "M": M, "seed": seed, "method": "sorted"}


def _config_key(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def compute_oracle(n: int = 100_000, M: int = 10_000, grid_points: int = 512, seed: int = ORACLE_SEED) -> dict:
    """Mean of sqrt(n) D_{n,1} for iid uniforms on a Lebesgue grid, by sorting every sample."""
    from .models import lebesgue_grid

    setup = EmpiricalSetup(uniform_driver(), lebesgue_grid(0.0, 1.0, grid_points), 1.0)
    D = scaled_distances(setup, n, M, seed, brute_force=True, batch=100)
    cfg = oracle_config(n, M, grid_points, seed)
    return {"config": cfg, "key": _config_key(cfg), "mean": float(D.mean()), "std": float(D.std(ddof=1)), "se": float(D.std(ddof=1) / math.sqrt(M))}


def oracle_path() -> FsPath:
    return FsPath(str(resources.files("mwlab") / "data" / ORACLE_FILE))


def load_oracle(cfg: dict | None = None, recompute: bool = True) -> dict:
    """Cached oracle value; recomputed (and cached) when missing or stale."""
    cfg = oracle_config() if cfg is None else cfg
    path = oracle_path()
    if path.exists():
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("key") == _config_key(cfg):
            return data
    if not recompute:
        raise FileNotFoundError(f"no cached oracle for {cfg}")
    data = compute_oracle(cfg["n"], cfg["M"], int(cfg["grid"].rsplit("x", 1)[1]), cfg["seed"])
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError:
        pass
    return data
