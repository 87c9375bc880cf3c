"""Seeded Monte Carlo experiments for the limit theorems and the counterexample.

Every random quantity is traceable to a ``(seed, stream)`` pair: path r of
a batch experiment uses stream r, single-path experiments use stream 0,
and the counterexample's independent trajectories use seeds seed..seed+9.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
from scipy import stats

from . import rng
from ._kernels import running_absmax, running_lil, sum_profile_norms
from .conditions import mw2_norm, require_centered, variance_growth
from .errors import DegenerateLimitError, PreconditionError
from .martingale import CovarianceOperator, asymptotic_covariance, martingale_difference
from .maximal import lil_normalizer
from .models import (
    FiniteMarkovModel,
    Observable,
    PathStream,
    RenewalSpec,
    build_renewal_chain,
    indicator,
    second_moment_fit,
    simulate_paths,
)

DEGENERATE_VAR = 1e-14
LIL_MIN_HORIZON = 100_000


@dataclass
class ExperimentResult:
    """Summary numbers, verdicts and CSV-ready tables of one experiment."""

    name: str
    seed: int
    streams: tuple[int, int]
    summary: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)

    def verdict(self, key: str, value: float, threshold: float, band: float = 0.0, upper: bool = True) -> bool:
        ok = value <= threshold + band if upper else value >= threshold - band
        self.verdicts[key] = {"value": value, "threshold": threshold, "band": band, "upper": upper, "passed": bool(ok)}
        return ok

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "streams": list(self.streams),
            "summary": _jsonable(self.summary),
            "verdicts": _jsonable(self.verdicts),
            "config": _jsonable(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, directory) -> list[str]:
        directory = FsPath(directory)
        names = []
        for key, (columns, rows) in self.tables.items():
            name = f"{key}.csv"
            with open(directory / name, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                for row in rows:
                    w.writerow([_cell(x) for x in row])
            names.append(name)
        return names


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


# ----------------------------------------------------------------------------
# dual directions


def dual_net(f: Observable, size: int, seed: int, cov: CovarianceOperator | None = None) -> np.ndarray:
    """Unit vectors of L^q(mu), q conjugate to p, acting by u -> sum_i w_i u_i x_i.

    Contains the constant direction, normalized point masses, ``size`` seeded
    Gaussian directions and, when a covariance is supplied, its top
    eigendirection in the weighted inner product (the exact maximizer at p = 2).
    """
    grid = f.grid
    p = f.p
    q = math.inf if p == 1 else p / (p - 1)

    def unit(u):
        a = np.abs(u)
        nrm = a.max() if q == math.inf else float((grid.weights @ a**q) ** (1 / q))
        return u / nrm

    G = grid.size
    dirs = [unit(np.ones(G))]
    dirs += [unit(np.eye(G)[i]) for i in range(G)] if G <= 64 else []
    g = rng.generator(seed, 0xD0A1)
    dirs += [unit(g.standard_normal(G)) for _ in range(size)]
    if cov is not None and not cov.is_scalar:
        s = np.sqrt(cov.weights)
        vals, vecs = np.linalg.eigh(s[:, None] * cov.K * s[None, :])
        dirs.append(unit(vecs[:, -1] / s))
    return np.array(dirs)


def sup_direction_sigma(cov: CovarianceOperator, net: np.ndarray) -> float:
    return float(max(math.sqrt(max(cov.form(u), 0.0)) for u in net))


# ----------------------------------------------------------------------------
# CLT / fdd


def _endpoint_sums(model, values, n, M, seed, batch=1000, times=None):
    """S_n per path (or the polygonal S_{n,t} at each t), streams 0..M-1."""
    out = []
    for lo in range(0, M, batch):
        streams = range(lo, min(M, lo + batch))
        states = simulate_paths(model, 0, n - 1, seed, streams)
        X = values[states]
        if times is None:
            out.append(X.sum(axis=1))
        else:
            S = np.concatenate([np.zeros((X.shape[0], 1) + X.shape[2:]), np.cumsum(X, axis=1)], axis=1)
            Xp = np.concatenate([X, np.zeros((X.shape[0], 1) + X.shape[2:])], axis=1)
            k = np.floor(n * np.asarray(times)).astype(int)
            frac = n * np.asarray(times) - k
            frac = frac.reshape((1, -1) + (1,) * (X.ndim - 2))
            out.append(S[:, k] + frac * Xp[:, k])
    return np.concatenate(out)


def _project(f: Observable, values: np.ndarray, u: np.ndarray) -> np.ndarray:
    return values @ (f.grid.weights * u)


def clt_experiment(model: FiniteMarkovModel, f: Observable, n: int, M: int, seed: int, use_martingale: bool = False, net_size: int = 8, threshold: float = 0.03) -> ExperimentResult:
    """KS distance of S_n/sqrt(n) from the exact Gaussian limit.

    Grid observables are tested along a dual net (max KS reported) and by
    comparing the empirical covariance of projections with K.
    """
    require_centered(model, f)
    cov = asymptotic_covariance(model, f)
    res = ExperimentResult("clt", seed, (0, M - 1), config={"n": n, "M": M, "use_martingale": use_martingale})
    if use_martingale:
        md = martingale_difference(model, f)
        sums = []
        for lo in range(0, M, 1000):
            st = simulate_paths(model, -1, n - 1, seed, range(lo, min(M, lo + 1000)))
            sums.append((md.h[st[:, 1:]] - md.Ph[st[:, :-1]]).sum(axis=1))
        Z = np.concatenate(sums) / math.sqrt(n)
    else:
        Z = _endpoint_sums(model, f.values, n, M, seed) / math.sqrt(n)
    if f.grid is None:
        s2 = cov.sigma2
        if s2 <= DEGENERATE_VAR:
            raise DegenerateLimitError(f"asymptotic variance {s2:.3g} vanishes; S_n stays bounded (coboundary)")
        ks = stats.kstest(Z, stats.norm(scale=math.sqrt(s2)).cdf).statistic
        res.summary.update(ks_statistic=float(ks), sigma2=s2, sample_variance=float(Z.var()))
        res.verdict("ks_statistic", float(ks), threshold)
        qs = np.linspace(0.01, 0.99, 99)
        res.tables["clt_quantiles"] = (
            ["q", "empirical", "gaussian"],
            [(q, e, g) for q, e, g in zip(qs, np.quantile(Z, qs), stats.norm.ppf(qs) * math.sqrt(s2))],
        )
        res.samples = Z
        return res
    net = dual_net(f, net_size, seed, cov)
    var = np.array([cov.form(u) for u in net])
    if var.max() <= DEGENERATE_VAR:
        raise DegenerateLimitError("covariance operator vanishes on every test direction")
    rows, ks_all = [], []
    for i, u in enumerate(net):
        if var[i] <= DEGENERATE_VAR:
            continue
        z = _project(f, Z, u)
        ks = stats.kstest(z, stats.norm(scale=math.sqrt(var[i])).cdf).statistic
        ks_all.append(ks)
        rows.append((i, var[i], float(z.var()), ks))
    proj = np.stack([_project(f, Z, u) for u in net], axis=1)
    emp = np.cov(proj, rowvar=False)
    exact = np.array([[cov.form(u, v) for v in net] for u in net])
    res.summary.update(
        ks_statistic=float(max(ks_all)),
        net_size=len(net),
        covariance_max_abs_error=float(np.abs(emp - exact).max()),
    )
    res.verdict("ks_statistic", float(max(ks_all)), threshold)
    res.tables["clt_directions"] = (["direction", "variance_exact", "variance_empirical", "ks"], rows)
    return res


def fdd_experiment(model: FiniteMarkovModel, f: Observable, times, n: int, M: int, seed: int, threshold: float = 0.03) -> ExperimentResult:
    """Increments of T_{n,t} = S_{n,t}/sqrt(n) against independent N(0, dt sigma^2)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > 1:
        raise ValueError("times must be strictly increasing in [0, 1] with at least two points")
    if f.grid is not None:
        raise PreconditionError("fdd_experiment handles scalar observables; project grid observables first")
    require_centered(model, f)
    s2 = asymptotic_covariance(model, f).sigma2
    if s2 <= DEGENERATE_VAR:
        raise DegenerateLimitError(f"asymptotic variance {s2:.3g} vanishes")
    T = _endpoint_sums(model, f.values, n, M, seed, times=times) / math.sqrt(n)
    inc = np.diff(T, axis=1)
    dt = np.diff(times)
    res = ExperimentResult("fdd", seed, (0, M - 1), config={"n": n, "M": M, "times": times.tolist()})
    rows, ks_all = [], []
    for j in range(dt.size):
        ks = stats.kstest(inc[:, j], stats.norm(scale=math.sqrt(dt[j] * s2)).cdf).statistic
        ratio = float(inc[:, j].var() / (dt[j] * s2))
        rows.append((times[j], times[j + 1], ratio, ks))
        ks_all.append(ks)
    corr = np.corrcoef(inc, rowvar=False) if dt.size > 1 else np.ones((1, 1))
    off = np.abs(corr - np.diag(np.diag(corr))).max() if dt.size > 1 else 0.0
    res.summary.update(
        sigma2=s2,
        increment_ks=ks_all,
        variance_ratios=[r[2] for r in rows],
        correlation=corr,
        max_cross_correlation=float(off),
        correlation_band=3 / math.sqrt(M),
    )
    res.verdict("max_increment_ks", float(max(ks_all)), threshold)
    res.verdict("max_cross_correlation", float(off), 3 / math.sqrt(M))
    res.tables["fdd_increments"] = (["t_start", "t_end", "variance_ratio", "ks"], rows)
    return res


# ----------------------------------------------------------------------------
# LIL


def geometric_checkpoints(lo: int, hi: int, per_decade: int = 10) -> np.ndarray:
    k = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    return np.unique(np.round(np.geomspace(lo, hi, k)).astype(np.int64))


def lil_experiment(
    model: FiniteMarkovModel,
    f: Observable,
    horizon: int,
    seed: int,
    checkpoints=None,
    burn_in: int = 1000,
    band=(0.7, 1.2),
    net_size: int = 8,
) -> ExperimentResult:
    """Running max of |S_n|/sqrt(2 n L(L(n))) over burn_in <= n <= horizon on one path.

    Compared with sigma (scalar) or the dual-net sup of ||x*(d)||_2 (grid),
    and with the bound 10 sqrt(2) times the MW2 partial sum at depth
    floor(log2 n).  The form without the 2 is reported alongside.
    """
    if horizon < LIL_MIN_HORIZON:
        warnings.warn(f"horizon {horizon} < {LIL_MIN_HORIZON}: the L(L(n)) normalizer is far from its regime", stacklevel=2)
    require_centered(model, f)
    burn_in = min(burn_in, horizon)
    ck = geometric_checkpoints(burn_in, horizon) if checkpoints is None else np.unique(np.asarray(checkpoints, dtype=np.int64))
    ck = ck[(ck >= burn_in) & (ck <= horizon)]
    cov = asymptotic_covariance(model, f)
    stream = PathStream(model, 0, horizon - 1, seed, 0)
    if f.grid is None:
        sigma = math.sqrt(max(cov.sigma2, 0.0))
        out = np.zeros((ck.size, 3))
        carry = np.zeros(3)
        pos = np.zeros(1, dtype=np.int64)
        values = np.ascontiguousarray(f.values)
        for start, states in stream.chunks():
            running_lil(values, states, carry, start, burn_in, ck, pos, out)
        run2, run1 = out[:, 1], out[:, 2]
        target = sigma
        target_label = "sigma"
    else:
        net = dual_net(f, net_size, seed, cov)
        target = sup_direction_sigma(cov, net)
        target_label = "dual_net_sup_sigma"
        run2, run1 = _grid_running_lil(f, stream, ck, burn_in)
    depth = np.floor(np.log2(ck)).astype(int)
    mw2 = mw2_norm(model, f, int(depth.max()) if ck.size else 0).partials
    bound = 10 * math.sqrt(2) * mw2[depth]
    res = ExperimentResult(
        "lil", seed, (0, 0), config={"horizon": horizon, "burn_in": burn_in, "band": list(band), "checkpoints": ck.size}
    )
    final = float(run2[-1]) if ck.size else 0.0
    res.summary.update(
        final_running_max=final,
        final_running_max_no_sqrt2=float(run1[-1]) if ck.size else 0.0,
        target=target,
        target_kind=target_label,
        normalized_final=final / target if target > 0 else 0.0,
        bound_at_horizon=float(bound[-1]) if ck.size else 0.0,
    )
    if target > 0:
        res.verdict("final_over_target_low", final / target, band[0], upper=False)
        res.verdict("final_over_target_high", final / target, band[1])
    else:
        res.summary["degenerate"] = True
    res.verdict("max_ratio_over_bound", float(np.max(run2 / np.where(bound > 0, bound, np.inf), initial=0.0)), 1.0)
    res.tables["lil_trajectory"] = (["n", "ratio", "bound"], list(zip(ck.tolist(), run2.tolist(), bound.tolist())))
    res.tables["lil_trajectory_no_sqrt2"] = (["n", "ratio"], list(zip(ck.tolist(), run1.tolist())))
    return res


def _grid_running_lil(f: Observable, stream: PathStream, ck: np.ndarray, burn_in: int):
    S = np.zeros(f.grid.size)
    best2 = best1 = 0.0
    run2, run1 = np.zeros(ck.size), np.zeros(ck.size)
    k = 0
    for start, states in stream.chunks(size=1 << 16):
        partial = S + np.cumsum(f.values[states], axis=0)
        n = np.arange(start + 1, start + states.size + 1)
        r1 = f.norm(partial) / lil_normalizer(n, two=False)
        r1 = np.where(n >= burn_in, r1, 0.0)
        cm1 = np.maximum.accumulate(np.maximum(r1, best1))
        cm2 = cm1 / math.sqrt(2)
        while k < ck.size and ck[k] <= n[-1]:
            idx = ck[k] - n[0]
            run1[k], run2[k] = cm1[idx], cm2[idx]
            k += 1
        best1 = float(cm1[-1])
        S = partial[-1]
    return run2, run1


def clil_diagnostic(model: FiniteMarkovModel, f: Observable, horizon: int, seed: int, checkpoints=None, tail_fraction: float = 0.25, net_size: int = 8) -> ExperimentResult:
    """Trajectory of S_n/sqrt(2 n L(L(n))) in the grid norm (compactness proxy)."""
    if f.grid is None:
        raise PreconditionError("clil_diagnostic needs a grid observable")
    require_centered(model, f)
    ck = geometric_checkpoints(16, horizon) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    cov = asymptotic_covariance(model, f)
    net = dual_net(f, net_size, seed, cov)
    radius = sup_direction_sigma(cov, net)
    crude = float(np.sqrt(np.clip(np.diag(cov.K), 0, None)).max() * f.grid.mass ** (1 / f.p))
    stream = PathStream(model, 0, horizon - 1, seed, 0)
    points = np.zeros((ck.size, f.grid.size))
    S = np.zeros(f.grid.size)
    k = 0
    for start, states in stream.chunks(size=1 << 16):
        partial = S + np.cumsum(f.values[states], axis=0)
        while k < ck.size and ck[k] <= start + states.size:
            points[k] = partial[ck[k] - start - 1] / lil_normalizer(ck[k])
            k += 1
        S = partial[-1]
    norms = f.norm(points)
    tail = points[int(math.floor((1 - tail_fraction) * ck.size)) :]
    diam = 0.0
    for i in range(tail.shape[0]):
        diam = max(diam, float(f.norm(tail[i][None, :] - tail).max(initial=0.0)))
    res = ExperimentResult("clil", seed, (0, 0), config={"horizon": horizon, "tail_fraction": tail_fraction, "net_size": len(net)})
    res.summary.update(
        final_norm=float(norms[-1]),
        tail_max_norm=float(f.norm(tail).max(initial=0.0)),
        tail_diameter=diam,
        limit_radius=radius,
        crude_radius=crude,
        distance_to_ball=max(0.0, float(f.norm(tail).max(initial=0.0)) - radius),
    )
    res.tables["clil_trajectory"] = (["n", "norm"], list(zip(ck.tolist(), norms.tolist())))
    return res


# ----------------------------------------------------------------------------
# counterexample


def weight_rule(name: str):
    """Weights a_n -> 0: ``inv_log`` 1/log(n+e), ``inv_loglog`` 1/log(log(n+e)+e), ``power:x`` n^-x."""
    if name == "inv_log":
        return lambda n: 1.0 / np.log(n + math.e)
    if name == "inv_loglog":
        return lambda n: 1.0 / np.log(np.log(n + math.e) + math.e)
    if name.startswith("power:"):
        x = float(name.split(":", 1)[1])
        if x <= 0:
            raise ValueError("power weight needs a positive exponent")
        return lambda n: np.asarray(n, dtype=float) ** -x
    raise ValueError(f"unknown weight rule {name!r}")


def profile_norms(model: FiniteMarkovModel, f: Observable, K: int) -> np.ndarray:
    """||E_0(S_n)||_2 for n = 1..K (scalar observables)."""
    P = model.csr
    return sum_profile_norms(P.indptr.astype(np.int64), P.indices.astype(np.int64), P.data, np.ascontiguousarray(f.values), model.pi, K)


def counterexample_experiment(
    spec: RenewalSpec,
    horizon: int = 1_000_000,
    seed: int = 0,
    a_rule: str = "inv_log",
    series_terms: int = 100_000,
    truncations=(1024, 2048, 4096),
    variance_ns=(100, 1_000, 10_000, 100_000, 1_000_000),
    checkpoints=(10_000, 100_000, 1_000_000),
    n_seeds: int = 10,
    min_increasing: int = 8,
) -> ExperimentResult:
    """Renewal chain with E(tau) finite and E(tau^2) infinite, X = 1{W_0 = 0} - pi_0."""
    if spec.tail_exponent > 3:
        raise PreconditionError(
            f"tail_exponent={spec.tail_exponent} > 3 gives E(tau^2) < infinity; the counterexample needs E(tau^2) = infinity"
        )
    if not spec.second_moment_diverges:
        raise PreconditionError("E(tau^2) must diverge")
    a = weight_rule(a_rule)
    model = build_renewal_chain(spec)
    f = indicator(model, 0)
    res = ExperimentResult(
        "counterexample",
        seed,
        (0, 0),
        config={
            "tail_exponent": spec.tail_exponent,
            "truncation": spec.truncation,
            "a_rule": a_rule,
            "horizon": horizon,
            "seeds": [seed + j for j in range(n_seeds)],
        },
    )
    # (a) weighted series and its sensitivity to truncation
    n = np.arange(1, series_terms + 1, dtype=float)
    series_rows, finals = [], {}
    for N in sorted(set(truncations) | {spec.truncation}):
        mN = build_renewal_chain(RenewalSpec(spec.tail_exponent, N))
        norms = profile_norms(mN, indicator(mN, 0), series_terms)
        partial = np.cumsum(a(n) * norms / n**1.5)
        finals[N] = float(partial[-1])
        for k in np.unique(np.geomspace(1, series_terms, 25).astype(int)):
            series_rows.append((N, int(k), float(partial[k - 1])))
    ref = finals[spec.truncation]
    res.summary["weighted_series"] = {str(N): v for N, v in finals.items()}
    res.summary["weighted_series_truncation_sensitivity"] = {
        str(N): abs(v - ref) / ref if ref else 0.0 for N, v in finals.items()
    }
    res.tables["weighted_series"] = (["truncation", "n", "partial_sum"], series_rows)
    # (b) exact variance growth
    vg = variance_growth(model, f, variance_ns)
    res.summary["variance_over_n"] = dict(zip(map(str, variance_ns), vg.tolist()))
    res.summary["variance_strictly_increasing"] = bool(np.all(np.diff(vg) > 0))
    res.tables["variance_growth"] = (["n", "variance_over_n"], list(zip(variance_ns, vg.tolist())))
    # E(tau^2) partial sums grow like c log N
    fit = second_moment_fit(spec.tail_exponent, [2**k for k in range(6, 17)])
    res.summary["second_moment_log_slope"] = fit["slope"]
    res.summary["second_moment_log_slope_expected"] = fit["expected_slope"]
    res.summary["second_moment_diverges"] = spec.second_moment_diverges
    res.summary["dropped_tail_mass"] = spec.dropped_tail_mass
    # (c) empirical maximal trajectories
    ck = np.asarray(sorted(checkpoints), dtype=np.int64)
    ck = ck[ck <= horizon]
    values = np.ascontiguousarray(f.values)
    traj_rows, increasing, monotone = [], 0, 0
    quant = np.zeros((n_seeds, ck.size))
    for j in range(n_seeds):
        s = seed + j
        out = np.zeros((ck.size, 2))
        carry = np.zeros(2)
        pos = np.zeros(1, dtype=np.int64)
        for start, states in PathStream(model, 0, horizon - 1, s, 0).chunks():
            running_absmax(values, states, carry, start, ck, pos, out)
        stat = out[:, 1] / lil_normalizer(ck, two=False)
        quant[j] = np.abs(out[:, 0]) / np.sqrt(ck)
        increasing += int(stat[-1] > stat[0])
        monotone += int(np.all(np.diff(stat) > 0))
        traj_rows += [(s, int(c), float(v)) for c, v in zip(ck, stat)]
    res.summary["seeds_increasing"] = increasing
    res.summary["seeds_monotone"] = monotone
    res.summary["median_abs_sum_over_sqrt_n"] = dict(zip(map(str, ck.tolist()), np.median(quant, axis=0).tolist()))
    res.tables["max_trajectories"] = (["seed", "n", "max_ratio"], traj_rows)
    gated = vg[np.asarray(variance_ns) <= 100_000]
    res.verdict("variance_strictly_increasing", float(np.all(np.diff(gated) > 0)), 1.0, upper=False)
    res.verdict("seeds_increasing", float(increasing), float(min_increasing), upper=False)
    return res
