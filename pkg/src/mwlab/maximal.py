"""Dyadic maximal decomposition, maximal functions and weak-type checks.

Conditional expectations of block sums are evaluated through the Markov
property.  With m = 2^k and h_m = P^m g_m,

    E_{-m}(S_m) o theta^t = h_m(W_{t-m}),

so u_k o theta^{2m l} = |h_m(W_{2ml-m})| and

    d_k o theta^{2m l} = h_m(W_{2ml-m}) + h_m(W_{2ml}) - h_{2m}(W_{2ml-2m}).

Pairing consecutive blocks of length m telescopes level by level, which
gives the exact reconstruction used by ``reconstruct_sums``.  The path has
to reach back to time -2^d.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conditions import dyadic_profiles, gaussian_norm, require_centered
from .errors import InequalityViolation, PathTooShortError
from .martingale import martingale_difference
from .models import FiniteMarkovModel, Observable, Path, simulate_paths

SLACK_TOL = 1e-9


def L(x):
    """max(log x, 1), elementwise."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(np.maximum(x, 1e-300)), 1.0)


def LL(n):
    return L(L(n))


def lil_normalizer(n, two: bool = True):
    """sqrt(2 n L(L(n))) (or without the 2)."""
    n = np.asarray(n, dtype=float)
    return np.sqrt((2.0 if two else 1.0) * n * LL(n))


# ----------------------------------------------------------------------------
# partial sums


@dataclass(frozen=True, eq=False)
class PartialSums:
    """S_1..S_n with S_k = X_0 + ... + X_{k-1}; ``values[k-1] = S_k``."""

    increments: np.ndarray
    norm_fn: object = None

    @classmethod
    def from_path(cls, f: Observable, path: Path, n: int | None = None) -> "PartialSums":
        n = path.horizon + 1 if n is None else n
        return cls(f.values[path.window(0, n)], f.norm)

    @property
    def values(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=0)

    @property
    def n(self) -> int:
        return self.increments.shape[0]

    def norms(self) -> np.ndarray:
        v = self.values
        return np.abs(v) if self.norm_fn is None else self.norm_fn(v)

    def polygonal(self, t) -> np.ndarray:
        """S_{n,t} = S_[nt] + (nt - [nt]) X_[nt] for t in [0, 1]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.n
        S = np.concatenate([np.zeros((1,) + self.increments.shape[1:]), self.values])
        X = np.concatenate([self.increments, np.zeros((1,) + self.increments.shape[1:])])
        k = np.floor(n * t).astype(int)
        frac = n * t - k
        return S[k] + frac.reshape((-1,) + (1,) * (S.ndim - 1)) * X[k]


def maximal_function(sums, kind: str = "M2", horizon: int | None = None) -> float:
    """Finite-horizon M1 = max |S_n|/n or M2 = max |S_n|/sqrt(n L(L(n)))."""
    norms = sums.norms() if isinstance(sums, PartialSums) else np.abs(np.asarray(sums, dtype=float))
    if horizon is not None:
        norms = norms[:horizon]
    if norms.size == 0:
        return 0.0
    n = np.arange(1, norms.size + 1)
    if kind == "M1":
        return float((norms / n).max())
    if kind == "M2":
        return float((norms / lil_normalizer(n, two=False)).max())
    raise ValueError(f"unknown maximal function {kind!r}")


# ----------------------------------------------------------------------------
# dyadic components


@dataclass(frozen=True, eq=False)
class DyadicComponents:
    """Series entering the dyadic inequality for one path, vector-valued for grids.

    ``adapted[l]`` = f(W_l) - Pf(W_{l-1}); ``d[k][l]`` is d_k o theta^{2^{k+1} l};
    ``e[k][l]`` = E_{-2^k}(S_{2^k}) o theta^{2^{k+1} l} (u_k is its norm);
    ``e_top`` = E_{-2^d}(S_{2^d}).
    """

    depth: int
    adapted: np.ndarray
    d: list[np.ndarray]
    e: list[np.ndarray]
    e_top: np.ndarray
    norm_fn: object = None
    path: Path | None = None

    def norm(self, x):
        return np.abs(x) if self.norm_fn is None else self.norm_fn(x)

    @property
    def u(self) -> list[np.ndarray]:
        return [self.norm(e) for e in self.e]

    @property
    def u_top(self) -> float:
        return float(self.norm(self.e_top))


def dyadic_tables(model: FiniteMarkovModel, f: Observable, depth: int) -> list[np.ndarray]:
    """h_{2^k} = P^{2^k} g_{2^k} for k = 0..depth (state functions)."""
    require_centered(model, f)
    return [h for _, _, h in dyadic_profiles(model, f.values, depth)]


def dyadic_components(model: FiniteMarkovModel, f: Observable, path: Path, d: int, tables=None) -> DyadicComponents:
    n = 1 << d
    if path.start > -n or path.horizon < n - 1:
        raise PathTooShortError(f"depth {d} needs a path covering times {-n}..{n - 1}; got {path.start}..{path.horizon}")
    hs = dyadic_tables(model, f, d) if tables is None else tables
    W = path.at
    ell = np.arange(n)
    adapted = f.values[W(ell)] - hs[0][W(ell - 1)]
    ds, es = [], []
    for k in range(d):
        m = 1 << k
        q = np.arange(n // (2 * m))
        e = hs[k][W(2 * m * q - m)]
        ds.append(e + hs[k][W(2 * m * q)] - hs[k + 1][W(2 * m * q - 2 * m)])
        es.append(e)
    e_top = hs[d][W(np.array(-n))]
    return DyadicComponents(d, adapted, ds, es, e_top, None if f.grid is None else f.norm, path)


def reconstruct_sums(c: DyadicComponents) -> np.ndarray:
    """S_1..S_{2^d} rebuilt from the components (exact telescoping identity)."""
    n = 1 << c.depth
    tail_shape = c.adapted.shape[1:]
    A = np.concatenate([np.zeros((1,) + tail_shape), np.cumsum(c.adapted, axis=0)])
    i = np.arange(1, n + 1)
    S = A[i].copy()
    for k in range(c.depth):
        ik = i >> k
        D = np.concatenate([np.zeros((1,) + tail_shape), np.cumsum(c.d[k], axis=0)])
        S += D[ik // 2]
        odd = (ik & 1).astype(bool)
        S[odd] += c.e[k][(ik[odd] - 1) // 2]
    top = (i >> c.depth) == 1
    S[top] += c.e_top
    return S


@dataclass
class SlackReport:
    depth: int
    lhs: float
    rhs: float
    pieces: dict = field(default_factory=dict)
    path_id: int = 0

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def _max_partial_norm(x: np.ndarray, norm) -> float:
    if x.shape[0] == 0:
        return 0.0
    return float(norm(np.cumsum(x, axis=0)).max())


def verify_dyadic_inequality(c: DyadicComponents, sums: PartialSums, path_id: int = 0, dump_dir=None) -> SlackReport:
    """Evaluate both sides of the dyadic maximal inequality on one path.

    Raises InequalityViolation (after writing the path to CSV) if the
    right-hand side falls short by more than SLACK_TOL.
    """
    n = 1 << c.depth
    lhs = float(sums.norms()[:n].max())
    adapted = _max_partial_norm(c.adapted, c.norm)
    martingale = [_max_partial_norm(dk, c.norm) for dk in c.d]
    blocks = [float(u.max()) if u.size else 0.0 for u in c.u]
    rhs = adapted + sum(martingale) + c.u_top + sum(blocks)
    rep = SlackReport(
        c.depth, lhs, rhs, {"adapted": adapted, "martingale": martingale, "u_top": c.u_top, "blocks": blocks}, path_id
    )
    if rep.slack < -SLACK_TOL * max(1.0, lhs):
        target = dump_dir or tempfile.mkdtemp(prefix="mwlab-violation-")
        fname = os.path.join(target, f"path_{path_id}.csv")
        if c.path is not None:
            with open(fname, "w", newline="", encoding="utf-8") as fh:
                c.path.to_csv(fh)
        raise InequalityViolation(f"dyadic inequality violated by {-rep.slack:.3g} on path {path_id}; path written to {fname}")
    return rep


def write_slack_csv(reports, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_id", "d", "lhs", "rhs", "slack"])
    for r in reports:
        w.writerow([r.path_id, r.depth, repr(r.lhs), repr(r.rhs), repr(r.slack)])


def brute_force_block_expectation(model: FiniteMarkovModel, f: Observable, m: int) -> np.ndarray:
    """E[S_m o theta^0 | W_{-m} = w] = sum_{j<m} (P^{m+j} f)(w), by explicit matrix powers."""
    P = model.dense
    return sum(np.linalg.matrix_power(P, m + j) @ f.values for j in range(m))


def dyadic_mds_defect(model: FiniteMarkovModel, f: Observable, depth: int) -> float:
    """max over k, w of |E[d_k | W_{-2^{k+1}} = w]| = |P^m h_m + P^{2m} h_m - h_{2m}|."""
    hs = dyadic_tables(model, f, depth)
    P = model.dense
    worst = 0.0
    for k in range(depth):
        m = 1 << k
        Pm = np.linalg.matrix_power(P, m)
        resid = Pm @ hs[k] + Pm @ (Pm @ hs[k]) - hs[k + 1]
        worst = max(worst, float(np.abs(resid).max()))
    return worst


# ----------------------------------------------------------------------------
# Monte Carlo checks


def _batches(M: int, batch: int):
    for lo in range(0, M, batch):
        yield list(range(lo, min(M, lo + batch)))


@dataclass
class HopfReport:
    lambdas: np.ndarray
    exceedance: np.ndarray
    bound: np.ndarray
    M: int
    n: int

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.exceedance


def hopf_check(model: FiniteMarkovModel, f: Observable, lambdas, n: int, M: int, seed: int, batch: int = 2000) -> HopfReport:
    """Empirical P(M1 > lam) over M paths of length n against ||X||_1 / lam."""
    lambdas = np.asarray(lambdas, dtype=float)
    counts = np.zeros(lambdas.size)
    k = np.arange(1, n + 1)
    for streams in _batches(M, batch):
        states = simulate_paths(model, 0, n - 1, seed, streams)
        S = np.cumsum(f.values[states], axis=1)
        M1 = (f.norm(S) / k).max(axis=1)
        counts += (M1[:, None] > lambdas[None, :]).sum(axis=0)
    l1 = float(model.pi @ f.norm(f.values))
    return HopfReport(lambdas, counts / M, l1 / lambdas, M, n)


@dataclass
class DoobReport:
    ratio: float
    se: float
    M: int
    n: int
    degenerate: bool = False

    @property
    def exceeds(self) -> bool:
        """True when even the lower edge of the 3-sigma band is above 2."""
        return not self.degenerate and self.ratio - 3 * self.se > 2.0


def doob_ratio(model: FiniteMarkovModel, f: Observable, n: int, M: int, seed: int, batch: int = 2000) -> DoobReport:
    """Estimate ||max_{k<=n} |S_k(d)| ||_2^2 / ||S_n(d)||_2^2 with a delta-method SE."""
    md = martingale_difference(model, f)
    a_all, b_all = [], []
    for streams in _batches(M, batch):
        states = simulate_paths(model, -1, n - 1, seed, streams)
        d = md.h[states[:, 1:]] - md.Ph[states[:, :-1]]
        S = f.norm(np.cumsum(d, axis=1))
        a_all.append(S.max(axis=1) ** 2)
        b_all.append(S[:, -1] ** 2)
    a, b = np.concatenate(a_all), np.concatenate(b_all)
    A, B = a.mean(), b.mean()
    if B == 0.0:
        return DoobReport(float("nan"), float("nan"), M, n, degenerate=True)
    R = A / B
    C = np.cov(a, b)
    var = (C[0, 0] - 2 * R * C[0, 1] + R * R * C[1, 1]) / (B * B * M)
    se = math.sqrt(max(var, 0.0))
    if M < 1000:
        warnings.warn(f"M={M} paths: Monte Carlo band for the Doob ratio is wide (se={se:.3g})", stacklevel=2)
    return DoobReport(float(R), se, M, n)


@dataclass
class RatioTable:
    depths: np.ndarray
    lhs: np.ndarray
    bracket: np.ndarray
    informational: bool = False
    factor: float = 10.0

    @property
    def ratios(self) -> np.ndarray:
        scale = 2.0 ** (self.depths / 2) * self.bracket
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(scale > 0, self.lhs / np.where(scale > 0, scale, 1.0), 0.0)

    @property
    def spread(self) -> float:
        r = self.ratios
        if np.all(r == 0):
            return 1.0
        return float(r.max() / r.min()) if r.min() > 0 else float("inf")

    @property
    def bounded(self) -> bool:
        return self.spread <= self.factor


def cormax2_check(
    model: FiniteMarkovModel,
    f: Observable,
    d_max: int,
    M: int,
    seed: int,
    d_min: int = 2,
    factor: float = 10.0,
    informational: bool = False,
    batch: int = 1000,
) -> RatioTable:
    """LHS ||max_{i<=2^d} |S_i| ||_2 by Monte Carlo; bracket
    ||X||_G + sum_{k<=d} 2^{-k/2} ||E_{-2^k}(S_{2^k})||_G exactly."""
    require_centered(model, f)
    hs = dyadic_tables(model, f, d_max)
    hnorm = np.array([gaussian_norm(model, f, h) for h in hs])
    depths = np.arange(d_min, d_max + 1)
    base = gaussian_norm(model, f)
    bracket = np.array([base + float((hnorm[: d + 1] / 2.0 ** (np.arange(d + 1) / 2)).sum()) for d in depths])
    n = 1 << d_max
    sq = np.zeros(depths.size)
    for streams in _batches(M, batch):
        states = simulate_paths(model, 0, n - 1, seed, streams)
        S = f.norm(np.cumsum(f.values[states], axis=1))
        run = np.maximum.accumulate(S, axis=1)
        sq += (run[:, (1 << depths) - 1] ** 2).sum(axis=0)
    return RatioTable(depths, np.sqrt(sq / M), bracket, informational, factor)
