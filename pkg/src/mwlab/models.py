"""Stationary finite Markov models, observables and seeded two-sided paths.

A ``FiniteMarkovModel`` is the exact filtration engine: for an observable
``f`` of the current state, every conditional expectation of a future
partial sum given the past reduces to matrix-vector products with the
transition matrix.  Paths are two-sided in the sense that they may start
at a negative time; time 0 sits at array position ``-start``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu
from scipy.special import zeta

from . import rng
from ._kernels import row_cumulative, walk, walk_batch
from .errors import ModelError, PreconditionError

ROW_TOL = 1e-12
PI_TOL = 1e-10
DEFAULT_MEMORY_BUDGET = 1 << 26  # states materialized before switching to streaming


# ----------------------------------------------------------------------------
# quadrature grids and observables


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature nodes and positive weights approximating a measure on R.

    ``kind`` is ``"discrete"`` or ``"lebesgue"`` (trapezoidal weights on a
    user range).  ``finite`` records whether the discretized measure stands
    for a finite measure; finite-measure bounds refuse grids marked
    ``finite=False``.
    """

    points: np.ndarray
    weights: np.ndarray
    kind: str = "discrete"
    finite: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape != w.shape:
            raise ValueError("grid points and weights differ in length")
        if np.any(w <= 0):
            raise ValueError("grid weights must be positive")
        if self.kind not in ("discrete", "lebesgue"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def norm(self, x: np.ndarray, p: float) -> np.ndarray:
        """L^p(mu) norm over the last axis."""
        x = np.abs(x)
        if p == 1:
            return x @ self.weights
        if p == 2:
            return np.sqrt((x * x) @ self.weights)
        return ((x**p) @ self.weights) ** (1.0 / p)

    def scaled(self, c: float) -> "Grid":
        return Grid(self.points, self.weights * c, self.kind, self.finite)


def lebesgue_grid(lo: float, hi: float, n: int, finite: bool = True) -> Grid:
    """Trapezoidal rule on [lo, hi]: interior weight h, endpoint weight h/2."""
    if n < 2 or not hi > lo:
        raise ValueError("need n >= 2 and hi > lo")
    pts = np.linspace(lo, hi, n)
    h = (hi - lo) / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return Grid(pts, w, "lebesgue", finite)


def uniform_grid(lo: float, hi: float, n: int) -> Grid:
    """Equal weights (hi-lo)/n on n evenly spaced points."""
    return Grid(np.linspace(lo, hi, n), np.full(n, (hi - lo) / n), "discrete", True)


@dataclass(frozen=True, eq=False)
class Observable:
    """Per-state values: shape ``(m,)`` (scalar) or ``(m, G)`` over a grid.

    A grid observable is an L^p(mu)-valued random variable; ``p`` is the
    geometry exponent of that space.
    """

    values: np.ndarray
    grid: Grid | None = None
    p: float = 2.0
    centered: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            if self.grid is not None:
                raise ValueError("scalar observable cannot carry a grid")
        elif v.ndim == 2:
            if self.grid is None or self.grid.size != v.shape[1]:
                raise ValueError("grid observable needs a grid matching values.shape[1]")
        else:
            raise ValueError("observable values must be 1-D or 2-D")
        if not self.p >= 1:
            raise ValueError(f"norm exponent p={self.p} < 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def kind(self) -> str:
        return "scalar" if self.values.ndim == 1 else "grid"

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def with_values(self, values, centered: bool | None = None) -> "Observable":
        return Observable(values, self.grid, self.p, self.centered if centered is None else centered)

    def norm(self, x: np.ndarray) -> np.ndarray:
        """|x| in the value space: absolute value or the grid L^p norm."""
        if self.grid is None:
            return np.abs(x)
        return self.grid.norm(x, self.p)

    def l2(self, pi: np.ndarray, values: np.ndarray | None = None) -> float:
        """(E_pi |f(W)|^2)^{1/2} with |.| the value-space norm."""
        v = self.values if values is None else values
        return float(math.sqrt(max(pi @ (self.norm(v) ** 2), 0.0)))


def center_observable(model: "FiniteMarkovModel", f: Observable) -> Observable:
    """Subtract the stationary mean componentwise."""
    mean = model.pi @ f.values
    return f.with_values(f.values - mean, centered=True)


def indicator(model: "FiniteMarkovModel", state: int, centered: bool = True) -> Observable:
    values = np.zeros(model.m)
    values[state] = 1.0
    f = Observable(values)
    return center_observable(model, f) if centered else f


# ----------------------------------------------------------------------------
# transition matrices


def _as_matrix(P):
    if sp.issparse(P):
        P = sp.csr_matrix(P, dtype=float)
        P.sum_duplicates()
        P.eliminate_zeros()
        return P
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ModelError("transition matrix must be square")
    return P


def _check_stochastic(P) -> None:
    data = P.data if sp.issparse(P) else P
    if np.any(data < 0) or not np.all(np.isfinite(data)):
        raise ModelError("transition matrix has negative or non-finite entries")
    rows = np.asarray(P.sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_TOL)
    if bad.size:
        raise ModelError(f"rows {bad[:10].tolist()} do not sum to 1 (max error {np.abs(rows - 1).max():.3g})")


def communicating_classes(P) -> list[list[int]]:
    graph = sp.csr_matrix(P) if not sp.issparse(P) else P
    n, labels = csgraph.connected_components(graph, directed=True, connection="strong")
    return [np.flatnonzero(labels == c).tolist() for c in range(n)]


def period(P) -> int:
    """gcd of cycle lengths of the transition graph (assumes irreducibility)."""
    graph = sp.csr_matrix(P) if not sp.issparse(P) else P
    level = csgraph.shortest_path(graph, method="D", unweighted=True, indices=0)
    coo = graph.tocoo()
    keep = coo.data > 0
    diff = level[coo.row[keep]] + 1 - level[coo.col[keep]]
    return int(np.gcd.reduce(np.abs(diff).astype(np.int64)))


def check_ergodic(P) -> None:
    """Raise ModelError naming the offending classes if P is reducible or periodic."""
    classes = communicating_classes(P)
    if len(classes) > 1:
        graph = sp.csr_matrix(P) if not sp.issparse(P) else P
        closed = []
        for cls in classes:
            rows = graph[cls]
            outside = np.setdiff1d(rows.indices[rows.data > 0], cls)
            closed.append(outside.size == 0)
        desc = "; ".join(
            f"{{{', '.join(map(str, c[:8]))}{', ...' if len(c) > 8 else ''}}}{' (closed)' if cl else ''}"
            for c, cl in zip(classes, closed)
        )
        raise ModelError(f"reducible chain with {len(classes)} communicating classes: {desc}")
    d = period(P)
    if d != 1:
        graph = sp.csr_matrix(P) if not sp.issparse(P) else P
        level = csgraph.shortest_path(graph, method="D", unweighted=True, indices=0)
        cyc = [np.flatnonzero(level.astype(int) % d == r).tolist()[:8] for r in range(d)]
        raise ModelError(f"periodic chain with period {d}; cyclic classes start {cyc}")


def stationary_distribution(P) -> np.ndarray:
    """Stationary law of an irreducible aperiodic transition matrix.

    Solves pi (I - P) = 0 with one equation replaced by sum(pi) = 1.
    """
    P = _as_matrix(P)
    _check_stochastic(P)
    check_ergodic(P)
    m = P.shape[0]
    b = np.zeros(m)
    b[-1] = 1.0
    if sp.issparse(P):
        A = (sp.identity(m, format="csr") - P).T.tolil()
        A[m - 1, :] = np.ones(m)
        pi = splu(A.tocsc()).solve(b)
    else:
        A = (np.eye(m) - P).T
        A[-1, :] = 1.0
        pi = np.linalg.solve(A, b)
    pi = pi / pi.sum()
    return pi


@dataclass(frozen=True, eq=False)
class FiniteMarkovModel:
    """Row-stochastic ``P`` (dense ndarray or CSR) with stationary law ``pi``."""

    P: np.ndarray | sp.csr_matrix
    pi: np.ndarray
    name: str = "chain"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        pi.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        if not sp.issparse(self.P):
            P = np.array(self.P, dtype=float)
            P.flags.writeable = False
            object.__setattr__(self, "P", P)

    @classmethod
    def from_matrix(cls, P, name: str = "chain", **info) -> "FiniteMarkovModel":
        P = _as_matrix(P)
        pi = stationary_distribution(P)
        model = cls(P, pi, name, dict(info))
        model.validate()
        return model

    @property
    def m(self) -> int:
        return self.pi.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.P)

    def validate(self) -> None:
        _check_stochastic(self.P)
        if abs(self.pi.sum() - 1.0) > ROW_TOL:
            raise ModelError("stationary vector does not sum to 1")
        if np.any(self.pi <= 0):
            raise ModelError("stationary vector has non-positive entries (chain not irreducible)")
        err = self.stationarity_error()
        if err > PI_TOL:
            raise ModelError(f"|pi P - pi|_inf = {err:.3g} exceeds {PI_TOL}")

    def stationarity_error(self) -> float:
        return float(np.abs(self.P.T @ self.pi - self.pi).max())

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(P f)(w) = E[f(W_1) | W_0 = w], for 1-D or 2-D ``f``."""
        return np.asarray(self.P @ f)

    def apply_power(self, f: np.ndarray, k: int) -> np.ndarray:
        for _ in range(k):
            f = self.apply(f)
        return f

    @cached_property
    def dense(self) -> np.ndarray:
        return self.P.toarray() if self.is_sparse else self.P

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.P)

    @cached_property
    def _sampler(self):
        P = self.csr
        cum = row_cumulative(P.indptr, P.data)
        init = np.cumsum(self.pi)
        init[-1] = 1.0
        return (P.indptr.astype(np.int64), P.indices.astype(np.int64), cum, init)

    def __repr__(self) -> str:
        return f"FiniteMarkovModel(name={self.name!r}, m={self.m})"


def iid_model(r, name: str = "iid") -> FiniteMarkovModel:
    """Every row equal to the probability vector r: an iid sequence."""
    r = np.asarray(r, dtype=float)
    return FiniteMarkovModel.from_matrix(np.tile(r, (r.size, 1)), name)


def two_state(a: float, b: float) -> FiniteMarkovModel:
    """P = [[1-a, a], [b, 1-b]]; stationary law (b, a)/(a+b), second eigenvalue 1-a-b."""
    return FiniteMarkovModel.from_matrix([[1 - a, a], [b, 1 - b]], f"two_state(a={a}, b={b})", a=a, b=b)


def random_chain(m: int, rng_: np.random.Generator, concentration: float = 1.0, density: float = 1.0) -> FiniteMarkovModel:
    """Dirichlet rows; with density < 1 entries are thinned but the diagonal
    and a cycle are kept so the chain stays irreducible and aperiodic."""
    P = rng_.dirichlet(np.full(m, concentration), size=m)
    if density < 1.0:
        mask = rng_.random((m, m)) < density
        mask[np.arange(m), np.arange(m)] = True
        mask[np.arange(m), (np.arange(m) + 1) % m] = True
        P = P * mask
        P /= P.sum(axis=1, keepdims=True)
    return FiniteMarkovModel.from_matrix(P, f"random({m})")


def pair_chain(base: FiniteMarkovModel) -> FiniteMarkovModel:
    """Chain of consecutive pairs (Z_{n-1}, Z_n) of a base chain Z.

    State (a, b) is encoded as a*k + b.  Functions phi(a) - phi(b) of the
    pair state are genuine coboundaries: their partial sums telescope.
    """
    k = base.m
    B = base.dense
    P = np.zeros((k * k, k * k))
    for a in range(k):
        for b in range(k):
            P[a * k + b, b * k : (b + 1) * k] = B[b]
    pi = (base.pi[:, None] * B).ravel()
    model = FiniteMarkovModel(P, pi, f"pairs({base.name})", {"base_states": k})
    check_ergodic(P)
    model.validate()
    return model


def pair_coboundary(pairs: FiniteMarkovModel, phi) -> Observable:
    """Observable phi(Z_{-1}) - phi(Z_0) on a pair chain."""
    k = pairs.info["base_states"]
    phi = np.asarray(phi, dtype=float)
    values = (phi[:, None] - phi[None, :]).ravel()
    assert values.shape[0] == k * k
    return Observable(values, centered=True)


# ----------------------------------------------------------------------------
# renewal chain with heavy-tailed return times


@dataclass(frozen=True)
class RenewalSpec:
    """Return-time law p_i proportional to i^{-tail_exponent}, i = 1..truncation."""

    tail_exponent: float
    truncation: int

    def __post_init__(self):
        if not self.tail_exponent > 2:
            raise PreconditionError(
                f"tail_exponent={self.tail_exponent} <= 2: E(tau) is infinite and no stationary law exists"
            )
        if self.truncation < 4:
            raise PreconditionError("truncation must be at least 4")

    @cached_property
    def probabilities(self) -> np.ndarray:
        i = np.arange(1, self.truncation + 1, dtype=float)
        w = i ** (-self.tail_exponent)
        return w / w.sum()

    @property
    def normalizer(self) -> float:
        i = np.arange(1, self.truncation + 1, dtype=float)
        return float(1.0 / (i ** (-self.tail_exponent)).sum())

    @property
    def dropped_tail_mass(self) -> float:
        """Mass of {tau > N} under the untruncated law c*i^-alpha, c = 1/zeta(alpha)."""
        return float(1.0 - 1.0 / (self.normalizer * zeta(self.tail_exponent)))

    @property
    def mean(self) -> float:
        i = np.arange(1, self.truncation + 1, dtype=float)
        return float(i @ self.probabilities)

    @property
    def second_moment(self) -> float:
        i = np.arange(1, self.truncation + 1, dtype=float)
        return float((i * i) @ self.probabilities)

    @property
    def second_moment_diverges(self) -> bool:
        """True iff E(tau^2) is infinite for the untruncated law."""
        return self.tail_exponent <= 3


def second_moment_partials(tail_exponent: float, truncations) -> np.ndarray:
    """sum_{i<=N} i^2 c/i^alpha with the untruncated normalizer c = 1/zeta(alpha)."""
    c = 1.0 / zeta(tail_exponent)
    out = []
    for N in truncations:
        i = np.arange(1, int(N) + 1, dtype=float)
        out.append(c * float((i ** (2 - tail_exponent)).sum()))
    return np.array(out)


def build_renewal_chain(spec: RenewalSpec) -> FiniteMarkovModel:
    """States 0..N-1; p_{i,i-1} = 1 for i >= 1 and p_{0,i-1} = p_i.

    The stationary law is exact: pi_0 = 1/E(tau), pi_i = pi_0 sum_{j>i} p_j.
    """
    N = spec.truncation
    p = spec.probabilities
    rows = np.concatenate([np.zeros(N, dtype=np.int64), np.arange(1, N)])
    cols = np.concatenate([np.arange(N), np.arange(N - 1)])
    data = np.concatenate([p, np.ones(N - 1)])
    P = sp.csr_matrix((data, (rows, cols)), shape=(N, N))
    P.eliminate_zeros()
    pi = np.cumsum(p[::-1])[::-1] / spec.mean  # pi_k = P(tau > k) / E(tau)
    model = FiniteMarkovModel(
        P,
        pi,
        f"renewal(alpha={spec.tail_exponent}, N={N})",
        {
            "tail_exponent": spec.tail_exponent,
            "truncation": N,
            "mean_return_time": spec.mean,
            "second_moment": spec.second_moment,
            "second_moment_diverges": spec.second_moment_diverges,
            "dropped_tail_mass": spec.dropped_tail_mass,
            "normalizer": spec.normalizer,
        },
    )
    model.validate()
    return model


# ----------------------------------------------------------------------------
# paths


@dataclass(frozen=True, eq=False)
class Path:
    """States at times ``start .. horizon``; time t lives at index t - start."""

    start: int
    states: np.ndarray
    seed: int
    stream: int = 0

    @property
    def horizon(self) -> int:
        return self.start + self.states.shape[0] - 1

    def at(self, t) -> np.ndarray:
        idx = np.asarray(t) - self.start
        if np.any(idx < 0) or np.any(idx >= self.states.shape[0]):
            raise IndexError(f"time outside [{self.start}, {self.horizon}]")
        return self.states[idx]

    def window(self, t0: int, t1: int) -> np.ndarray:
        """States at times t0 .. t1-1."""
        if t0 < self.start or t1 - 1 > self.horizon:
            raise IndexError(f"window [{t0}, {t1}) outside [{self.start}, {self.horizon}]")
        return self.states[t0 - self.start : t1 - self.start]

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "state"])
        for t, s in zip(range(self.start, self.horizon + 1), self.states.tolist()):
            w.writerow([t, s])


@dataclass(frozen=True, eq=False)
class PathStream:
    """Lazily generated path; chunks are bit-identical to a materialized Path."""

    model: FiniteMarkovModel
    start: int
    horizon: int
    seed: int
    stream: int = 0

    def chunks(self, size: int = 1 << 22) -> Iterator[tuple[int, np.ndarray]]:
        indptr, indices, cum, init = self.model._sampler
        total = self.horizon - self.start + 1
        prev = -1
        step = 0
        while step < total:
            count = min(size, total - step)
            u = rng.uniforms(self.seed, self.stream, step, count)
            out = np.empty(count, dtype=np.int64)
            walk(indptr, indices, cum, init, prev, u, out)
            yield self.start + step, out
            prev = int(out[-1])
            step += count

    def materialize(self) -> Path:
        return Path(self.start, np.concatenate([c for _, c in self.chunks()]), self.seed, self.stream)


def simulate_path(
    model: FiniteMarkovModel,
    start: int,
    horizon: int,
    seed: int,
    stream: int = 0,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> Path | PathStream:
    """Stationary path on times ``start .. horizon``.

    The state at ``start`` is drawn from pi with uniform ``(seed, stream, 0)``;
    the state at ``start + j`` uses uniform ``(seed, stream, j)``.  Paths
    longer than ``memory_budget`` come back as a ``PathStream``.
    """
    if start > 0 or horizon < 0 or horizon < start:
        raise PreconditionError("need start <= 0 <= horizon")
    stream_ = PathStream(model, start, horizon, seed, stream)
    if horizon - start + 1 > memory_budget:
        return stream_
    return stream_.materialize()


def simulate_paths(model: FiniteMarkovModel, start: int, horizon: int, seed: int, streams) -> np.ndarray:
    """States for several streams at once, shape (len(streams), horizon-start+1).

    Row r equals ``simulate_path(model, start, horizon, seed, streams[r]).states``.
    """
    length = horizon - start + 1
    U = rng.uniform_block(seed, streams, 0, length)
    out = np.empty(U.shape, dtype=np.int64)
    indptr, indices, cum, init = model._sampler
    walk_batch(indptr, indices, cum, init, U, out)
    return out


def second_moment_fit(tail_exponent: float, truncations) -> dict:
    """Least-squares slope of the E(tau^2) partial sums against log N.

    At tail exponent 3 the partial sums are c * H_N with c = 1/zeta(3),
    so the expected slope is c; steeper exponents give power-law growth.
    """
    Ns = np.asarray(truncations, dtype=float)
    partial = second_moment_partials(tail_exponent, Ns.astype(int))
    slope, intercept = np.polyfit(np.log(Ns), partial, 1)
    expected = float(1.0 / zeta(tail_exponent)) if tail_exponent == 3 else None
    return {"slope": float(slope), "intercept": float(intercept), "expected_slope": expected, "partials": partial.tolist()}
