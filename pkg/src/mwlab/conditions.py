"""Exact projective-condition series for Markov functionals.

For an observable ``f`` of the current state W_0 the conditional
expectation of a future partial sum is a state function:

    E_0(S_n) = g_n(W_0),   g_n = f + Pf + ... + P^{n-1} f,

and E_0(X o theta^n) = (P^n f)(W_0).  Every series below is therefore a
deterministic computation with the transition matrix.  Norms of grid
observables are taken in the grid L^p(mu) space.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, svds

from ._kernels import autocovariances
from .errors import NumericalDegeneracyError, PreconditionError, UncenteredError
from .models import FiniteMarkovModel, Observable

DENSE_LIMIT = 1024  # above this, sparse models are iterated by matvec instead of squared
SERIES_TOL = 1e-14
CENTER_TOL = 1e-10
RATIO_WINDOW = 5
RATIO_SPREAD = 1e-3
RHO_DENSE_FALLBACK = 4096


def require_centered(model: FiniteMarkovModel, f: Observable) -> None:
    mean = model.pi @ f.values
    scale = max(1.0, float(np.abs(f.values).max(initial=0.0)))
    if np.abs(mean).max(initial=0.0) > CENTER_TOL * scale:
        raise UncenteredError(f"observable has stationary mean {np.abs(mean).max():.3g}; center it first")


def _uses_dense(model: FiniteMarkovModel) -> bool:
    return not model.is_sparse or model.m <= DENSE_LIMIT


def dyadic_profiles(model: FiniteMarkovModel, values: np.ndarray, depth: int) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(m, g_m, P^m g_m)`` for m = 1, 2, 4, ..., 2^depth.

    Small models square P^m; large sparse ones accumulate P^j f one matvec
    at a time and stop iterating once the terms underflow relative to f.
    """
    v = np.asarray(values, dtype=float)
    if _uses_dense(model):
        Pm = model.dense
        g = v
        for k in range(depth + 1):
            Pg = Pm @ g
            yield 1 << k, g, Pg
            if k < depth:
                g = g + Pg
                Pm = Pm @ Pm
        return
    floor = SERIES_TOL * SERIES_TOL * float(np.abs(v).max(initial=0.0))
    g = v.copy()
    t = model.apply(v)
    dead = not np.abs(t).max(initial=0.0) > floor
    for k in range(depth + 1):
        m = 1 << k
        s = np.zeros_like(v)
        if not dead:
            for _ in range(m):
                s += t
                t = model.apply(t)
                if not np.abs(t).max(initial=0.0) > floor:
                    dead = True
                    break
        yield m, g, s
        g = g + s


def conditional_sum_profile(model: FiniteMarkovModel, f: Observable, n: int) -> np.ndarray:
    """g_n = sum_{k<n} P^k f, the state function realizing E_0(S_n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    require_centered(model, f)
    if not _uses_dense(model):
        g = np.zeros_like(f.values)
        t = f.values
        for _ in range(n):
            g = g + t
            t = model.apply(t)
        return g
    # binary expansion: g_{a+b} = g_a + P^a g_b
    acc = np.zeros_like(f.values)
    Pa = None
    for m, g, _ in dyadic_profiles(model, f.values, n.bit_length() - 1):
        if n & m:
            acc = acc + (g if Pa is None else Pa @ g)
            Pa = _power(model, m) if Pa is None else Pa @ _power(model, m)
    return acc


def _power(model: FiniteMarkovModel, m: int) -> np.ndarray:
    return np.linalg.matrix_power(model.dense, m)


def direct_sum_profile(model: FiniteMarkovModel, values: np.ndarray, n: int) -> np.ndarray:
    """Brute-force sum_{k<n} P^k f by repeated multiplication (oracle)."""
    g = np.zeros_like(values, dtype=float)
    t = np.asarray(values, dtype=float)
    for _ in range(n):
        g = g + t
        t = model.apply(t)
    return g


# ----------------------------------------------------------------------------
# norms


def l2_space_norm(model: FiniteMarkovModel, f: Observable, values: np.ndarray) -> float:
    """(E_pi |v(W)|^2)^{1/2} where |.| is the value-space norm of f."""
    return f.l2(model.pi, values)


def gaussian_norm(model: FiniteMarkovModel, f: Observable, values: np.ndarray | None = None) -> float:
    """Pregaussian surrogate ||v||_2 + ||G(v)||_2 for a state function v.

    Scalars: 2 ||v||_2.  Grid values in L^p(mu):
    ||G(v)||_2 = (sum_i w_i (E_pi v_i^2)^{p/2})^{1/p} for p <= 2 and the
    mixed norm ||v||_{2,L^p} for p >= 2 (the two agree at p = 2).
    """
    v = f.values if values is None else np.asarray(values, dtype=float)
    if f.p < 1:
        raise ValueError("p must be >= 1")
    l2 = l2_space_norm(model, f, v)
    if f.grid is None:
        return 2.0 * l2
    if f.p <= 2:
        point_var = model.pi @ (v * v)
        gauss = float((f.grid.weights @ point_var ** (f.p / 2)) ** (1.0 / f.p))
    else:
        gauss = l2
    return l2 + gauss


def gaussian_part_branches(model: FiniteMarkovModel, f: Observable, values=None) -> tuple[float, float]:
    """Both branch expressions for ||G(v)||_2 (used to cross-check at p = 2)."""
    v = f.values if values is None else values
    p = f.p
    point_var = model.pi @ (v * v)
    low = float((f.grid.weights @ point_var ** (p / 2)) ** (1.0 / p))
    high = l2_space_norm(model, f, v)
    return low, high


# ----------------------------------------------------------------------------
# series bookkeeping


@dataclass
class SeriesTrace:
    """Terms and running sums of one nonnegative series."""

    name: str
    index: np.ndarray
    terms: np.ndarray
    stopped: str = "n_max"
    tail_bound: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def partials(self) -> np.ndarray:
        return np.cumsum(self.terms)

    @property
    def value(self) -> float:
        return float(self.partials[-1]) if self.terms.size else 0.0

    @property
    def last_term(self) -> float:
        return float(self.terms[-1]) if self.terms.size else 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index.tolist(),
            "terms": self.terms.tolist(),
            "partial_sums": self.partials.tolist(),
            "stopped": self.stopped,
            "tail_bound": self.tail_bound,
            "notes": list(self.notes),
        }

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "term", "partial_sum"])
        for n, t, s in zip(self.index.tolist(), self.terms.tolist(), self.partials.tolist()):
            w.writerow([n, repr(t), repr(s)])


def geometric_tail(terms: np.ndarray, window: int = RATIO_WINDOW, spread: float = RATIO_SPREAD) -> float | None:
    """t_last * r / (1 - r) when the last ``window`` ratios sit in (0, 1) and agree.

    Returns None when the ratios have not stabilized.
    """
    if terms.size < window + 1:
        return None
    tail = terms[-(window + 1) :]
    if np.any(tail[:-1] <= 0):
        return None
    r = tail[1:] / tail[:-1]
    if np.any(r <= 0) or np.any(r >= 1):
        return None
    if r.max() - r.min() > spread * r.mean():
        return None
    rmax = float(r.max())
    return float(tail[-1] * rmax / (1 - rmax))


def _run_series(name: str, term_fn, start: int, n_max: int, tol: float) -> SeriesTrace:
    terms, index = [], []
    first = None
    stopped = "n_max"
    for n in range(start, n_max + 1):
        t = term_fn(n)
        terms.append(t)
        index.append(n)
        if first is None:
            first = t
            if first == 0:
                stopped = "zero"
                break
        elif t < tol * first:
            stopped = "tolerance"
            break
    terms = np.array(terms)
    return SeriesTrace(name, np.array(index), terms, stopped, geometric_tail(terms))


def _iterates(model: FiniteMarkovModel, values: np.ndarray):
    """P^k v for k = 0, 1, 2, ... computed lazily."""
    v = np.asarray(values, dtype=float)
    while True:
        yield v
        v = model.apply(v)


def mw2_norm(model: FiniteMarkovModel, f: Observable, depth: int) -> SeriesTrace:
    """sum_{n=0}^{depth} ||E_0(S_{2^n})||_G / 2^{n/2}."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    require_centered(model, f)
    terms = np.array([gaussian_norm(model, f, g) / math.sqrt(m) for m, g, _ in dyadic_profiles(model, f.values, depth)])
    return SeriesTrace("mw2", np.arange(depth + 1), terms, "depth", geometric_tail(terms))


def np_norm(model: FiniteMarkovModel, f: Observable, n_max: int, p: float | None = None, tol: float = SERIES_TOL) -> SeriesTrace:
    """N_p series, term n built from P^{n-1} f over the grid.

    1 <= p < 2: (int ||P^{n-1} f_s||_2^p mu(ds))^{1/p} / sqrt(n)
    p >= 2:     || (int |P^{n-1} f_s|^p mu(ds))^{1/p} ||_2 / sqrt(n)
    """
    if f.grid is None:
        raise PreconditionError("N_p is defined for grid (L^p-valued) observables")
    require_centered(model, f)
    p = f.p if p is None else p
    w = f.grid.weights
    pi = model.pi
    it = _iterates(model, f.values)

    def term(n):
        v = next(it)
        if p < 2:
            per_point = np.sqrt(np.maximum(pi @ (v * v), 0.0))
            val = (w @ per_point**p) ** (1 / p)
        else:
            inner = ((np.abs(v) ** p) @ w) ** (1 / p)
            val = math.sqrt(max(pi @ (inner * inner), 0.0))
        return float(val) / math.sqrt(n)

    return _run_series("np", term, 1, n_max, tol)


def np_branches(model: FiniteMarkovModel, f: Observable, n: int) -> tuple[float, float]:
    """Term n of both N_p branches evaluated at the observable's p."""
    v = np.linalg.matrix_power(model.dense, n - 1) @ f.values
    w, p, pi = f.grid.weights, f.p, model.pi
    low = float((w @ np.sqrt(pi @ (v * v)) ** p) ** (1 / p))
    inner = ((np.abs(v) ** p) @ w) ** (1 / p)
    high = math.sqrt(pi @ (inner * inner))
    return low / math.sqrt(n), high / math.sqrt(n)


def strengthened_sum(model: FiniteMarkovModel, f: Observable, n_max: int, tol: float = SERIES_TOL) -> SeriesTrace:
    """sum_{n>=1} ||E_0(X o theta^{n-1})||_G / sqrt(n)."""
    require_centered(model, f)
    it = _iterates(model, f.values)
    return _run_series("strengthened", lambda n: gaussian_norm(model, f, next(it)) / math.sqrt(n), 1, n_max, tol)


# sum_n 2^{-n/2} / (1 - 2^{-1/2}) relates dyadic blocks of the strengthened series to mw2
STRENGTHENED_TO_MW2 = math.sqrt(2) / (1 - 2**-0.5)


def h2_norm(model: FiniteMarkovModel, f: Observable, n_max: int, tol: float = SERIES_TOL) -> SeriesTrace:
    """sum_{n>=0} ||E_0(X o theta^n) - E_{-1}(X o theta^n)||_2.

    Scalars use ||P^n f||_2^2 - ||P^{n+1} f||_2^2; grid observables sum
    |P^n f(w') - P^{n+1} f(w)|^2 over the stationary pair law.
    """
    require_centered(model, f)
    pi = model.pi
    it = _iterates(model, f.values)
    state = {"cur": next(it)}
    pairs = sp.coo_matrix(model.P) if f.grid is not None else None

    def term(n):
        cur = state["cur"]
        nxt = next(it)
        state["cur"] = nxt
        if f.grid is None:
            sq = float(pi @ (cur * cur) - pi @ (nxt * nxt))
            if sq < -1e-12:
                raise NumericalDegeneracyError(f"negative squared H2 term {sq:.3g} at n={n}")
        else:
            diff = cur[pairs.col] - nxt[pairs.row]
            sq = float((pi[pairs.row] * pairs.data) @ f.norm(diff) ** 2)
        return math.sqrt(max(sq, 0.0))

    return _run_series("h2", term, 0, n_max, tol)


# ----------------------------------------------------------------------------
# maximal correlation


RHO_NOTE = "rho(n) is the maximal correlation of (W_0, W_n); equality with the past/future coefficient uses the Markov property"


def _centered_symmetrized(model: FiniteMarkovModel, Pn: np.ndarray) -> np.ndarray:
    s = np.sqrt(model.pi)
    return (s[:, None] * (Pn - model.pi[None, :])) / s[None, :]


def rho_maximal_correlation(model: FiniteMarkovModel, n: int) -> float:
    """Second singular value of D^{1/2} P^n D^{-1/2}, D = diag(pi).

    Subtracting the rank-one part 1 pi^T removes the top singular value 1,
    so rho(n) is the spectral norm of what remains (n = 0 gives 1).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1.0
    if _uses_dense(model):
        return float(min(1.0, np.linalg.norm(_centered_symmetrized(model, np.linalg.matrix_power(model.dense, n)), 2)))
    return _rho_sparse(model, n)


def _rho_sparse(model: FiniteMarkovModel, n: int) -> float:
    s = np.sqrt(model.pi)
    pi = model.pi
    P, PT = model.csr, model.csr.T.tocsr()

    def mv(x):
        y = np.ravel(x) / s
        y = y - pi @ y  # (P^n - 1 pi^T) applied to D^{-1/2} x; P^n 1 = 1
        for _ in range(n):
            y = P @ y
        return s * y

    def rmv(x):
        y = s * np.ravel(x)
        for _ in range(n):
            y = PT @ y
        y = y - pi * y.sum()
        return y / s

    op = LinearOperator((model.m, model.m), matvec=mv, rmatvec=rmv, dtype=float)
    try:
        val = svds(op, k=1, return_singular_vectors=False, random_state=0, maxiter=20 * model.m)
    except ArpackNoConvergence:
        if model.m > RHO_DENSE_FALLBACK:
            raise NumericalDegeneracyError(f"maximal correlation at lag {n} did not converge (clustered singular values)")
        Pn = np.linalg.matrix_power(model.dense, n)
        return float(min(1.0, np.linalg.norm(_centered_symmetrized(model, Pn), 2)))
    return float(min(1.0, val[0]))


def rho_dyadic(model: FiniteMarkovModel, depth: int) -> SeriesTrace:
    """rho(2^n) for n = 0..depth and their partial sums."""
    terms = []
    if _uses_dense(model):
        Pm = model.dense
        for k in range(depth + 1):
            terms.append(float(min(1.0, np.linalg.norm(_centered_symmetrized(model, Pm), 2))))
            Pm = Pm @ Pm
    else:
        terms = [_rho_sparse(model, 1 << k) for k in range(depth + 1)]
    terms = np.array(terms)
    return SeriesTrace("rho_dyadic", np.arange(depth + 1), terms, "depth", geometric_tail(terms), [RHO_NOTE])


# ----------------------------------------------------------------------------
# autocovariances


def autocovariance_sequence(model: FiniteMarkovModel, f: Observable, K: int) -> np.ndarray:
    """gamma_k = E_pi[f(W_0) f(W_k)] for k < K (scalar observables)."""
    if f.grid is not None:
        raise PreconditionError("autocovariances are computed for scalar observables")
    P = model.csr
    return autocovariances(
        P.indptr.astype(np.int64), P.indices.astype(np.int64), P.data, np.ascontiguousarray(f.values), model.pi, K
    )


def variance_growth(model: FiniteMarkovModel, f: Observable, ns) -> np.ndarray:
    """Exact Var(S_n)/n = gamma_0 + 2 sum_{k=1}^{n-1} (1 - k/n) gamma_k."""
    ns = np.asarray(ns, dtype=np.int64)
    require_centered(model, f)
    gam = autocovariance_sequence(model, f, int(ns.max()))
    k = np.arange(gam.size, dtype=float)
    c0 = np.cumsum(gam)
    c1 = np.cumsum(k * gam)
    out = []
    for n in ns:
        s0, s1 = c0[n - 1] - gam[0], c1[n - 1]
        out.append(gam[0] + 2 * (s0 - s1 / n))
    return np.array(out)


# ----------------------------------------------------------------------------
# reports


@dataclass
class ConditionReport:
    series: dict[str, SeriesTrace]
    model_name: str = ""
    notes: list[str] = field(default_factory=list)

    @property
    def mw2_partials(self):
        return self.series["mw2"].partials

    @property
    def tail_estimates(self) -> dict[str, float | None]:
        return {k: s.tail_bound for k, s in self.series.items()}

    def to_json(self) -> str:
        payload = {
            "model": self.model_name,
            "series": {k: s.to_dict() for k, s in self.series.items()},
            "tail_estimates": self.tail_estimates,
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def write_csv(self, directory) -> list[str]:
        from pathlib import Path

        directory = Path(directory)
        names = []
        for key, s in self.series.items():
            name = f"condition_{key}.csv"
            with open(directory / name, "w", newline="", encoding="utf-8") as fh:
                s.write_csv(fh)
            names.append(name)
        return names


def condition_report(model: FiniteMarkovModel, f: Observable, depth: int = 20, n_max: int = 2000, tol: float = SERIES_TOL) -> ConditionReport:
    series = {
        "mw2": mw2_norm(model, f, depth),
        "strengthened": strengthened_sum(model, f, n_max, tol),
        "h2": h2_norm(model, f, n_max, tol),
        "rho_dyadic": rho_dyadic(model, min(depth, 30)),
    }
    notes = [RHO_NOTE]
    if f.grid is not None:
        series["np"] = np_norm(model, f, n_max, tol=tol)
        notes.append("grid gaussian norms use the explicit p-branch formula (equivalence constants taken as 1)")
    return ConditionReport(series, model.name, notes)


def power_apply(model: FiniteMarkovModel, values: np.ndarray, n: int) -> np.ndarray:
    """P^n v, by squaring for small models and by repeated matvec otherwise."""
    v = np.asarray(values, dtype=float)
    if n == 0:
        return v
    if _uses_dense(model) and n > 64:
        return np.linalg.matrix_power(model.dense, n) @ v
    for _ in range(n):
        v = model.apply(v)
    return v
