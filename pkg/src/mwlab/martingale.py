"""Martingale approximation of Markov functionals.

For centered ``f`` the Poisson equation (I - P) h = f has a unique
centered solution.  Then

    f(W_k) = d_k + Ph(W_{k-1}) - Ph(W_k),   d_k = h(W_k) - Ph(W_{k-1}),

so S_n(X) - S_n(d) = Ph(W_{-1}) - Ph(W_{n-1}) on every path, and the
asymptotic covariance of S_n/sqrt(n) is the stationary covariance of d.
"""

from __future__ import annotations

import csv
import math
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from .conditions import autocovariance_sequence, conditional_sum_profile, gaussian_norm, power_apply, require_centered
from .errors import IllConditionedError
from .models import FiniteMarkovModel, Observable

COND_LIMIT = 1e12
RESOLVENT_MAX_TERMS = 100_000

_factor_cache: "weakref.WeakKeyDictionary[FiniteMarkovModel, _BorderedSolver]" = weakref.WeakKeyDictionary()


class _BorderedSolver:
    """LU of [[I - P, 1], [pi^T, 0]]; the border pins pi(h) = 0."""

    def __init__(self, model: FiniteMarkovModel):
        m = model.m
        if model.is_sparse:
            A = sp.bmat(
                [[sp.identity(m, format="csr") - model.csr, sp.csr_matrix(np.ones((m, 1)))], [sp.csr_matrix(model.pi[None, :]), None]],
                format="csc",
            )
            lu = splu(A)
            self._solve = lu.solve
            inv = LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"), dtype=float)
            self.condition = float(onenormest(A) * onenormest(inv))
        else:
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = np.eye(m) - model.dense
            A[:m, m] = 1.0
            A[m, :m] = model.pi
            lu = la.lu_factor(A)
            self._solve = lambda b: la.lu_solve(lu, b)
            self.condition = float(np.linalg.cond(A, 1))
        self.m = m

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.zeros((self.m + 1,) + rhs.shape[1:])
        b[: self.m] = rhs
        return self._solve(b)[: self.m]


def _solver(model: FiniteMarkovModel) -> _BorderedSolver:
    s = _factor_cache.get(model)
    if s is None:
        s = _factor_cache[model] = _BorderedSolver(model)
    return s


def apply_q(model: FiniteMarkovModel, f: Observable) -> Observable:
    """Q acts on state functions as P: (Qf)(w) = E[f(W_1) | W_0 = w]."""
    return f.with_values(model.apply(f.values))


@dataclass(frozen=True, eq=False)
class PoissonSolution:
    h: np.ndarray
    residual: float
    mean: float
    condition: float

    @property
    def centered(self) -> bool:
        return self.mean <= 1e-10


def solve_poisson(model: FiniteMarkovModel, f: Observable) -> PoissonSolution:
    """Centered h with (I - P) h = f."""
    require_centered(model, f)
    solver = _solver(model)
    if solver.condition > COND_LIMIT:
        raise IllConditionedError(
            f"bordered Poisson system has condition number {solver.condition:.3g} > {COND_LIMIT:g}; use resolvent_approx"
        )
    h = solver.solve(f.values)
    residual = float(np.abs(h - model.apply(h) - f.values).max(initial=0.0))
    mean = float(np.abs(model.pi @ h).max(initial=0.0))
    return PoissonSolution(h, residual, mean, solver.condition)


def resolvent_approx(model: FiniteMarkovModel, f: Observable, eps: float, tol: float = 1e-14) -> Observable:
    """Y_eps = sum_k (1 - eps)^k P^k f.

    Summed term by term while the certified remainder (1-eps)^K |f|_inf / eps
    needs at most RESOLVENT_MAX_TERMS terms; otherwise the series limit is
    obtained from the equivalent solve (I - (1 - eps) P) Y = f.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps={eps} outside (0, 1]")
    require_centered(model, f)
    fmax = float(np.abs(f.values).max(initial=0.0))
    if fmax == 0.0 or eps == 1.0:
        return f.with_values(f.values.copy())
    # remainder after K terms is at most (1-eps)^K fmax / eps
    K = math.ceil(math.log(tol * eps) / math.log1p(-eps)) if eps < 1 else 1
    if K <= RESOLVENT_MAX_TERMS:
        y = np.zeros_like(f.values)
        t = f.values
        c = 1.0
        for _ in range(K):
            y = y + c * t
            t = model.apply(t)
            c *= 1 - eps
        return f.with_values(y)
    if model.is_sparse:
        A = (sp.identity(model.m, format="csc") - (1 - eps) * model.csr).tocsc()
        y = splu(A).solve(np.asarray(f.values))
    else:
        y = np.linalg.solve(np.eye(model.m) - (1 - eps) * model.dense, f.values)
    return f.with_values(y)


def cesaro_defect(model: FiniteMarkovModel, f: Observable, n: int) -> float:
    """||V_n f||_G / n with V_n = I + P + ... + P^{n-1}; tends to 0 when P is mean ergodic."""
    return gaussian_norm(model, f, conditional_sum_profile(model, f, n)) / n


@dataclass(frozen=True, eq=False)
class MartingaleDifference:
    """d(w, w') = h(w') - (Ph)(w) with its stationary variance(s)."""

    model: FiniteMarkovModel
    h: np.ndarray
    Ph: np.ndarray
    sigma2: float | np.ndarray

    def __call__(self, prev, cur) -> np.ndarray:
        return self.h[cur] - self.Ph[prev]

    def along(self, states: np.ndarray) -> np.ndarray:
        """d_k for consecutive pairs of ``states`` (length len(states) - 1)."""
        return self.h[states[1:]] - self.Ph[states[:-1]]

    def conditional_means(self) -> np.ndarray:
        """sum_{w'} P(w, w') d(w, w'), which vanishes for each state w."""
        rows = np.asarray(self.model.P.sum(axis=1)).ravel()
        Ph_again = self.model.apply(self.h)
        return Ph_again - rows.reshape((-1,) + (1,) * (self.Ph.ndim - 1)) * self.Ph


def martingale_difference(model: FiniteMarkovModel, f: Observable) -> MartingaleDifference:
    sol = solve_poisson(model, f)
    h = sol.h
    Ph = model.apply(h)
    sigma2 = model.pi @ (h * h) - model.pi @ (Ph * Ph)
    if np.ndim(sigma2) == 0:
        sigma2 = float(sigma2)
    return MartingaleDifference(model, h, Ph, sigma2)


@dataclass(frozen=True, eq=False)
class CovarianceOperator:
    """Stationary covariance of d; for grids K[i, j] = E[d_i d_j] over grid points.

    A dual direction u acts as sum_i w_i u_i x_i, so the covariance form is
    (w*u)^T K (w*v).
    """

    K: np.ndarray
    weights: np.ndarray | None = None

    @property
    def is_scalar(self) -> bool:
        return self.K.ndim == 0

    @property
    def sigma2(self) -> float:
        if not self.is_scalar:
            raise ValueError("grid covariance; use form(u, v)")
        return float(self.K)

    def form(self, u, v=None) -> float:
        if self.is_scalar:
            return float(self.K) * float(u) * float(u if v is None else v)
        a = self.weights * np.asarray(u, dtype=float)
        b = a if v is None else self.weights * np.asarray(v, dtype=float)
        return float(a @ self.K @ b)

    def min_eigenvalue(self) -> float:
        if self.is_scalar:
            return float(self.K)
        return float(np.linalg.eigvalsh(self.K).min())

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        K = np.atleast_2d(self.K)
        for row in K.tolist():
            w.writerow([repr(x) for x in row])


def asymptotic_covariance(model: FiniteMarkovModel, f: Observable) -> CovarianceOperator:
    md = martingale_difference(model, f)
    if f.grid is None:
        return CovarianceOperator(np.array(md.sigma2))
    pi = model.pi
    K = (md.h * pi[:, None]).T @ md.h - (md.Ph * pi[:, None]).T @ md.Ph
    K = (K + K.T) / 2
    return CovarianceOperator(K, f.grid.weights)


def autocovariance_variance(model: FiniteMarkovModel, f: Observable, K: int = 200) -> tuple[float, float | None]:
    """gamma_0 + 2 sum_{k=1}^{K} gamma_k, plus a geometric tail bound for the rest.

    The bound is taken from the last five ratios |gamma_{k+1}/gamma_k| above
    the rounding floor (1e-13 gamma_0); it is reported when they agree and
    sit below 1, otherwise it is None.
    """
    require_centered(model, f)
    gam = autocovariance_sequence(model, f, K + 1)
    value = float(gam[0] + 2 * gam[1:].sum())
    a = np.abs(gam)
    if a[0] == 0.0:
        return value, 0.0
    above = a > 1e-13 * a[0]
    j = int(np.argmin(above)) - 1 if not above.all() else a.size - 1
    if j < 5:
        return value, (0.0 if not above[1:].any() else None)
    w = a[j - 5 : j + 1]
    r = w[1:] / w[:-1]
    if np.all(r < 1) and r.max() - r.min() <= 1e-3 * r.mean():
        return value, float(2 * w[-1] * r.max() / (1 - r.max()))
    return value, None


def approximation_error(model: FiniteMarkovModel, f: Observable, n: int) -> float:
    """||S_n(X) - S_n(d)||_2 = ||Ph(W_{-1}) - Ph(W_{n-1})||_2, computed exactly.

    Scalars: (2 pi((Ph)^2) - 2 pi(Ph P^n Ph))^{1/2}; grids use the joint law
    pi(w) P^n(w, w') of the two endpoints.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 0.0
    md = martingale_difference(model, f)
    pi, Ph = model.pi, md.Ph
    if f.grid is None:
        sq = 2 * pi @ (Ph * Ph) - 2 * pi @ (Ph * power_apply(model, Ph, n))
        return math.sqrt(max(float(sq), 0.0))
    Pn = np.linalg.matrix_power(model.dense, n)
    total = 0.0
    for w in range(model.m):
        diff = Ph[w][None, :] - Ph
        total += pi[w] * (Pn[w] @ f.norm(diff) ** 2)
    return math.sqrt(max(total, 0.0))


def decomposition_defect(md: MartingaleDifference, f: Observable, states: np.ndarray, n: int) -> float:
    """max_k |(S_k(X) - S_k(d)) - (Ph(W_{-1}) - Ph(W_{k-1}))| over k <= n.

    ``states`` holds W_{-1}, W_0, ..., W_{n-1}.
    """
    x = f.values[states[1 : n + 1]]
    d = md.along(states[: n + 1])
    lhs = np.cumsum(x - d, axis=0)
    rhs = md.Ph[states[0]] - md.Ph[states[1 : n + 1]]
    return float(np.abs(lhs - rhs).max(initial=0.0))
