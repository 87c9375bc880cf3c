"""Compiled inner loops for inverse-CDF Markov sampling."""

import os

# the bundled TBB is too old for numba; workqueue needs no external runtime
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
from numba import njit, prange  # noqa: E402


@njit(cache=True, nogil=True)
def _draw(cum, lo, hi, u):
    # first k in [lo, hi) with cum[k] > u; cum[hi-1] == 1.0 by construction
    a = lo
    b = hi - 1
    while a < b:
        mid = (a + b) // 2
        if cum[mid] > u:
            b = mid
        else:
            a = mid + 1
    return a


@njit(cache=True, nogil=True)
def walk(indptr, indices, cum, init_cum, prev, u, out):
    """Fill ``out`` with states driven by uniforms ``u``.

    If ``prev < 0`` the first state is drawn from ``init_cum`` (the
    stationary law); otherwise it is a transition out of ``prev``.
    """
    if prev < 0:
        s = _draw(init_cum, 0, init_cum.shape[0], u[0])
    else:
        s = indices[_draw(cum, indptr[prev], indptr[prev + 1], u[0])]
    out[0] = s
    for j in range(1, u.shape[0]):
        s = indices[_draw(cum, indptr[s], indptr[s + 1], u[j])]
        out[j] = s


@njit(cache=True, parallel=True)
def walk_batch(indptr, indices, cum, init_cum, U, out):
    for r in prange(U.shape[0]):
        walk(indptr, indices, cum, init_cum, -1, U[r], out[r])


def row_cumulative(indptr, data):
    """Per-row cumulative sums of CSR data with each row's last entry pinned to 1."""
    cum = np.empty_like(data)
    for i in range(indptr.shape[0] - 1):
        lo, hi = indptr[i], indptr[i + 1]
        c = np.cumsum(data[lo:hi])
        c[-1] = 1.0
        cum[lo:hi] = c
    return cum


@njit(cache=True)
def csr_matvec(indptr, indices, data, x, out):
    for i in range(indptr.shape[0] - 1):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


@njit(cache=True)
def autocovariances(indptr, indices, data, f, pi, K):
    """gamma_k = sum_w pi_w f(w) (P^k f)(w) for k = 0..K-1."""
    gam = np.empty(K)
    v = f.copy()
    w = np.empty_like(f)
    pf = pi * f
    for k in range(K):
        gam[k] = pf @ v
        csr_matvec(indptr, indices, data, v, w)
        v, w = w, v
    return gam


@njit(cache=True)
def sum_profile_norms(indptr, indices, data, f, pi, K):
    """||g_n||_{2,pi} for n = 1..K, g_n = f + Pf + ... + P^{n-1} f."""
    out = np.empty(K)
    g = np.zeros_like(f)
    t = f.copy()
    w = np.empty_like(f)
    for n in range(K):
        g += t
        out[n] = np.sqrt(max((pi * g) @ g, 0.0))
        csr_matvec(indptr, indices, data, t, w)
        t, w = w, t
    return out


@njit(cache=True)
def running_lil(values, states, carry, start_n, burn_in, checkpoints, ck_pos, state_out):
    """Scan a scalar path chunk for LIL ratios.

    carry = [S, running max of |S|/sqrt(2 n LL n), running max without the 2];
    checkpoints (sorted) receive the running maxima once n reaches them.
    """
    S = carry[0]
    best2 = carry[1]
    best1 = carry[2]
    k = ck_pos[0]
    for j in range(states.shape[0]):
        S += values[states[j]]
        n = start_n + j + 1
        if n >= burn_in:
            ln = max(np.log(n), 1.0)
            lln = max(np.log(ln), 1.0)
            r1 = abs(S) / np.sqrt(n * lln)
            if r1 > best1:
                best1 = r1
            r2 = r1 / np.sqrt(2.0)
            if r2 > best2:
                best2 = r2
        while k < checkpoints.shape[0] and checkpoints[k] == n:
            state_out[k, 0] = S
            state_out[k, 1] = best2
            state_out[k, 2] = best1
            k += 1
    carry[0] = S
    carry[1] = best2
    carry[2] = best1
    ck_pos[0] = k


@njit(cache=True)
def running_absmax(values, states, carry, start_n, checkpoints, ck_pos, out):
    """Track S and max_{k<=n}|S_k| along a chunk; record at checkpoints."""
    S = carry[0]
    best = carry[1]
    k = ck_pos[0]
    for j in range(states.shape[0]):
        S += values[states[j]]
        a = abs(S)
        if a > best:
            best = a
        n = start_n + j + 1
        while k < checkpoints.shape[0] and checkpoints[k] == n:
            out[k, 0] = S
            out[k, 1] = best
            k += 1
    carry[0] = S
    carry[1] = best
    ck_pos[0] = k
