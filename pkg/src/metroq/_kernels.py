"""Schur-complement assembly kernels.

Each sparse variable owns a run of COO entries (row a, col b, value v) in
one LMI block; its contribution to the Schur matrix against another sparse
variable is Re sum v v' W[b, a'] W[b', a] (trace of F_i W F_j W). The
numba kernels are used when numba imports and METROQ_NUMBA is not "0";
otherwise the numpy versions below do the same work with gathers.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sps

_WANT_NUMBA = os.environ.get("METROQ_NUMBA", "1") != "0"

try:
    if not _WANT_NUMBA:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


# ---- numpy reference path ----

def _ss_numpy(ptr, rows, cols, vals, W, chunk=2048):
    ns = len(ptr) - 1
    owner = np.repeat(np.arange(ns), np.diff(ptr))
    E = len(rows)
    S = sps.csr_matrix((np.ones(E), (np.arange(E), owner)), shape=(E, ns))
    out = np.zeros((ns, ns))
    for lo in range(0, E, chunk):
        hi = min(lo + chunk, E)
        t = W[np.ix_(cols[lo:hi], rows)] * W[np.ix_(cols, rows[lo:hi])].T
        t *= vals[lo:hi, None]
        t *= vals[None, :]
        part = np.asarray((S.T @ t.real.T).T)  # (chunk, ns)
        out += np.asarray(S[lo:hi].T @ part)
    return out


def _sd_numpy(ptr, rows, cols, vals, Y):
    """M[i, k] = Re sum_{e in i} v_e Y[k][b_e, a_e] for dense products Y[k] = W F_k W."""
    ns = len(ptr) - 1
    owner = np.repeat(np.arange(ns), np.diff(ptr))
    g = Y[:, cols, rows] * vals[None, :]  # (k, E)
    out = np.zeros((ns, Y.shape[0]))
    for k in range(Y.shape[0]):
        out[:, k] = np.bincount(owner, weights=g[k].real, minlength=ns)
    return out


def _adj_numpy(ptr, rows, cols, vals, X):
    ns = len(ptr) - 1
    owner = np.repeat(np.arange(ns), np.diff(ptr))
    return np.bincount(owner, weights=(vals * X[cols, rows]).real, minlength=ns)


def _scatter_numpy(ptr, rows, cols, vals, dx, n):
    owner = np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))
    out = np.zeros((n, n), dtype=complex)
    np.add.at(out, (rows, cols), vals * dx[owner])
    return out


# ---- numba path ----

if HAVE_NUMBA:

    @njit(cache=True)
    def _ss_numba(ptr, rows, cols, vals, W):
        ns = len(ptr) - 1
        out = np.zeros((ns, ns))
        for i in range(ns):
            for j in range(i, ns):
                acc = 0.0
                for e in range(ptr[i], ptr[i + 1]):
                    a = rows[e]
                    b = cols[e]
                    ve = vals[e]
                    for f in range(ptr[j], ptr[j + 1]):
                        acc += (ve * vals[f] * W[b, rows[f]] * W[cols[f], a]).real
                out[i, j] = acc
                out[j, i] = acc
        return out

    @njit(cache=True)
    def _sd_numba(ptr, rows, cols, vals, Y):
        ns = len(ptr) - 1
        nk = Y.shape[0]
        out = np.zeros((ns, nk))
        for i in range(ns):
            for e in range(ptr[i], ptr[i + 1]):
                a = rows[e]
                b = cols[e]
                ve = vals[e]
                for k in range(nk):
                    out[i, k] += (ve * Y[k, b, a]).real
        return out

    @njit(cache=True)
    def _adj_numba(ptr, rows, cols, vals, X):
        ns = len(ptr) - 1
        out = np.zeros(ns)
        for i in range(ns):
            acc = 0.0
            for e in range(ptr[i], ptr[i + 1]):
                acc += (vals[e] * X[cols[e], rows[e]]).real
            out[i] = acc
        return out

    @njit(cache=True)
    def _scatter_numba(ptr, rows, cols, vals, dx, n):
        out = np.zeros((n, n), dtype=np.complex128)
        for i in range(len(ptr) - 1):
            xi = dx[i]
            if xi == 0.0:
                continue
            for e in range(ptr[i], ptr[i + 1]):
                out[rows[e], cols[e]] += vals[e] * xi
        return out


def schur_sparse_sparse(ptr, rows, cols, vals, W, use_numba=None):
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _ss_numba(ptr, rows, cols, vals, W)
    return _ss_numpy(ptr, rows, cols, vals, W)


def schur_sparse_dense(ptr, rows, cols, vals, Y, use_numba=None):
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _sd_numba(ptr, rows, cols, vals, np.ascontiguousarray(Y))
    return _sd_numpy(ptr, rows, cols, vals, Y)


def adjoint_sparse(ptr, rows, cols, vals, X, use_numba=None):
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _adj_numba(ptr, rows, cols, vals, X)
    return _adj_numpy(ptr, rows, cols, vals, X)


def scatter_sparse(ptr, rows, cols, vals, dx, n, use_numba=None):
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _scatter_numba(ptr, rows, cols, vals, np.ascontiguousarray(dx, dtype=np.float64), n)
    return _scatter_numpy(ptr, rows, cols, vals, dx, n)
