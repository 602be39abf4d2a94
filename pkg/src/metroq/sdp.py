"""Small dense SDPs with complex Hermitian LMI blocks.

Normal form (for sense "min"):

    minimize    c^T x
    subject to  F_b(x) = F_b0 + sum_i x_i F_bi  ⪰ 0   for every block b
                E x = f

with real scalar variables x. The solver is a primal-dual path-following
interior-point method with Nesterov-Todd scaling and Mehrotra
predictor-corrector steps, started from an infeasible point. Hermitian
blocks are handled natively; `embed_hermitian` gives the equivalent real
symmetric form for cross-checks.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from . import _kernels

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
NUMERICAL_LIMIT = "NumericalLimit"

FALLBACK_TOL = 1e-7


def embed_hermitian(h):
    """Real symmetric [[Re H, -Im H], [Im H, Re H]]; PSD iff H is."""
    h = np.asarray(h, dtype=complex)
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def herm_var_basis(side):
    """Sparse map from n*n real coefficients to a row-major vec of a Hermitian matrix.

    Coefficient order: diagonal entries first, then for each j<k the pair
    (E_jk + E_kj, i(E_jk - E_kj)).
    """
    rows, cols, vals = [], [], []
    for j in range(side):
        rows.append(j * side + j)
        cols.append(j)
        vals.append(1.0)
    col = side
    for j in range(side):
        for k in range(j + 1, side):
            rows += [j * side + k, k * side + j, j * side + k, k * side + j]
            cols += [col, col, col + 1, col + 1]
            vals += [1.0, 1.0, 1j, -1j]
            col += 2
    return sps.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(side * side, side * side))


def herm_coeffs(mat):
    """Inverse of herm_var_basis for a Hermitian matrix."""
    mat = np.asarray(mat, dtype=complex)
    side = mat.shape[0]
    out = np.empty(side * side)
    out[:side] = np.diag(mat).real
    iu = np.triu_indices(side, 1)
    vals = mat[iu]
    out[side::2] = vals.real
    out[side + 1::2] = vals.imag
    return out


@dataclass
class Block:
    side: int
    const: np.ndarray
    var: list = field(default_factory=list)
    row: list = field(default_factory=list)
    col: list = field(default_factory=list)
    val: list = field(default_factory=list)


class SdpProblem:
    """Builder for the normal form above."""

    def __init__(self):
        self.n = 0
        self.groups = {}
        self.c = np.zeros(0)
        self.sense = "min"
        self.blocks: list[Block] = []
        self._eq_rows = []
        self._eq_rhs = []

    # variables
    def add_vars(self, count, name=None):
        idx = np.arange(self.n, self.n + count)
        self.n += count
        self.c = np.concatenate([self.c, np.zeros(count)])
        if name is not None:
            if name in self.groups:
                raise ValueError(f"variable group {name!r} already exists")
            self.groups[name] = idx
        return idx

    def add_herm_var(self, side, name=None):
        return HermVar(side, self.add_vars(side * side, name))

    def set_objective(self, idx, coef, sense="min"):
        self.c = np.zeros(self.n)
        np.add.at(self.c, np.atleast_1d(idx), np.atleast_1d(coef))
        self.sense = sense

    # blocks
    def add_block(self, side, const=None):
        const = np.zeros((side, side), complex) if const is None else np.array(const, dtype=complex)
        if const.shape != (side, side):
            raise ValueError("constant term has the wrong shape")
        self.blocks.append(Block(side, const))
        return len(self.blocks) - 1

    def add_entries(self, blk, var, row, col, val):
        """Add coefficient entries; the caller supplies both triangles."""
        b = self.blocks[blk]
        var, row, col = (np.atleast_1d(np.asarray(a, dtype=np.int64)) for a in (var, row, col))
        val = np.broadcast_to(np.asarray(val, dtype=complex), var.shape)
        b.var.append(var)
        b.row.append(row)
        b.col.append(col)
        b.val.append(np.array(val))

    def add_dense(self, blk, var, mat, offset=(0, 0)):
        """Add x_var * mat with mat placed at (offset, offset) and mirrored if off-diagonal."""
        mat = np.asarray(mat, dtype=complex)
        r0, c0 = offset
        rr, cc = np.nonzero(np.abs(mat) > 0)
        self.add_entries(blk, np.full(len(rr), var), rr + r0, cc + c0, mat[rr, cc])
        if (r0, c0) != (c0, r0) or mat.shape[0] != mat.shape[1]:
            self.add_entries(blk, np.full(len(rr), var), cc + c0, rr + r0, mat[rr, cc].conj())

    def add_mapped(self, blk, hv: "HermVar", emb, side_sub=None, offset=0):
        """Add the Hermitian variable hv through a sparse linear map `emb`.

        `emb` maps the row-major vec of hv's matrix to the row-major vec of a
        square sub-block of side `side_sub` placed at (offset, offset).
        """
        m = sps.csc_matrix(emb @ hv.basis)
        m.eliminate_zeros()
        m = m.tocoo()
        side_sub = side_sub or int(round(np.sqrt(m.shape[0])))
        rr, cc = np.divmod(m.row, side_sub)
        self.add_entries(blk, hv.idx[m.col], rr + offset, cc + offset, m.data)

    # equalities
    def add_equalities(self, A, b):
        A = sps.csr_matrix(A, dtype=float)
        if A.shape[1] != self.n:
            A = sps.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], self.n))
        self._eq_rows.append(A)
        self._eq_rhs.append(np.atleast_1d(np.asarray(b, dtype=float)))

    def add_herm_equality(self, terms, rhs):
        """Impose sum_k L_k(vec Q_k) = vec(rhs) as real equations.

        `terms` is a list of (HermVar, sparse map to vec of a k x k matrix).
        """
        rhs = np.asarray(rhs, dtype=complex)
        k = rhs.shape[0]
        T = sps.csr_matrix((k * k, self.n), dtype=complex)
        for hv, lin in terms:
            m = sps.coo_matrix(lin @ hv.basis)
            T = T + sps.csr_matrix((m.data, (m.row, hv.idx[m.col])), shape=(k * k, self.n))
        iu = np.triu_indices(k)
        flat = iu[0] * k + iu[1]
        off = iu[0] != iu[1]
        Tr = T[flat]
        A = sps.vstack([Tr.real, Tr[np.flatnonzero(off)].imag])
        b = np.concatenate([rhs.reshape(-1)[flat].real, rhs.reshape(-1)[flat[off]].imag])
        self.add_equalities(A, b)

    @property
    def equalities(self):
        if not self._eq_rows:
            return sps.csr_matrix((0, self.n)), np.zeros(0)
        rows = [sps.csr_matrix((a.data, a.indices, a.indptr), shape=(a.shape[0], self.n)) for a in self._eq_rows]
        return sps.vstack(rows).tocsr(), np.concatenate(self._eq_rhs)

    # inspection
    def block_value(self, blk, x):
        b = self.blocks[blk]
        out = b.const.copy()
        if b.var:
            v, r, c, val = (np.concatenate(a) for a in (b.var, b.row, b.col, b.val))
            np.add.at(out, (r, c), val * x[v])
        return out

    def to_json(self):
        E, f = self.equalities
        E = E.tocoo()
        blocks = []
        for b in self.blocks:
            entries = []
            if b.var:
                v, r, c, val = (np.concatenate(a) for a in (b.var, b.row, b.col, b.val))
                entries = [[int(a), int(bb), int(cc), float(z.real), float(z.imag)] for a, bb, cc, z in zip(v, r, c, val)]
            blocks.append({
                "side": b.side,
                "const": np.stack([b.const.real, b.const.imag], axis=-1).tolist(),
                "entries": entries,
            })
        return {
            "n": self.n,
            "sense": self.sense,
            "c": self.c.tolist(),
            "groups": {k: v.tolist() for k, v in self.groups.items()},
            "blocks": blocks,
            "equalities": [[int(i), int(j), float(v)] for i, j, v in zip(E.row, E.col, E.data)],
            "rhs": f.tolist(),
        }

    @classmethod
    def from_json(cls, d):
        if isinstance(d, str):
            d = json.loads(d)
        p = cls()
        p.add_vars(int(d["n"]))
        p.c = np.array(d["c"], dtype=float)
        p.sense = d.get("sense", "min")
        p.groups = {k: np.array(v) for k, v in d.get("groups", {}).items()}
        for b in d["blocks"]:
            const = np.array(b["const"], dtype=float)
            k = p.add_block(int(b["side"]), const[..., 0] + 1j * const[..., 1])
            if b["entries"]:
                e = np.array(b["entries"], dtype=float)
                p.add_entries(k, e[:, 0].astype(int), e[:, 1].astype(int), e[:, 2].astype(int), e[:, 3] + 1j * e[:, 4])
        rhs = np.array(d["rhs"], dtype=float)
        if len(rhs):
            t = np.array(d["equalities"], dtype=float).reshape(-1, 3)
            A = sps.csr_matrix((t[:, 2], (t[:, 0].astype(int), t[:, 1].astype(int))), shape=(len(rhs), p.n))
            p.add_equalities(A, rhs)
        return p


class HermVar:
    """A Hermitian matrix variable spanned by side*side consecutive real scalars."""

    def __init__(self, side, idx):
        self.side = side
        self.idx = np.asarray(idx)
        self.basis = herm_var_basis(side)

    def value(self, x):
        return (self.basis @ x[self.idx]).reshape(self.side, self.side)


@dataclass
class SdpSolution:
    status: str
    objective: float
    x: np.ndarray
    X: list
    w: np.ndarray
    gap: float
    pinf: float
    dinf: float
    iterations: int
    flagged: bool = False
    wall: float = 0.0
    dual_objective: float = float("nan")

    @property
    def ok(self):
        return self.status == OPTIMAL


class _BlockData:
    """Per-block coefficient storage split into sparse and dense variables."""

    def __init__(self, blk: Block, n):
        self.side = blk.side
        self.const = 0.5 * (blk.const + blk.const.conj().T)
        if blk.var:
            v, r, c, val = (np.concatenate(a) for a in (blk.var, blk.row, blk.col, blk.val))
        else:
            v = r = c = np.zeros(0, np.int64)
            val = np.zeros(0, complex)
        # merge duplicate (var, row, col) entries
        if len(v):
            key = (v * self.side + r) * self.side + c
            uk, inv = np.unique(key, return_inverse=True)
            val = np.bincount(inv, weights=val.real, minlength=len(uk)) + 1j * np.bincount(inv, weights=val.imag, minlength=len(uk))
            v, rc = np.divmod(uk, self.side * self.side)
            r, c = np.divmod(rc, self.side)
            nz = np.abs(val) > 0
            v, r, c, val = v[nz], r[nz], c[nz], val[nz]
        vars_, counts = np.unique(v, return_counts=True)
        dense_mask = counts > self.side
        self.dense_vars = vars_[dense_mask]
        self.sparse_vars = vars_[~dense_mask]
        sel = np.isin(v, self.sparse_vars)
        order = np.argsort(v[sel], kind="stable")
        sv = v[sel][order]
        self.rows = np.ascontiguousarray(r[sel][order])
        self.cols = np.ascontiguousarray(c[sel][order])
        self.vals = np.ascontiguousarray(val[sel][order])
        self.ptr = np.searchsorted(sv, np.append(self.sparse_vars, n)).astype(np.int64) if len(self.sparse_vars) else np.zeros(1, np.int64)
        self.ptr[-1] = len(sv)
        self.dense = np.zeros((len(self.dense_vars), self.side, self.side), complex)
        dsel = ~sel
        pos = np.searchsorted(self.dense_vars, v[dsel])
        np.add.at(self.dense, (pos, r[dsel], c[dsel]), val[dsel])
        for F in self.dense:
            if np.abs(F - F.conj().T).max(initial=0.0) > 1e-9 * max(1.0, np.abs(F).max(initial=0.0)):
                raise ValueError("block coefficient is not Hermitian")
        self.check_sparse_hermitian()

    def check_sparse_hermitian(self):
        if not len(self.rows):
            return
        owner = np.repeat(self.sparse_vars, np.diff(self.ptr))
        key = (owner * self.side + self.rows) * self.side + self.cols
        tkey = (owner * self.side + self.cols) * self.side + self.rows
        order = np.argsort(key)
        pos = np.searchsorted(key[order], tkey)
        pos = np.minimum(pos, len(key) - 1)
        found = key[order][pos] == tkey
        if not found.all() or np.abs(self.vals[order][pos] - self.vals.conj()).max() > 1e-9 * max(1.0, np.abs(self.vals).max()):
            raise ValueError("block coefficient is not Hermitian")

    def apply(self, x):
        out = _kernels.scatter_sparse(self.ptr, self.rows, self.cols, self.vals, x[self.sparse_vars], self.side)
        if len(self.dense_vars):
            out = out + np.tensordot(x[self.dense_vars], self.dense, axes=1)
        return out

    def adjoint(self, X, n):
        out = np.zeros(n)
        if len(self.sparse_vars):
            out[self.sparse_vars] = _kernels.adjoint_sparse(self.ptr, self.rows, self.cols, self.vals, X)
        if len(self.dense_vars):
            out[self.dense_vars] += np.einsum("kab,ba->k", self.dense, X).real
        return out

    def norms(self, n):
        out = np.zeros(n)
        if len(self.sparse_vars):
            owner = np.repeat(np.arange(len(self.sparse_vars)), np.diff(self.ptr))
            out[self.sparse_vars] = np.bincount(owner, weights=np.abs(self.vals) ** 2, minlength=len(self.sparse_vars))
        if len(self.dense_vars):
            out[self.dense_vars] += np.sum(np.abs(self.dense) ** 2, axis=(1, 2))
        return out

    def schur(self, W, M):
        sv, dv = self.sparse_vars, self.dense_vars
        if len(sv):
            M[np.ix_(sv, sv)] += _kernels.schur_sparse_sparse(self.ptr, self.rows, self.cols, self.vals, W)
        if len(dv):
            Y = np.einsum("ab,kbc,cd->kad", W, self.dense, W, optimize=True)
            if len(sv):
                sd = _kernels.schur_sparse_dense(self.ptr, self.rows, self.cols, self.vals, Y)
                M[np.ix_(sv, dv)] += sd
                M[np.ix_(dv, sv)] += sd.T
            k = len(dv)
            dd = (self.dense.reshape(k, -1) @ np.transpose(Y, (0, 2, 1)).reshape(k, -1).T).real
            M[np.ix_(dv, dv)] += 0.5 * (dd + dd.T)


def _equality_space(E, f, tol=1e-10):
    """Particular solution, orthonormal null-space basis and row-space factors of E x = f.

    Returns None when the equalities are inconsistent.
    """
    n = E.shape[1]
    if E.shape[0] == 0:
        return np.zeros(n), None, None
    Ed = E.toarray()
    scale = np.linalg.norm(Ed, axis=1)
    nz = scale > 0
    if np.any(np.abs(f[~nz]) > 1e-9 * max(1.0, np.abs(f).max())):
        return None
    Ed, fd = Ed[nz] / scale[nz, None], f[nz] / scale[nz]
    Q, R, piv = sla.qr(Ed.T, pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(d[0], 1.0))) if len(d) else 0
    Qr, Rr = Q[:, :rank], R[:rank, :rank]
    # E[piv[:rank]] = (Qr Rr)^T, so x0 = Qr Rr^{-T} f[piv[:rank]]
    x0 = Qr @ sla.solve_triangular(Rr, fd[piv[:rank]], trans="T")
    if np.abs(Ed @ x0 - fd).max(initial=0.0) > 1e-7 * max(1.0, np.abs(fd).max()):
        return None
    return x0, Q[:, rank:], (Qr, Rr, piv[:rank], Ed, fd)


def _chol(A):
    return np.linalg.cholesky(0.5 * (A + A.conj().T))


def _max_step(lam, dT):
    """Largest alpha with diag(lam) + alpha dT ⪰ 0."""
    s = 1.0 / np.sqrt(lam)
    m = (s[:, None] * dT) * s[None, :]
    mn = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    return np.inf if mn >= 0 else -1.0 / mn


def _solve_point(prob, blocks, x0, sign, tol, t0):
    """The equalities pin x completely: report x0 if its blocks are PSD."""
    Fx = [b.const + b.apply(x0) for b in blocks]
    worst = 0.0
    for F in Fx:
        w = np.linalg.eigvalsh(0.5 * (F + F.conj().T))
        worst = max(worst, -w[0] / max(1.0, np.abs(w).max()))
    status = OPTIMAL if worst <= tol else INFEASIBLE
    obj = sign * (sign * prob.c) @ x0
    return SdpSolution(status, obj, x0, [np.zeros_like(F) for F in Fx], np.zeros(0), 0.0, worst, 0.0, 0,
                       wall=time.perf_counter() - t0, dual_objective=obj)


def solve(prob: SdpProblem, tol=1e-9, max_iter=200, verbose=False, fallback_tol=FALLBACK_TOL):
    """Solve `prob`; see the module docstring for the normal form.

    Equalities are eliminated with an orthonormal null-space basis so every
    iterate satisfies them to rounding error.
    """
    t0 = time.perf_counter()
    n = prob.n
    sign = 1.0 if prob.sense == "min" else -1.0
    c = sign * prob.c
    E, f = prob.equalities
    space = _equality_space(E, f)
    if space is None:
        return SdpSolution(INFEASIBLE, np.nan, np.zeros(n), [], np.zeros(0), np.inf, np.inf, np.inf, 0,
                           wall=time.perf_counter() - t0)
    x0, Z, rowsp = space
    blocks = [_BlockData(b, n) for b in prob.blocks]
    if Z is not None and Z.shape[1] == 0:
        return _solve_point(prob, blocks, x0, sign, tol, t0)

    def proj(v):
        return v if Z is None else Z.T @ v

    def lift(v):
        return v if Z is None else Z @ v

    fn = np.zeros(n)
    for b in blocks:
        fn += b.norms(n)
    fn = np.sqrt(fn)
    nmax = max(b.side for b in blocks)
    f0 = max(np.linalg.norm(b.const + b.apply(x0)) for b in blocks)
    eta = max(10.0, np.sqrt(nmax), f0, fn.max(initial=0.0))
    xi = max(10.0, np.max((1.0 + np.abs(c)) / (1.0 + fn), initial=1.0) * np.sqrt(nmax))
    x = x0.copy()
    X = [xi * np.eye(b.side, dtype=complex) for b in blocks]
    S = [eta * np.eye(b.side, dtype=complex) for b in blocks]
    nu = sum(b.side for b in blocks)
    cnorm = 1.0 + np.linalg.norm(c)
    f0norm = 1.0 + f0

    def multipliers(rd):
        if rowsp is None:
            return np.zeros(0)
        Qr, Rr, _, _, _ = rowsp
        return sla.solve_triangular(Rr, Qr.T @ rd)

    best = None
    status = NUMERICAL_LIMIT
    it = 0
    for it in range(1, max_iter + 1):
        Fx = [b.const + b.apply(x) for b in blocks]
        rp = [F - Sb for F, Sb in zip(Fx, S)]
        ax = np.zeros(n)
        for b, Xb in zip(blocks, X):
            ax += b.adjoint(Xb, n)
        rd_full = c - ax
        rd = proj(rd_full)
        wv = multipliers(rd_full)
        pobj = c @ x
        dobj = -sum(np.vdot(b.const, Xb).real for b, Xb in zip(blocks, X))
        if rowsp is not None:
            dobj += rowsp[4][rowsp[2]] @ wv
        comp = sum(np.vdot(Xb, Sb).real for Xb, Sb in zip(X, S))
        mu = comp / nu
        pinf = max(np.linalg.norm(r) for r in rp) / f0norm
        dinf = np.linalg.norm(rd) / cnorm
        gap = max(abs(pobj - dobj), comp) / (1.0 + abs(pobj) + abs(dobj))
        merit = max(gap, pinf, dinf)
        if not np.isfinite(merit):
            break
        if verbose:
            print(f"{it:3d} pobj={sign * pobj:+.10e} dobj={sign * dobj:+.10e} gap={gap:.2e} pinf={pinf:.2e} dinf={dinf:.2e}")
        if best is None or merit < best[0]:
            best = (merit, x.copy(), [a.copy() for a in X], wv.copy(), gap, pinf, dinf, pobj, dobj)
        if merit <= tol:
            status = OPTIMAL
            break
        # divergence of the iterates signals infeasibility or unboundedness
        Xn = sum(np.linalg.norm(a) for a in X)
        if Xn > 1e10 * xi and dobj > 0 and np.linalg.norm(rd) / Xn < 1e-8:
            status = INFEASIBLE
            break
        xn = np.linalg.norm(x - x0)
        if xn > 1e10 and pobj < 0 and pinf * f0norm / xn < 1e-8:
            status = UNBOUNDED
            break

        # Nesterov-Todd scaling: W S W = X, G^H S G = G^{-1} X G^{-H} = diag(lam)
        try:
            G, Ginv, W, lam = [], [], [], []
            for Xb, Sb in zip(X, S):
                Lx = _chol(Xb)
                Ls = _chol(Sb)
                U, d, Vh = np.linalg.svd(Ls.conj().T @ Lx)
                G.append((Lx @ Vh.conj().T) / np.sqrt(d)[None, :])
                Ginv.append((U.conj().T @ Ls.conj().T) / np.sqrt(d)[:, None])
                W.append(G[-1] @ G[-1].conj().T)
                lam.append(d)
        except np.linalg.LinAlgError:
            break

        M = np.zeros((n, n))
        for b, Wb in zip(blocks, W):
            b.schur(Wb, M)
        if Z is not None:
            M = Z.T @ M @ Z
        M = 0.5 * (M + M.T)
        dmax = np.max(np.diag(M), initial=0.0)
        if not np.isfinite(dmax) or dmax <= 0:
            break
        try:
            L = sla.cholesky(M + 1e-14 * dmax * np.eye(M.shape[0]), lower=True)
        except sla.LinAlgError:
            try:
                L = sla.cholesky(M + 1e-10 * dmax * np.eye(M.shape[0]), lower=True)
            except sla.LinAlgError:
                break

        def direction(Rs):
            Rc = [g @ (2.0 * R / (l[:, None] + l[None, :])) @ g.conj().T for g, R, l in zip(G, Rs, lam)]
            rhs = -rd_full.copy()
            for b, Rcb, Wb, rpb in zip(blocks, Rc, W, rp):
                rhs += b.adjoint(Rcb - Wb @ rpb @ Wb, n)
            rhs = proj(rhs)
            dy = sla.cho_solve((L, True), rhs)
            for _ in range(3):
                dy = dy + sla.cho_solve((L, True), rhs - M @ dy)
            dx = lift(dy)
            dS = [b.apply(dx) + rpb for b, rpb in zip(blocks, rp)]
            dX = [Rcb - Wb @ dSb @ Wb for Rcb, Wb, dSb in zip(Rc, W, dS)]
            dX = [0.5 * (a + a.conj().T) for a in dX]
            dS = [0.5 * (a + a.conj().T) for a in dS]
            return dx, dX, dS

        def steps(dX, dS):
            ap, ad = np.inf, np.inf
            dXt, dSt = [], []
            for g, gi, l, dXb, dSb in zip(G, Ginv, lam, dX, dS):
                xt = gi @ dXb @ gi.conj().T
                st = g.conj().T @ dSb @ g
                dXt.append(xt)
                dSt.append(st)
                ad = min(ad, _max_step(l, xt))
                ap = min(ap, _max_step(l, st))
            return ap, ad, dXt, dSt

        # predictor
        dx, dX, dS = direction([-np.diag(l ** 2) for l in lam])
        ap, ad, dXt, dSt = steps(dX, dS)
        ap, ad = min(1.0, ap), min(1.0, ad)
        comp_aff = sum(np.vdot(Xb + ad * a, Sb + ap * bb).real for Xb, Sb, a, bb in zip(X, S, dX, dS))
        sigma = min(1.0, max(0.0, comp_aff / comp)) ** 3 if comp > 0 else 0.0
        # corrector
        Rs = []
        for l, xt, st in zip(lam, dXt, dSt):
            cross = xt @ st
            Rs.append(sigma * mu * np.eye(len(l)) - np.diag(l ** 2) - 0.5 * (cross + cross.conj().T))
        dx, dX, dS = direction(Rs)
        ap, ad, _, _ = steps(dX, dS)
        gamma = 0.98 if it > 2 else 0.9
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if ap < 1e-12 and ad < 1e-12:
            break
        x = x + ap * dx
        S = [Sb + ap * a for Sb, a in zip(S, dS)]
        X = [Xb + ad * a for Xb, a in zip(X, dX)]

    if best is None:
        return SdpSolution(NUMERICAL_LIMIT, np.nan, x, X, np.zeros(0), np.inf, np.inf, np.inf, it,
                           wall=time.perf_counter() - t0)
    merit, xb, Xb, wb, gap, pinf, dinf, pobj, dobj = best
    flagged = False
    if status == NUMERICAL_LIMIT and merit <= fallback_tol:
        status = OPTIMAL
        flagged = True
    if status in (INFEASIBLE, UNBOUNDED):
        xb, Xb = x, X
    return SdpSolution(
        status=status,
        objective=sign * pobj,
        x=xb,
        X=Xb,
        w=wb,
        gap=gap,
        pinf=pinf,
        dinf=dinf,
        iterations=it,
        flagged=flagged,
        wall=time.perf_counter() - t0,
        dual_objective=sign * dobj,
    )
