"""S_N symmetry: permutation operators, isotypic projectors, adapted bases and reduced QFI programs."""

from __future__ import annotations

import itertools
import time
from functools import lru_cache
from math import comb, factorial

import numpy as np
import scipy.sparse as sps

from .channels import choi_power
from .perfop import PerfModel, coeffs_from_herm, project_columns
from .sdp import SdpProblem, solve
from .stratsets import (StrategyKind, add_schur_block, comb_chain, lmi_templates, ptrace_map)

# characters indexed by cycle type (sorted descending), per irrep label
CHARACTERS = {
    1: {(1,): {(1,): 1}},
    2: {
        (2,): {(1, 1): 1, (2,): 1},
        (1, 1): {(1, 1): 1, (2,): -1},
    },
    3: {
        (3,): {(1, 1, 1): 1, (2, 1): 1, (3,): 1},
        (2, 1): {(1, 1, 1): 2, (2, 1): 0, (3,): -1},
        (1, 1, 1): {(1, 1, 1): 1, (2, 1): -1, (3,): 1},
    },
    4: {
        (4,): {(1, 1, 1, 1): 1, (2, 1, 1): 1, (2, 2): 1, (3, 1): 1, (4,): 1},
        (3, 1): {(1, 1, 1, 1): 3, (2, 1, 1): 1, (2, 2): -1, (3, 1): 0, (4,): -1},
        (2, 2): {(1, 1, 1, 1): 2, (2, 1, 1): 0, (2, 2): 2, (3, 1): -1, (4,): 0},
        (2, 1, 1): {(1, 1, 1, 1): 3, (2, 1, 1): -1, (2, 2): -1, (3, 1): 0, (4,): 1},
        (1, 1, 1, 1): {(1, 1, 1, 1): 1, (2, 1, 1): -1, (2, 2): 1, (3, 1): 1, (4,): -1},
    },
}


class SymmetryError(RuntimeError):
    """Adapted-basis construction or reduction failed."""


def cycle_type(perm):
    seen = [False] * len(perm)
    out = []
    for i in range(len(perm)):
        if seen[i]:
            continue
        n, j = 0, i
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            n += 1
        out.append(n)
    return tuple(sorted(out, reverse=True))


def site_permutation(order):
    """0-based sigma with sigma[order[j] - 1] = j: relabels a visiting order as the identity order."""
    sigma = [0] * len(order)
    for j, s in enumerate(order):
        sigma[s - 1] = j
    return tuple(sigma)


class PermRep:
    """G_pi on (C^w)^{⊗N}: (G_pi v)(y_1..y_N) = v(y_pi(1), .., y_pi(N))."""

    def __init__(self, N, w):
        if N > 4:
            raise SymmetryError("character tables are tabulated for N <= 4")
        self.N, self.w = N, w
        self.dim = w ** N
        self.perms = list(itertools.permutations(range(N)))
        base = np.arange(self.dim).reshape([w] * N)
        self._src = {}
        for p in self.perms:
            inv = np.argsort(p)
            self._src[p] = np.transpose(base, inv).reshape(-1)

    def matrix(self, perm):
        g = np.zeros((self.dim, self.dim))
        g[np.arange(self.dim), self._src[tuple(perm)]] = 1.0
        return g

    def apply(self, perm, v):
        return np.asarray(v)[self._src[tuple(perm)]]

    def conjugate(self, x, perm):
        s = self._src[tuple(perm)]
        return np.asarray(x)[np.ix_(s, s)]

    def average(self, x):
        return sum(self.conjugate(x, p) for p in self.perms) / len(self.perms)

    def irreps(self):
        return list(CHARACTERS[self.N].keys())

    def projector(self, mu):
        chars = CHARACTERS[self.N][mu]
        d = chars[(1,) * self.N]
        acc = np.zeros((self.dim, self.dim))
        for p in self.perms:
            acc += chars[cycle_type(p)] * self.matrix(p)
        return d / factorial(self.N) * acc


def irrep_dim(mu):
    return CHARACTERS[sum(mu)][mu][(1,) * sum(mu)]


def isotypic_projectors(rep: PermRep):
    return [(mu, rep.projector(mu)) for mu in rep.irreps()]


def isotypic_range(rep: PermRep, mu, tol=1e-9):
    w, v = np.linalg.eigh(rep.projector(mu))
    return v[:, w > 0.5]


class AdaptedBasis:
    """Aligned real orthonormal bases U[mu] of shape (dim, d_mu, m_mu).

    Any permutation-invariant X satisfies U[mu][:, k, :]^T X U[nu][:, l, :]
    = delta_{mu nu} delta_{kl} X^mu.
    """

    def __init__(self, rep: PermRep, seed=0, attempts=5):
        self.rep = rep
        self.U = {}
        self.d = {}
        self.m = {}
        rng = np.random.default_rng(seed)
        for mu in rep.irreps():
            B = isotypic_range(rep, mu)
            if B.shape[1] == 0:
                continue
            dmu = irrep_dim(mu)
            mmu = B.shape[1] // dmu
            for _ in range(attempts):
                u = self._aligned(rep, B, dmu, mmu, rng)
                if u is not None:
                    break
            else:
                raise SymmetryError(f"could not build an aligned basis for irrep {mu}")
            self.U[mu], self.d[mu], self.m[mu] = u, dmu, mmu
        err = self.leakage(rng)
        if err > 1e-8:
            raise SymmetryError(f"adapted basis leakage {err:.2e}")

    @staticmethod
    def _aligned(rep, B, dmu, mmu, rng):
        if dmu == 1:
            return B.reshape(B.shape[0], 1, mmu)
        coef = rng.standard_normal(len(rep.perms))
        A = sum(c * (rep.matrix(p) + rep.matrix(p).T) for c, p in zip(coef, rep.perms))
        w, v = np.linalg.eigh(B.T @ A @ B)
        groups = [v[:, k * mmu:(k + 1) * mmu] for k in range(dmu)]
        spread = max(np.ptp(w[k * mmu:(k + 1) * mmu]) for k in range(dmu))
        gaps = np.diff([w[k * mmu] for k in range(dmu)])
        scale = max(1.0, np.abs(w).max())
        if spread > 1e-8 * scale or (len(gaps) and gaps.min() < 1e-4 * scale):
            return None
        E = [B @ g for g in groups]
        X = sum(c * rep.matrix(p) for c, p in zip(rng.standard_normal(len(rep.perms)), rep.perms))
        out = np.zeros((B.shape[0], dmu, mmu))
        out[:, 0, :] = E[0]
        for k in range(1, dmu):
            Y = E[k] @ (E[k].T @ (X @ E[0]))
            gram = Y.T @ Y
            c2 = gram[0, 0]
            if c2 < 1e-6 or np.abs(gram - c2 * np.eye(mmu)).max() > 1e-9 * max(1.0, c2):
                return None
            out[:, k, :] = Y / np.sqrt(c2)
        return out

    def full(self):
        return np.concatenate([u.reshape(u.shape[0], -1) for u in self.U.values()], axis=1)

    def leakage(self, rng, samples=20):
        """Max deviation from the block form 1(d_mu) ⊗ X^mu over random invariant matrices."""
        worst = 0.0
        for _ in range(samples):
            g = rng.standard_normal((self.rep.dim, self.rep.dim)) + 1j * rng.standard_normal((self.rep.dim, self.rep.dim))
            X = self.rep.average(g + g.conj().T)
            expect = []
            for mu, u in self.U.items():
                xm = u[:, 0, :].T @ X @ u[:, 0, :]
                expect.append(np.kron(np.eye(self.d[mu]), xm))
            U = self.full()
            blockdiag = np.zeros((U.shape[1], U.shape[1]), complex)
            o = 0
            for e in expect:
                blockdiag[o:o + len(e), o:o + len(e)] = e
                o += len(e)
            worst = max(worst, np.abs(U.T @ X @ U - blockdiag).max() / max(1.0, np.abs(X).max()))
        return worst

    def multiplicity_sum(self):
        return sum(m * m for m in self.m.values())


@lru_cache(maxsize=16)
def adapted_basis(N, w, seed=0):
    return AdaptedBasis(PermRep(N, w), seed=seed)


def adapted_basis_for(rep: PermRep, seed=0):
    return adapted_basis(rep.N, rep.w, seed)


def invariant_herm_basis(rep: PermRep):
    """Real-coefficient basis of permutation-invariant Hermitian matrices (orbit sums)."""
    dim = rep.dim
    label = -np.ones((dim, dim), dtype=np.int64)
    orbits = []
    for x in range(dim):
        for y in range(dim):
            if label[x, y] >= 0:
                continue
            k = len(orbits)
            pts = set()
            for p in rep.perms:
                s = rep._src[p]
                # G (E_xy) G^T moves (x, y) to (inv s)(x), (inv s)(y)
                pts.add((int(np.flatnonzero(s == x)[0]), int(np.flatnonzero(s == y)[0])))
            for a, b in pts:
                label[a, b] = k
            orbits.append(sorted(pts))
    out = []
    done = set()
    for k, pts in enumerate(orbits):
        if k in done:
            continue
        a, b = pts[0]
        kt = label[b, a]
        E = np.zeros((dim, dim), complex)
        for x, y in pts:
            E[x, y] = 1.0
        if kt == k:
            out.append(E)
            done.add(k)
        else:
            Et = E.T.copy()
            out.append(E + Et)
            out.append(1j * (E - Et))
            done.update((k, kt))
    return np.array(out)


def variable_counts(N, d=2, s=2):
    """Real scalar counts for the general indefinite-order program: (original, reduced)."""
    w = d * d
    original = w ** N * w ** N + (s ** N) ** 2 + 1
    reduced = comb(N + w * w - 1, w * w - 1) + comb(N + s * s - 1, s * s - 1) + 1
    return original, reduced


def _n_affine(model: PerfModel, hbasis, out_wires=(), links=()):
    c0 = model.dN_vec.conj()
    n0, rest = project_columns(c0, model.dims, out_wires, links)
    nb = np.stack([project_columns(1j * model.N_vec.conj() @ H.conj(), model.dims, out_wires, links)[0] for H in hbasis])
    return n0, nb


def _ico_constraint_rows(kind, ub, nvars_per_mu, rng):
    """Rows over the reduced Q variables spanning the last-site no-signaling equalities."""
    N, dims = kind.N, kind.dims
    dsub = dims[:-1]
    side_sub = int(np.prod(dsub))
    din = dims[-2]
    total = sum(nvars_per_mu.values())
    n_tests = total
    rows = np.zeros((n_tests, total))
    for t in range(n_tests):
        g = rng.standard_normal((side_sub, side_sub)) + 1j * rng.standard_normal((side_sub, side_sub))
        T = g + g.conj().T
        # C(T) = T ⊗ 1_2N - (1/d) Tr_{2N-1}(T) ⊗ 1_{2N-1, 2N}
        C = np.kron(T, np.eye(dims[-1]))
        trT = (ptrace_map(dsub, [2 * N - 2]) @ T.reshape(-1)).reshape(side_sub // din, -1)
        C = C - np.kron(trT, np.eye(din * dims[-1])) / din
        o = 0
        for mu, u in ub.U.items():
            dmu, mmu = ub.d[mu], ub.m[mu]
            cm = sum(u[:, k, :].T @ C @ u[:, k, :] for k in range(dmu))
            # Tr(Q^mu cm) for Q^mu = herm basis: diag, then (re, im) pairs
            row = np.empty(mmu * mmu)
            row[:mmu] = np.diag(cm).real
            iu = np.triu_indices(mmu, 1)
            # E_jk + E_kj -> cm[k, j] + cm[j, k]; i(E_jk - E_kj) -> i cm[k, j] - i cm[j, k]
            row[mmu::2] = (cm[iu[1], iu[0]] + cm[iu]).real
            row[mmu + 1::2] = (1j * cm[iu[1], iu[0]] - 1j * cm[iu]).real
            rows[t, o:o + mmu * mmu] = row
            o += mmu * mmu
    u_, s, vt = np.linalg.svd(rows, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if len(s) else 0
    return vt[:rank]


def build_reduced_dual(kind: StrategyKind, model: PerfModel, seed=0):
    """Symmetry-reduced dual program; returns (prob, lam index, h indices, h basis, extras)."""
    if kind.name == "seq":
        raise SymmetryError("the sequential family has no permutation symmetry to exploit")
    N = kind.N
    hrep = PermRep(N, model.fam.s)
    hbasis = invariant_herm_basis(hrep)
    prob = SdpProblem()
    lam = int(prob.add_vars(1, "lam")[0])
    hidx = prob.add_vars(len(hbasis), "h")
    extras = {}
    if kind.name in ("swi", "sup"):
        temps = lmi_templates(kind, model.r)
        t = temps[0]  # identity order
        qvars = {}
        if kind.name == "sup":
            dvars, eqs = comb_chain(kind, t.branch, "b0_")
            qvars = {v.name: prob.add_herm_var(v.side(kind), v.name) for v in dvars}
            for e in eqs:
                prob.add_herm_equality([(qvars[nm], m) for nm, m in e.terms], e.rhs)
        n0, nb = _n_affine(model, hbasis, t.out_wires, t.links)
        add_schur_block(prob, t, n0, nb, lam, hidx, qvars)
        extras["qvars"] = qvars
    elif kind.name == "par":
        evens = list(range(2, 2 * N + 1, 2))
        n0, nb = _n_affine(model, hbasis, evens)
        ub = adapted_basis(N, kind.d_in, seed)
        top = n0.shape[1]
        for mu, u in ub.U.items():
            u1 = u[:, 0, :]
            side = top + ub.m[mu]
            const = np.zeros((side, side), complex)
            n0m = u1.T @ n0
            const[top:, :top] = n0m
            const[:top, top:] = n0m.conj().T
            const[top:, top:] = np.eye(ub.m[mu])
            blk = prob.add_block(side, const)
            prob.add_entries(blk, np.full(top, lam), np.arange(top), np.arange(top), 0.25)
            for hb, m in zip(hidx, nb):
                mm = u1.T @ m
                if np.abs(mm).max(initial=0.0) > 0:
                    prob.add_dense(blk, hb, mm, offset=(top, 0))
    elif kind.name == "ico":
        ub = adapted_basis(N, kind.d_in * kind.d_out, seed)
        hb_iso = {mu: isotypic_range(hrep, mu) for mu in ub.U}
        c0 = model.dN_vec.conj()
        cb = [1j * model.N_vec.conj() @ H.conj() for H in hbasis]
        qv = {}
        for mu in ub.U:
            qv[mu] = prob.add_herm_var(ub.m[mu], f"Q{''.join(map(str, mu))}")
        for mu, u in ub.U.items():
            u1 = u[:, 0, :]
            up = hb_iso[mu]
            top = up.shape[1]
            mmu = ub.m[mu]
            side = top + mmu
            const = np.zeros((side, side), complex)
            blk_n0 = u1.T @ c0 @ up
            const[top:, :top] = blk_n0
            const[:top, top:] = blk_n0.conj().T
            blk = prob.add_block(side, const)
            if top:
                prob.add_entries(blk, np.full(top, lam), np.arange(top), np.arange(top), 0.25)
                for hb, c in zip(hidx, cb):
                    mm = u1.T @ c @ up
                    if np.abs(mm).max(initial=0.0) > 1e-15:
                        prob.add_dense(blk, hb, mm, offset=(top, 0))
            prob.add_mapped(blk, qv[mu], sps.identity(mmu * mmu, format="csr"), side_sub=mmu, offset=top)
        counts = {mu: ub.m[mu] ** 2 for mu in ub.U}
        rows = _ico_constraint_rows(kind, ub, counts, np.random.default_rng(seed + 1))
        start = min(int(hv.idx[0]) for hv in qv.values())
        A = np.zeros((rows.shape[0] + 1, prob.n))
        A[:-1, start:start + rows.shape[1]] = rows
        for mu, hv in qv.items():
            # Tr Q = sum_mu d_mu Tr Q^mu
            A[-1, hv.idx[:ub.m[mu]]] = ub.d[mu]
        b = np.zeros(A.shape[0])
        b[-1] = float(np.prod(kind.dims[0::2]))
        prob.add_equalities(A, b)
        extras["qvars"] = qv
        extras["basis"] = ub
    else:
        raise SymmetryError(f"unsupported kind {kind.name!r}")
    prob.set_objective([lam], [1.0])
    return prob, lam, hidx, hbasis, extras


def reduced_qfi(req):
    """Symmetry-reduced counterpart of qfiengine.qfi for par, swi, sup and ico."""
    from .qfiengine import QfiResult, default_tol

    t0 = time.perf_counter()
    kind = StrategyKind(req.kind, req.N, req.channel.d_in, req.channel.d_out)
    model = PerfModel(choi_power(req.channel, req.N, req.phi))
    prob, lam, hidx, hbasis, extras = build_reduced_dual(kind, model)
    sol = solve(prob, tol=req.tol or default_tol())
    h = np.tensordot(sol.x[hidx], hbasis, axes=1)
    duals = {str(k): hv.value(sol.x) for k, hv in extras.get("qvars", {}).items()}
    return QfiResult(
        J=float(sol.x[lam]),
        h_opt=coeffs_from_herm(h),
        duals=duals,
        gap=sol.gap,
        wall=time.perf_counter() - t0,
        status=sol.status,
        flagged=sol.flagged,
        kind=req.kind,
        N=req.N,
        n_vars=prob.n,
        model=model,
    )


def ntilde_intertwines(model: PerfModel, h, perm):
    """Max deviation of G_pi N = N G'_pi and G_pi Ñ = Ñ G'_pi for one permutation."""
    fam = model.fam
    g = PermRep(model.N, fam.d_in * fam.d_out)
    gp = PermRep(model.N, fam.s)
    G, Gp = g.matrix(perm), gp.matrix(perm)
    nt = model.dN_tilde(h)
    return max(np.abs(G @ model.N_vec - model.N_vec @ Gp).max(),
               np.abs(G @ model.dN_vec - model.dN_vec @ Gp).max(),
               np.abs(G @ nt - model.dN_tilde(Gp @ h @ Gp.T) @ Gp).max())
