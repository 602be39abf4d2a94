"""Optimal strategy recovery at a fixed gauge h, certification, and comb-to-isometry realization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .channels import ChoiFamily, ParamChannel
from .perfop import PerfModel, herm_from_coeffs
from .qfiengine import QfiRequest, QfiResult, default_tol, qfi, state_qfi
from .sdp import solve
from .stratsets import (StrategyKind, build_dual, build_primal, embed_map, membership_residual,
                        ptrace_map, ptilde_value)
from .wirealg import LabeledOperator, RANK_CUTOFF, Wire, numerical_rank, purify


# The recovered gauge inherits the dual solver's error roughly as sqrt(gap), so
# certification asks the dual for more than the QFI value alone needs.
CERT_TOL = 1e-11


class RecoveryError(RuntimeError):
    """The saddle-point program could not be solved at the requested accuracy."""


@dataclass
class OptimalStrategy:
    kind: StrategyKind
    ptilde: np.ndarray
    purification: np.ndarray  # shape (prod dims, future dim)
    J: float  # objective Tr[P~ Omega(h)] reached by the primal program
    h: np.ndarray
    residuals: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)  # per-branch operators (variable name -> matrix)
    status: str = ""

    @property
    def future_dim(self):
        return self.purification.shape[1]


@dataclass
class IsometrySequence:
    """V^(1)..V^(N) as matrices mapping (wire 2k-2, A_{k-1}) to (wire 2k-1, A_k)."""

    isometries: list
    ancilla_dims: list
    combs: list

    def isometry_errors(self):
        return [float(np.abs(v.conj().T @ v - np.eye(v.shape[1])).max()) for v in self.isometries]


def saddle_functionals(model: PerfModel, h):
    """Rows g_b with Re Tr{P~ [-i N H_b Ñ^dagger]^T} = Re(g_b . vec P~)."""
    nt = model.dN_tilde(h)
    rows = []
    for H in model.basis:
        G = (-1j * model.N_vec @ H @ nt.conj().T).T
        rows.append(G.T.reshape(-1))
    return np.array(rows)


def saddle_derivatives(model: PerfModel, h, ptilde):
    """Directional derivatives of Tr[P~ Omega(h)] along every basis element."""
    g = saddle_functionals(model, h)
    return 8.0 * (g @ ptilde.reshape(-1)).real


def _saddle_rows(prob, model, h, pp, rel=1e-7):
    """Saddle equalities restricted to directions independent of the family's own equalities.

    Components in the row space of the family constraints are fixed by them already; with an
    inexact h they would make the combined system inconsistent at round-off level.
    """
    g = saddle_functionals(model, h)
    A = np.asarray((sps.csr_matrix(g) @ pp.ptilde_map).real.todense())
    E, f = prob.equalities
    E = E.toarray() if sps.issparse(E) else np.asarray(E)
    if len(E):
        coef, *_ = np.linalg.lstsq(E.T, A.T, rcond=None)
        A_perp = A - coef.T @ E
        rhs = -coef.T @ f
    else:
        A_perp, rhs = A, np.zeros(len(A))
    u, sv, vt = np.linalg.svd(A_perp, full_matrices=False)
    if not len(sv) or sv[0] <= rel * max(1.0, np.abs(A).max()):
        return np.zeros((0, A.shape[1])), np.zeros(0)
    keep = sv > rel * sv[0]
    return vt[keep], (u[:, keep].T @ rhs) / sv[keep]


def _pairing_rows(model, h, pp):
    """Objective row c (Tr[P~ Omega(h)] = c.x) and saddle rows A (functionals = A.x) over primal vars."""
    om = model.omega_matrix(h)
    c = np.asarray((om.T.reshape(-1) @ pp.ptilde_map).real).ravel()
    g = saddle_functionals(model, h)
    A = np.asarray((sps.csr_matrix(g) @ pp.ptilde_map).real.todense())
    return c, A


def _max_pairing(kind, model, h, tol):
    """max over the family of Tr[P~ Omega(h)]: the dual value certified by the gauge h."""
    pp = build_primal(kind)
    c, _ = _pairing_rows(model, h, pp)
    pp.prob.c = -c
    pp.prob.sense = "min"
    sol = solve(pp.prob, tol=tol)
    return -sol.objective, sol


def _least_violation(kind, model, h, target, tol):
    """Among strategies with Tr[P~ Omega(h)] >= target, minimize the largest saddle violation."""
    pp = build_primal(kind)
    prob = pp.prob
    n0 = prob.n
    c, A = _pairing_rows(model, h, pp)
    t = int(prob.add_vars(1, "t")[0])
    for row in A:
        nz = np.flatnonzero(np.abs(row) > 0)
        for sgn in (1.0, -1.0):
            blk = prob.add_block(1)
            prob.add_entries(blk, np.r_[t, nz], np.zeros(len(nz) + 1), np.zeros(len(nz) + 1),
                             np.r_[1.0, sgn * row[nz]])
    nz = np.flatnonzero(np.abs(c) > 0)
    blk = prob.add_block(1, [[-target]])
    prob.add_entries(blk, nz, np.zeros(len(nz)), np.zeros(len(nz)), c[nz])
    prob.set_objective([t], [1.0])
    sol = solve(prob, tol=tol)
    return pp, sol, sol.x[:n0]


def polish_gauge(model: PerfModel, h, ptilde):
    """Closest h' to h minimizing Tr[P~ Omega(h')] for fixed P~.

    With M = P~^T, A = N^dag M N and B = N^dag M Ṅ the stationarity condition
    is A h' + h' A = i(B^dag - B); the correction is the least-norm solution.
    """
    M = ptilde.T
    A = model.N_vec.conj().T @ M @ model.N_vec
    B = model.N_vec.conj().T @ M @ model.dN_vec
    rhs = 1j * (B.conj().T - B) - (A @ h + h @ A)
    r = A.shape[0]
    L = np.kron(np.eye(r), A) + np.kron(A.T, np.eye(r))  # column-major vec
    d, *_ = np.linalg.lstsq(L, rhs.reshape(-1, order="F"), rcond=1e-12)
    d = d.reshape(r, r, order="F")
    return h + 0.5 * (d + d.conj().T)


def stationary_gauge(kind: StrategyKind, model: PerfModel, ptilde, tol=1e-9, rel=1e-9):
    """Best dual gauge among those stationary for P~: min lam with d/dh Tr[P~ Omega(h)] = 0.

    For a rank-deficient P~ the stationarity system is underdetermined and the
    least-norm solution need not be dual optimal. Only directions whose
    singular value exceeds `rel` of the largest are imposed, which keeps the
    system consistent for an approximately optimal P~. Returns (h, lam) or None.
    """
    r = model.r
    n = r * r
    d0 = saddle_derivatives(model, np.zeros((r, r), complex), ptilde)
    G = np.column_stack([saddle_derivatives(model, herm_from_coeffs(np.eye(n)[k], r), ptilde) - d0
                         for k in range(n)])
    U, sv, _ = np.linalg.svd(G)
    keep = sv > rel * sv[0] if sv.size and sv[0] > 0 else np.zeros(0, bool)
    dp = build_dual(kind, model)
    if keep.any():
        Uk = U[:, : int(keep.sum())]
        rows = np.zeros((Uk.shape[1], dp.prob.n))
        rows[:, dp.h] = Uk.T @ G
        dp.prob.add_equalities(rows, -Uk.T @ d0)
    sol = solve(dp.prob, tol=tol)
    if not sol.ok:
        return None
    return herm_from_coeffs(sol.x[dp.h], r), float(sol.x[dp.lam])


def recover_strategy(kind: StrategyKind | str, model: PerfModel, h_opt, tol=1e-9, symmetrize=None,
                     J_dual=None, gauge_rtol=1e-6) -> OptimalStrategy:
    """Maximize Tr[P~ Omega(h_opt)] over the family subject to the saddle equalities.

    If the saddle equalities leave no PSD point (they can pin P~ completely, so
    the small error in a numerically optimal h matters), fall back to the
    near-maximizer with the least saddle violation. In both cases the gauge
    is then polished for the recovered P~ and kept only if its certified
    dual value max_P Tr[P Omega(h')] stays within `gauge_rtol` of the optimum.
    """
    if isinstance(kind, str):
        kind = StrategyKind(kind, model.N, model.fam.d_in, model.fam.d_out)
    h = np.asarray(h_opt)
    if h.ndim == 1:
        h = herm_from_coeffs(h, model.r)
    if symmetrize is None:
        symmetrize = kind.name == "sup"
    rep_h = rep_p = None
    if symmetrize:
        from .symmetry import PermRep

        rep_h = PermRep(model.N, model.fam.s)
        rep_p = PermRep(model.N, model.fam.d_in * model.fam.d_out)
        h = rep_h.average(h)

    def finish(pp, x):
        pt = ptilde_value(pp, x)
        pt = 0.5 * (pt + pt.conj().T)
        if rep_p is not None:
            pt = rep_p.average(pt)
        return pt, {name: hv.value(x) for name, hv in pp.pvars.items()}

    pp = build_primal(kind)
    c, _ = _pairing_rows(model, h, pp)
    pp.prob.c = -c
    pp.prob.sense = "min"
    A, b = _saddle_rows(pp.prob, model, h, pp)
    if len(A):
        pp.prob.add_equalities(A, b)
    sol = solve(pp.prob, tol=tol)
    route = "saddle_equalities"
    pt, parts = finish(pp, sol.x) if sol.ok else (None, None)
    scale = 1.0 if pt is None else max(1.0, np.abs(np.linalg.eigvalsh(pt)).max())
    if pt is None or np.linalg.eigvalsh(pt)[0] < -1e-9 * scale:
        route = "least_violation"
        jmax, _ = _max_pairing(kind, model, h, tol)
        pp, sol, x = _least_violation(kind, model, h, jmax - 1e-8 * (1.0 + abs(jmax)), tol)
        if not sol.ok:
            raise RecoveryError(f"strategy recovery failed ({sol.status})")
        pt, parts = finish(pp, x)
    saddle_in = float(np.abs(saddle_derivatives(model, h, pt)).max())
    h_cert = h
    polished = polish_gauge(model, h, pt)
    if rep_h is not None:
        polished = rep_h.average(polished)
    ref = J_dual
    if ref is None:
        ref, _ = _max_pairing(kind, model, h, tol)
    dual_polished, _ = _max_pairing(kind, model, polished, tol)
    if dual_polished <= ref + gauge_rtol * (1.0 + abs(ref)):
        h_cert = polished
    else:
        found = stationary_gauge(kind, model, pt, tol)
        if found is not None:
            polished = found[0] if rep_h is None else rep_h.average(found[0])
            dual_polished, _ = _max_pairing(kind, model, polished, tol)
            if dual_polished <= ref + gauge_rtol * (1.0 + abs(ref)):
                h_cert = polished
    om = model.omega_matrix(h_cert)
    J = float(np.real(np.trace(pt @ om)))
    wires = [Wire(k, d) for k, d in enumerate(kind.dims, start=1)]
    _, vec = purify(LabeledOperator(wires, pt), "F", psd_tol=1e-7)
    dev, mineig = membership_residual(kind, pt)
    res = {
        "route": route,
        "solver_status": sol.status,
        "solver_gap": sol.gap,
        "dual_pairing": dev,
        "min_eig": mineig,
        "saddle_max": float(np.abs(saddle_derivatives(model, h_cert, pt)).max()),
        "saddle_max_input_h": saddle_in,
        "gauge_polished": h_cert is polished,
        "dual_at_gauge": float(dual_polished if h_cert is polished else ref),
    }
    return OptimalStrategy(kind, pt, vec.reshape(pt.shape[0], -1), J, h_cert, res, parts, sol.status)


def optimal_strategy(channel: ParamChannel, N, kind, phi=1.0, tol=None) -> tuple[QfiResult, OptimalStrategy]:
    """Solve the dual at certification accuracy, then recover a strategy attaining it."""
    tol = tol or default_tol()
    res = qfi(QfiRequest(channel, N, kind, phi, min(tol, CERT_TOL)))
    return res, recover_strategy(kind, res.model, res.h_opt, tol, J_dual=res.J)


def output_state(purification, fam: ChoiFamily):
    """rho_F = |P><P| * N and its phi-derivative, for a purification P on wires ⊗ F."""
    psi = fam.N_vec.T @ purification
    dpsi = fam.dN_vec.T @ purification
    rho = psi.T @ psi.conj()
    drho = dpsi.T @ psi.conj()
    return rho, drho + drho.conj().T


def verify_strategy(s: OptimalStrategy, fam: ChoiFamily, J_ref=None):
    """State QFI of the strategy output versus the reference value, plus membership residuals."""
    rho, drho = output_state(s.purification, fam)
    Jstate = state_qfi(rho, drho)
    ref = s.J if J_ref is None else J_ref
    dev, mineig = membership_residual(s.kind, s.ptilde)
    rel = abs(Jstate - ref) / max(abs(ref), 1e-12)
    return {
        "J_state": Jstate,
        "J_ref": ref,
        "rel_err": rel,
        "trace_rho": float(np.trace(rho).real),
        "dual_pairing": dev,
        "min_eig": mineig,
        "future_dim": s.future_dim,
        "rank_ptilde": numerical_rank(s.ptilde),
    }


# ---------------------------------------------------------------- comb realization


def comb_marginals(ptilde, dims):
    """P^(N) = Tr_2N P~ / d_2N, then P^(k-1) = Tr_{2k-2,2k-1} P^(k) / d_{2k-2}."""
    n = len(dims) // 2
    side = int(np.prod(dims[:-1]))
    trm = ptrace_map(dims, [2 * n - 1])
    pk = (trm @ ptilde.reshape(-1)).reshape(side, side) / dims[-1]
    out = [pk]
    for k in range(n, 1, -1):
        d = dims[: 2 * k - 1]
        trm = ptrace_map(d, [2 * k - 3, 2 * k - 2])
        s = int(np.prod(d[: 2 * k - 3]))
        pk = (trm @ pk.reshape(-1)).reshape(s, s) / d[2 * k - 3]
        out.append(pk)
    return out[::-1]


def _purify_matrix(p, cutoff):
    w, v = np.linalg.eigh(0.5 * (p + p.conj().T))
    keep = np.flatnonzero(w > cutoff * max(w.max(), 0.0))[::-1]
    return v[:, keep] * np.sqrt(w[keep])[None, :]


def realize_comb(ptilde, dims, cutoff=RANK_CUTOFF):
    """Isometries V^(k): (wire 2k-2, A_{k-1}) -> (wire 2k-1, A_k) realizing a sequential comb.

    With W_k a minimal purification of P^(k) (columns indexed by A_k),
    V^(k) = (W_{k-1}^+ ⊗ 1) W_k, i.e. (1/sqrt p_j)(<e_j| ⊗ 1) |W_k>>.
    """
    try:
        return _realize(ptilde, dims, cutoff)
    except np.linalg.LinAlgError:
        return _realize(ptilde, dims, 1e-8)


def _realize(ptilde, dims, cutoff):
    combs = comb_marginals(ptilde, dims)
    n = len(dims) // 2
    isos, anc = [], []
    prev = np.ones((1, 1))  # W_0 for the trivial past
    for k in range(1, n + 1):
        Wk = _purify_matrix(combs[k - 1], cutoff)  # rows: wires 1..2k-1, cols: A_k
        a_k = Wk.shape[1]
        a_prev = prev.shape[1]
        past = prev.shape[0]  # dims of wires 1..2k-3
        d_in = dims[2 * k - 3] if k > 1 else 1
        d_out = dims[2 * k - 2]
        t = Wk.reshape(past, d_in, d_out, a_k)
        # V[(m, j), (y, j')] = sum_x conj(f_j'[x]) W_k[x, y, m, j] / sqrt(q_j')
        norms = np.linalg.norm(prev, axis=0)
        f = prev / norms[None, :]
        v = np.einsum("xJ,xymj->mjyJ", f.conj(), t) / norms[None, None, None, :]
        V = v.reshape(d_out * a_k, d_in * a_prev)
        isos.append(V)
        anc.append(a_k)
        prev = Wk
    return IsometrySequence(isos, anc, combs)


def rebuild_comb(seq: IsometrySequence, dims):
    """Link the isometries' Choi vectors and trace the final ancilla; returns P^(N)."""
    W = np.ones((1, 1))  # rows: open wires so far, cols: current ancilla
    for k, V in enumerate(seq.isometries, start=1):
        d_in = dims[2 * k - 3] if k > 1 else 1
        d_out = dims[2 * k - 2]
        a_prev = W.shape[1]
        a_k = V.shape[0] // d_out
        v = V.reshape(d_out, a_k, d_in, a_prev)
        W = np.einsum("xJ,mjyJ->xymj", W, v).reshape(-1, a_k)
    return W @ W.conj().T


def isometry_qfi(seq: IsometrySequence, ch: ParamChannel, phi):
    """QFI of the final (output wire, ancilla) state produced by running the isometries."""
    ks = ch.kraus(phi)
    dks = ch.dkraus(phi)
    # states: list of (psi, dpsi) per Kraus history, vectors on (wire, ancilla)
    V1 = seq.isometries[0]
    branches = [(V1[:, 0], np.zeros_like(V1[:, 0]))]
    for k in range(1, len(seq.isometries) + 1):
        a_k = seq.ancilla_dims[k - 1]
        new = []
        for psi, dpsi in branches:
            p = psi.reshape(-1, a_k)
            dp = dpsi.reshape(-1, a_k)
            for K, dK in zip(ks, dks):
                new.append(((K @ p).reshape(-1), (dK @ p + K @ dp).reshape(-1)))
        branches = new
        if k < len(seq.isometries):
            V = seq.isometries[k]
            branches = [(V @ psi, V @ dpsi) for psi, dpsi in branches]
    rho = sum(np.outer(p, p.conj()) for p, _ in branches)
    drho = sum(np.outer(dp, p.conj()) + np.outer(p, dp.conj()) for p, dp in branches)
    return state_qfi(rho, drho)


def symmetric_branch_comb(s: OptimalStrategy):
    """For a Sup strategy: the site-symmetrized identity-order comb shared by every branch.

    Returns (normalized comb P~ for the identity order, list of (order, weight)).
    """
    kind = s.kind
    N, dims = kind.N, kind.dims
    from .symmetry import PermRep, site_permutation

    rep = PermRep(N, kind.d_in * kind.d_out)
    acc = 0.0
    for b, order in enumerate(kind.branches):
        pn = s.parts[f"b{b}_P{N}"]
        last = order[-1]
        wires = sorted([w for q in order[:-1] for w in (2 * q - 1, 2 * q)] + [2 * last - 1])
        emb = embed_map(dims, [w - 1 for w in wires])
        full = (emb @ pn.reshape(-1)).reshape(int(np.prod(dims)), -1)
        # relabel sites so this branch's order becomes the identity order
        sigma = site_permutation(order)
        acc = acc + rep.conjugate(full, sigma)
    weight = 1.0 / len(kind.branches)
    comb = acc / np.real(np.trace(acc)) * np.prod(dims[1::2])
    return comb, [(order, weight) for order in kind.branches]


def strategy_to_json(s: OptimalStrategy, seq: IsometrySequence | None = None, report=None, branches=None):
    def cpl(m):
        m = np.asarray(m)
        return np.stack([m.real, m.imag], axis=-1).tolist()

    out = {
        "kind": s.kind.name,
        "N": s.kind.N,
        "dims": s.kind.dims,
        "J": s.J,
        "h": cpl(s.h),
        "ptilde": cpl(s.ptilde),
        "future_dim": s.future_dim,
        "residuals": s.residuals,
    }
    if seq is not None:
        out["isometries"] = [cpl(v) for v in seq.isometries]
        out["ancilla_dims"] = seq.ancilla_dims
    if branches is not None:
        out["branches"] = [{"order": list(o), "weight": w} for o, w in branches]
    if s.kind.name == "swi":
        out["branches"] = []
        for b, order in enumerate(s.kind.branches):
            rho = s.parts[f"b{b}_rho"]
            out["branches"].append({"order": list(order), "weight": float(np.trace(rho).real), "rho": cpl(rho)})
    if report is not None:
        out["report"] = report
    return out
