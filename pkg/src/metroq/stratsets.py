"""Strategy families: dual affine constraints, Schur-complement LMI blocks and primal membership.

All operators live on wires 1..2N (odd = channel inputs, even = channel
outputs) in ascending wire order. Linear maps act on row-major
vectorizations and are returned as scipy sparse matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .perfop import PerfModel
from .sdp import SdpProblem

KINDS = ("par", "seq", "swi", "sup", "ico")


class KindError(ValueError):
    """Unknown or unsupported strategy kind."""


# ---------------------------------------------------------------- linear maps

def _index_tensor(dims):
    side = int(np.prod(dims)) if len(dims) else 1
    return np.arange(side * side).reshape(list(dims) + list(dims))


def ptrace_map(dims, over):
    """Sparse map vec(X) -> vec(Tr_over X); `over` holds 0-based positions."""
    n = len(dims)
    keep = [k for k in range(n) if k not in over]
    over = sorted(over)
    t = _index_tensor(dims)
    t = np.transpose(t, keep + [k + n for k in keep] + over + [k + n for k in over])
    kside = int(np.prod([dims[k] for k in keep])) if keep else 1
    tside = int(np.prod([dims[k] for k in over])) if over else 1
    t = t.reshape(kside * kside, tside, tside)
    src = np.diagonal(t, axis1=1, axis2=2)  # (K*K, tside)
    rows = np.repeat(np.arange(kside * kside), tside)
    full = int(np.prod(dims)) ** 2
    return sps.csr_matrix((np.ones(src.size), (rows, src.reshape(-1))), shape=(kside * kside, full))


def embed_map(dims, sub_pos, fixed=None):
    """Sparse map vec(Y) -> vec(Y ⊗ C) arranged on `dims`.

    Y lives on positions `sub_pos` (in that order); C is `fixed` on the
    remaining positions in ascending order (identity when None).
    """
    n = len(dims)
    rest = [k for k in range(n) if k not in sub_pos]
    dsub = [dims[k] for k in sub_pos]
    drest = [dims[k] for k in rest]
    ssub = int(np.prod(dsub)) if dsub else 1
    srest = int(np.prod(drest)) if drest else 1
    if fixed is None:
        fixed = sps.identity(srest, format="coo")
    fixed = sps.coo_matrix(fixed)
    # full tensor index for (sub_row, rest_row, sub_col, rest_col)
    perm = list(sub_pos) + rest
    t = _index_tensor(dims)
    t = np.transpose(t, perm + [k + n for k in perm]).reshape(ssub, srest, ssub, srest)
    a, b = np.meshgrid(np.arange(ssub), np.arange(ssub), indexing="ij")
    a, b = a.reshape(-1), b.reshape(-1)
    dest = t[a[:, None], fixed.row[None, :], b[:, None], fixed.col[None, :]]
    src = np.broadcast_to((a * ssub + b)[:, None], dest.shape)
    vals = np.broadcast_to(fixed.data[None, :], dest.shape)
    full = int(np.prod(dims)) ** 2
    return sps.csr_matrix((vals.reshape(-1), (dest.reshape(-1), src.reshape(-1))), shape=(full, ssub * ssub))


def maxent_link(d):
    """|I>><<I| on two wires of dimension d."""
    v = np.eye(d).reshape(-1)
    return np.outer(v, v)


# ---------------------------------------------------------------- kinds

@dataclass(frozen=True)
class StrategyKind:
    name: str
    N: int
    d_in: int = 2
    d_out: int = 2

    def __post_init__(self):
        if self.name not in KINDS:
            raise KindError(f"unknown strategy kind {self.name!r}; expected one of {KINDS}")
        if self.N < 1:
            raise KindError("N must be at least 1")

    @property
    def dims(self):
        return [self.d_in if k % 2 else self.d_out for k in range(1, 2 * self.N + 1)]

    @property
    def branches(self):
        if self.name in ("swi", "sup"):
            return list(itertools.permutations(range(1, self.N + 1)))
        if self.name == "seq":
            return [tuple(range(1, self.N + 1))]
        return []


def _pos(wires):
    return [w - 1 for w in wires]


def _dims_of(kind, wires):
    d = kind.dims
    return [d[w - 1] for w in wires]


@dataclass
class DualVar:
    name: str
    wires: list  # ascending wire ids

    def side(self, kind):
        return int(np.prod(_dims_of(kind, self.wires))) if self.wires else 1


@dataclass
class LinearEquality:
    """sum_k maps[k](vec vars[k]) = vec(rhs) on the given wires."""

    wires: list
    terms: list  # (var name, sparse map)
    rhs: np.ndarray


@dataclass
class LmiTemplate:
    """A = [[lam/4 I_top, n(h)^dagger], [n(h), D]] with D = const + sum_k maps[k](vec vars[k])."""

    top: int
    bottom: int
    out_wires: list
    links: list
    d_const: np.ndarray | None
    d_terms: list = field(default_factory=list)
    branch: tuple | None = None


def comb_chain(kind: StrategyKind, order, tag):
    """Dual comb variables and equalities for sequential use of sites in `order`.

    Q^(k) lives on all wires of the first k sites; Tr_out(k) Q^(k) equals
    1_in(k) ⊗ Q^(k-1), with Q^(0) = 1.
    """
    dvars, eqs = [], []
    for k in range(1, len(order)):
        sites = sorted(order[:k])
        wires = sorted(w for s in sites for w in (2 * s - 1, 2 * s))
        dvars.append(DualVar(f"{tag}Q{k}", wires))
        site = order[k - 1]
        dims = _dims_of(kind, wires)
        out_pos = wires.index(2 * site)
        tr = ptrace_map(dims, [out_pos])
        rest = [w for w in wires if w != 2 * site]
        if k == 1:
            rhs = np.eye(kind.dims[2 * site - 2])
            eqs.append(LinearEquality(rest, [(dvars[-1].name, tr)], rhs))
        else:
            prev = dvars[-2]
            emb = embed_map(_dims_of(kind, rest), [rest.index(w) for w in prev.wires])
            side = int(np.prod(_dims_of(kind, rest)))
            eqs.append(LinearEquality(rest, [(dvars[-1].name, tr), (prev.name, -emb)], np.zeros((side, side))))
    return dvars, eqs


def dual_variables_and_constraints(kind: StrategyKind):
    """Dual matrix variables and the linear equalities of the dual affine space."""
    N = kind.N
    if kind.name in ("par", "swi"):
        return [], []
    if kind.name in ("seq", "sup"):
        dvars, eqs = [], []
        for b, order in enumerate(kind.branches):
            tag = "" if kind.name == "seq" else f"b{b}_"
            v, e = comb_chain(kind, order, tag)
            dvars += v
            eqs += e
        return dvars, eqs
    # ico: no-signaling duals on all wires
    wires = list(range(1, 2 * N + 1))
    q = DualVar("Q", wires)
    dims = kind.dims
    eqs = []
    for k in range(1, N + 1):
        lhs = ptrace_map(dims, [2 * k - 1])
        rest = [w for w in wires if w != 2 * k]
        rdims = _dims_of(kind, rest)
        tr2 = ptrace_map(dims, [2 * k - 2, 2 * k - 1])
        emb = embed_map(rdims, [rest.index(w) for w in wires if w not in (2 * k - 1, 2 * k)])
        side = int(np.prod(rdims))
        eqs.append(LinearEquality(rest, [("Q", lhs - emb @ tr2 / dims[2 * k - 2])], np.zeros((side, side))))
    trace = ptrace_map(dims, list(range(2 * N)))
    eqs.append(LinearEquality([], [("Q", trace)], np.array([[float(np.prod(dims[0::2]))]])))
    return [q], eqs


def dual_constraints(kind: StrategyKind):
    return dual_variables_and_constraints(kind)[1]


def canonical_dual_point(kind: StrategyKind):
    """A feasible point of the dual affine space, built from normalized identities."""
    dims = kind.dims
    out = {}
    for v in dual_variables_and_constraints(kind)[0]:
        if kind.name == "ico":
            side = v.side(kind)
            out[v.name] = np.eye(side) * np.prod(dims[0::2]) / side
        else:
            # a comb dual on sites S: identity divided by the output dims
            outs = [dims[w - 1] for w in v.wires if w % 2 == 0]
            out[v.name] = np.eye(v.side(kind)) / np.prod(outs)
    return out


def lmi_templates(kind: StrategyKind, r: int):
    """Schur-complement blocks for each branch of the strategy family."""
    N, dims = kind.N, kind.dims
    evens = list(range(2, 2 * N + 1, 2))
    odds = list(range(1, 2 * N, 2))
    if kind.name == "par":
        top = r * int(np.prod([dims[w - 1] for w in evens]))
        bottom = int(np.prod([dims[w - 1] for w in odds]))
        return [LmiTemplate(top, bottom, evens, [], np.eye(bottom))]
    if kind.name == "ico":
        side = int(np.prod(dims))
        return [LmiTemplate(r, side, [], [], None, [("Q", sps.identity(side * side, format="csr"))])]
    out = []
    for b, order in enumerate(kind.branches):
        last = order[-1]
        if kind.name == "swi":
            links = [(2 * order[k], 2 * order[k + 1] - 1) for k in range(N - 1)]
            top = r * dims[2 * last - 1]
            bottom = dims[2 * order[0] - 2]
            out.append(LmiTemplate(top, bottom, [2 * last], links, np.eye(bottom), branch=order))
            continue
        tag = "" if kind.name == "seq" else f"b{b}_"
        rest = [w for w in range(1, 2 * N + 1) if w != 2 * last]
        rdims = _dims_of(kind, rest)
        bottom = int(np.prod(rdims))
        top = r * dims[2 * last - 1]
        if N == 1:
            out.append(LmiTemplate(top, bottom, [2 * last], [], np.eye(bottom), branch=order))
            continue
        qwires = [w for w in rest if w != 2 * last - 1]
        emb = embed_map(rdims, [rest.index(w) for w in qwires])
        out.append(LmiTemplate(top, bottom, [2 * last], [], None, [(f"{tag}Q{N - 1}", emb)], branch=order))
    return out


def schur_block(kind: StrategyKind, model: PerfModel, branch=None):
    """Return the LMI template for one branch together with its affine n(h) data."""
    temps = lmi_templates(kind, model.r)
    if branch is not None:
        temps = [t for t in temps if t.branch == tuple(branch)]
    t = temps[0]
    n0, nb, _ = model.n_affine(t.out_wires, t.links)
    return t, n0, nb


@dataclass
class DualProgram:
    kind: StrategyKind
    prob: SdpProblem
    lam: int
    h: np.ndarray
    qvars: dict
    blocks: list


def add_schur_block(prob, t: LmiTemplate, n0, nb, lam, hidx, qvars):
    """Append A = [[lam/4 I, n^dagger], [n, D]] to prob; n = n0 + sum_b h_b nb[b]."""
    side = t.top + t.bottom
    const = np.zeros((side, side), complex)
    const[t.top:, :t.top] = n0
    const[:t.top, t.top:] = n0.conj().T
    if t.d_const is not None:
        const[t.top:, t.top:] += t.d_const
    blk = prob.add_block(side, const)
    ii = np.arange(t.top)
    prob.add_entries(blk, np.full(t.top, lam), ii, ii, 0.25)
    for hb, m in zip(hidx, nb):
        if np.abs(m).max(initial=0.0) > 0:
            prob.add_dense(blk, hb, m, offset=(t.top, 0))
    for name, emb in t.d_terms:
        prob.add_mapped(blk, qvars[name], emb, side_sub=t.bottom, offset=t.top)
    return blk


def build_dual(kind: StrategyKind, model: PerfModel) -> DualProgram:
    """min lam subject to the family's Schur blocks and dual equalities."""
    if model.N != kind.N:
        raise KindError("model and strategy kind disagree on N")
    prob = SdpProblem()
    lam = int(prob.add_vars(1, "lam")[0])
    hidx = prob.add_vars(model.r ** 2, "h")
    dvars, eqs = dual_variables_and_constraints(kind)
    qvars = {v.name: prob.add_herm_var(v.side(kind), v.name) for v in dvars}
    blocks = []
    cache = {}
    for t in lmi_templates(kind, model.r):
        key = (tuple(t.out_wires), tuple(t.links))
        if key not in cache:
            cache[key] = model.n_affine(t.out_wires, t.links)[:2]
        n0, nb = cache[key]
        blocks.append(add_schur_block(prob, t, n0, nb, lam, hidx, qvars))
    for e in eqs:
        prob.add_herm_equality([(qvars[name], m) for name, m in e.terms], e.rhs)
    prob.set_objective([lam], [1.0])
    return DualProgram(kind, prob, lam, hidx, qvars, blocks)


# ---------------------------------------------------------------- primal side

@dataclass
class PrimalProgram:
    """Primal strategy variables with vec(P~) = ptilde_map @ x."""

    kind: StrategyKind
    prob: SdpProblem
    ptilde_map: sps.csr_matrix
    pvars: dict
    branch_maps: dict = field(default_factory=dict)


def local_nosignal_basis(d_in, d_out):
    """Operators spanning the single-site no-signaling space, identity first.

    Products of these over sites span the N-partite no-signaling space.
    """
    def herm(d, traceless):
        out = [] if traceless else [np.eye(d)]
        for j in range(d):
            for k in range(j + 1, d):
                e = np.zeros((d, d), complex)
                e[j, k] = e[k, j] = 1
                out.append(e)
                e = np.zeros((d, d), complex)
                e[j, k], e[k, j] = 1j, -1j
                out.append(e)
        for j in range(d - 1):
            e = np.zeros((d, d), complex)
            if traceless:
                e[j, j], e[j + 1, j + 1] = 1, -1
            else:
                e[j + 1, j + 1] = 1
            out.append(e)
        return out

    ins = herm(d_in, False)
    outs = herm(d_out, True)
    return [np.eye(d_in * d_out, dtype=complex)] + [np.kron(a, b) for a in ins for b in outs]


def build_primal(kind: StrategyKind) -> PrimalProgram:
    """Variables, PSD blocks and equalities describing membership in the family."""
    N, dims = kind.N, kind.dims
    prob = SdpProblem()
    full = int(np.prod(dims))
    all_w = list(range(1, 2 * N + 1))
    pvars = {}
    maps = {}

    def psd(hv):
        blk = prob.add_block(hv.side)
        prob.add_mapped(blk, hv, sps.identity(hv.side ** 2, format="csr"))

    terms = []
    if kind.name == "par":
        odds = list(range(1, 2 * N, 2))
        hv = prob.add_herm_var(int(np.prod(_dims_of(kind, odds))), "P1")
        pvars["P1"] = hv
        psd(hv)
        prob.add_herm_equality([(hv, ptrace_map(_dims_of(kind, odds), list(range(N))))], np.eye(1))
        terms.append((hv, embed_map(dims, _pos(odds))))
    elif kind.name in ("seq", "sup"):
        norm_terms = []
        for b, order in enumerate(kind.branches):
            tag = "" if kind.name == "seq" else f"b{b}_"
            prev = None
            for k in range(1, N + 1):
                sites = order[:k]
                wires = sorted([w for s in sites[:-1] for w in (2 * s - 1, 2 * s)] + [2 * sites[-1] - 1])
                hv = prob.add_herm_var(int(np.prod(_dims_of(kind, wires))), f"{tag}P{k}")
                pvars[f"{tag}P{k}"] = hv
                psd(hv)
                wd = _dims_of(kind, wires)
                tr = ptrace_map(wd, [wires.index(2 * sites[-1] - 1)])
                if prev is None:
                    norm_terms.append((hv, ptrace_map(wd, list(range(len(wires))))))
                else:
                    pw, phv = prev
                    rest = [w for w in wires if w != 2 * sites[-1] - 1]
                    emb = embed_map(_dims_of(kind, rest), [rest.index(w) for w in pw])
                    side = int(np.prod(_dims_of(kind, rest)))
                    prob.add_herm_equality([(hv, tr), (phv, -emb)], np.zeros((side, side)))
                prev = (wires, hv)
            last_w, last_hv = prev
            emb = embed_map(dims, _pos(last_w))
            terms.append((last_hv, emb))
            maps[order] = (last_hv, emb)
        prob.add_herm_equality(norm_terms, np.eye(1))
    elif kind.name == "swi":
        norm_terms = []
        for b, order in enumerate(kind.branches):
            w0 = 2 * order[0] - 1
            hv = prob.add_herm_var(dims[w0 - 1], f"b{b}_rho")
            pvars[f"b{b}_rho"] = hv
            psd(hv)
            norm_terms.append((hv, ptrace_map([dims[w0 - 1]], [0])))
            # fixed part: links between consecutive sites, identity on the last output
            rest = [w for w in all_w if w != w0]
            fixed = np.ones((1, 1))
            order_w = []
            for k in range(N - 1):
                a, c = 2 * order[k], 2 * order[k + 1] - 1
                fixed = np.kron(fixed, maxent_link(dims[a - 1]))
                order_w += [a, c]
            fixed = np.kron(fixed, np.eye(dims[2 * order[-1] - 1]))
            order_w.append(2 * order[-1])
            # reorder fixed operator from order_w to ascending `rest`
            perm = [order_w.index(w) for w in rest]
            fd = [dims[w - 1] for w in order_w]
            ft = fixed.reshape(fd + fd)
            ft = np.transpose(ft, perm + [p + len(fd) for p in perm])
            side = int(np.prod(fd))
            emb = embed_map(dims, [w0 - 1], sps.coo_matrix(ft.reshape(side, side)))
            terms.append((hv, emb))
            maps[order] = (hv, emb)
        prob.add_herm_equality(norm_terms, np.eye(1))
    elif kind.name == "ico":
        hv = prob.add_herm_var(full, "P")
        pvars["P"] = hv
        psd(hv)
        terms.append((hv, sps.identity(full * full, format="csr")))
        loc = local_nosignal_basis(kind.d_in, kind.d_out)
        rows = []
        for combo in itertools.product(range(len(loc)), repeat=N):
            if not any(combo):
                continue
            B = np.ones((1, 1))
            for c in combo:
                B = np.kron(B, loc[c])
            rows.append(B.T.reshape(-1))
        B = np.array(rows)
        A = np.zeros((len(rows) + 1, prob.n))
        A[:-1, hv.idx] = (sps.csr_matrix(hv.basis).T @ B.T).T.real
        A[-1, hv.idx] = (hv.basis.T @ np.eye(full).reshape(-1)).real
        b = np.zeros(len(rows) + 1)
        b[-1] = float(np.prod(dims[1::2]))
        prob.add_equalities(A, b)
    ptilde = sps.csr_matrix((full * full, prob.n), dtype=complex)
    for hv, emb in terms:
        m = sps.coo_matrix(emb @ hv.basis)
        ptilde = ptilde + sps.csr_matrix((m.data, (m.row, hv.idx[m.col])), shape=(full * full, prob.n))
    return PrimalProgram(kind, prob, ptilde, pvars, maps)


def primal_constraints(kind: StrategyKind):
    return build_primal(kind)


def ptilde_value(pp: PrimalProgram, x):
    side = int(np.prod(pp.kind.dims))
    return (pp.ptilde_map @ x).reshape(side, side)


def membership_residual(kind: StrategyKind, ptilde, samples=20, seed=0):
    """Max deviation of Tr(P~ Q) from 1 over random feasible dual points, plus PSD violation."""
    rng = np.random.default_rng(seed)
    pts = random_dual_points(kind, samples, rng)
    dev = max(abs(np.trace(ptilde @ q) - 1.0) for q in pts) if pts else 0.0
    mineig = np.linalg.eigvalsh(0.5 * (ptilde + ptilde.conj().T))[0]
    return float(dev), float(mineig)


def full_dual_operator(kind: StrategyKind, values: dict, branch_index=0):
    """Assemble the full operator Q~ on wires 1..2N from dual variable values (per branch)."""
    N, dims = kind.N, kind.dims
    if kind.name == "ico":
        return values["Q"]
    if kind.name == "par":
        odds = list(range(1, 2 * N, 2))
        # Q = 1_odd ⊗ sigma_even with Tr sigma = 1; the uniform choice
        evens = list(range(2, 2 * N + 1, 2))
        s = int(np.prod(_dims_of(kind, evens)))
        emb = embed_map(dims, _pos(odds), sps.identity(s) / s)
        side = int(np.prod(_dims_of(kind, odds)))
        return (emb @ np.eye(side).reshape(-1)).reshape(int(np.prod(dims)), -1)
    order = kind.branches[branch_index] if kind.name != "par" else None
    tag = "" if kind.name == "seq" else f"b{branch_index}_"
    last = order[-1]
    # Q~ = (1_out(last)/d) ⊗ 1_in(last) ⊗ Q^(N-1)
    if N == 1:
        q = np.eye(1)
        qw = []
    else:
        q = values[f"{tag}Q{N - 1}"]
        qw = sorted(w for s in order[:-1] for w in (2 * s - 1, 2 * s))
    fixed = np.eye(dims[2 * last - 2] * dims[2 * last - 1]) / dims[2 * last - 1]
    emb = embed_map(dims, _pos(qw), sps.coo_matrix(fixed))
    side = int(np.prod(dims))
    return (emb @ q.reshape(-1)).reshape(side, side)


def random_dual_points(kind: StrategyKind, count, rng):
    """Random points of the dual affine space (not necessarily PSD), as full operators.

    Sampled as the canonical point plus random elements of the null space
    of the dual equalities.
    """
    if kind.name in ("par", "swi"):
        if kind.name == "par":
            out = []
            N, dims = kind.N, kind.dims
            odds = list(range(1, 2 * N, 2))
            evens = list(range(2, 2 * N + 1, 2))
            se = int(np.prod(_dims_of(kind, evens)))
            so = int(np.prod(_dims_of(kind, odds)))
            for _ in range(count):
                g = rng.standard_normal((se, se)) + 1j * rng.standard_normal((se, se))
                sig = g + g.conj().T
                sig = sig - np.trace(sig) / se * np.eye(se) + np.eye(se) / se
                emb = embed_map(dims, _pos(evens), sps.identity(so))
                out.append((emb @ sig.reshape(-1)).reshape(so * se, so * se))
            return out
        return []
    dvars, eqs = dual_variables_and_constraints(kind)
    prob = SdpProblem()
    hvs = {v.name: prob.add_herm_var(v.side(kind), v.name) for v in dvars}
    for e in eqs:
        prob.add_herm_equality([(hvs[nm], m) for nm, m in e.terms], e.rhs)
    E, f = prob.equalities
    Ed = E.toarray()
    x0 = np.linalg.lstsq(Ed, f, rcond=None)[0]
    u, s, vt = np.linalg.svd(Ed)
    rank = int(np.sum(s > 1e-10 * s[0]))
    null = vt[rank:].T
    out = []
    for _ in range(count):
        x = x0 + null @ rng.standard_normal(null.shape[1])
        vals = {nm: hv.value(x) for nm, hv in hvs.items()}
        b = int(rng.integers(len(kind.branches))) if kind.branches else 0
        out.append(full_dual_operator(kind, vals, b))
    return out
