"""Operators on labeled wires: tensor, partial trace/transpose, link product.

Wires are identified by integers (1, 2, ...) or by symbolic tags such as
"F", "C" or "A1". Symbolic wires sort after every integer wire, which
gives the canonical order used for comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

RANK_CUTOFF = 1e-10


class WireError(ValueError):
    """Raised on inconsistent wire labels or dimensions."""


class NotPSDError(ValueError):
    """Raised when an operator expected to be PSD has a negative eigenvalue."""


def wire_key(wid):
    # integers first, then symbolic tags in lexical order
    if isinstance(wid, (int, np.integer)):
        return (0, int(wid), "")
    return (1, 0, str(wid))


@dataclass(frozen=True)
class Wire:
    id: object
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise WireError(f"wire {self.id!r} has dim {self.dim} < 1")


class LabeledOperator:
    """Square complex matrix acting on an ordered list of wires."""

    __slots__ = ("wires", "data")

    def __init__(self, wires: Sequence[Wire], data):
        wires = tuple(w if isinstance(w, Wire) else Wire(*w) for w in wires)
        ids = [w.id for w in wires]
        if len(set(ids)) != len(ids):
            raise WireError(f"duplicate wire labels in {ids}")
        data = np.asarray(data, dtype=complex)
        side = int(np.prod([w.dim for w in wires])) if wires else 1
        if data.shape != (side, side):
            raise WireError(f"matrix shape {data.shape} does not match wire dims {side}")
        data.setflags(write=False)
        self.wires = wires
        self.data = data

    @property
    def ids(self):
        return [w.id for w in self.wires]

    @property
    def dims(self):
        return [w.dim for w in self.wires]

    def dim_of(self, wid):
        for w in self.wires:
            if w.id == wid:
                return w.dim
        raise WireError(f"unknown wire {wid!r}")

    def trace(self):
        return complex(np.trace(self.data))

    def is_hermitian(self, rtol=1e-12):
        scale = max(np.abs(self.data).max(initial=0.0), 1.0)
        return np.abs(self.data - self.data.conj().T).max(initial=0.0) <= rtol * scale

    def canonical(self) -> "LabeledOperator":
        order = sorted(range(len(self.wires)), key=lambda k: wire_key(self.wires[k].id))
        return reorder(self, [self.wires[k].id for k in order])

    def __repr__(self):
        return f"LabeledOperator(wires={self.ids}, dims={self.dims})"


def identity(wires: Iterable[Wire]) -> LabeledOperator:
    wires = [w if isinstance(w, Wire) else Wire(*w) for w in wires]
    side = int(np.prod([w.dim for w in wires])) if wires else 1
    return LabeledOperator(wires, np.eye(side))


def _as_tensor(x: LabeledOperator):
    d = x.dims
    return x.data.reshape(d + d)


def _from_tensor(t, dims):
    side = int(np.prod(dims)) if dims else 1
    return np.ascontiguousarray(t).reshape(side, side)


def reorder(x: LabeledOperator, ids: Sequence) -> LabeledOperator:
    """Permute the tensor factors of x into the wire order `ids`."""
    ids = list(ids)
    cur = x.ids
    if sorted(map(wire_key, ids)) != sorted(map(wire_key, cur)):
        raise WireError(f"cannot reorder {cur} into {ids}")
    if ids == cur:
        return x
    n = len(cur)
    perm = [cur.index(i) for i in ids]
    t = np.transpose(_as_tensor(x), perm + [p + n for p in perm])
    wires = [x.wires[p] for p in perm]
    return LabeledOperator(wires, _from_tensor(t, [w.dim for w in wires]))


def tensor(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    clash = set(a.ids) & set(b.ids)
    if clash:
        raise WireError(f"label collision on {sorted(clash, key=wire_key)}")
    return LabeledOperator(a.wires + b.wires, np.kron(a.data, b.data))


def partial_trace(x: LabeledOperator, over) -> LabeledOperator:
    over = set(over)
    unknown = over - set(x.ids)
    if unknown:
        raise WireError(f"unknown wires {sorted(unknown, key=wire_key)}")
    n = len(x.wires)
    rows = list(range(n))
    cols = [k + n if x.wires[k].id not in over else k for k in range(n)]
    keep = [k for k in range(n) if x.wires[k].id not in over]
    out = [rows[k] for k in keep] + [cols[k] for k in keep]
    t = np.einsum(_as_tensor(x), rows + cols, out)
    wires = [x.wires[k] for k in keep]
    return LabeledOperator(wires, _from_tensor(t, [w.dim for w in wires]))


def partial_transpose(x: LabeledOperator, over) -> LabeledOperator:
    over = set(over)
    unknown = over - set(x.ids)
    if unknown:
        raise WireError(f"unknown wires {sorted(unknown, key=wire_key)}")
    n = len(x.wires)
    perm = list(range(2 * n))
    for k, w in enumerate(x.wires):
        if w.id in over:
            perm[k], perm[k + n] = k + n, k
    t = np.transpose(_as_tensor(x), perm)
    return LabeledOperator(x.wires, _from_tensor(t, x.dims))


def link(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Link product A*B, contracting the wires the two operators share.

    Equals Tr_S[(1 ⊗ A^{T_S})(B ⊗ 1)] with S the common wires. The result
    is returned in canonical wire order.
    """
    shared = set(a.ids) & set(b.ids)
    for s in shared:
        if a.dim_of(s) != b.dim_of(s):
            raise WireError(f"dimension mismatch on shared wire {s!r}")
    na, nb = len(a.wires), len(b.wires)
    # einsum labels: a rows 0..na-1, a cols na..2na-1; b gets fresh labels
    # except on shared wires, where the partial transpose of a makes rows
    # meet rows and columns meet columns
    a_rows = list(range(na))
    a_cols = list(range(na, 2 * na))
    nxt = 2 * na
    b_rows, b_cols = [], []
    for w in b.wires:
        if w.id in shared:
            k = a.ids.index(w.id)
            b_rows.append(a_rows[k])
            b_cols.append(a_cols[k])
        else:
            b_rows.append(nxt)
            b_cols.append(nxt + 1)
            nxt += 2
    ka = [k for k in range(na) if a.wires[k].id not in shared]
    kb = [k for k in range(nb) if b.wires[k].id not in shared]
    wires = [a.wires[k] for k in ka] + [b.wires[k] for k in kb]
    out = [a_rows[k] for k in ka] + [b_rows[k] for k in kb]
    out += [a_cols[k] for k in ka] + [b_cols[k] for k in kb]
    t = np.einsum(_as_tensor(a), a_rows + a_cols, _as_tensor(b), b_rows + b_cols, out, optimize=True)
    res = LabeledOperator(wires, _from_tensor(t, [w.dim for w in wires]))
    return res.canonical()


def herm_eig(x):
    """Eigen-decomposition of the Hermitian part of x (ascending)."""
    x = np.asarray(x, dtype=complex)
    return np.linalg.eigh(0.5 * (x + x.conj().T))


def _support_cut(w):
    top = max(np.max(np.abs(w), initial=0.0), 0.0)
    return RANK_CUTOFF * top


def numerical_rank(x, cutoff=RANK_CUTOFF):
    w = np.linalg.eigvalsh(0.5 * (x + np.conj(x).T))
    top = np.max(np.abs(w), initial=0.0)
    if top == 0.0:
        return 0
    return int(np.sum(w > cutoff * top))


def sqrt_psd(x):
    w, v = herm_eig(x)
    w = np.where(w > _support_cut(w), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def pinv_sqrt(x):
    w, v = herm_eig(x)
    keep = w > _support_cut(w)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ v.conj().T


def purify(x: LabeledOperator, future: Wire | str = "F", psd_tol=1e-10):
    """Return (wires, vector) with Tr_future |v><v| = x and minimal future dim.

    The future wire is appended last. Its dimension equals the numerical
    rank of x; passing a Wire with a larger dim pads with zeros.
    """
    w, v = herm_eig(x.data)
    top = np.max(np.abs(w), initial=0.0)
    if top > 0 and w[0] < -psd_tol * top:
        raise NotPSDError(f"min eigenvalue {w[0]:.3e} below tolerance")
    keep = w > RANK_CUTOFF * top if top > 0 else np.zeros(len(w), bool)
    # largest weights first
    idx = np.flatnonzero(keep)[::-1]
    rank = max(len(idx), 1)
    if isinstance(future, Wire):
        if future.dim < rank:
            raise WireError(f"future wire dim {future.dim} below rank {rank}")
        fdim, fid = future.dim, future.id
    else:
        fdim, fid = rank, future
    vec = np.zeros((x.data.shape[0], fdim), dtype=complex)
    for j, k in enumerate(idx):
        vec[:, j] = np.sqrt(w[k]) * v[:, k]
    wires = list(x.wires) + [Wire(fid, fdim)]
    return wires, vec.reshape(-1)
