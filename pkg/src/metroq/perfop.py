"""Performance operator Omega(h) = 4 (Ñ Ñ^dagger)^T with Ñ = Ṅ - i N h, and its Schur-block vectors."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .channels import ChoiFamily
from .wirealg import LabeledOperator


def herm_basis_index(r):
    """Lexicographic list of (kind, j, k): 'd' for E_jj, 'r' for E_jk+E_kj, 'i' for i(E_jk-E_kj)."""
    idx = [("d", j, j) for j in range(r)]
    for j in range(r):
        for k in range(j + 1, r):
            idx.append(("r", j, k))
            idx.append(("i", j, k))
    return idx


def herm_basis(r):
    """Array of shape (r*r, r, r) with the trace-orthogonal Hermitian basis."""
    out = np.zeros((r * r, r, r), dtype=complex)
    for b, (kind, j, k) in enumerate(herm_basis_index(r)):
        if kind == "d":
            out[b, j, j] = 1.0
        elif kind == "r":
            out[b, j, k] = out[b, k, j] = 1.0
        else:
            out[b, j, k] = 1j
            out[b, k, j] = -1j
    return out


def herm_from_coeffs(c, r=None):
    c = np.asarray(c, dtype=float)
    r = r or int(round(np.sqrt(len(c))))
    if r * r != len(c):
        raise ValueError(f"expected {r * r} coefficients, got {len(c)}")
    return np.tensordot(c, herm_basis(r), axes=1)


def coeffs_from_herm(h):
    h = np.asarray(h, dtype=complex)
    r = h.shape[0]
    basis = herm_basis(r)
    norms = np.einsum("bij,bij->b", basis.conj(), basis).real
    return np.einsum("bij,ij->b", basis.conj(), h).real / norms


def project_columns(cols, dims, out_wires=(), links=()):
    """Contract wires of each column vector.

    `links` lists wire pairs (a, b) contracted with the unnormalized
    maximally entangled bra <<I|_{a,b}; every wire in `out_wires` is
    projected onto each computational basis state in turn. Returns a
    matrix whose columns are indexed (i, j) with i the original column and
    j the joint basis index of `out_wires` (in the given order); rows follow
    the remaining wires in ascending order.
    """
    n = len(dims)
    r = cols.shape[1]
    t = cols.reshape(list(dims) + [r])
    labels = list(range(n)) + [n]
    for a, b in links:
        if dims[a - 1] != dims[b - 1]:
            raise ValueError(f"cannot link wires {a} and {b} of different dims")
        labels[b - 1] = labels[a - 1]
    used = {w for pair in links for w in pair}
    outs = list(out_wires)
    if used & set(outs):
        raise ValueError("a wire cannot be both linked and projected")
    rest = [w for w in range(1, n + 1) if w not in used and w not in outs]
    res = np.einsum(t, labels, [w - 1 for w in rest] + [n] + [w - 1 for w in outs])
    drest = int(np.prod([dims[w - 1] for w in rest])) if rest else 1
    return res.reshape(drest, -1), rest


class PerfModel:
    """Affine-in-h data derived from a ChoiFamily."""

    def __init__(self, fam: ChoiFamily):
        self.fam = fam
        self.N = fam.N
        self.r = fam.r
        self.dims = [w.dim for w in fam.wires]
        self.N_vec = fam.N_vec
        self.dN_vec = fam.dN_vec

    @cached_property
    def basis(self):
        return herm_basis(self.r)

    def dN_tilde(self, h):
        h = np.asarray(h, dtype=complex)
        if h.shape != (self.r, self.r):
            raise ValueError(f"h must be {self.r}x{self.r}, got {h.shape}")
        return self.dN_vec - 1j * self.N_vec @ h

    def omega(self, h) -> LabeledOperator:
        nt = self.dN_tilde(h)
        return LabeledOperator(self.fam.wires, 4.0 * (nt @ nt.conj().T).T)

    def omega_matrix(self, h):
        nt = self.dN_tilde(h)
        return 4.0 * (nt.conj() @ nt.T)

    def conj_columns(self):
        """Coefficients of conj(Ñ) = conj(Ṅ) + i conj(N) conj(h) as (constant, per basis element)."""
        c0 = self.dN_vec.conj()
        cb = 1j * np.einsum("xj,bjk->bxk", self.N_vec.conj(), self.basis.conj())
        return c0, cb

    def n_vectors(self, h, out_wires=(), links=()):
        """Columns |n_{i,j}> = <j| conj(Ñ_i)> with `out_wires` projected."""
        self._check_outs(out_wires)
        m, _ = project_columns(self.dN_tilde(h).conj(), self.dims, out_wires, links)
        return m

    def n_affine(self, out_wires=(), links=()):
        """(n0, nb) with n(h) = n0 + sum_b c_b nb[b] for h = sum_b c_b basis[b]."""
        self._check_outs(out_wires)
        c0, cb = self.conj_columns()
        n0, rest = project_columns(c0, self.dims, out_wires, links)
        nb = np.stack([project_columns(c, self.dims, out_wires, links)[0] for c in cb])
        return n0, nb, rest

    def _check_outs(self, out_wires):
        bad = [w for w in out_wires if not (1 <= w <= 2 * self.N and w % 2 == 0)]
        if bad:
            raise ValueError(f"wires {bad} are not output wires")
