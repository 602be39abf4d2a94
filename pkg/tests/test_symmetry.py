import itertools
from math import comb

import numpy as np
import pytest

from metroq.channels import choi_power, make_ad_channel, sample_bruzda_channel
from metroq.perfop import PerfModel
from metroq.qfiengine import QfiRequest, qfi
from metroq.symmetry import (CHARACTERS, PermRep, SymmetryError, adapted_basis, cycle_type,
                             invariant_herm_basis, irrep_dim, ntilde_intertwines, site_permutation,
                             variable_counts)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_permutation_representation_is_homomorphism(N):
    rep = PermRep(N, 2)
    for a, b in itertools.product(rep.perms, repeat=2):
        ab = tuple(a[b[i]] for i in range(N))
        np.testing.assert_array_equal(rep.matrix(a) @ rep.matrix(b), rep.matrix(ab))


@pytest.mark.parametrize("N", [2, 3, 4])
def test_character_tables_are_orthonormal(N):
    rep = PermRep(N, 1)
    chars = CHARACTERS[N]
    for mu, nu in itertools.product(chars, repeat=2):
        s = sum(chars[mu][cycle_type(p)] * chars[nu][cycle_type(p)] for p in rep.perms) / len(rep.perms)
        assert s == pytest.approx(1.0 if mu == nu else 0.0)
    assert sum(irrep_dim(mu) ** 2 for mu in chars) == len(rep.perms)


@pytest.mark.parametrize("N,w", [(2, 2), (3, 2), (3, 4)])
def test_isotypic_projectors_resolve_identity(N, w):
    rep = PermRep(N, w)
    total = 0
    for mu in rep.irreps():
        P = rep.projector(mu)
        np.testing.assert_allclose(P @ P, P, atol=1e-12)
        total = total + P
    np.testing.assert_allclose(total, np.eye(rep.dim), atol=1e-12)


@pytest.mark.parametrize("N,w", [(2, 4), (3, 4), (4, 2)])
def test_adapted_basis_block_diagonalizes(N, w):
    ub = adapted_basis(N, w)
    U = ub.full()
    np.testing.assert_allclose(U.T @ U, np.eye(w ** N), atol=1e-10)
    assert ub.leakage(np.random.default_rng(5), samples=5) <= 1e-8


def test_adapted_basis_multiplicities_count_symmetric_tensors():
    # sum_mu m_mu^2 is the dimension of the commutant: symmetric tensors of C^{w^2}
    for N in (2, 3):
        assert adapted_basis(N, 4).multiplicity_sum() == comb(N + 15, 15)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_invariant_gauge_basis_size(N):
    b = invariant_herm_basis(PermRep(N, 2))
    assert len(b) == comb(N + 3, 3)
    rep = PermRep(N, 2)
    for H in b:
        np.testing.assert_allclose(rep.average(H), H, atol=1e-12)


def test_variable_counts():
    assert variable_counts(2) == (16 ** 2 + 16 + 1, 147)
    assert variable_counts(3) == (16 ** 3 + 64 + 1, 837)
    assert [variable_counts(n) for n in (1, 4, 5)] == [(21, 21), (65793, 3912), (1049601, 15561)]


def test_site_permutation_inverts_order():
    assert site_permutation((2, 3, 1)) == (2, 0, 1)
    assert site_permutation((1, 2, 3)) == (0, 1, 2)


def test_choi_columns_intertwine(rng):
    m = PerfModel(choi_power(sample_bruzda_channel(2), 3, 0.7))
    rep = PermRep(3, 2)
    h = rep.average((lambda g: g + g.conj().T)(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))))
    for p in rep.perms:
        assert ntilde_intertwines(m, h, p) < 1e-12


@pytest.mark.parametrize("kind", ["par", "swi", "sup", "ico"])
@pytest.mark.parametrize("N", [2, 3])
def test_reduced_matches_unreduced(kind, N):
    if N == 3 and kind == "ico":
        pytest.skip("unreduced N=3 ico runs in the acceptance suite")
    ch = make_ad_channel(0.3)
    full = qfi(QfiRequest(ch, N, kind))
    red = qfi(QfiRequest(ch, N, kind, reduced=True))
    assert red.status == "Optimal"
    assert red.J == pytest.approx(full.J, rel=1e-6)
    assert red.n_vars < full.n_vars


def test_reduced_random_channel():
    ch = sample_bruzda_channel(9)
    assert qfi(QfiRequest(ch, 2, "ico", reduced=True)).J == pytest.approx(qfi(QfiRequest(ch, 2, "ico")).J, rel=1e-6)


def test_sequential_reduction_rejected():
    with pytest.raises(SymmetryError):
        qfi(QfiRequest(make_ad_channel(0.3), 2, "seq", reduced=True))


def test_large_n_rejected():
    with pytest.raises(SymmetryError):
        PermRep(5, 2)
