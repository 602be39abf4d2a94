import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rand_psd
from metroq.optstrat import IsometrySequence, rebuild_comb
from metroq.sdp import solve
from metroq.stratsets import (KINDS, KindError, StrategyKind, build_primal, canonical_dual_point,
                              dual_variables_and_constraints, local_nosignal_basis, membership_residual,
                              ptilde_value)
from metroq.wirealg import LabeledOperator, Wire, identity, tensor


def random_isometry(rng, rows, cols):
    g = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, _ = np.linalg.qr(g)
    return q


def random_seq_comb(rng, ancilla=(2, 2)):
    """P~ on wires 1..4 of a two-step sequential strategy built from random isometries."""
    a1, a2 = ancilla
    v1 = random_isometry(rng, 2 * a1, 1)
    v2 = random_isometry(rng, 2 * a2, 2 * a1)
    p2 = rebuild_comb(IsometrySequence([v1, v2], [a1, a2], []), [2, 2, 2, 2])
    return np.kron(p2, np.eye(2))


def random_par_strategy(rng):
    rho = rand_psd(rng, 4)
    rho /= np.trace(rho)
    x = tensor(LabeledOperator([Wire(1, 2), Wire(3, 2)], rho), identity([Wire(2, 2), Wire(4, 2)]))
    return x.canonical().data


def test_kind_validation():
    with pytest.raises(KindError):
        StrategyKind("nope", 2)
    with pytest.raises(KindError):
        StrategyKind("seq", 0)


@pytest.mark.parametrize("N,count", [(1, 1), (2, 2), (3, 6)])
def test_branch_counts(N, count):
    assert len(StrategyKind("sup", N).branches) == count
    assert len(StrategyKind("swi", N).branches) == count
    assert len(StrategyKind("seq", N).branches) == 1


def test_local_nosignal_basis_size():
    basis = local_nosignal_basis(2, 2)
    assert len(basis) == 13
    for b in basis:
        np.testing.assert_allclose(b, b.conj().T)


@pytest.mark.parametrize("kind", ["seq", "sup", "ico"])
@pytest.mark.parametrize("N", [1, 2])
def test_canonical_dual_point_is_feasible(kind, N):
    k = StrategyKind(kind, N)
    dvars, eqs = dual_variables_and_constraints(k)
    vals = canonical_dual_point(k)
    for e in eqs:
        lhs = sum(m @ vals[name].reshape(-1) for name, m in e.terms)
        np.testing.assert_allclose(lhs, np.asarray(e.rhs).reshape(-1), atol=1e-12)


@given(st.integers(0, 10_000))
def test_sequential_combs_belong_to_seq_and_ico(seed):
    rng = np.random.default_rng(seed)
    p = random_seq_comb(rng)
    for kind in ("seq", "ico"):
        dev, mineig = membership_residual(StrategyKind(kind, 2), p, samples=5, seed=seed)
        assert dev < 1e-10 and mineig > -1e-10


@given(st.integers(0, 10_000))
def test_parallel_strategies_belong_to_every_family(seed):
    rng = np.random.default_rng(seed)
    p = random_par_strategy(rng)
    for kind in ("par", "seq", "sup", "ico"):
        dev, _ = membership_residual(StrategyKind(kind, 2), p, samples=5, seed=seed)
        assert dev < 1e-10


def test_non_strategy_is_rejected(rng):
    p = random_seq_comb(rng)
    # signalling backwards in time: swap the roles of the two sites
    bad = p.reshape([2] * 8).transpose(2, 3, 0, 1, 6, 7, 4, 5).reshape(16, 16)
    bad = 0.5 * bad + 0.5 * rand_psd(rng, 16) / 4
    dev, _ = membership_residual(StrategyKind("seq", 2), bad)
    assert dev > 1e-3


@pytest.mark.parametrize("kind", KINDS)
def test_primal_feasible_points_pair_to_one(kind):
    k = StrategyKind(kind, 2)
    pp = build_primal(k)
    rng = np.random.default_rng(0)
    # maximize the pairing with a random PSD operator to land on a generic vertex
    pp.prob.c = -(pp.ptilde_map.T @ rand_psd(rng, 16).T.reshape(-1)).real
    sol = solve(pp.prob)
    assert sol.status == "Optimal"
    pt = ptilde_value(pp, sol.x)
    dev, mineig = membership_residual(k, pt)
    assert dev < 1e-7 and mineig > -1e-7
    assert np.isclose(np.trace(pt).real, 4.0)
