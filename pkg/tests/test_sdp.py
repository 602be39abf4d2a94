import json

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from conftest import rand_herm, rand_psd
from metroq.sdp import INFEASIBLE, OPTIMAL, UNBOUNDED, SdpProblem, embed_hermitian, herm_coeffs, solve


def lmi_instance(seed, side=6, m=5):
    """Random strictly feasible, bounded LMI: F0 ≻ 0 at x = 0 and c from a PD dual point."""
    rng = np.random.default_rng(seed)
    F = [rand_herm(rng, side) for _ in range(m)]
    F0 = rand_psd(rng, side) + side * np.eye(side)
    Z = rand_psd(rng, side) + np.eye(side)
    c = np.array([np.trace(f @ Z).real for f in F])
    p = SdpProblem()
    idx = p.add_vars(m, "x")
    b = p.add_block(side, F0)
    for i, f in zip(idx, F):
        p.add_dense(b, i, f)
    p.set_objective(idx, c)
    return p, F0, F, c


def test_lambda_max():
    p = SdpProblem()
    lam = p.add_vars(1, "lam")
    b = p.add_block(2, -np.diag([1.0, 3.0]))
    p.add_dense(b, lam[0], np.eye(2))
    p.set_objective(lam, [1.0])
    s = solve(p)
    assert s.status == OPTIMAL
    assert abs(s.objective - 3.0) < 1e-8


@given(st.integers(0, 10_000))
def test_min_trace_pairing_is_min_eigenvalue(seed):
    rng = np.random.default_rng(seed)
    C = rand_herm(rng, 4)
    p = SdpProblem()
    X = p.add_herm_var(4, "X")
    b = p.add_block(4)
    p.add_mapped(b, X, sps.identity(16))
    p.add_equalities(np.r_[np.ones(4), np.zeros(12)][None, :], [1.0])
    # Tr(C X) = sum_b x_b Tr(C B_b)
    p.set_objective(X.idx, (C.T.reshape(-1) @ X.basis).real)
    s = solve(p)
    assert s.status == OPTIMAL
    assert abs(s.objective - np.linalg.eigvalsh(C)[0]) < 1e-7 * max(1, abs(s.objective))


@given(st.integers(0, 10_000))
def test_weak_duality_and_block_psd(seed):
    p, F0, F, c = lmi_instance(seed)
    s = solve(p)
    assert s.status == OPTIMAL
    # dual objective never exceeds the primal one beyond the stopping tolerance
    assert s.dual_objective <= s.objective + 1e-7 * (1 + abs(s.objective))
    assert np.linalg.eigvalsh(p.block_value(0, s.x)).min() > -1e-7
    for X in s.X:
        assert np.linalg.eigvalsh(X).min() > -1e-9


@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_objective_scaling_covariance(seed, alpha):
    p, *_ = lmi_instance(seed)
    s1 = solve(p)
    p.c = alpha * p.c
    s2 = solve(p)
    assert abs(s2.objective - alpha * s1.objective) < 1e-6 * (1 + abs(alpha * s1.objective))


@pytest.mark.parametrize("seed", range(5))
def test_agrees_with_cvxpy_on_random_6x6(seed):
    cp = pytest.importorskip("cvxpy")
    p, F0, F, c = lmi_instance(seed)
    s = solve(p)
    x = cp.Variable(len(F))
    expr = F0 + sum(x[i] * f for i, f in enumerate(F))
    prob = cp.Problem(cp.Minimize(c @ x), [embed_hermitian_cvx(cp, expr) >> 0])
    prob.solve(solver=cp.CLARABEL)
    assert abs(s.objective - prob.value) < 1e-5 * (1 + abs(prob.value))


def embed_hermitian_cvx(cp, expr):
    re, im = cp.real(expr), cp.imag(expr)
    m = cp.bmat([[re, -im], [im, re]])
    return (m + m.T) / 2


def test_herm_coeffs_roundtrip(rng):
    h = rand_herm(rng, 3)
    p = SdpProblem()
    X = p.add_herm_var(3)
    np.testing.assert_allclose(X.value(np.r_[herm_coeffs(h)]), h, atol=1e-12)


def test_embed_hermitian_preserves_spectrum(rng):
    h = rand_herm(rng, 3)
    w = np.linalg.eigvalsh(h)
    we = np.linalg.eigvalsh(embed_hermitian(h))
    np.testing.assert_allclose(np.sort(np.r_[w, w]), we, atol=1e-10)


def test_infeasible_detected():
    p = SdpProblem()
    x = p.add_vars(1)
    b1 = p.add_block(1, [[-1.0]])  # x >= 1
    p.add_entries(b1, x, [0], [0], 1.0)
    b2 = p.add_block(1, [[0.0]])  # x <= 0
    p.add_entries(b2, x, [0], [0], -1.0)
    p.set_objective(x, [1.0])
    assert solve(p).status == INFEASIBLE


def test_inconsistent_equalities_are_infeasible():
    p = SdpProblem()
    x = p.add_vars(1)
    b = p.add_block(1, [[1.0]])
    p.add_entries(b, x, [0], [0], 0.0)
    p.add_equalities(np.array([[1.0], [1.0]]), [1.0, 2.0])
    assert solve(p).status == INFEASIBLE


def test_unbounded_detected():
    p = SdpProblem()
    x = p.add_vars(1)
    b = p.add_block(1, [[1.0]])  # x <= 1, minimize x
    p.add_entries(b, x, [0], [0], -1.0)
    p.set_objective(x, [1.0])
    assert solve(p).status == UNBOUNDED


def test_pinned_point():
    p = SdpProblem()
    x = p.add_vars(1)
    b = p.add_block(1, [[0.0]])
    p.add_entries(b, x, [0], [0], 1.0)
    p.add_equalities(np.array([[1.0]]), [2.0])
    p.set_objective(x, [3.0])
    s = solve(p)
    assert s.status == OPTIMAL and s.objective == pytest.approx(6.0)


def test_json_roundtrip():
    p, *_ = lmi_instance(3)
    q = SdpProblem.from_json(json.dumps(p.to_json()))
    assert abs(solve(p).objective - solve(q).objective) < 1e-9


def test_maximize_sense():
    p = SdpProblem()
    x = p.add_vars(1)
    b = p.add_block(1, [[2.0]])  # x <= 2
    p.add_entries(b, x, [0], [0], -1.0)
    p.set_objective(x, [1.0], sense="max")
    assert solve(p).objective == pytest.approx(2.0, abs=1e-8)
