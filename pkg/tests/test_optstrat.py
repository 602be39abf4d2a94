import numpy as np
import pytest

from metroq.channels import make_ad_channel, sample_bruzda_channel
from metroq.optstrat import (isometry_qfi, optimal_strategy, realize_comb, rebuild_comb, recover_strategy,
                             saddle_derivatives, stationary_gauge, symmetric_branch_comb, verify_strategy)
from metroq.qfiengine import QfiRequest, qfi
from metroq.stratsets import KINDS


def solved(ch, kind, N=2):
    r = qfi(QfiRequest(ch, N, kind))
    return r, recover_strategy(kind, r.model, r.h_opt)


@pytest.mark.parametrize("kind", KINDS)
def test_recovered_strategy_attains_dual_value(kind):
    r, s = solved(make_ad_channel(0.4), kind)
    rep = verify_strategy(s, r.model.fam, r.J)
    assert rep["rel_err"] <= 1e-5
    assert rep["dual_pairing"] <= 1e-7
    assert rep["min_eig"] >= -1e-8
    assert abs(rep["trace_rho"] - 1) < 1e-8
    assert np.abs(saddle_derivatives(r.model, s.h, s.ptilde)).max() <= 1e-6


def test_saddle_derivative_matches_finite_difference():
    r, s = solved(make_ad_channel(0.4), "seq")
    rng = np.random.default_rng(0)
    h = s.h + 0.1 * (lambda g: g + g.conj().T)(rng.standard_normal(s.h.shape) + 1j * rng.standard_normal(s.h.shape))
    d = saddle_derivatives(r.model, h, s.ptilde)
    eps = 1e-6
    for b in (0, 3, 7):
        H = r.model.basis[b]
        f = lambda x: np.trace(s.ptilde @ r.model.omega_matrix(h + x * H)).real  # noqa: E731
        assert d[b] == pytest.approx((f(eps) - f(-eps)) / (2 * eps), abs=1e-5)


def test_sequential_realization():
    ch = make_ad_channel(0.5)
    r, s = solved(ch, "seq")
    seq = realize_comb(s.ptilde, s.kind.dims)
    assert max(seq.isometry_errors()) <= 1e-8
    assert seq.ancilla_dims[0] <= 2 and seq.ancilla_dims[1] <= 8
    assert np.abs(rebuild_comb(seq, s.kind.dims) - seq.combs[-1]).max() <= 1e-7
    # running the isometries against the channel reproduces the certified QFI
    assert isometry_qfi(seq, ch, 1.0) == pytest.approx(r.J, rel=1e-6)


def test_superposition_branch_comb_is_sequential():
    ch = sample_bruzda_channel(3)
    r, s = solved(ch, "sup")
    comb, branches = symmetric_branch_comb(s)
    assert len(branches) == 2 and sum(w for _, w in branches) == pytest.approx(1.0)
    seq = realize_comb(comb, s.kind.dims)
    assert max(seq.isometry_errors()) <= 1e-8
    assert np.abs(rebuild_comb(seq, s.kind.dims) - seq.combs[-1]).max() <= 1e-7


def test_random_channel_certification():
    ch = sample_bruzda_channel(17)
    for kind in ("par", "ico"):
        r, s = solved(ch, kind)
        assert verify_strategy(s, r.model.fam, r.J)["rel_err"] <= 1e-5


def test_certified_strategy_on_rank_deficient_optimum():
    # the parallel optimum at p=0.3 has a low-rank probe; a default-accuracy gauge misses the saddle
    r, s = optimal_strategy(make_ad_channel(0.3), 2, "par")
    assert s.residuals["saddle_max"] <= 1e-9
    assert verify_strategy(s, r.model.fam, r.J)["rel_err"] <= 1e-8


def test_stationary_gauge_is_dual_optimal():
    r, s = optimal_strategy(make_ad_channel(0.5), 2, "seq")
    h, lam = stationary_gauge(s.kind, r.model, s.ptilde)
    assert lam == pytest.approx(r.J, rel=1e-7)
    assert np.abs(saddle_derivatives(r.model, h, s.ptilde)).max() <= 1e-7
