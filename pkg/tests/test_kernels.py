import os
import subprocess
import sys

import numpy as np
import pytest

from metroq import _kernels
from metroq.channels import choi_power, make_ad_channel
from metroq.perfop import PerfModel
from metroq.sdp import _BlockData
from metroq.stratsets import StrategyKind, build_dual

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba path disabled")


def block_data():
    dp = build_dual(StrategyKind("ico", 2), PerfModel(choi_power(make_ad_channel(0.5), 2, 1.0)))
    return _BlockData(dp.prob.blocks[0], dp.prob.n), dp.prob.n


@needs_numba
def test_numba_matches_numpy(rng):
    b, n = block_data()
    g = rng.standard_normal((b.side, b.side)) + 1j * rng.standard_normal((b.side, b.side))
    W = g @ g.conj().T
    a = (b.ptr, b.rows, b.cols, b.vals)
    np.testing.assert_allclose(_kernels.schur_sparse_sparse(*a, W, use_numba=True),
                               _kernels.schur_sparse_sparse(*a, W, use_numba=False), atol=1e-9)
    np.testing.assert_allclose(_kernels.adjoint_sparse(*a, W, use_numba=True),
                               _kernels.adjoint_sparse(*a, W, use_numba=False), atol=1e-10)
    dx = rng.standard_normal(len(b.ptr) - 1)
    np.testing.assert_allclose(_kernels.scatter_sparse(*a, dx, b.side, use_numba=True),
                               _kernels.scatter_sparse(*a, dx, b.side, use_numba=False), atol=1e-12)
    Y = np.stack([W, W.T])
    np.testing.assert_allclose(_kernels.schur_sparse_dense(*a, Y, use_numba=True),
                               _kernels.schur_sparse_dense(*a, Y, use_numba=False), atol=1e-10)


def test_env_flag_selects_numpy():
    code = "from metroq import _kernels; print(_kernels.backend())"
    env = dict(os.environ, METROQ_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_numpy_path_gives_same_qfi():
    code = ("from metroq import qfi, QfiRequest, make_ad_channel;"
            "print(repr(qfi(QfiRequest(make_ad_channel(0.5), 2, 'seq')).J))")
    env = dict(os.environ, METROQ_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert abs(float(out.stdout) - 2.179266698) < 1e-7
