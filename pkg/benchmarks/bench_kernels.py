"""Compare the numba and numpy Schur-assembly kernels on real LMI blocks.

Usage: python benchmarks/bench_kernels.py [--n 2] [--kind ico] [--repeat 5]

Both paths are timed in one process (the numpy path is called explicitly),
and the outputs are checked to agree before any timing is reported.
"""

import argparse
import time

import numpy as np

from metroq import _kernels
from metroq.channels import choi_power, make_ad_channel
from metroq.perfop import PerfModel
from metroq.sdp import _BlockData
from metroq.stratsets import StrategyKind, build_dual


def best_of(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--kind", default="ico")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    model = PerfModel(choi_power(make_ad_channel(0.5), args.n, 1.0))
    dp = build_dual(StrategyKind(args.kind, args.n), model)
    n = dp.prob.n
    rng = np.random.default_rng(0)
    print(f"backend available: {_kernels.backend()}  kind={args.kind} N={args.n} vars={n}")
    print(f"{'block':>5} {'side':>5} {'sparse':>7} {'entries':>8} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for i, blk in enumerate(dp.prob.blocks):
        b = _BlockData(blk, n)
        if len(b.sparse_vars) == 0:
            continue
        g = rng.standard_normal((b.side, b.side)) + 1j * rng.standard_normal((b.side, b.side))
        W = g @ g.conj().T / b.side
        args_ = (b.ptr, b.rows, b.cols, b.vals, W)
        t_np, m_np = best_of(lambda: _kernels.schur_sparse_sparse(*args_, use_numba=False), args.repeat)
        if _kernels.HAVE_NUMBA:
            _kernels.schur_sparse_sparse(*args_, use_numba=True)  # compile
            t_nb, m_nb = best_of(lambda: _kernels.schur_sparse_sparse(*args_, use_numba=True), args.repeat)
            err = np.abs(m_np - m_nb).max() / max(1.0, np.abs(m_np).max())
            assert err < 1e-10, f"kernel mismatch {err:.2e}"
            nb = f"{1e3 * t_nb:10.2f} {t_np / t_nb:8.1f}x"
        else:
            nb = f"{'n/a':>10} {'':>8}"
        print(f"{i:5d} {b.side:5d} {len(b.sparse_vars):7d} {len(b.rows):8d} {1e3 * t_np:10.2f} {nb}")


if __name__ == "__main__":
    main()
