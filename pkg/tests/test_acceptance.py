"""End-to-end acceptance checks, one test per criterion.

Each test records a verdict line through `record`; conftest prints them all
after the run so the summary shows one PASS/FAIL line per criterion.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from metroq.channels import make_ad_channel
from metroq.cli import census
from metroq.optstrat import optimal_strategy, realize_comb, rebuild_comb, recover_strategy, verify_strategy
from metroq.qfiengine import QfiRequest, parallel_bound, qfi, sequential_bound
from metroq.stratsets import KINDS
from metroq.symmetry import variable_counts

pytestmark = pytest.mark.slow

VERDICTS = {}

# N=3 amplitude damping, phi=1, t=1: p -> (J_sup, J_ico), three decimals
N3_TABLE = {
    0.1: (8.185, 8.200), 0.2: (7.364, 7.375), 0.3: (6.523, 6.524),
    0.4: (5.642, 5.647), 0.5: (4.725, 4.743), 0.6: (3.786, 3.815),
    0.7: (2.832, 2.870), 0.8: (1.871, 1.909), 0.9: (0.918, 0.930),
}


def record(key, ok, detail):
    VERDICTS.setdefault(key, []).append((bool(ok), detail))
    return ok


def J(ch, N, kind, **kw):
    r = qfi(QfiRequest(ch, N, kind, **kw))
    assert r.status == "Optimal", (kind, N, r.status)
    return r.J


def test_c1_golden_values():
    t0 = time.perf_counter()
    ch = make_ad_channel(0.5, 1.0)
    jp, js = J(ch, 2, "par"), J(ch, 2, "seq")
    pb = parallel_bound(ch, 1.0, 2)
    sequential_bound(ch, 1.0, 2)
    wall = time.perf_counter() - t0
    sp, ss = (pb - jp) / pb, (pb - js) / pb
    ok = (abs(jp - 1.795) <= 2e-3 and abs(js - 2.179) <= 2e-3 and abs(pb - 2.667) <= 2e-3
          and abs(100 * sp - 32.7) <= 1 and abs(100 * ss - 18.3) <= 1 and wall <= 10)
    record("1", ok, f"J_par={jp:.4f} J_seq={js:.4f} bound={pb:.4f} "
                    f"shortfall={100 * sp:.2f}%/{100 * ss:.2f}% wall={wall:.1f}s")
    assert ok


def test_c2_three_use_table():
    t0 = time.perf_counter()
    worst = 0.0
    for p, (sup_ref, ico_ref) in N3_TABLE.items():
        ch = make_ad_channel(p, 1.0)
        js = J(ch, 3, "sup")
        ji = J(ch, 3, "ico", reduced=True)
        worst = max(worst, abs(js - sup_ref), abs(ji - ico_ref))
    wall = time.perf_counter() - t0
    ok = worst <= 5e-3 and wall <= 1800
    record("2", ok, f"max |dJ|={worst:.2e} over 9 rows, wall={wall:.0f}s")
    assert ok


def test_c3_hierarchy_on_grid():
    grid = np.round(np.arange(0.05, 0.951, 0.05), 2)
    chain_viol, strict_fail, supico = [], [], 0.0
    for p in grid:
        ch = make_ad_channel(float(p), 1.0)
        v = {k: J(ch, 2, k) for k in ("par", "seq", "sup", "ico")}
        if not (v["par"] <= v["seq"] + 1e-7 and v["seq"] <= v["sup"] + 1e-7 and v["sup"] <= v["ico"] + 1e-7):
            chain_viol.append(float(p))
        if 0.35 <= p <= 0.45 and not (v["seq"] - v["par"] > 1e-4 and v["ico"] - v["seq"] > 1e-4):
            strict_fail.append(float(p))
        supico = max(supico, abs(v["sup"] - v["ico"]))
    ok = not chain_viol and not strict_fail and supico <= 1e-6
    record("3", ok, f"{len(grid)} points, chain violations={chain_viol}, "
                    f"strict-gap failures={strict_fail}, max|Sup-Ico|={supico:.1e}")
    assert ok


def test_c4_switch_beats_sequential():
    ch = make_ad_channel(0.2, 1.0)
    jw, js = J(ch, 2, "swi"), J(ch, 2, "seq")
    ok = jw - js > 1e-4
    record("4", ok, f"J_swi-J_seq={jw - js:.4e}")
    assert ok


@pytest.mark.parametrize("kind", KINDS)
def test_c5_primal_dual_certification(kind):
    worst_rel = worst_saddle = worst_input = 0.0
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        r, s = optimal_strategy(make_ad_channel(p, 1.0), 2, kind)
        rep = verify_strategy(s, r.model.fam, r.J)
        worst_rel = max(worst_rel, rep["rel_err"])
        worst_saddle = max(worst_saddle, s.residuals["saddle_max"])
        worst_input = max(worst_input, s.residuals["saddle_max_input_h"])
    ok = worst_rel <= 1e-5 and worst_saddle <= 1e-6
    record("5", ok, f"{kind}: rel={worst_rel:.1e} saddle={worst_saddle:.1e} (solver h: {worst_input:.1e})")
    assert ok


def test_c6_comb_realization():
    ch = make_ad_channel(0.5, 1.0)
    r = qfi(QfiRequest(ch, 2, "seq"))
    s = recover_strategy("seq", r.model, r.h_opt)
    seq = realize_comb(s.ptilde, s.kind.dims)
    iso = max(seq.isometry_errors())
    rebuild = float(np.abs(rebuild_comb(seq, s.kind.dims) - seq.combs[-1]).max())
    anc = list(seq.ancilla_dims)
    ok = iso <= 1e-8 and anc[0] <= 2 and anc[1] <= 8 and rebuild <= 1e-7
    record("6", ok, f"isometry={iso:.1e} ancilla={anc} rebuild={rebuild:.1e}")
    assert ok


@pytest.mark.parametrize("N", [2, 3])
def test_c7_reduced_equals_unreduced(N):
    ch = make_ad_channel(0.5, 1.0)
    full = qfi(QfiRequest(ch, N, "ico"))
    red = qfi(QfiRequest(ch, N, "ico", reduced=True))
    rel = abs(red.J - full.J) / abs(full.J)
    ok = red.status == full.status == "Optimal" and rel <= 1e-6
    record("7", ok, f"N={N}: reduced vs unreduced rel={rel:.1e}")
    assert ok


@pytest.mark.parametrize("N,expected", [(2, 273), (3, 837)])
def test_c7_reduced_variable_count(N, expected):
    got = qfi(QfiRequest(make_ad_channel(0.5, 1.0), N, "ico", reduced=True)).n_vars
    unreduced = variable_counts(N)[0]
    ok = got == expected
    record("7", ok, f"N={N}: reduced real variables={got} (expected {expected}; "
                    f"unreduced {unreduced})")
    assert got == expected


def test_c7_scaling_with_n():
    ch = make_ad_channel(0.5, 1.0)
    js = [J(ch, 1, "ico")]
    for N in (2, 3):
        js.append(J(ch, N, "ico", reduced=True))
    t0 = time.perf_counter()
    js.append(J(ch, 4, "ico", reduced=True))
    wall = time.perf_counter() - t0
    per = [j / n for n, j in enumerate(js, start=1)]
    per2 = [j / n ** 2 for n, j in enumerate(js, start=1)]
    ok = (wall <= 600 and all(a < b for a, b in zip(per, per[1:]))
          and all(a > b for a, b in zip(per2, per2[1:])))
    record("7", ok, f"N=4 wall={wall:.0f}s J/N=" + ",".join(f"{x:.3f}" for x in per))
    assert ok


def test_c8_census():
    summary, _ = census(50, seed=0, N=2)
    frac, swi = summary["strict_fraction"], summary["seq_lt_swi_fraction"]
    ok = frac >= 0.9 and swi <= 0.1 and summary["numerical_limit"] == 0
    record("8", ok, f"strict chain {summary['strict_chain']}/50, seq<swi {summary['seq_lt_swi']}/50, "
                    f"numerical limit {summary['numerical_limit']}")
    assert ok


def test_c9_property_suites():
    here = Path(__file__).parent
    files = sorted(str(f) for f in here.glob("test_*.py") if f.name != Path(__file__).name)
    env = dict(os.environ)
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                          capture_output=True, text=True, env=env, cwd=here.parent)
    wall = time.perf_counter() - t0
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and wall <= 300
    record("9", ok, f"{last.strip('= ')} ({wall:.0f}s)")
    assert ok, proc.stdout[-2000:]
