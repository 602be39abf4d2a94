"""Command-line front end: single queries, grid sweeps, bounds, census and strategy export."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .channels import ChannelError, channel_from_config
from .qfiengine import QfiRequest, default_tol, parallel_bound, qfi, sequential_bound
from .sdp import OPTIMAL
from .stratsets import KINDS, KindError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
STRICT = 1e-8  # census strictness threshold
AXES = {"p": "p", "t": "t", "g_tau": "g_tau", "g-tau": "g_tau", "gtau": "g_tau"}


class InputError(ValueError):
    pass


def fmt(v):
    return f"{float(v):.12g}"


def channel_config(args):
    """Channel config dict from --config or the family flags."""
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            cfg = json.loads(args.config)
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        return cfg
    cfg = {"family": args.family, "t": args.t}
    if args.family == "ad":
        cfg["p"] = args.p
    elif args.family == "swap":
        cfg["g_tau"] = args.g_tau
    elif args.family == "bruzda":
        cfg["seed"] = args.seed
    return cfg


def kinds_of(arg):
    if arg == "all":
        return list(KINDS)
    out = [k.strip() for k in arg.split(",") if k.strip()]
    if not out:
        raise InputError("--kind: at least one kind is required")
    for k in out:
        if k not in KINDS:
            raise InputError(f"--kind: unknown kind {k!r}")
    return out


def parse_grid(spec):
    try:
        axis, start, stop, count = spec.split(":")
        count = int(count)
        start, stop = float(start), float(stop)
    except ValueError:
        raise InputError(f"--grid expects axis:start:stop:count, got {spec!r}") from None
    if axis not in AXES:
        raise InputError(f"--grid: unknown axis {axis!r} (p, t or g_tau)")
    if count < 1:
        raise InputError("--grid: count must be >= 1")
    return AXES[axis], np.linspace(start, stop, count)


def _one(job):
    """Worker: solve one (config, N, kind) point; returns plain data."""
    cfg, N, kind, phi, tol, reduced = job
    ch = channel_from_config(cfg)
    res = qfi(QfiRequest(ch, N, kind, phi, tol, reduced and kind != "seq"))
    return {"J": res.J, "gap": res.gap, "status": res.status, "flagged": res.flagged, "wall": res.wall}


def run_jobs(jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def exit_for(statuses):
    return EXIT_OK if all(s == OPTIMAL for s in statuses) else EXIT_NUMERIC


# ---------------------------------------------------------------- commands


def cmd_qfi(args):
    cfg = channel_config(args)
    channel_from_config(cfg)  # validate before any solve
    kinds = kinds_of(args.kind)
    tol = args.tol or default_tol()
    jobs = [(cfg, args.n, k, args.phi, tol, args.reduced) for k in kinds]
    results = run_jobs(jobs, args.jobs)
    records = [
        {"kind": k, "N": args.n, "params": {**cfg, "phi": args.phi}, "J": r["J"], "gap": r["gap"],
         "wall_ms": round(1e3 * r["wall"], 3), "status": r["status"], "flagged": r["flagged"]}
        for k, r in zip(kinds, results)
    ]
    payload = records[0] if len(records) == 1 else records
    emit(json.dumps(payload, indent=None if len(records) == 1 else 1) + "\n", args.out)
    return exit_for(r["status"] for r in results)


def cmd_sweep(args):
    cfg = channel_config(args)
    kinds = kinds_of(args.kind)
    axis, grid = parse_grid(args.grid)
    tol = args.tol or default_tol()
    jobs = []
    for v in grid:
        c = dict(cfg, **{axis: float(v)})
        channel_from_config(c)
        jobs.extend((c, args.n, k, args.phi, tol, args.reduced) for k in kinds)
    results = run_jobs(jobs, args.jobs)
    order = [k for k in KINDS if k in kinds]
    pairs = list(zip(order, order[1:]))
    header = [axis] + [f"J_{k}" for k in kinds] + [f"gap_{b}_{a}" for a, b in pairs]
    rows = []
    for i, v in enumerate(grid):
        J = {k: results[i * len(kinds) + j]["J"] for j, k in enumerate(kinds)}
        rows.append([float(v)] + [J[k] for k in kinds] + [J[b] - J[a] for a, b in pairs])
    emit(csv_text(header, rows), args.out)
    return exit_for(r["status"] for r in results)


def cmd_bounds(args):
    cfg = channel_config(args)
    if args.grid:
        axis, grid = parse_grid(args.grid)
    else:
        axis = "t"
        grid = np.array([cfg.get("t", 1.0)])
    tol = args.tol or default_tol()
    rows, statuses, violations = [], [], []
    for v in grid:
        c = dict(cfg, **{axis: float(v)})
        ch = channel_from_config(c)
        jp = qfi(QfiRequest(ch, args.n, "par", args.phi, tol))
        js = qfi(QfiRequest(ch, args.n, "seq", args.phi, tol))
        pb = parallel_bound(ch, args.phi, args.n, tol)
        sb = sequential_bound(ch, args.phi, args.n, seed=args.seed, tol=tol)
        statuses += [jp.status, js.status]
        if jp.J > pb + 1e-7 or js.J > sb + 1e-7:
            violations.append(float(v))
        rows.append([float(v), jp.J, js.J, pb, sb])
    emit(csv_text([axis, "J_par", "J_seq", "parallel_bound", "sequential_bound"], rows), args.out)
    for r in rows:
        if r[3] > 0:
            print(f"{axis}={fmt(r[0])} shortfall_par={fmt((r[3] - r[1]) / r[3])} "
                  f"shortfall_seq={fmt((r[3] - r[2]) / r[3])}", file=sys.stderr)
    if violations:
        print(f"bound ordering violated at {axis} = {violations}", file=sys.stderr)
        return EXIT_VERIFY
    return exit_for(statuses)


def census(samples, seed, N=2, tol=None, reduced=False, n_workers=1):
    """Five J values for `samples` seeded random rank-2 qubit channels plus strictness counts."""
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(samples)] if samples else []
    jobs = [({"family": "bruzda", "seed": s, "rank": 2, "t": 1.0}, N, k, 1.0, tol or default_tol(), reduced)
            for s in seeds for k in KINDS]
    results = run_jobs(jobs, n_workers)
    per = []
    for i, s in enumerate(seeds):
        J = {k: results[i * len(KINDS) + j]["J"] for j, k in enumerate(KINDS)}
        per.append({"seed": s, **{f"J_{k}": J[k] for k in KINDS}})
    strict = sum(
        1 for r in per
        if r["J_seq"] - r["J_par"] > STRICT and r["J_sup"] - r["J_seq"] > STRICT and r["J_ico"] - r["J_sup"] > STRICT
    )
    summary = {
        "samples": samples,
        "seed": seed,
        "N": N,
        "threshold": STRICT,
        "strict_chain": strict,
        "par_lt_swi": sum(1 for r in per if r["J_swi"] - r["J_par"] > STRICT),
        "seq_lt_swi": sum(1 for r in per if r["J_swi"] - r["J_seq"] > STRICT),
        "numerical_limit": sum(1 for r in results if r["status"] != OPTIMAL),
    }
    if samples:
        summary["strict_fraction"] = strict / samples
        summary["seq_lt_swi_fraction"] = summary["seq_lt_swi"] / samples
    return summary, per


def cmd_census(args):
    if args.samples < 0:
        raise InputError("--samples must be >= 0")
    summary, per = census(args.samples, args.seed, args.n, args.tol, args.reduced, args.jobs)
    if args.out:
        header = ["seed"] + [f"J_{k}" for k in KINDS]
        with open(args.out, "w", newline="") as fh:
            fh.write(csv_text(header, [[r["seed"]] + [r[f"J_{k}"] for k in KINDS] for r in per]))
    print(json.dumps(summary))
    return EXIT_NUMERIC if summary["numerical_limit"] else EXIT_OK


def strategy_report(kind, ch, N, phi, tol, cfg):
    """qfi -> recover -> verify (-> realize for seq/sup); returns (export dict, ok)."""
    from .optstrat import (optimal_strategy, realize_comb, rebuild_comb, strategy_to_json,
                           symmetric_branch_comb, verify_strategy)

    res, s = optimal_strategy(ch, N, kind, phi, tol)
    rep = verify_strategy(s, res.model.fam, res.J)
    rep["J_dual"] = res.J
    rep["saddle_max"] = s.residuals["saddle_max"]
    seq = branches = None
    if kind in ("seq", "sup"):
        comb, branches = (s.ptilde, None) if kind == "seq" else symmetric_branch_comb(s)
        seq = realize_comb(comb, s.kind.dims)
        rep["isometry_errors"] = seq.isometry_errors()
        rep["ancilla_dims"] = seq.ancilla_dims
        rep["rebuild_error"] = float(np.abs(rebuild_comb(seq, s.kind.dims) - seq.combs[-1]).max())
    ok = rep["rel_err"] <= 1e-5 and rep["saddle_max"] <= 1e-6 and rep["min_eig"] >= -1e-7
    if seq is not None:
        ok = ok and max(rep["isometry_errors"]) <= 1e-8 and rep["rebuild_error"] <= 1e-7
    out = strategy_to_json(s, seq, report=rep, branches=branches)
    out["channel"] = cfg
    out["phi"] = phi
    return out, ok


def verify_export(data):
    """Re-verify an exported strategy: membership and state QFI against the stored J."""
    from .channels import choi_power
    from .optstrat import OptimalStrategy, verify_strategy
    from .stratsets import StrategyKind
    from .wirealg import LabeledOperator, Wire, purify

    try:
        kind = StrategyKind(data["kind"], int(data["N"]))
        pt = np.array(data["ptilde"], dtype=float)
        pt = pt[..., 0] + 1j * pt[..., 1]
        ch = channel_from_config(data["channel"])
        J = float(data["J"])
        phi = float(data.get("phi", 1.0))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed strategy file ({exc})") from None
    fam = choi_power(ch, kind.N, phi)
    rep = {}
    try:
        wires = [Wire(k, d) for k, d in enumerate(kind.dims, start=1)]
        _, vec = purify(LabeledOperator(wires, 0.5 * (pt + pt.conj().T)), "F", psd_tol=1e-7)
        s = OptimalStrategy(kind, pt, vec.reshape(pt.shape[0], -1), J, None)
        rep = verify_strategy(s, fam, J)
        ok = rep["rel_err"] <= 1e-5 and rep["dual_pairing"] <= 1e-7 and rep["min_eig"] >= -1e-7
    except Exception as exc:  # noqa: BLE001 - any failure is a verification failure here
        rep["error"] = f"{type(exc).__name__}: {exc}"
        ok = False
    return rep, ok


def cmd_strategy(args):
    if args.verify:
        with open(args.verify) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"strategy file is not JSON ({exc})") from None
        rep, ok = verify_export(data)
        print(json.dumps(rep, default=float))
        return EXIT_OK if ok else EXIT_VERIFY
    cfg = channel_config(args)
    ch = channel_from_config(cfg)
    kinds = kinds_of(args.kind)
    if len(kinds) != 1:
        raise InputError("strategy export needs a single --kind")
    out, ok = strategy_report(kinds[0], ch, args.n, args.phi, args.tol or default_tol(), cfg)
    emit(json.dumps(out) + "\n", args.out) if args.out else None
    print(json.dumps(out["report"], default=float))
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", default="ad", choices=["ad", "swap", "bruzda", "kraus"])
    common.add_argument("--p", type=float, default=0.5, help="amplitude-damping decay")
    common.add_argument("--t", type=float, default=1.0, help="evolution time")
    common.add_argument("--g-tau", dest="g_tau", type=float, default=0.5, help="partial-SWAP coupling angle")
    common.add_argument("--phi", type=float, default=1.0)
    common.add_argument("--n", type=int, default=2, help="number of channel uses")
    common.add_argument("--kind", default="all", help="par|seq|swi|sup|ico|all or a comma list")
    common.add_argument("--grid", default=None, help="axis:start:stop:count")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance (default: METROQ_TOL or 1e-9)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=50)
    common.add_argument("--out", default=None)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--reduced", action="store_true", help="use permutation-symmetry reduction")
    common.add_argument("--config", default=None, help="channel config JSON (file path or literal)")

    ap = argparse.ArgumentParser(prog="metroq", description="QFI of N channel uses under five strategy families")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("qfi", parents=[common], help="QFI for one channel and N").set_defaults(func=cmd_qfi)
    sub.add_parser("sweep", parents=[common], help="QFI over a parameter grid (CSV)").set_defaults(func=cmd_sweep)
    sub.add_parser("bounds", parents=[common], help="compare with asymptotic bounds (CSV)").set_defaults(func=cmd_bounds)
    sub.add_parser("census", parents=[common], help="hierarchy statistics over random channels").set_defaults(
        func=cmd_census)
    sp = sub.add_parser("strategy", parents=[common], help="recover, certify and export an optimal strategy")
    sp.add_argument("--verify", default=None, help="re-verify an exported strategy file")
    sp.set_defaults(func=cmd_strategy)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.n < 1:
        print("error: --n must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "sweep" and not args.grid:
        print("error: sweep needs --grid", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ChannelError, KindError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
