"""Command-line interface: discovery runs, policy evaluation and report tables."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dcopf import build_dcopf, build_ptdf, dispatch_mw, load_network
from .discovery import DiscoveryConfig, DiscoveryRun, ProgramSource, TerminatedBy
from .errors import ActiveSetError
from .parametric import ActiveSetKey, Sample, solve_for_sample
from .policy import evaluate_policy
from .sampling import DistributionSpec, draw, make_distribution
from .synthetic import low_complexity_profile
from .validation import complexity_check, run_trials, stopping_check

log = logging.getLogger("activeset")

RESULT_SCHEMA = "activeset-result/1"
EVAL_SCHEMA = "activeset-eval/1"


class CliError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _case_args(p):
    p.add_argument("--case", required=True, help="network file (MATPOWER .m or JSON)")
    p.add_argument("--format", choices=["matpower", "json"], default=None,
                   help="input format (default: from the file extension)")


def _dist_args(p):
    p.add_argument("--dist", choices=["normal", "uniform"], default="normal")
    p.add_argument("--sigma-frac", type=float, default=0.03)
    p.add_argument("--support-sigmas", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)


def _algo_args(p, alpha=0.05, epsilon=0.04, delta=0.01, gamma=2.0, max_m=22000):
    p.add_argument("--alpha", type=float, default=alpha)
    p.add_argument("--epsilon", type=float, default=epsilon)
    p.add_argument("--delta", type=float, default=delta)
    p.add_argument("--gamma", type=float, default=gamma)
    p.add_argument("--max-m", type=int, default=max_m)


def _load(args):
    path = Path(args.case)
    if not path.is_file():
        raise CliError(f"file not found: {path}")
    return load_network(path, args.format)


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_discover(args) -> int:
    network = _load(args)
    program = build_dcopf(network)
    spec = DistributionSpec(args.dist, args.sigma_frac, args.support_sigmas, args.seed)
    dist = make_distribution(spec, network)
    config = DiscoveryConfig(args.alpha, args.epsilon, args.delta, args.gamma, args.max_m)
    source = ProgramSource(program, dist)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(ev):
        if ev["M"] % 100 == 0:
            log.info("M=%d W=%d R=%.4f K=%d", ev["M"], ev["W"], ev["rate"], ev["K"])

    snap_path = out / "snapshot.json"
    if args.resume and snap_path.exists():
        run = DiscoveryRun.from_snapshot(json.loads(snap_path.read_text()), config, source,
                                         jobs=args.jobs, progress=progress)
    else:
        run = DiscoveryRun(config, source, jobs=args.jobs, progress=progress)
    result = run.advance()
    _write_json(snap_path, run.snapshot())

    catalog = [
        {"key": source.encode_key(k), "rows": list(k.rows), "labels": program.key_labels(k),
         "frequency": f}
        for k, f in zip(result.keys, result.frequencies)
    ]
    doc = {
        "schema": RESULT_SCHEMA,
        "case": {"path": str(Path(args.case).resolve()), "format": args.format,
                 "name": network.name, "fingerprint": network.fingerprint(),
                 "n": program.n, "m": program.m},
        "distribution": {"kind": spec.kind.value, "sigma_fraction": spec.sigma_fraction,
                         "support_sigmas": spec.support_sigmas, "seed": spec.seed},
        "result": result.to_dict(source),
        "catalog": catalog,
        "metadata": {"wall_clock_s": result.wall_clock, "version": __version__,
                     "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds")},
    }
    _write_json(out / "result.json", doc)
    with open(out / "keys.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "frequency", "labels"])
        for entry in catalog:
            w.writerow([entry["key"], f"{entry['frequency']:.6f}", " ".join(entry["labels"])])
    rate = _fmt(result.rate) if result.rate else "0.0"
    print(f"K={result.K} M={result.M} W={result.W} R={rate}"
          + ("" if result.terminated_by is TerminatedBy.STOPPING_RULE else " (max M reached)"))
    return 0


def _read_result(path):
    path = Path(path)
    if path.is_dir():
        path = path / "result.json"
    if not path.is_file():
        raise CliError(f"file not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("schema") != RESULT_SCHEMA:
        raise CliError(f"{path} is not a discovery result")
    return path, doc


def cmd_evaluate(args) -> int:
    rpath, doc = _read_result(args.result)
    case_path = Path(args.case or doc["case"]["path"])
    if not case_path.is_file():
        raise CliError(f"file not found: {case_path}")
    network = load_network(case_path, args.format or doc["case"]["format"])
    if network.fingerprint() != doc["case"]["fingerprint"]:
        raise CliError(f"result {rpath} was produced for a different case than {case_path}")
    program = build_dcopf(network)
    d = doc["distribution"]
    spec = DistributionSpec(d["kind"], d["sigma_fraction"], d["support_sigmas"], d["seed"])
    dist = make_distribution(spec, network)
    keys = [ActiveSetKey.from_hex(k, program.m) for k in doc["result"]["keys"]]
    eval_seed = args.eval_seed if args.eval_seed is not None else spec.seed
    report = evaluate_policy(keys, program, dist, args.n_test, eval_seed=eval_seed)
    out = Path(args.out) if args.out else rpath.parent
    out.mkdir(parents=True, exist_ok=True)
    edoc = {"schema": EVAL_SCHEMA, "result_fingerprint": doc["result"]["source_fingerprint"],
            "case": doc["case"]["name"], "distribution": d["kind"],
            "report": json.loads(report.to_json())}
    _write_json(out / "eval.json", edoc)
    (out / "eval.csv").write_text(report.to_csv(doc["case"]["name"]))
    print(f"P(p*)={_fmt(report.success_probability)}")
    return 0


TABLE_FIELDS = ("K_M", "M", "W_M", "R_M,W", "P(p*)")


def table_rows(entries):
    """Group (result, eval-or-None) documents into one row per case.

    Returns ``(distributions, rows)`` where each row maps ``(dist, field)`` to a string.
    """
    dists, rows = [], {}
    for res, ev in entries:
        case = res["case"]["name"]
        dist = res["distribution"]["kind"]
        if dist not in dists:
            dists.append(dist)
        r = res["result"]
        terminated = r["terminated_by"] == TerminatedBy.STOPPING_RULE.value
        p = _fmt(ev["report"]["success_probability"]) if (ev and terminated) else "-"
        row = rows.setdefault(case, {"case": case})
        row[(dist, "K_M")] = r["K_M"]
        row[(dist, "M")] = r["M"]
        row[(dist, "W_M")] = r["W_M"]
        row[(dist, "R_M,W")] = _fmt(r["rate"])
        row[(dist, "P(p*)")] = p
    order = sorted(rows.values(), key=lambda row: (row.get((dists[0], "K_M"), 0), row["case"]))
    return dists, order


def render_table(dists, rows, fmt="markdown") -> str:
    multi = len(dists) > 1
    header = ["case"] + [f"{f} [{d}]" if multi else f for d in dists for f in TABLE_FIELDS]
    body = [[row["case"]] + [str(row.get((d, f), "-")) for d in dists for f in TABLE_FIELDS]
            for row in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        return buf.getvalue()
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def cmd_table(args) -> int:
    if not args.inputs:
        raise CliError("table needs at least one result")
    entries = []
    for token in args.inputs:
        rpart, _, epart = token.partition(",")
        rpath, res = _read_result(rpart)
        epath = Path(epart) if epart else rpath.parent / "eval.json"
        ev = None
        if epath.is_file():
            ev = json.loads(epath.read_text())
            if ev.get("schema") != EVAL_SCHEMA:
                raise CliError(f"{epath} is not an evaluation report")
            if ev.get("result_fingerprint") != res["result"]["source_fingerprint"]:
                raise CliError(f"{epath} does not belong to {rpath}")
        elif epart:
            raise CliError(f"file not found: {epath}")
        entries.append((res, ev))
    text = render_table(*table_rows(entries), fmt=args.table_format)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_validate_theorems(args) -> int:
    if args.trials < 50:
        raise CliError("validate-theorems needs at least 50 trials")
    config = DiscoveryConfig(args.alpha, args.epsilon, args.delta, args.gamma, args.max_m)
    print(f"config: alpha={config.alpha} epsilon={config.epsilon} delta={config.delta} "
          f"gamma={config.gamma}, {args.trials} trials")
    ok = True
    single = low_complexity_profile(1, 0.0, 0)
    outs = run_trials(single, config, args.trials, seed0=args.seed)
    check = stopping_check(outs, config)
    print(f"[single atom] {check.line()}")
    ok &= check.passed

    profile = low_complexity_profile(args.k0, args.alpha0, args.tail)
    outs = run_trials(profile, config, args.trials, seed0=args.seed)
    for check in (stopping_check(outs, config),
                  complexity_check(outs, config, args.k0, args.alpha0, args.delta0)):
        print(f"[K0={args.k0}, alpha0={args.alpha0}, tail={args.tail}] {check.line()}")
        ok &= check.passed
    Ms = np.array([o.M for o in outs])
    print(f"termination M: min {Ms.min()} median {int(np.median(Ms))} max {Ms.max()}")
    return 0 if ok else 1


def cmd_solve(args) -> int:
    network = _load(args)
    program = build_dcopf(network)
    if args.sample_index:
        spec = DistributionSpec(args.dist, args.sigma_frac, args.support_sigmas, args.seed)
        sample = draw(make_distribution(spec, network), args.sample_index)
    else:
        sample = Sample(np.zeros(program.sample_dim), 0)
    sol, key = solve_for_sample(program, sample)
    print(f"objective {sol.objective:.4f} $/h")
    for gen, p in zip(network.generators, dispatch_mw(program, sol.point)):
        print(f"  gen@bus{gen.bus}: {p:.4f} MW")
    print("active set: " + (", ".join(program.key_labels(key)) or "(none)"))
    return 0


def cmd_ptdf(args) -> int:
    network = _load(args)
    ptdf = build_ptdf(network)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["branch"] + [f"bus{b}" for b in ptdf.bus_ids])
    for k, (br, row) in enumerate(zip(network.branches, ptdf.entries)):
        w.writerow([f"{k}:{br.from_bus}-{br.to_bus}"] + [f"{v:.6g}" for v in row])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeset", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="learn the relevant active sets of a DC-OPF case")
    _case_args(p)
    _dist_args(p)
    _algo_args(p)
    p.add_argument("--out", default="run")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resume", action="store_true", help="continue from OUT/snapshot.json")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("evaluate", help="out-of-sample test of the ensemble policy")
    p.add_argument("--result", required=True, help="result.json or its run directory")
    p.add_argument("--case", default=None, help="override the case path stored in the result")
    p.add_argument("--format", choices=["matpower", "json"], default=None)
    p.add_argument("--n-test", type=int, default=20000)
    p.add_argument("--eval-seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("table", help="render results as a table")
    p.add_argument("inputs", nargs="*", help="RESULT[,EVAL] paths or run directories")
    p.add_argument("--table-format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("validate-theorems", help="Monte-Carlo check of the discovery guarantees")
    p.add_argument("--trials", type=int, default=200)
    _algo_args(p, alpha=0.1, epsilon=0.05, delta=0.05, gamma=2.0, max_m=22000)
    p.add_argument("--k0", type=int, default=10)
    p.add_argument("--alpha0", type=float, default=0.01)
    p.add_argument("--tail", type=int, default=1000)
    p.add_argument("--delta0", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_validate_theorems)

    p = sub.add_parser("solve", help="one-shot DC-OPF solve")
    _case_args(p)
    _dist_args(p)
    p.add_argument("--sample-index", type=int, default=0,
                   help="solve for this sample of the distribution (0: nominal loads)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ptdf", help="print the PTDF matrix as CSV")
    _case_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ptdf)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "n_test", 1) < 1:
        parser.error("--n-test must be at least 1")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (CliError, ActiveSetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
