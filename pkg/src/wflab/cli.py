"""Command-line entry point: ``wflab <stage> --config FILE``.

Exit codes: 0 all stage checks pass, 1 precondition error (including a
metric that is not positive), 2 acceptance failure, 3 numerical diagnostic.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConstructionError, NumericalDiagnostic, PreconditionError

EXIT_OK, EXIT_PRECONDITION, EXIT_ACCEPTANCE, EXIT_NUMERICAL = 0, 1, 2, 3
STAGE_COMMANDS = ("spectrum", "kernel", "norm", "wavefront", "run")


def _common(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI experiment file")
    src.add_argument("--preset", help="shipped preset name (flat-d1, flat-d2, rough-tau2.7, rough-C11, rough-tau3.5)")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--threads", type=int, help="worker threads for scans")
    p.add_argument("--seed", type=int, help="seed for quasi-random sampling")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wflab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {"spectrum": "eigenbasis, spectrum CSV and Weyl fit",
             "kernel": "sampled kernel symmetries, d_t K_A = K_G and causal support",
             "norm": "windowed kernel norm partial sums",
             "wavefront": "wavefront scan and comparison with the light-cone relation",
             "run": "all stages listed in the config"}
    for name in STAGE_COMMANDS:
        _common(sub.add_parser(name, help=helps[name]))
    g = sub.add_parser("geodesic", help="integrate one null bicharacteristic")
    _common(g)
    g.add_argument("--start", required=True, help="'t x' start point")
    g.add_argument("--covector", required=True, help="'xi0 xi' null covector")
    g.add_argument("--T", type=float, default=2.0, help="signed time span")
    r = sub.add_parser("report", help="summarize run records")
    r.add_argument("records", nargs="+", help="runs.jsonl files or output directories")
    r.add_argument("--out", help="directory for summary.json and summary.txt")
    r.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args):
    from .config import load_config, load_preset

    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        raise PreconditionError("one of --config or --preset is required")
    return cfg.with_overrides(out=args.out, threads=args.threads, seed=args.seed)


def _geodesic(args) -> int:
    from .microlocal import hamiltonian_flow
    from .pipeline import write_csv

    cfg = _load(args)
    metric = cfg.build_metric()
    start = np.array([float(v) for v in args.start.split()])
    cov = np.array([float(v) for v in args.covector.split()])
    curve = hamiltonian_flow(metric, (start, cov), args.T)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(t, *x, curve.xi0, *xi) for t, x, xi in zip(curve.t, curve.x, curve.xi)]
    header = ["t"] + ["x%d" % i for i in range(metric.dim)] + ["xi0"] + ["xi%d" % i for i in range(metric.dim)]
    write_csv(out / "geodesic.csv", header, rows)
    ok = curve.p2_max <= 1e-7
    print("endpoint t=%.6g x=%s  max|p2|/(1+|xi|^2)=%.3e  %s" % (
        curve.t[-1], np.array2string(curve.x[-1], precision=8), curve.p2_max, "ok" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def _report(args) -> int:
    from .pipeline import read_records
    from .report import dumps, render_text, summarize

    recs = []
    for path in args.records:
        recs += read_records(path)
    summary = summarize(recs)
    text = render_text(summary)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(dumps(summary))
        (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if summary["all_passed"] else EXIT_ACCEPTANCE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            return _report(args)
        if args.command == "geodesic":
            return _geodesic(args)
        from .pipeline import run

        cfg = _load(args)
        stages = None if args.command == "run" else (("wavefront", "compare") if args.command == "wavefront"
                                                      else (args.command,))
        rec = run(cfg, stages)
        for v in rec.verdicts:
            val = v["value"]
            print("%-4s %-34s value=%s limit=%s" % ("ok" if v["passed"] else "FAIL", v["name"],
                                                   "none" if val is None else "%.4g" % val, v["limit"]))
        print("record: %s/%s-%s/record.json" % (cfg.out, cfg.name, cfg.hash[:8]))
        return EXIT_OK if rec.passed else EXIT_ACCEPTANCE
    except NumericalDiagnostic as exc:
        print("numerical diagnostic: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL
    except (PreconditionError, ConstructionError) as exc:
        print("precondition error: %s" % exc, file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
