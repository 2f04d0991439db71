"""Command-line entry point: ``obcsaa {run,plot,solve,bounds}``."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bounds as B
from . import scheduler as sch
from .errors import OBCSAAError


def _cmd_run(args):
    from .harness import ExperimentConfig, emit_plots, run_experiment

    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides.update(master_seed=args.seed, repeats=1)
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.out is not None:
        overrides["output_dir"] = str(Path(args.out).resolve())
    if overrides:
        cfg = cfg.override(**overrides)
    table = run_experiment(cfg, modes=args.mode)
    out = cfg.output_dir
    files = [] if args.no_plots else [str(p) for p in emit_plots(table, out)]
    return {"status": "ok", "rows": len(table), "metrics": str(out / "metrics.csv"), "plots": files}


def _cmd_plot(args):
    from .harness import MetricsTable, emit_plots

    table = MetricsTable.read_csv(args.metrics)
    out = args.out or Path(args.metrics).parent
    return {"status": "ok", "plots": [str(p) for p in emit_plots(table, out)]}


def _cmd_solve(args):
    if args.instance:
        inst = sch.SchedulerInstance.from_record(json.loads(Path(args.instance).read_text()))
    else:
        params = B.BoundParams(sigma2=args.sigma2)
        inst = sch.random_instance(np.random.default_rng(args.seed), args.U, params=params)
    admm = {"step_c": args.step_c, "max_iter": args.max_iter}
    res = sch.solve(inst, args.solver, cap=args.cap, **(admm if args.solver != "enumeration" else {}))
    return {"status": "ok", **res.to_record(), "instance": inst.to_record() if args.echo else None}


def _cmd_bounds(args):
    doc = json.loads(Path(args.params).read_text()) if args.params else {}
    for key in ("L", "rho1", "rho2", "G", "delta", "kappa", "S", "D", "sigma2"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.K is not None:
        doc["K"] = args.K
    if args.loose_rip:
        doc["strict_rip"] = False
    beta = doc.pop("beta", None)
    b = doc.pop("b", None)
    if "K" in doc:
        doc["K"] = tuple(doc["K"])
    p = B.BoundParams(**doc)
    beta = args.beta if args.beta is not None else (beta if beta is not None else [1] * p.U)
    b = args.b if args.b is not None else (b if b is not None else 1.0)
    rep = B.round_report(p, beta, b)
    varpi, varrho, c = B.rip_constants(p.delta, strict=p.strict_rip)
    return {"status": "ok", **rep.as_dict(), "R_t": 2 * p.L * rep.b_term, "varpi": varpi, "varrho": varrho, "C": c}


def build_parser():
    ap = argparse.ArgumentParser(prog="obcsaa", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", help="JSON config (defaults table applies to missing keys)")
    r.add_argument("--seed", type=int, help="override master_seed and run a single repeat")
    r.add_argument("--mode", action="append", choices=["perfect", "obcsaa"], help="restrict to a mode (repeatable)")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--rounds", type=int, help="override the number of rounds")
    r.add_argument("--no-plots", action="store_true", help="skip SVG emission")
    r.set_defaults(func=_cmd_run)

    p = sub.add_parser("plot", help="emit SVG charts from a metrics.csv")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", help="directory for the SVG files (default: next to the CSV)")
    p.set_defaults(func=_cmd_plot)

    s = sub.add_parser("solve", help="solve one scheduling instance")
    s.add_argument("--instance", help="JSON instance record (U, h, K, Pmax and bound constants)")
    s.add_argument("--U", type=int, default=6, help="random instance size when --instance is absent")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma2", type=float, default=1e-4)
    s.add_argument("--solver", choices=["auto", "enumeration", "admm"], default="auto")
    s.add_argument("--cap", type=int, default=sch.ENUMERATION_CAP)
    s.add_argument("--step-c", type=float, default=1.0)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--echo", action="store_true", help="include the instance in the output")
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("bounds", help="print the per-round bound report")
    b.add_argument("--params", help="JSON with BoundParams fields (and optionally beta, b)")
    for key in ("L", "rho1", "rho2", "G", "delta", "sigma2"):
        b.add_argument(f"--{key}", type=float)
    for key in ("kappa", "S", "D"):
        b.add_argument(f"--{key}", type=int)
    b.add_argument("--K", type=int, nargs="+")
    b.add_argument("--beta", type=int, nargs="+")
    b.add_argument("--b", type=float)
    b.add_argument("--loose-rip", action="store_true", help="accept delta in (0, 1)")
    b.set_defaults(func=_cmd_bounds)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = args.func(args)
    except (OBCSAAError, OSError, ValueError, KeyError, TypeError) as exc:
        print(json.dumps({"status": "error", "command": args.command, "error": type(exc).__name__,
                          "message": str(exc)}))
        return 1
    print(json.dumps({k: v for k, v in out.items() if v is not None}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
