"""Command-line interface.

::

    didmulti estimate --input panel.csv --out-dir out --trim-k 2 --plot
    didmulti placebo  --input panel.csv --out-dir out --bootstrap 200
    didmulti diagnose --input panel.csv --out-dir out --spec prop3 --lags 2
    didmulti simulate --config parallel_trends --out-dir out

Exit codes: 0 success, 1 simulation assertions failed, 2 invalid input or
configuration, 3 estimation failure. Outputs are written only after every
computation succeeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .estimator import analyze
from .exceptions import ConfigError, DIDError, EstimationError, RankDeficientError
from .inference import BootstrapSpec, z_quantile
from .output import OutputBundle, RunManifest
from .panel import file_digest, ingest_csv
from .placebos import placebo_study
from .plotting import event_study_svg
from .simulate import SimConfig, bundled_config, run_monte_carlo
from .twfe import prop1_weights, prop3_weights, prop4_weights
from .validation import check_discount

log = logging.getLogger("didmulti")

EXIT_OK, EXIT_ASSERT, EXIT_INPUT, EXIT_ESTIMATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", help="panel CSV (UTF-8, header row)")
    p.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    p.add_argument("--group", default="group", help="group column")
    p.add_argument("--time", default="time", help="period column")
    p.add_argument("--outcome", default="outcome", help="outcome column")
    p.add_argument("--treatment", default="treatment", help="treatment column")
    p.add_argument("--weight", default=None, help="cell-size or observation weight column")
    p.add_argument("--beta", type=float, default=1.0, help="discount factor in (0, 1]")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="didmulti",
        description="Event-study DID estimators, placebos and TWFE diagnostics for "
                    "panels with non-binary, non-absorbing treatments.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[common], help="event-study effects")
    est.add_argument("--trim-k", type=int, default=None,
                     help="also report the aggregate over horizons 0..k")
    est.add_argument("--arm", choices=["plus", "minus", "combined"], default="plus")
    est.add_argument("--bootstrap", type=int, default=None, metavar="B",
                     help="bootstrap replications (default: 0 for the plus arm, 100 otherwise)")
    est.add_argument("--ci", choices=["analytic", "bootstrap"], default=None,
                     help="interval method for effects (default: analytic for plus)")
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument("--plot", action="store_true", help="write SVG event-study figures")

    pl = sub.add_parser("placebo", parents=[common], help="placebos and joint test")
    pl.add_argument("--arm", choices=["plus", "minus", "combined"], default="plus")
    pl.add_argument("--bootstrap", type=int, default=100, metavar="B")
    pl.add_argument("--alpha", type=float, default=0.05)

    dg = sub.add_parser("diagnose", parents=[common], help="TWFE weight decomposition")
    dg.add_argument("--spec", choices=["prop1", "prop3", "prop4"], required=True,
                    help="prop1: intensity x period; prop3: distributed lags; "
                         "prop4: local projection")
    dg.add_argument("--lags", type=int, default=0, metavar="K")
    dg.add_argument("--horizon", type=int, default=0, metavar="L")

    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo experiment")
    sm.add_argument("--config", required=True,
                    help="SimConfig JSON path or name of a bundled config")
    return parser


def _columns(args):
    return {"group": args.group, "time": args.time, "outcome": args.outcome,
            "treatment": args.treatment, "weight": args.weight}


def _load(args):
    if not args.input:
        raise UsageError("--input is required")
    beta = check_discount(args.beta)
    return ingest_csv(args.input, _columns(args), discount=beta)


def _manifest(args, **kw):
    path = getattr(args, "input", None)
    digest = file_digest(path) if path and Path(path).is_file() else None
    return RunManifest(subcommand=args.command, input_path=path, input_sha256=digest,
                       column_map=_columns(args), discount=args.beta,
                       out_dir=str(args.out_dir), **kw)


def _bootstrap_spec(B, seed):
    if B is None or B == 0:
        return None
    if B < 0:
        raise UsageError("--bootstrap must be non-negative")
    return BootstrapSpec(replications=B, seed=seed)


def _plot_points(table, kinds):
    t = table[table.kind.isin(kinds)]
    return [{"x": float(r.x), "estimate": float(r.estimate), "ci_lower": float(r.ci_lower),
             "ci_upper": float(r.ci_upper), "kind": r.kind} for r in t.itertuples()]


def cmd_estimate(args, bundle):
    panel = _load(args)
    B = args.bootstrap if args.bootstrap is not None else (0 if args.arm == "plus" else 100)
    spec = _bootstrap_spec(B, args.seed)
    an = analyze(panel, arm=args.arm, trim_k=args.trim_k, alpha=args.alpha, bootstrap=spec,
                 ci_method=args.ci)
    table = an.table()
    bundle.add_csv("event_study.csv", table)
    bundle.add_json("event_study.json", an.to_dict())
    if args.plot:
        bundle.add_text("event_study.svg", event_study_svg(
            _plot_points(table, ["effect", "placebo"]),
            title=f"Event-study estimates ({args.arm} arm)", ylabel="effect on outcome"))
        bundle.add_text("first_stage.svg", event_study_svg(
            _plot_points(table, ["first_stage"]),
            title=f"First stage ({args.arm} arm)", ylabel="treatment relative to baseline"))
    bootstrap = None if spec is None else {"replications": spec.replications, "seed": spec.seed}
    return _manifest(args, trim_k=args.trim_k, bootstrap=bootstrap,
                     options={"arm": args.arm, "alpha": args.alpha, "ci": an.inference,
                              "plot": args.plot})


def cmd_placebo(args, bundle):
    panel = _load(args)
    spec = _bootstrap_spec(args.bootstrap, args.seed)
    res = placebo_study(panel, bootstrap=spec, arm=args.arm)
    z = z_quantile(args.alpha)
    rows = pd.DataFrame(res.as_records())
    rows["ci_lower"] = rows.estimate - z * rows.se
    rows["ci_upper"] = rows.estimate + z * rows.se
    rows.insert(0, "arm", args.arm)
    bundle.add_csv("placebos.csv", rows)
    jt = res.joint_test
    bundle.add_json("placebos.json", {
        "arm": args.arm, "l_pl_u": res.l_pl_u, "placebos": rows.to_dict("records"),
        "joint_test": None if jt is None else {
            "statistic": jt.statistic, "p_value": jt.p_value, "df": jt.df,
            "n_replicates": jt.n_replicates, "reference": jt.reference}})
    bootstrap = None if spec is None else {"replications": spec.replications, "seed": spec.seed}
    return _manifest(args, bootstrap=bootstrap, options={"arm": args.arm, "alpha": args.alpha})


def cmd_diagnose(args, bundle):
    panel = _load(args)
    if args.spec == "prop1":
        report = prop1_weights(panel)
    elif args.spec == "prop3":
        report = prop3_weights(panel, args.lags)
    else:
        report = prop4_weights(panel, args.horizon)
    bundle.add_csv("weights.csv", report.weights)
    bundle.add_text("summary.txt", report.summary_text())
    bundle.add_json("weights.json", {"spec": report.spec, "coefficient": report.coefficient,
                                     "summaries": report.summaries, "notes": report.notes})
    return _manifest(args, options={"spec": args.spec, "lags": args.lags,
                                    "horizon": args.horizon})


def cmd_simulate(args, bundle):
    src = Path(args.config)
    if not src.suffix and not src.exists():
        src = bundled_config(args.config)
    config = SimConfig.from_json(src)
    report = run_monte_carlo(config)
    bundle.add_json("sim_report.json", report.to_dict())
    bundle.add_csv("sim_report.csv", report.table)
    failed = [a for a in report.assertions if not a["passed"]]
    for a in failed:
        print(f"assertion failed: {a['check']}: {a['detail']}", file=sys.stderr)
    args.input = str(src)
    manifest = _manifest(args, options={"config": config.to_dict()})
    manifest.column_map = {}
    return manifest, (EXIT_ASSERT if failed else EXIT_OK)


COMMANDS = {"estimate": cmd_estimate, "placebo": cmd_placebo, "diagnose": cmd_diagnose,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    warnings.formatwarning = lambda msg, *a, **k: f"{msg}"
    bundle = OutputBundle()
    code = EXIT_OK
    try:
        with np.errstate(all="ignore"):
            out = COMMANDS[args.command](args, bundle)
        manifest, code = out if isinstance(out, tuple) else (out, EXIT_OK)
        bundle.add_json("manifest.json", manifest.to_dict())
    except (UsageError, ConfigError, RankDeficientError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as err:
        print(f"estimation failed: {err}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (DIDError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        written = bundle.write(args.out_dir)
    except OSError as err:
        print(f"error: cannot write outputs: {err}", file=sys.stderr)
        return EXIT_INPUT
    for path in written:
        log.info("wrote %s", path)
    return code


if __name__ == "__main__":
    sys.exit(main())
