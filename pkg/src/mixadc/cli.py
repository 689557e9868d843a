"""Command-line entry point for the experiment harness."""

import argparse
import json
import sys
import time
import traceback

from . import harness


def _add_common(sub):
    sub.add_argument("--config", type=str, default=None, help="JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="master seed override")
    sub.add_argument("--out", type=str, default=None, help="output directory")
    sub.add_argument(
        "--scale",
        choices=["paper", "desk"],
        default="paper",
        help="paper-scale defaults or the reduced desk profile",
    )
    sub.add_argument("--workers", type=int, default=None, help="trial worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixadc",
        description="Mixed-ADC radar experiments: bound sweeps, Monte-Carlo "
        "error studies, and angle-Doppler imaging.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("crb-sweep", "root CRBs versus target amplitude ratio"),
        ("rmse", "Monte-Carlo RMSE versus the bound"),
        ("imaging", "multi-target imaging comparison"),
    ]:
        sub = subs.add_parser(name, help=text)
        _add_common(sub)
    subs.add_parser("selftest", help="quick sanity checks")
    return parser


def _overrides(args) -> dict:
    run = {}
    if args.seed is not None:
        run["seed"] = args.seed
    if args.out is not None:
        run["out_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        run["workers"] = args.workers
    return {"run": run} if run else {}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return harness.selftest()
    try:
        cfg = harness.ExperimentConfig.load(
            path=args.config,
            scale=args.scale,
            experiment=args.command.replace("crb-sweep", "crb-sweep"),
            overrides=_overrides(args),
        )
        out_dir = cfg.run.get("out_dir", "out")
        t0 = time.time()
        if args.command == "crb-sweep":
            rows = harness.run_crb_sweep(cfg, out_dir=out_dir)
            print(f"wrote {len(rows)} rows to {out_dir}/crb_sweep.csv")
        elif args.command == "rmse":
            harness.run_rmse_mc(cfg, out_dir=out_dir)
            print(f"wrote rmse.csv and khat_histogram.csv to {out_dir}/")
        elif args.command == "imaging":
            summaries = harness.run_imaging(cfg, out_dir=out_dir)
            for i, s in enumerate(summaries):
                print(f"seed {i}: hits {s['hits']} k_hat {s.get('k_hat')}")
        print(f"done in {time.time() - t0:.1f} s")
        return 0
    except Exception as exc:  # pragma: no cover - error path
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "trace": traceback.format_exc(limit=5),
        }
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
