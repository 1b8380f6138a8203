"""Command-line front door for the pipeline.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal
error. Summaries go to stdout, diagnostics to stderr. Flag values override
config-file values, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import data as data_mod
from . import pipeline
from . import pricing
from .errors import ConfigError, DataError, FreshplanError, PipelineStageError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _diag(args, message: str) -> None:
    if getattr(args, "verbose", False):
        print(message, file=sys.stderr)


def _load_profile(path: Optional[str]) -> data_mod.GeneratorProfile:
    if path is None:
        return data_mod.GeneratorProfile()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"profile file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return pipeline.profile_from_doc(doc)


def _resolve_config(args) -> pipeline.PipelineConfig:
    """Config file plus flag overrides (flag > config > default)."""
    if getattr(args, "config", None):
        cfg = pipeline.load_config(args.config)
    else:
        cfg = pipeline.PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(
            cfg,
            data=replace(cfg.data, seed=args.seed),
            train=replace(cfg.train, seed=args.seed),
            pso=replace(cfg.pso, seed=args.seed),
        )
    return cfg


def _run_dir_parts(run_dir: Optional[str]) -> tuple[Path, Optional[str]]:
    """Split an explicit run dir into (root, run_id) for create_run_dir."""
    if run_dir is None:
        return Path("runs"), None
    p = Path(run_dir)
    return (p.parent if str(p.parent) != "" else Path(".")), p.name


def _existing_run_dir(args) -> Path:
    if not getattr(args, "run_dir", None):
        raise ConfigError("--run-dir is required for this command")
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise DataError(f"run directory not found: {run_dir}")
    return run_dir


def _snapshot_config(run_dir: Path, args) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        return pipeline.load_config(args.config)
    return pipeline.load_config(run_dir / "config.json")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    profile = _load_profile(args.profile)
    ds = data_mod.synthesize(args.seed, args.categories, args.days, profile)
    ds.write_csv(args.out)
    print(f"wrote {len(ds.records)} records to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    root, run_id = _run_dir_parts(args.run_dir)
    run_id, run_dir = pipeline.create_run_dir(root, run_id)
    _diag(args, f"run directory: {run_dir}")
    ds = pipeline.stage_data(cfg, run_dir)
    results = pipeline.stage_train(cfg, ds, run_dir)
    losses = ", ".join(f"{c}={r.losses[-1]:.6f}" for c, r in sorted(results.items()))
    print(f"trained {len(results)} models into {run_dir} (final loss {losses})")
    return EXIT_OK


def cmd_forecast(args) -> int:
    run_dir = _existing_run_dir(args)
    cfg = _snapshot_config(run_dir, args)
    ds = data_mod.ingest_csv(run_dir / "dataset.csv")
    bundles = pipeline.stage_forecast(cfg, ds, run_dir)
    cats = ", ".join(sorted(bundles))
    print(f"wrote {len(bundles)} forecasts into {run_dir / 'forecast'} ({cats})")
    return EXIT_OK


def cmd_optimize(args) -> int:
    run_dir = _existing_run_dir(args)
    cfg = _snapshot_config(run_dir, args)
    ds = data_mod.ingest_csv(run_dir / "dataset.csv")
    bundles = pipeline.load_bundles(run_dir)
    created_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    inputs, outcome = pipeline.stage_optimize(cfg, ds, run_dir, bundles)
    pipeline.write_meta(run_dir, run_dir.name, created_at, ds, outcome,
                        parent_run_id=None, override=None)
    print(f"optimized plan profit {outcome.report.raw_profit:.2f} "
          f"(baseline {outcome.baseline_report.raw_profit:.2f}, "
          f"feasible={outcome.report.feasible})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    root, run_id = _run_dir_parts(args.run_dir)
    artifact = pipeline.run_pipeline(cfg, run_root=root, run_id=run_id)
    print(f"run {artifact.run_id}: projected profit {artifact.report.raw_profit:.2f} "
          f"(baseline {artifact.baseline_report.raw_profit:.2f}, "
          f"feasible={artifact.report.feasible})")
    return EXIT_OK


def cmd_feedback(args) -> int:
    base = _existing_run_dir(args)
    new_ds = data_mod.ingest_csv(args.new)
    root, run_id = _run_dir_parts(args.out)
    artifact = pipeline.feedback_update(base, new_ds.records,
                                        run_root=root, run_id=run_id)
    print(f"feedback run {artifact.run_id} (parent {artifact.parent_run_id}): "
          f"projected profit {artifact.report.raw_profit:.2f}")
    return EXIT_OK


def _plan_table(doc: dict) -> str:
    days = [f"day{d}" for d in range(1, doc["horizon"] + 1)]
    header = ["category"] + days + ["total"]
    rows = []
    col_totals = [0.0] * doc["horizon"]
    for cat in doc["categories"]:
        profits = [c["profit"] for c in doc["cells"][cat]]
        for i, p in enumerate(profits):
            col_totals[i] += p
        rows.append([cat] + [f"{p:.2f}" for p in profits] + [f"{sum(profits):.2f}"])
    rows.append(["TOTAL"] + [f"{t:.2f}" for t in col_totals]
                + [f"{doc['totals']['raw_profit']:.2f}"])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise DataError(f"run directory not found: {run_dir}")
    if args.what == "history":
        path = run_dir / "swarm_history.csv"
        if not path.exists():
            raise DataError(f"no swarm history in {run_dir}; run the optimize stage first")
        sys.stdout.write(path.read_text(encoding="utf-8"))
        return EXIT_OK

    plan_path = run_dir / "plan.json"
    if not plan_path.exists():
        raise DataError(f"no plan in {run_dir}; run the optimize stage first")
    doc = json.loads(plan_path.read_text(encoding="utf-8"))
    if args.format == "json":
        sys.stdout.write(plan_path.read_text(encoding="utf-8"))
    elif args.format == "csv":
        sys.stdout.write(pricing.plan_csv_text(doc))
    else:
        print(_plan_table(doc))
    return EXIT_OK


def cmd_serve(args) -> int:
    from . import service
    import uvicorn
    app = service.create_app(Path(args.run_dir), static_dir=args.static)
    print(f"serving runs from {args.run_dir} on {args.bind}:{args.port}",
          file=sys.stderr)
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="freshplan",
        description="Forecast fresh-food sales and optimize pricing/replenishment plans.",
        epilog="Precedence: command-line flags override config-file values, "
               "which override built-in defaults.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument("--run-dir", help="run directory")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--verbose", action="store_true", help="diagnostics to stderr")

    p = sub.add_parser("synth", help="generate a synthetic sales CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--categories", type=int, default=2)
    p.add_argument("--days", type=int, default=28)
    p.add_argument("--profile", help="generator profile JSON file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="ingest/synthesize data and train models")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="emit 7-day forecasts from trained models")
    common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("optimize", help="optimize the plan for existing forecasts")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="all stages: data, train, forecast, optimize")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("feedback", help="extend a run with new records and re-run")
    common(p)
    p.add_argument("--new", required=True, help="CSV of appended records")
    p.add_argument("--out", help="directory for the new run (default: auto-named sibling)")
    p.set_defaults(func=cmd_feedback)

    p = sub.add_parser("report", help="render a run's plan or swarm history")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p.add_argument("--what", choices=["plan", "history"], default="plan")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the HTTP API (and console, if built)")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--run-dir", default="runs", help="root directory of runs")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--static", help="static directory for the web console")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_serve)

    return parser


def _validate_args(parser: _Parser, args) -> None:
    if args.command == "synth":
        if args.days < 14:
            parser.error(f"--days must be >= 14, got {args.days}")
        if args.categories < 1:
            parser.error(f"--categories must be >= 1, got {args.categories}")
    if args.command == "report" and args.what == "history" and args.format != "csv":
        parser.error("swarm history is only available as csv")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_args(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        return args.func(args)
    except PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (DataError, ConfigError, ValueError)):
            return EXIT_DATA
        return EXIT_INTERNAL
    except (DataError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FreshplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        if getattr(args, "verbose", False):
            traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
