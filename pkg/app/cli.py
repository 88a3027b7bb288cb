"""命令行入口

Exit codes: 0 = success and every pass flag true, 2 = the experiment ran but a
pass flag failed, 1 = error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config.settings import settings
from app.models.specs import ModelSpec
from app.services.errors import ConfigValidationError, InputError, PersistenceError, ToolkitError
from app.services.harness import load_config, run_experiment
from app.services.reports import write_path_csv
from app.services.timeseries import simulate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_CHECK = 2

EXPERIMENT_COMMANDS = ("rate-scan", "bound-check", "tau-scan", "bernstein-tail", "cantor-check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run.py", description=settings.app_name)
    parser.add_argument("--workers", type=int, default=None, help="parallel workers (default: machine parallelism)")
    parser.add_argument("--log-level", default=settings.log_level, help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate one path and write it as CSV")
    sim.add_argument("--model", required=True, help="ModelSpec JSON file")
    sim.add_argument("--n", type=int, required=True, help="path length")
    sim.add_argument("--seed", type=int, default=0, help="64-bit seed")
    sim.add_argument("--out", required=True, help="output CSV path")

    for name in EXPERIMENT_COMMANDS:
        exp = sub.add_parser(name, help=f"run a {name} experiment")
        exp.add_argument("--config", required=True, help="ExperimentConfig JSON file")
        exp.add_argument("--out", default=None, help="output directory (overrides output_dir)")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default=settings.api_host)
    serve.add_argument("--port", type=int, default=settings.api_port)
    return parser


def _load_model(path: str) -> ModelSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read model {path}: {e}") from e
    try:
        return ModelSpec.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigValidationError(first["msg"], ".".join(str(x) for x in first["loc"]) or None) from e


def _simulate(args) -> int:
    spec = _load_model(args.model)
    path = simulate(spec, args.n, args.seed)
    write_path_csv(path, args.out)
    print(args.out)
    return EXIT_OK


def _experiment(args) -> int:
    cfg = load_config(args.config)
    if cfg.kind != args.command:
        raise ConfigValidationError(f"config is a {cfg.kind} experiment, not {args.command}", "kind")
    out = args.out if args.out is not None else (cfg.output_dir or settings.output_dir)
    report = run_experiment(cfg, workers=args.workers, output_dir=out)
    print(json.dumps({"kind": cfg.kind, "passed": report.passed, "checks": report.checks, "output_dir": str(out)}))
    return EXIT_OK if report.passed else EXIT_FAILED_CHECK


def _serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, reload=settings.debug, log_level="info")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "serve":
            return _serve(args)
        return _experiment(args)
    except PersistenceError as e:
        logger.error(f"Persistence error: {e}")
        report = getattr(e, "report", None)
        if report is not None:
            print(json.dumps({"kind": report.config.kind, "passed": report.passed, "checks": report.checks}))
        return EXIT_ERROR
    except ToolkitError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
