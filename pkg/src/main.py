import argparse
import os
import sys
from pathlib import Path

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from src.errors import ConfigError, XvaCollocateError
from src.experiments import RUNNERS, RunContext, run
from src.log import log_event
from src.models import RunConfig


def load_config(path, seed=None):
    """Read the YAML run config; portfolio CSV paths are taken relative to the config file."""
    path = Path(path)
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a mapping at the top level")

    portfolio = raw.get("portfolio") or {}
    csv = portfolio.get("portfolio_csv")
    if csv and not Path(csv).is_absolute():
        portfolio["portfolio_csv"] = str(path.parent / csv)
    if seed is not None:
        raw["seed"] = seed

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        fields = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid config {path}: {fields}") from exc
    config.portfolio.load()
    return config


def build_parser():
    parser = argparse.ArgumentParser(prog="xva-collocate",
                                     description="Collocated EE and EE sensitivities under Hull-White")
    parser.add_argument("experiment", choices=sorted(RUNNERS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--dump-paths", action="store_true")
    return parser


def _threads(args, config):
    if args.threads is not None:
        return args.threads
    env = os.getenv("XVA_COLLOCATE_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"XVA_COLLOCATE_THREADS must be an integer, got {env!r}") from exc
    return config.threads


def main(argv=None):
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.seed)
        threads = _threads(args, config)
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        out = args.out or os.getenv("XVA_COLLOCATE_OUT") or config.output_dir
        config = config.model_copy(update={"experiment": args.experiment, "threads": threads, "output_dir": out})
        ctx = RunContext(config=config, out_dir=Path(out), threads=threads,
                         dump_paths=args.dump_paths or config.diagnostics.dump_paths)
        run(ctx, args.experiment)
    except XvaCollocateError as exc:
        log_event(action=args.experiment, status="fail", warning=str(exc), exit_code=exc.exit_code)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
