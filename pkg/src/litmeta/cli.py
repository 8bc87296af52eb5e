"""Command-line entry point: ``litmeta run`` plus one subcommand per stage."""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
from importlib import resources
from pathlib import Path

from ._io import ArtifactSchemaError
from .pipeline import STAGES, ConfigError, LockError, StageError, load_config, run_stages

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = 0, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}

log = logging.getLogger("litmeta")


def _setup_logging() -> None:
    name = os.environ.get("LITMETA_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if name not in LOG_LEVELS:
        log.warning("LITMETA_LOG=%r not one of %s; using warn", name, sorted(LOG_LEVELS))


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", type=Path, required=config_required, help="pipeline JSON config")
    p.add_argument("--out", type=Path, help="output directory (overrides config output_dir)")
    p.add_argument("--seed", type=int, help="seed for shuffled Louvain order")
    p.add_argument("--weight", choices=("raw", "normalized"), help="coupling weight used by Louvain")
    p.add_argument("--min-gain", type=float, help="smallest modularity gain accepted for a move")
    p.add_argument("--enter-p", type=float, help="stepwise entry threshold")
    p.add_argument("--remove-p", type=float, help="stepwise removal threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="litmeta",
        description="Bibliographic coupling, community detection and cluster-conditioned "
                    "meta-analysis from a JSON config.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the whole pipeline")
    _common(run)
    run.add_argument("--stage", choices=STAGES, help="run only this stage")
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage on existing artifacts")
        _common(p)
    demo = sub.add_parser("demo", help="copy the bundled 12-paper demo and run it")
    demo.add_argument("--out", type=Path, required=True, help="directory for demo inputs and outputs")
    return parser


def _overrides(args) -> dict:
    return {
        "output_dir": str(args.out.resolve()) if getattr(args, "out", None) else None,
        "seed": getattr(args, "seed", None),
        "weight_kind": getattr(args, "weight", None),
        "min_gain": getattr(args, "min_gain", None),
        "enter_p": getattr(args, "enter_p", None),
        "remove_p": getattr(args, "remove_p", None),
    }


def copy_demo(target: Path) -> Path:
    """Copy the bundled demo inputs into ``target/input`` and return the config path."""
    dest = Path(target) / "input"
    dest.mkdir(parents=True, exist_ok=True)
    src = resources.files("litmeta") / "data" / "demo"
    for name in ("records.bib", "effects.csv", "config.json"):
        with resources.as_file(src / name) as path:
            shutil.copyfile(path, dest / name)
    return dest / "config.json"


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "demo":
            config_path = copy_demo(args.out)
            cfg = load_config(config_path, overrides={"output_dir": str((args.out / "out").resolve())})
            stages = STAGES
        else:
            cfg = load_config(args.config, overrides=_overrides(args))
            if args.command == "run":
                stages = (args.stage,) if args.stage else STAGES
            else:
                stages = (args.command,)
        run_stages(cfg, stages)
    except (ConfigError, LockError) as exc:
        print(f"litmeta: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        if isinstance(exc.cause, ArtifactSchemaError):
            print(f"litmeta: stage {exc.stage}: input artifact schema mismatch: {exc.cause}",
                  file=sys.stderr)
        else:
            print(f"litmeta: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(f"litmeta: wrote {cfg.output_dir}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
