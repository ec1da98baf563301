"""musolve <config> [--pipeline P] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 hypothesis or certificate
failure, 4 numerical failure. Log verbosity comes from MUSOLVE_LOG
(DEBUG, INFO, WARNING...; default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import PIPELINES, ConfigError, parse_config
from .pipeline import EXIT_CONFIG, PipelineError, run_pipeline


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="musolve", description=__doc__.splitlines()[0])
    p.add_argument("config", help="YAML run configuration")
    p.add_argument("--pipeline", choices=PIPELINES, help="override the configured pipeline")
    p.add_argument("--out", help="output directory (overrides config 'output')")
    args = p.parse_args(argv)

    logging.basicConfig(
        level=os.environ.get("MUSOLVE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_config(args.config).with_overrides(pipeline=args.pipeline, output=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rec = run_pipeline(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"{cfg.pipeline}: wrote {len(rec.files)} files to {rec.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
