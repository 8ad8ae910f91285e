"""Command line: ``evtwalk <mode> [--config FILE] [--key value ...] [--force]``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, EvtWalkError
from .experiments import MODES, ExperimentConfig, emit_results, read_config_file, run_experiment

log = logging.getLogger("evtwalk")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected --key value, got {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            val = extra[i + 1]
            i += 2
        out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="evtwalk",
        description="Extreme-value and logarithm-law experiments for random walks on tori and lattices.",
        epilog="Any config key can be given as --key value; precedence is command line > config file > defaults.",
    )
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        file_vals = read_config_file(args.config) if args.config else {}
        cli_vals = _parse_overrides(extra)
        file_vals.pop("mode", None)
        cli_vals["mode"] = args.mode
        cfg = ExperimentConfig.from_sources(file_vals, cli_vals)
        out_dir = cfg.output_dir or f"evtwalk-{cfg.mode}"
    except ConfigError as exc:
        print(f"evtwalk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(cfg)
    except ConfigError as exc:
        print(f"evtwalk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvtWalkError, ArithmeticError, ValueError) as exc:
        print(f"evtwalk: runtime error (seed {cfg.seed}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        paths = emit_results(res, out_dir, force=args.force)
    except EvtWalkError as exc:
        print(f"evtwalk: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"evtwalk: I/O error at {getattr(exc, 'filename', None) or out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in paths:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
