"""Command-line entry point: ``qha <kind> --config <path>``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import KINDS, load_config
from .errors import ConfigError, NumericalGuardError, QHAError

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_IO = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qha", description="Run a localization-operator experiment.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--resolution", type=int, help="quadrature nodes per axis (overrides the config)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    from .runner import run

    try:
        cfg = load_config(args.config, out_dir=args.out)
        if cfg.kind != args.kind:
            raise ConfigError(f"config kind {cfg.kind!r} does not match command {args.kind!r}")
        if args.resolution is not None:
            cfg = cfg.replace(quad_resolution=[args.resolution] * len(cfg.quad_resolution))
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"qha: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        print(f"qha: numerical guard '{exc.guard}' tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except OSError as exc:
        print(f"qha: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QHAError as exc:
        print(f"qha: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print(json.dumps({"out_dir": manifest.out_dir, "summary": manifest.summary},
                         sort_keys=True, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
