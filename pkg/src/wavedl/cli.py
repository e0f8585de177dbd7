"""Command line entry point.

Subcommands run single stages against an output directory, or the whole
pipeline. Configuration comes from ``--preset`` or ``--config``; when
neither is given, a ``config.toml`` left in ``--out`` by an earlier stage is
reused.

``--threads`` sizes the worker pool that assembles sensing matrices; linear
algebra libraries are held to one thread so results do not depend on it.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import pipeline
from .config import PRESETS, ConfigError, load_config, load_preset

_SUBCOMMANDS = {
    "simulate": ("simulate",),
    "learn": ("learn",),
    "localize": ("localize",),
    "image": ("image",),
    "report": ("report",),
    "pipeline": pipeline.STAGES,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="TOML experiment file")
    src.add_argument("--preset", choices=PRESETS, help="shipped configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sensing-matrix assembly")
    common.add_argument("--out", type=Path, default=Path("run"), help="artifact directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="wavedl",
        description="Learn and order Green's function vectors of a random medium from array data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "assemble G and G0 and synthesize the data ensemble",
        "learn": "learn the dictionary from the saved ensemble",
        "localize": "order learned columns (connectivity, MDS, anchors, assignment)",
        "image": "back-propagation images for test sources",
        "report": "time-reversal cross-correlation figure data",
        "pipeline": "run every stage",
    }
    for name in _SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args):
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    elif (args.out / "config.toml").exists():
        cfg = load_config(args.out / "config.toml")
    else:
        raise ConfigError("no configuration: pass --preset or --config")
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("error [config]: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    try:
        # BLAS stays single-threaded: threaded reductions change rounding and
        # would break identical checksums across --threads values
        with threadpool_limits(limits=1):
            manifest = pipeline.run_stages(cfg, args.out, _SUBCOMMANDS[args.command],
                                           workers=args.threads)
    except pipeline.StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    print(f"{args.command}: ok ({len(manifest.files)} files in {args.out})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
