"""Command line entry point ``oma``.

Exit codes: 0 success, 1 acceptance failure or pairing conflict, 2 usage or
invalid argument, 3 I/O or parse error, 4 numerical failure. Log verbosity is
read from ``OMA_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .beam_model import preset_beam
from .errors import InvalidArgument, NumericalFailure, PairingConflict, ParseError
from .pipeline import METHODS, RunConfig, cmd_compare, cmd_identify, cmd_pipeline, cmd_simulate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "beam", None) is not None:
        cfg = replace(cfg, beam=replace(preset_beam(args.beam), n_elements=cfg.beam.n_elements,
                                        damping_ratio=cfg.beam.damping_ratio))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out(args, cfg):
    return Path(args.out if args.out is not None else cfg.output_dir)


def _simulate(args):
    cfg = _config(args)
    paths = cmd_simulate(cfg, _out(args, cfg))
    print(f"wrote {paths['acceleration']} and {paths['manifest']}")
    return EXIT_OK


def _identify(args):
    cfg = _config(args) if (args.config or args.seed is not None) else None
    in_dir = Path(args.input)
    path = cmd_identify(args.method, in_dir, cfg, args.out if args.out is not None else in_dir)
    print(f"wrote {path}")
    return EXIT_OK


def _compare(args):
    run_dir = Path(args.input)
    manifest = Path(args.manifest) if args.manifest else run_dir / "manifest.json"
    results = [Path(p) for p in args.results] or [run_dir / f"{m}.json" for m in METHODS
                                                  if (run_dir / f"{m}.json").exists()]
    if not results:
        raise InvalidArgument(f"no identification results given or found in {run_dir}")
    _, passed = cmd_compare(manifest, results, args.out if args.out is not None else run_dir)
    out = Path(args.out if args.out is not None else run_dir)
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK if passed else EXIT_FAIL


def _pipeline(args):
    cfg = _config(args)
    beams = "all" if args.beams == "all" else [int(args.beams)]
    outcome = cmd_pipeline(beams, cfg, _out(args, cfg), jobs=args.jobs)
    for b, passed in outcome.items():
        print(f"beam {b}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if all(outcome.values()) else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="oma", description="Beam ambient-vibration simulation and modal identification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, beam=True):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        if beam:
            p.add_argument("--beam", type=int, choices=(1, 2, 3, 4), help="preset beam (overrides the config)")

    p = sub.add_parser("simulate", help="simulate force and acceleration records")
    common(p)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("identify", help="identify modes from a run directory")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--in", dest="input", default=".", help="run directory holding the records (default: .)")
    common(p, beam=False)
    p.set_defaults(func=_identify)

    p = sub.add_parser("compare", help="compare identified modes with the simulation truth")
    p.add_argument("results", nargs="*", help="identification JSON files (default: all found in --in)")
    p.add_argument("--in", dest="input", default=".", help="run directory (default: .)")
    p.add_argument("--manifest", help="truth manifest (default: <in>/manifest.json)")
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=_compare)

    p = sub.add_parser("pipeline", help="simulate, identify and compare preset beams")
    p.add_argument("beams", choices=("1", "2", "3", "4", "all"))
    p.add_argument("--jobs", type=int, default=1, help="beams run in parallel (default: 1)")
    common(p, beam=False)
    p.set_defaults(func=_pipeline)
    return parser


def main(argv=None):
    level = os.environ.get("OMA_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PairingConflict as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
