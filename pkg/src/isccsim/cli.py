"""Command-line interface: run experiments, presets, audits."""

import argparse
import json
import sys

from . import __version__
from ._kernels import USE_NUMBA
from .errors import ConfigError, SchemaError
from .harness import (audit_results, builtin_sweeps, load_spec,
                      run_experiment, save_spec)
from .scenario import SystemConfig


def _progress(done, total):
    sys.stderr.write(f"\r[{done}/{total}] cells complete")
    sys.stderr.flush()
    if done == total:
        sys.stderr.write("\n")


def cmd_run(args):
    spec = load_spec(args.spec)
    if args.output:
        spec.output = args.output
    if args.trials:
        spec.trials = args.trials
    spec.validate()
    path = run_experiment(spec, workers=args.workers,
                          progress=None if args.quiet else _progress)
    print(path)
    return 0


def cmd_preset(args):
    presets = builtin_sweeps(trials=args.trials or 50,
                             paper_scale=args.paper_scale,
                             out_dir=args.output_dir)
    if args.name not in presets:
        print(f"unknown preset {args.name!r}; available: {sorted(presets)}",
              file=sys.stderr)
        return 2
    spec = presets[args.name]
    if args.dump_spec:
        save_spec(spec, args.dump_spec)
        print(args.dump_spec)
        return 0
    path = run_experiment(spec, workers=args.workers,
                          progress=None if args.quiet else _progress)
    print(path)
    return 0


def cmd_audit(args):
    problems = audit_results(args.csv, recompute=not args.flags_only)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        print(f"audit: {len(problems)} problem(s) found")
        return 1
    print("audit: all rows verified")
    return 0


def cmd_info(args):
    info = {
        "version": __version__,
        "numba": USE_NUMBA,
        "presets": sorted(builtin_sweeps().keys()),
        "default_config": SystemConfig().to_dict(),
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="isccsim",
        description="Three-tier sensing/offloading network simulator and solver suite")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run an experiment from a YAML spec file")
    pr.add_argument("spec")
    pr.add_argument("--output", help="override the CSV output path")
    pr.add_argument("--trials", type=int, help="override the trial count")
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--quiet", action="store_true")
    pr.set_defaults(func=cmd_run)

    pp = sub.add_parser("preset", help="run a builtin experiment preset")
    pp.add_argument("name")
    pp.add_argument("--output-dir", default=".")
    pp.add_argument("--trials", type=int)
    pp.add_argument("--paper-scale", action="store_true",
                    help="use 500 trials per cell")
    pp.add_argument("--workers", type=int, default=1)
    pp.add_argument("--dump-spec", help="write the preset as a YAML spec and exit")
    pp.add_argument("--quiet", action="store_true")
    pp.set_defaults(func=cmd_preset)

    pa = sub.add_parser("audit", help="re-verify feasibility flags in a results CSV")
    pa.add_argument("csv")
    pa.add_argument("--flags-only", action="store_true",
                    help="check flag well-formedness without re-solving")
    pa.set_defaults(func=cmd_audit)

    pi = sub.add_parser("info", help="print version, kernel mode and presets")
    pi.set_defaults(func=cmd_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
