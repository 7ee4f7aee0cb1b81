"""``spgd`` command line: run, validate, diagnose, compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._validation import ComparisonError, ConfigurationError, InputError, NumericalBlowupError
from .config import load_config
from .experiment import ExperimentManifest, check_validation, compare_runs, rediagnose, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3
EXIT_IO = 4


def _cmd_run(args):
    cfg = load_config(args.config)
    manifest = run_experiment(cfg, args.seeds, override=args.override, out_dir=args.out,
                              workers=args.workers)
    print(manifest.validation["summary"] + (" (overridden)" if manifest.validation["overridden"] else ""))
    for s in manifest.seed_results:
        print(f"seed {s.seed}: {s.status}, {s.n_steps} steps -> {Path(manifest.root) / s.trajectory}")
    print(f"manifest: {Path(manifest.root) / 'manifest.json'}")
    if not manifest.ok:
        bad = [str(s.seed) for s in manifest.seed_results if s.status != "ok"]
        print(f"numerical blowup in seed(s) {', '.join(bad)}", file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_OK


def _cmd_validate(args):
    cfg = load_config(args.config)
    try:
        info = check_validation(cfg, override=False)
    except ConfigurationError as exc:
        print(f"config OK; {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"config OK ({cfg.config_hash[:12]}); {info['summary']}")
    if args.verbose:
        print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_diagnose(args):
    cfg = load_config(args.config) if args.config else None
    manifest = rediagnose(args.out, cfg)
    for s in manifest.seed_results:
        print(f"seed {s.seed}: {Path(manifest.root) / s.diagnostics}")
    return EXIT_OK


def _cmd_compare(args):
    report = compare_runs(args.a, args.b)
    text = report.to_text()
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_check(args):
    problems = ExperimentManifest.load(args.out).check()
    for p in problems:
        print(p, file=sys.stderr)
    return EXIT_IO if problems else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="spgd", description="Stochastic proximal subgradient runs and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="validate the schedule, run every seed and write outputs")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds, starting at the config seed")
    p.add_argument("--override", action="store_true", help="run even if schedule validation fails")
    p.add_argument("--out", help="output directory (default: the config output_dir)")
    p.add_argument("--workers", type=int, default=1, help="processes for seed-level parallelism")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a config and its schedule without running")
    p.add_argument("--config", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("diagnose", help="recompute diagnostics for stored trajectories")
    p.add_argument("--out", required=True, help="experiment directory or manifest path")
    p.add_argument("--config", help="config whose diagnostic blocks replace the stored ones")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("compare", help="tabulate two experiments side by side")
    p.add_argument("a", help="first experiment directory or manifest")
    p.add_argument("b", help="second experiment directory or manifest")
    p.add_argument("--out", help="write the comparison as JSON")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("check", help="verify that every file of a manifest exists and parses")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
