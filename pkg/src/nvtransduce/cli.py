"""Command-line entry point: ``nvtransduce <verb> ...``.

Exit status is 0 on success, 1 for configuration/validation errors and 2 when
a numerical invariant fails during integration.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import config as cfgmod
from . import runner
from .hilbert import InvariantError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: the scenario's output.path)")
    common.add_argument("--dt", type=float, help="integrator step in 1/g")
    common.add_argument("--sample-every", type=float, help="output sampling interval in 1/g")

    parser = argparse.ArgumentParser(prog="nvtransduce", description="Four-mode telecom/NV transducer simulator")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run-preset", parents=[common], help="run a built-in figure scenario")
    p.add_argument("name")
    p = sub.add_parser("run", parents=[common], help="run a scenario file")
    p.add_argument("config")
    p = sub.add_parser("sweep", parents=[common], help="sweep one scalar of a scenario file")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="dotted key path, e.g. channels.gamma_c")
    p.add_argument("--values", required=True, type=_floats, help="comma-separated values")
    p.add_argument("--workers", type=int, default=None)
    sub.add_parser("list-presets", help="list built-in scenarios")
    p = sub.add_parser("export-preset", help="print a preset as a scenario file")
    p.add_argument("name")
    return parser


def _print_summary(summary: dict) -> None:
    print(json.dumps(summary, indent=2))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "list-presets":
            for name in cfgmod.PRESET_NAMES:
                kind = "sweep" if cfgmod.preset_sweep(name) else "run"
                print(f"{name}\t{kind}")
            return EXIT_OK
        if args.verb == "export-preset":
            sys.stdout.write(cfgmod.dump_config(cfgmod.preset_config(args.name)))
            return EXIT_OK
        if args.verb == "run-preset":
            result = runner.run_preset(args.name, args.out, args.dt, args.sample_every)
            if isinstance(result, runner.SweepResult):
                sys.stdout.write(result.csv_text())
            else:
                _print_summary(result.summary)
            return EXIT_OK
        cfg = runner.apply_overrides(cfgmod.load_config(args.config), args.dt, args.sample_every, args.out)
        if args.verb == "run":
            result = runner.run_scenario(cfg)
            runner.write_run(result, cfg.output.path)
            _print_summary(result.summary)
            return EXIT_OK
        result = runner.sweep(cfg, args.param, args.values, workers=args.workers)
        runner.write_sweep(result, cfg.output.path, cfg.name)
        sys.stdout.write(result.csv_text())
        return EXIT_OK
    except InvariantError as err:
        print(f"numerical invariant failed: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (cfgmod.ConfigError, ValueError, KeyError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as err:
        print(f"write failure: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
