"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 run failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, NumericalDivergence

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit code 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--preset", choices=sorted(harness.PRESETS), help="built-in experiment preset")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. agent.alpha=0.02 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="agentstate",
        description="Generate-and-test agent-state learning on trace conditioning and patterning.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "run an experiment"),
                            ("baseline", "run the presence baseline (generators disabled)")):
        p = sub.add_parser(name, help=help_text)
        _add_config_args(p)
        p.add_argument("--runs", type=int, default=1, help="number of seeded runs")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int,
                       help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")

    p = sub.add_parser("dump-trial", help="per-step CSV of one trial")
    _add_config_args(p)
    p.add_argument("--trial", type=int, required=True, help="0-based trial index")
    p.add_argument("--run", type=int, default=0, help="run index under the master seed")
    p.add_argument("--baseline", action="store_true", help="use the presence baseline")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--snapshot", help="write the network snapshot JSON here")

    p = sub.add_parser("dump-stream", help="raw observation stream as CSV")
    _add_config_args(p)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--run", type=int, default=0, help="run index under the master seed")
    p.add_argument("--out", help="CSV path (default: stdout)")

    sub.add_parser("presets", help="list built-in presets")
    return parser


def _resolve(args) -> harness.ExperimentConfig:
    overrides = list(args.overrides)
    if args.trials is not None:
        overrides.append(f"trials={args.trials}")
    if args.config is None and args.preset is None:
        raise ConfigError("give --config or --preset", "config")
    return harness.load_config(args.config, args.preset, overrides)


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            for name, data in harness.PRESETS.items():
                print(f"{name}: {json.dumps(data)}")
            return EXIT_OK
        exp = _resolve(args)
        if args.command in ("run", "baseline"):
            if args.command == "baseline":
                exp = exp.as_baseline()
            results = harness.run_experiment(exp, args.seed, args.runs, args.out, args.workers)
            failed = [r.index for r in results if r.status != "ok"]
            if failed:
                print(f"runs failed: {failed}", file=sys.stderr)
                return EXIT_RUN
            return EXIT_OK
        if args.command == "dump-trial":
            if args.baseline:
                exp = exp.as_baseline()
            rows, agent = harness.dump_trial(exp, args.seed, args.trial, args.run)
            _emit(harness.rows_to_csv(rows), args.out)
            if args.snapshot:
                Path(args.snapshot).write_text(agent.network.to_json(indent=1) + "\n")
            return EXIT_OK
        if args.command == "dump-stream":
            if args.steps < 0:
                raise ConfigError("must be >= 0", "steps")
            _emit(harness.rows_to_csv(harness.dump_stream(exp, args.seed, args.steps, args.run)),
                  args.out)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergence as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
