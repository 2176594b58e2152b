"""Command-line front end: run, compare, validate, gen-trace."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from .algorithms import REGISTRY, UnknownSchedulerError
from .core import CapacityViolation
from .engine import (
    ComparisonTable,
    ConfigError,
    ExperimentConfig,
    InvariantError,
    compare,
    load_config,
    run_log,
)
from .metrics import METRICS
from .workload import GeneratorSpec, WorkloadError, generate, write_trace

SCHEMA_VERSION = 1
CSV_HEADER = ["metric", "algorithm", "value", "ci_low", "ci_high"]

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

# one simulated day of 5-minute slots, reservations up to 4 hours
DEFAULT_WORKLOAD = GeneratorSpec(count=500, distribution="uniform", target_field="start",
                                 low=0, high=288, other_range=(1, 48))
COMPARE_ALGORITHMS = ["round-robin", "lpt", "mig", "prepartition"]

log = logging.getLogger("vmalloc")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG) -> None:
        super().__init__(message)
        self.code = code


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--slot-minutes", type=float, help="minutes per slot (default 5)")
    p.add_argument("--horizon", type=float, help="observation horizon T_obs in slots")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="vmalloc", description="VM allocation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "run one or more strategies on a workload"),
                            ("compare", "algorithm x metric comparison table")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("config", nargs="?", help="experiment config (JSON)")
        p.add_argument("-a", "--algorithm", action="append", dest="algorithms",
                       help=f"strategy name, repeatable ({', '.join(sorted(REGISTRY))})")
        p.add_argument("-m", "--metric", action="append", dest="metrics",
                       help=f"metric id, repeatable ({', '.join(METRICS)})")
        p.add_argument("--trace", help="SWF trace to use as the workload")
        p.add_argument("--pm-config", help="PM spec XML (default: bundled fleet)")
        p.add_argument("--repetitions", type=int)
        p.add_argument("-k", type=int, help="prepartition parameter")
        p.add_argument("--factor", type=float, help="post-migration threshold factor")
        if name == "run":
            p.add_argument("--log", help="write the event log (needs a single strategy and repetition)")

    p = sub.add_parser("validate", parents=[common], help="reproduce the built-in theoretical cases")

    p = sub.add_parser("gen-trace", parents=[common], help="write a synthetic SWF workload")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--distribution", choices=("poisson", "normal", "uniform"), default="uniform")
    p.add_argument("--target", choices=("start", "duration"), default="start")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--mean", type=float, default=0.0)
    p.add_argument("--stddev", type=float, default=1.0)
    p.add_argument("--low", type=float, default=0.0)
    p.add_argument("--high", type=float, default=0.0)
    p.add_argument("--other-range", type=int, nargs=2, default=(1, 1), metavar=("LO", "HI"))
    return parser


# -- output -----------------------------------------------------------------


@contextmanager
def _sink(path: str | None):
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", newline="") as fh:
        yield fh


def table_text(table: ComparisonTable) -> str:
    width = max(12, *(len(a) + 2 for a in table.algorithms))
    lines = ["metric".ljust(14) + "".join(a.rjust(width) for a in table.algorithms)]
    for m in table.metrics:
        cells = []
        for a in table.algorithms:
            c = table.cells[(m, a)]
            cells.append((f"{c.value:.6g}" if c.ci is None else f"{c.value:.4g}±{c.ci.half_width:.2g}").rjust(width))
        lines.append(m.ljust(14) + "".join(cells))
    return "\n".join(lines) + "\n"


def table_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in table.rows():
        w.writerow([row["metric"], row["algorithm"], repr(row["value"]),
                    "" if row["ci_low"] is None else repr(row["ci_low"]),
                    "" if row["ci_high"] is None else repr(row["ci_high"])])
    return buf.getvalue()


def table_json(table: ComparisonTable, config: ExperimentConfig) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "algorithms": table.algorithms,
        "metrics": table.metrics,
        "repetitions": config.repetitions,
        "seed": config.seed,
        "rows": table.rows(),
    }
    return json.dumps(doc, indent=2) + "\n"


def render(table: ComparisonTable, config: ExperimentConfig, fmt: str) -> str:
    if fmt == "csv":
        return table_csv(table)
    if fmt == "json":
        return table_json(table, config)
    return table_text(table)


# -- commands ---------------------------------------------------------------


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig(algorithms=[], generator=DEFAULT_WORKLOAD)
    if args.algorithms:
        cfg.algorithms = args.algorithms
    elif not cfg.algorithms:
        cfg.algorithms = ["ls"] if args.command == "run" else list(COMPARE_ALGORITHMS)
    if args.metrics:
        cfg.metrics = args.metrics
    if args.trace:
        cfg.trace, cfg.generator = args.trace, None
    overrides = {
        "pm_config": args.pm_config, "repetitions": args.repetitions, "k": args.k,
        "migration_factor": args.factor, "seed": args.seed, "slot_minutes": args.slot_minutes,
        "t_obs": args.horizon,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    want_log = getattr(args, "log", None)
    if want_log and (len(cfg.algorithms) != 1 or cfg.repetitions != 1):
        raise CliError("--log needs exactly one algorithm and one repetition")
    table = compare(cfg, keep_runs=bool(want_log))
    with _sink(args.out) as fh:
        fh.write(render(table, cfg, args.format))
    if want_log:
        (result,) = table.runs.values()
        Path(want_log).write_text("".join(line + "\n" for line in run_log(result.plan)))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    from .validation import REFERENCE_ENERGY, validate

    report = validate()
    if args.format == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "passed": report.passed,
            "rows": [{"scenario": r.scenario, "metric": r.metric, "expected": r.expected,
                      "actual": r.actual, "passed": r.passed} for r in report.rows],
            "energy": {"reference": REFERENCE_ENERGY, "conventions": report.energy,
                       "closest": report.closest_energy_convention()},
        }
        text = json.dumps(doc, indent=2) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "metric", "expected", "actual", "status"])
        for r in report.rows:
            w.writerow([r.scenario, r.metric, repr(r.expected), repr(r.actual), "PASS" if r.passed else "FAIL"])
        text = buf.getvalue()
    else:
        lines = []
        for r in report.rows:
            status = "PASS" if r.passed else "FAIL"
            diff = "" if r.passed else f"  (diff {r.actual - r.expected:+.3g})"
            lines.append(f"{status}  {r.scenario:<13} {r.metric:<14} expected {r.expected:<8g} got {r.actual:.12g}{diff}")
        lines.append("")
        lines.append(f"energy calibration (reference value {REFERENCE_ENERGY:g} W*min):")
        closest = report.closest_energy_convention()
        for name, value in report.energy.items():
            mark = "  <- closest" if name == closest else ""
            lines.append(f"  {name:<18} {value:>10g}  ({value - REFERENCE_ENERGY:+g}){mark}")
        text = "\n".join(lines) + "\n"
    with _sink(args.out) as fh:
        fh.write(text)
    return EXIT_OK if report.passed else EXIT_MISMATCH


def cmd_gen_trace(args: argparse.Namespace) -> int:
    if not args.out:
        raise CliError("gen-trace needs --out")
    spec = GeneratorSpec(
        count=args.count, distribution=args.distribution, target_field=args.target,
        rate=args.rate, mean=args.mean, stddev=args.stddev, low=args.low, high=args.high,
        other_range=tuple(args.other_range), seed=args.seed or 0,
    )
    requests = generate(spec)
    write_trace(requests, args.out, args.slot_minutes or 5.0)
    log.info("wrote %d requests to %s", len(requests), args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_run, "validate": cmd_validate, "gen-trace": cmd_gen_trace}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InvariantError, CapacityViolation) as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except UnknownSchedulerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, WorkloadError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
