"""Experiment driver: boot a fleet, obtain requests, run strategies, replay plans, collect metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .algorithms import SchedulePlan, canonical_name, get_scheduler
from .core import CapacityViolation, Datacenter, PmType, VmRequest
from .metrics import METRICS, ConfidenceInterval, LoadProfile, MetricsReport, compute_report, confidence_interval
from .workload import (
    GeneratorSpec,
    WorkloadError,
    boot_fleet,
    default_config_path,
    generate,
    load_pm_config,
    load_vm_config,
    parse_trace,
)

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


class InvariantError(RuntimeError):
    """A scheduler emitted a plan that breaks the capacity model."""


class ConfigError(ValueError):
    pass


def splitmix64(seed: int, index: int) -> int:
    """Deterministic 64-bit child seed number ``index`` of ``seed``."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass
class RunResult:
    algorithm: str
    plan: SchedulePlan
    profile: LoadProfile
    report: MetricsReport
    requests: list[VmRequest]


def replay(plan: SchedulePlan, requests: Sequence[VmRequest], pm_types: Sequence[PmType],
           horizon: int | None = None) -> Datacenter:
    """Rebuild a fresh datacenter from ``plan``, checking coverage and capacity at every slot."""
    by_id = {r.vm_id: r for r in requests}
    horizon = horizon or max((r.end for r in requests), default=1)
    dc = Datacenter(pm_types, horizon)
    for vm_id, pieces in plan.by_vm().items():
        req = by_id.get(vm_id)
        if req is None:
            raise InvariantError(f"plan assigns unknown VM {vm_id}")
        pieces = sorted(pieces, key=lambda a: a.start)
        cursor = req.start
        for a in pieces:
            if a.start != cursor:
                raise InvariantError(f"VM {vm_id}: pieces do not tile [{req.start}, {req.end})")
            cursor = a.end
        if cursor != req.end:
            raise InvariantError(f"VM {vm_id}: pieces do not tile [{req.start}, {req.end})")
        shadow = req.copy()
        for a in pieces:
            try:
                dc[a.pm_id].allocate(shadow, a.start, a.end)
            except (CapacityViolation, IndexError) as exc:
                raise InvariantError(f"replay failed: {exc}") from exc
    rejected = {v for v, _ in plan.rejections}
    overlap = rejected & plan.accepted
    if overlap:
        raise InvariantError(f"VMs both accepted and rejected: {sorted(overlap)[:5]}")
    try:
        dc.check_conservation()
    except CapacityViolation as exc:
        raise InvariantError(str(exc)) from exc
    return dc


def run(
    algorithm: str,
    workload: Sequence[VmRequest],
    pm_types: Sequence[PmType],
    *,
    t_obs: float | None = None,
    slot_length: float = 5.0,
    seed: int = 0,
    k: int = 4,
    migration_factor: float = 0.1,
) -> RunResult:
    """Schedule ``workload`` on a fresh fleet with one strategy and measure the result.

    ``t_obs`` defaults to the longest request duration.
    """
    name = canonical_name(algorithm)
    requests = [r.copy() for r in workload]
    horizon = max((r.end for r in requests), default=1)
    dc = Datacenter(pm_types, horizon)
    scheduler = get_scheduler(name, seed=seed, k=k, factor=migration_factor)
    plan = scheduler.schedule(requests, dc)
    replayed = replay(plan, requests, pm_types, horizon)
    if t_obs is None:
        t_obs = max((r.duration for r in requests), default=1)
    profile = LoadProfile.from_datacenter(
        replayed, t_obs, slot_length, submitted=len(requests), rejected=len(plan.rejections)
    )
    if len(plan.accepted) + len(plan.rejections) != len(requests):
        raise InvariantError("accepted + rejected does not equal submitted")
    return RunResult(name, plan, profile, compute_report(profile, plan.migration_count), requests)


_ACTION_ORDER = {"release": 0, "place": 1, "migrate": 1, "reject": 2}


def run_log(plan: SchedulePlan) -> list[str]:
    """``slot vm_id pm_id action`` lines; releases precede placements within a slot."""
    events = [(e.slot, e.vm_id, e.pm_id, e.action) for e in plan.events]
    events += [(a.end, a.vm_id, a.pm_id, "release") for a in plan.assignments]
    events.sort(key=lambda e: (e[0], _ACTION_ORDER[e[3]], e[1]))
    return [f"{s} {v} {p} {a}" for s, v, p, a in events]


@dataclass
class ExperimentConfig:
    algorithms: list[str]
    metrics: list[str] = field(default_factory=lambda: ["avg-util", "imbalance", "makespan", "cm"])
    pm_config: str | None = None
    vm_config: str | None = None
    generator: GeneratorSpec | None = None
    trace: str | None = None
    repetitions: int = 1
    seed: int = 0
    t_obs: float | None = None
    slot_minutes: float = 5.0
    k: int = 4
    migration_factor: float = 0.1

    def validate(self) -> None:
        if not self.algorithms:
            raise ConfigError("select at least one algorithm")
        if not self.metrics:
            raise ConfigError("select at least one metric")
        for name in self.algorithms:
            try:
                canonical_name(name)
            except KeyError as exc:
                raise ConfigError(str(exc)) from None
        for m in self.metrics:
            if m not in METRICS:
                raise ConfigError(f"unknown metric {m!r}; valid: {', '.join(METRICS)}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.slot_minutes <= 0:
            raise ConfigError("slot length must be > 0")
        if self.t_obs is not None and self.t_obs <= 0:
            raise ConfigError("observation horizon must be > 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if (self.generator is None) == (self.trace is None):
            raise ConfigError("give exactly one workload source: 'generator' or 'trace'")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> ExperimentConfig:
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        gen = data.pop("generator", None)
        if gen is not None:
            gen = dict(gen)
            if "other_range" in gen:
                gen["other_range"] = tuple(gen["other_range"])
            if gen.get("vm_type_mix") is not None:
                gen["vm_type_mix"] = tuple(gen["vm_type_mix"])
            try:
                gen = GeneratorSpec(**gen)
            except TypeError as exc:
                raise ConfigError(f"generator: {exc}") from None
        for key in ("pm_config", "vm_config", "trace"):
            if data.get(key) and base is not None and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        if isinstance(data.get("algorithms"), str):
            data["algorithms"] = [data["algorithms"]]
        try:
            cfg = cls(generator=gen, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(data, base=path.parent)


def boot(config: ExperimentConfig) -> list[PmType]:
    return boot_fleet(load_pm_config(config.pm_config or default_config_path()))


def build_workload(config: ExperimentConfig, repetition: int = 0) -> list[VmRequest]:
    if config.trace is not None:
        return parse_trace(config.trace, config.slot_minutes)
    spec = config.generator
    if config.vm_config:
        spec = replace(spec, vm_types=tuple(load_vm_config(config.vm_config)))
    return generate(replace(spec, seed=repetition_seed(config, repetition)))


def repetition_seed(config: ExperimentConfig, repetition: int) -> int:
    """Seed for the generator and randomised strategies in one repetition."""
    return splitmix64(config.seed, repetition)


@dataclass
class Cell:
    value: float
    samples: list[float]
    ci: ConfidenceInterval | None = None


@dataclass
class ComparisonTable:
    algorithms: list[str]
    metrics: list[str]
    cells: dict[tuple[str, str], Cell]
    runs: dict[tuple[str, int], RunResult] = field(default_factory=dict, repr=False)

    def value(self, metric: str, algorithm: str) -> float:
        return self.cells[(metric, canonical_name(algorithm))].value

    def rows(self) -> list[dict]:
        out = []
        for m in self.metrics:
            for a in self.algorithms:
                c = self.cells[(m, a)]
                out.append({
                    "metric": m,
                    "algorithm": a,
                    "value": c.value,
                    "ci_low": c.ci.low if c.ci else None,
                    "ci_high": c.ci.high if c.ci else None,
                    "samples": c.samples,
                })
        return out


def compare(config: ExperimentConfig, pm_types: Sequence[PmType] | None = None,
            keep_runs: bool = False) -> ComparisonTable:
    """Run every selected strategy on identical cloned fleets and identical workloads."""
    config.validate()
    algorithms = [canonical_name(a) for a in config.algorithms]
    if len(set(algorithms)) != len(algorithms):
        raise ConfigError("an algorithm is selected twice")
    fleet = list(pm_types) if pm_types is not None else boot(config)
    samples: dict[tuple[str, str], list[float]] = {(m, a): [] for m in config.metrics for a in algorithms}
    runs: dict[tuple[str, int], RunResult] = {}
    for rep in range(config.repetitions):
        workload = build_workload(config, rep)
        seed = repetition_seed(config, rep)
        for name in algorithms:
            result = run(name, workload, fleet, t_obs=config.t_obs, slot_length=config.slot_minutes,
                         seed=seed, k=config.k, migration_factor=config.migration_factor)
            log.info("rep %d %s: %d accepted, %d rejected", rep, name,
                     len(result.plan.accepted), len(result.plan.rejections))
            for m in config.metrics:
                samples[(m, name)].append(result.report.value(m))
            if keep_runs:
                runs[(name, rep)] = result
    cells = {}
    for key, xs in samples.items():
        ci = confidence_interval(xs) if len(xs) > 1 else None
        cells[key] = Cell(ci.mean if ci else xs[0], xs, ci)
    return ComparisonTable(algorithms, list(config.metrics), cells, runs)


__all__ = [
    "Cell", "ComparisonTable", "ConfigError", "ExperimentConfig", "InvariantError", "RunResult",
    "WorkloadError", "boot", "build_workload", "compare", "load_config", "replay", "run", "run_log",
    "splitmix64",
]
