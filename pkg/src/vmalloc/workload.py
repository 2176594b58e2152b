"""Request streams: seeded synthetic generators, SWF trace import/export, XML spec configs."""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PM_TYPES, VM_TYPES, PmType, ResourceVector, VmRequest, VmType

log = logging.getLogger(__name__)

DISTRIBUTIONS = ("poisson", "normal", "uniform")
TARGET_FIELDS = ("start", "duration")
SWF_FIELDS = 18
# memory/storage columns appended after the 18 standard SWF fields by write_trace
EXTENDED_FIELDS = SWF_FIELDS + 2


class WorkloadError(ValueError):
    """Invalid generator spec, malformed trace, or bad config file."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic workload description.

    ``distribution`` drives ``target_field``; the other field is drawn
    uniformly from ``other_range`` (inclusive, integer slots).
    """

    count: int
    distribution: str = "uniform"
    target_field: str = "start"
    rate: float = 1.0
    mean: float = 0.0
    stddev: float = 1.0
    low: float = 0.0
    high: float = 0.0
    other_range: tuple[int, int] = (1, 1)
    vm_type_mix: tuple[float, ...] | None = None
    vm_types: tuple[VmType, ...] = VM_TYPES
    seed: int = 0

    def validate(self) -> None:
        if self.count < 1:
            raise WorkloadError("count must be >= 1")
        if self.distribution not in DISTRIBUTIONS:
            raise WorkloadError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.target_field not in TARGET_FIELDS:
            raise WorkloadError(f"target_field must be one of {TARGET_FIELDS}")
        if self.distribution == "poisson" and not self.rate > 0:
            raise WorkloadError("poisson rate must be > 0")
        if self.distribution == "normal" and self.stddev < 0:
            raise WorkloadError("stddev must be >= 0")
        if self.distribution == "uniform" and self.low > self.high:
            raise WorkloadError("uniform needs low <= high")
        lo, hi = self.other_range
        if lo > hi:
            raise WorkloadError("other_range needs low <= high")
        if self.target_field == "start" and lo < 1:
            raise WorkloadError("durations must be >= 1 slot")
        if self.target_field == "duration" and lo < 0:
            raise WorkloadError("start times must be >= 0")
        if not self.vm_types:
            raise WorkloadError("at least one VM type is required")
        if self.vm_type_mix is not None:
            w = np.asarray(self.vm_type_mix, dtype=float)
            if len(w) != len(self.vm_types) or np.any(w < 0) or w.sum() <= 0:
                raise WorkloadError("vm_type_mix needs one non-negative weight per VM type with positive sum")


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float, n: int) -> np.ndarray:
    out = rng.normal(mean, sd, n)
    bad = out < 0
    while bad.any():
        out[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = out < 0
    return out


def _sample_target(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.count
    if spec.distribution == "poisson":
        if spec.target_field == "start":
            arrivals = np.cumsum(rng.exponential(1.0 / spec.rate, n))
            return np.floor(arrivals)
        return rng.poisson(spec.rate, n).astype(float)
    if spec.distribution == "normal":
        if spec.stddev == 0:
            return np.full(n, float(max(spec.mean, 0.0)))
        return _truncated_normal(rng, spec.mean, spec.stddev, n)
    return rng.uniform(spec.low, spec.high, n) if spec.low < spec.high else np.full(n, spec.low)


def generate(spec: GeneratorSpec) -> list[VmRequest]:
    """Draw ``spec.count`` requests; a pure function of ``spec`` (seed included)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    target = _sample_target(spec, rng)
    lo, hi = spec.other_range
    other = rng.integers(lo, hi + 1, spec.count)
    weights = None
    if spec.vm_type_mix is not None:
        w = np.asarray(spec.vm_type_mix, dtype=float)
        weights = w / w.sum()
    kinds = rng.choice(len(spec.vm_types), size=spec.count, p=weights)

    if spec.target_field == "start":
        starts = np.maximum(np.floor(target + 0.5), 0).astype(np.int64)
        durations = other.astype(np.int64)
    else:
        starts = other.astype(np.int64)
        durations = np.maximum(np.floor(target + 0.5), 1).astype(np.int64)
    requests = []
    for i in range(spec.count):
        vt = spec.vm_types[kinds[i]]
        s = int(starts[i])
        requests.append(VmRequest(i, vt.demand, s, s + int(durations[i]), vm_type=vt.type_id))
    return requests


@dataclass(frozen=True)
class TraceRecord:
    request_id: int
    start: int
    duration: int
    processors: float


@dataclass
class TraceResult:
    requests: list[VmRequest] = field(default_factory=list)
    records: list[TraceRecord] = field(default_factory=list)
    skipped: int = 0
    data_lines: int = 0


def _quantize(submit_s: float, run_s: float, slot_minutes: float) -> tuple[int, int]:
    slot_s = slot_minutes * 60.0
    start = int(math.floor(submit_s / slot_s + 0.5))
    duration = max(1, math.ceil(run_s / slot_s))
    return start, duration


def read_trace(
    path: str | Path,
    slot_minutes: float = 5.0,
    reference: PmType = PM_TYPES[0],
) -> TraceResult:
    """Parse an SWF file, keeping job id, submit time, run time and processors.

    Memory and storage default to the processors' proportional share of
    ``reference``; files written by :func:`write_trace` carry them explicitly.
    """
    if slot_minutes <= 0:
        raise WorkloadError("slot length must be > 0")
    result = TraceResult()
    ref = reference.capacity
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith(";"):
                continue
            result.data_lines += 1
            parts = text.split()
            if len(parts) < 5:
                raise WorkloadError(f"{path}:{lineno}: expected at least 5 SWF fields, got {len(parts)}")
            try:
                job_id = int(parts[0])
                submit = float(parts[1])
                run = float(parts[3])
                procs = float(parts[4])
                extra = [float(p) for p in parts[SWF_FIELDS:EXTENDED_FIELDS]] if len(parts) >= EXTENDED_FIELDS else None
            except ValueError:
                result.skipped += 1
                continue
            # SWF uses -1 for unknown values
            if submit < 0 or run <= 0 or procs < 1:
                result.skipped += 1
                continue
            start, duration = _quantize(submit, run, slot_minutes)
            if extra is not None:
                demand = ResourceVector(procs, extra[0], extra[1])
            else:
                share = procs / ref.cpu
                demand = ResourceVector(procs, ref.memory * share, ref.storage * share)
            result.records.append(TraceRecord(job_id, start, duration, procs))
            result.requests.append(VmRequest(job_id, demand, start, start + duration))
    return result


def parse_trace(path: str | Path, slot_minutes: float = 5.0, reference: PmType = PM_TYPES[0]) -> list[VmRequest]:
    result = read_trace(path, slot_minutes, reference)
    if result.skipped:
        log.warning("%s: skipped %d malformed record(s)", path, result.skipped)
    return result.requests


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_trace(requests: Sequence[VmRequest], path: str | Path, slot_minutes: float = 5.0) -> None:
    """Write SWF lines that :func:`read_trace` maps back to the same requests."""
    slot_s = slot_minutes * 60.0
    with open(path, "w") as fh:
        fh.write("; SWF-style workload\n")
        fh.write(f"; SlotMinutes: {_num(slot_minutes)}\n")
        fh.write("; Fields 19-20 (non-standard): memory GB, storage GB\n")
        for r in requests:
            fields = ["-1"] * EXTENDED_FIELDS
            fields[0] = str(r.vm_id)
            fields[1] = _num(r.start * slot_s)
            fields[3] = _num(r.duration * slot_s)
            fields[4] = _num(r.demand.cpu)
            fields[18] = _num(r.demand.memory)
            fields[19] = _num(r.demand.storage)
            fh.write(" ".join(fields) + "\n")


def _attr(elem: ET.Element, names: Sequence[str], what: str) -> str:
    for n in names:
        if n in elem.attrib:
            return elem.attrib[n]
        child = elem.find(n)
        if child is not None and child.text is not None:
            return child.text.strip()
    raise WorkloadError(f"{what}: missing required field '{names[0]}'")


def _parse_xml(path: str | Path) -> ET.Element:
    try:
        return ET.parse(path).getroot()
    except ET.ParseError as exc:
        line, col = exc.position
        raise WorkloadError(f"{path}: XML parse error at line {line}, column {col}") from exc


def _float(elem: ET.Element, names: Sequence[str], what: str) -> float:
    raw = _attr(elem, names, what)
    try:
        return float(raw)
    except ValueError:
        raise WorkloadError(f"{what}: field '{names[0]}' is not a number: {raw!r}") from None


def load_pm_config(path: str | Path) -> list[tuple[PmType, int]]:
    """Read ``<pmtype>`` entries; returns ``(PmType, count)`` pairs in file order.

    Unknown attributes and elements (bandwidth included) are ignored.
    """
    root = _parse_xml(path)
    fleet = []
    for elem in root.iter("pmtype"):
        type_id = _attr(elem, ("id", "type-id"), "pmtype")
        what = f"pmtype {type_id}"
        values = [_float(elem, (n,), what) for n in ("cpu", "mem", "storage", "pmin", "pmax")]
        count = elem.attrib.get("count", "1")
        try:
            cap = ResourceVector(*values[:3])
            pm_type = PmType(type_id, cap, p_min=values[3], p_max=values[4])
            n = int(count)
        except ValueError as exc:
            raise WorkloadError(f"{what}: {exc}") from None
        if n < 0:
            raise WorkloadError(f"{what}: count must be >= 0")
        fleet.append((pm_type, n))
    if not fleet:
        raise WorkloadError(f"{path}: no <pmtype> entries")
    return fleet


def load_vm_config(path: str | Path) -> list[VmType]:
    root = _parse_xml(path)
    types = []
    for elem in root.iter("vmtype"):
        type_id = _attr(elem, ("id", "type-id"), "vmtype")
        what = f"vmtype {type_id}"
        values = [_float(elem, (n,), what) for n in ("cpu", "mem", "storage")]
        try:
            types.append(VmType(type_id, ResourceVector(*values)))
        except ValueError as exc:
            raise WorkloadError(f"{what}: {exc}") from None
    return types


def default_config_path() -> Path:
    return Path(__file__).with_name("data") / "default_specs.xml"


def boot_fleet(fleet: Sequence[tuple[PmType, int]]) -> list[PmType]:
    """Expand ``(type, count)`` pairs into one PmType per PM; list index is the PM id."""
    out: list[PmType] = []
    for pm_type, n in fleet:
        out.extend([pm_type] * n)
    return out


def mixed_fleet(total: int, types: Sequence[PmType] = PM_TYPES) -> list[PmType]:
    """``total`` PMs split as evenly as possible across ``types``, grouped by type."""
    base, extra = divmod(total, len(types))
    return boot_fleet([(t, base + (1 if i < extra else 0)) for i, t in enumerate(types)])
