"""Datacenter resource model: resource vectors, PM/VM types, and per-slot capacity accounting.

Quantities are stored internally as int64 micro-units so that allocate/release
round trips and the conservation check are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

UNIT_SCALE = 1_000_000
DIMENSIONS = ("cpu", "memory", "storage")


class CapacityViolation(RuntimeError):
    """A placement would oversubscribe a PM. Schedulers must check before allocating."""


class NotHostedError(KeyError):
    """The request is not hosted on the PM it is being released from."""


def _to_units(value: float) -> int:
    return int(round(value * UNIT_SCALE))


@dataclass(frozen=True)
class ResourceVector:
    cpu: float = 0.0
    memory: float = 0.0
    storage: float = 0.0

    def __post_init__(self) -> None:
        for name in DIMENSIONS:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    def __iter__(self):
        return iter((self.cpu, self.memory, self.storage))

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(*(a + b for a, b in zip(self, other)))

    def fits_in(self, other: ResourceVector) -> bool:
        """Component-wise ``self <= other``."""
        return all(a <= b for a, b in zip(self, other))

    def scaled(self, factor: float) -> ResourceVector:
        return ResourceVector(*(a * factor for a in self))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cpu, self.memory, self.storage)

    def to_units(self) -> np.ndarray:
        return np.array([_to_units(v) for v in self], dtype=np.int64)

    @classmethod
    def from_units(cls, units: Sequence[int]) -> ResourceVector:
        return cls(*(float(u) / UNIT_SCALE for u in units))


@dataclass(frozen=True)
class PmType:
    type_id: str
    capacity: ResourceVector
    p_min: float = 300.0
    p_max: float = 500.0

    def __post_init__(self) -> None:
        if min(self.capacity) <= 0:
            raise ValueError(f"PM type {self.type_id}: capacity must be > 0 in every component")
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError(f"PM type {self.type_id}: need 0 <= p_min <= p_max")


@dataclass(frozen=True)
class VmType:
    type_id: str
    demand: ResourceVector

    def __post_init__(self) -> None:
        if self.demand.cpu <= 0:
            raise ValueError(f"VM type {self.type_id}: cpu demand must be > 0")


# Amazon EC2 suggested server pools; power figures are not published per type,
# so every type gets the 300/500 W pair used by the energy validation case.
PM_TYPES: tuple[PmType, ...] = (
    PmType("1", ResourceVector(16, 30, 3380)),
    PmType("2", ResourceVector(52, 136, 3380)),
    PmType("3", ResourceVector(40, 14, 3380)),
)

VM_TYPES: tuple[VmType, ...] = (
    VmType("1-1", ResourceVector(1, 1.7, 160)),
    VmType("1-2", ResourceVector(4, 7.5, 850)),
    VmType("1-3", ResourceVector(8, 15, 1690)),
    VmType("2-1", ResourceVector(6.5, 17.1, 420)),
    VmType("2-2", ResourceVector(13, 34.2, 850)),
    VmType("2-3", ResourceVector(26, 68.4, 1690)),
    VmType("3-1", ResourceVector(5, 1.7, 350)),
    VmType("3-2", ResourceVector(20, 7, 1690)),
)


@dataclass
class VmRequest:
    """A resource demand occupying slots ``[start, end)``."""

    vm_id: int
    demand: ResourceVector
    start: int
    end: int
    status: str = field(default="pending", compare=False)
    vm_type: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"VM {self.vm_id}: start must be >= 0")
        if self.end <= self.start:
            raise ValueError(f"VM {self.vm_id}: lifecycle must cover at least one slot")

    @property
    def duration(self) -> int:
        return self.end - self.start

    def copy(self) -> VmRequest:
        return VmRequest(self.vm_id, self.demand, self.start, self.end, "pending", self.vm_type)


@dataclass(frozen=True)
class TimeGrid:
    slot_length: float = 5.0
    horizon: int = 1

    def __post_init__(self) -> None:
        if self.slot_length <= 0:
            raise ValueError("slot_length must be > 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")


class PhysicalMachine:
    """One server with a per-slot usage timeline.

    A PM may be standalone (owning its own timeline) or a row of a
    :class:`Datacenter`'s fleet-wide array.
    """

    def __init__(self, pm_id: int, pm_type: PmType, horizon: int = 1, *, powered_on: bool = True):
        self.pm_id = pm_id
        self.pm_type = pm_type
        self._on = powered_on
        self.capacity_units = pm_type.capacity.to_units()
        self.hosted: dict[int, list[tuple[int, int]]] = {}
        self._demands: dict[int, np.ndarray] = {}
        self._dc: Datacenter | None = None
        self._usage = np.zeros((max(horizon, 1), 3), dtype=np.int64)

    def __repr__(self) -> str:
        return f"PhysicalMachine(pm_id={self.pm_id}, type={self.pm_type.type_id}, vms={len(self.hosted)})"

    @property
    def capacity(self) -> ResourceVector:
        return self.pm_type.capacity

    @property
    def powered_on(self) -> bool:
        return self._on

    @powered_on.setter
    def powered_on(self, value: bool) -> None:
        self._on = bool(value)
        if self._dc is not None:
            self._dc.powered[self.pm_id] = self._on

    @property
    def usage_units(self) -> np.ndarray:
        return self._usage

    def _ensure(self, end: int) -> None:
        if end <= len(self._usage):
            return
        if self._dc is not None:
            self._dc.ensure_horizon(end)
        else:
            grown = np.zeros((max(end, 2 * len(self._usage)), 3), dtype=np.int64)
            grown[: len(self._usage)] = self._usage
            self._usage = grown

    def remaining(self, slot: int = 0) -> ResourceVector:
        used = self._usage[slot] if slot < len(self._usage) else np.zeros(3, dtype=np.int64)
        return ResourceVector.from_units(self.capacity_units - used)

    def _fits_units(self, units: np.ndarray, start: int, end: int) -> bool:
        if not self.powered_on:
            return False
        lo, hi = start, min(end, len(self._usage))
        if lo >= hi:
            return bool(np.all(units <= self.capacity_units))
        peak = self._usage[lo:hi].max(axis=0)
        return bool(np.all(peak + units <= self.capacity_units))

    def fits(self, demand: ResourceVector, start: int = 0, end: int | None = None) -> bool:
        """True iff ``demand`` fits the remaining capacity at every slot of ``[start, end)``."""
        return self._fits_units(demand.to_units(), start, start + 1 if end is None else end)

    def allocate(self, req: VmRequest, start: int | None = None, end: int | None = None) -> None:
        start = req.start if start is None else start
        end = req.end if end is None else end
        if not req.start <= start < end <= req.end:
            raise ValueError(f"interval [{start}, {end}) is outside VM {req.vm_id}'s lifecycle")
        units = req.demand.to_units()
        if not self.powered_on:
            raise CapacityViolation(f"PM {self.pm_id} is powered off")
        self._ensure(end)
        if not self._fits_units(units, start, end):
            raise CapacityViolation(
                f"VM {req.vm_id} {req.demand.as_tuple()} does not fit PM {self.pm_id} over [{start}, {end})"
            )
        spans = self.hosted.setdefault(req.vm_id, [])
        if any(s < end and start < e for s, e in spans):
            raise CapacityViolation(f"VM {req.vm_id} already hosted on PM {self.pm_id} within [{start}, {end})")
        self._usage[start:end] += units
        spans.append((start, end))
        self._demands[req.vm_id] = units
        req.status = "allocated"

    def release(self, req: VmRequest, interval: tuple[int, int] | None = None) -> None:
        """Free ``req``'s capacity; all of its pieces unless ``interval`` names one."""
        spans = self.hosted.get(req.vm_id)
        if not spans or (interval is not None and tuple(interval) not in spans):
            raise NotHostedError(f"VM {req.vm_id} is not hosted on PM {self.pm_id}")
        units = self._demands[req.vm_id]
        for s, e in [tuple(interval)] if interval is not None else list(spans):
            self._usage[s:e] -= units
            spans.remove((s, e))
        if not spans:
            del self.hosted[req.vm_id]
            del self._demands[req.vm_id]
        req.status = "released"

    def utilization(self, slot: int) -> ResourceVector:
        used = self._usage[slot] if slot < len(self._usage) else np.zeros(3, dtype=np.int64)
        return ResourceVector(*(used / self.capacity_units))

    def check_conservation(self) -> None:
        """Raise if usage differs from the sum of hosted demands at any slot."""
        expected = np.zeros_like(self._usage)
        for vm_id, spans in self.hosted.items():
            for s, e in spans:
                expected[s:e] += self._demands[vm_id]
        if not np.array_equal(expected, self._usage):
            raise CapacityViolation(f"PM {self.pm_id}: usage timeline disagrees with hosted demands")
        if np.any(self._usage > self.capacity_units) or np.any(self._usage < 0):
            raise CapacityViolation(f"PM {self.pm_id}: usage outside [0, capacity]")


class Datacenter:
    """A fleet of PMs sharing one ``(M, horizon, 3)`` usage array for vectorised fit checks."""

    def __init__(self, pm_types: Iterable[PmType], horizon: int = 1, *, powered_on: bool = True):
        self.pms = [PhysicalMachine(i, t, 1, powered_on=powered_on) for i, t in enumerate(pm_types)]
        if not self.pms:
            raise ValueError("a datacenter needs at least one PM")
        self.capacity_units = np.stack([pm.capacity_units for pm in self.pms])
        self.usage = np.zeros((len(self.pms), max(horizon, 1), 3), dtype=np.int64)
        self.powered = np.full(len(self.pms), powered_on)
        self._bind()

    @classmethod
    def from_counts(cls, fleet: Iterable[tuple[PmType, int]], horizon: int = 1, **kw) -> Datacenter:
        types: list[PmType] = []
        for pm_type, count in fleet:
            types.extend([pm_type] * count)
        return cls(types, horizon, **kw)

    def _bind(self) -> None:
        for i, pm in enumerate(self.pms):
            pm._dc = self
            pm._usage = self.usage[i]

    def __len__(self) -> int:
        return len(self.pms)

    def __getitem__(self, pm_id: int) -> PhysicalMachine:
        return self.pms[pm_id]

    def __iter__(self):
        return iter(self.pms)

    @property
    def horizon(self) -> int:
        return self.usage.shape[1]

    @property
    def pm_types(self) -> list[PmType]:
        return [pm.pm_type for pm in self.pms]

    def ensure_horizon(self, end: int) -> None:
        if end <= self.horizon:
            return
        grown = np.zeros((len(self.pms), max(end, 2 * self.horizon), 3), dtype=np.int64)
        grown[:, : self.horizon] = self.usage
        self.usage = grown
        self._bind()

    def fits_mask(self, demand: ResourceVector, start: int, end: int | None = None) -> np.ndarray:
        """Boolean ``(M,)`` array: which powered-on PMs can host ``demand`` over ``[start, end)``."""
        end = start + 1 if end is None else end
        units = demand.to_units()
        hi = min(end, self.horizon)
        if start >= hi:
            peak = np.zeros_like(self.capacity_units)
        elif hi - start == 1:
            peak = self.usage[:, start, :]
        else:
            peak = self.usage[:, start:hi, :].max(axis=1)
        return np.all(peak + units <= self.capacity_units, axis=1) & self.powered

    def utilization_at(self, slot: int) -> np.ndarray:
        """``(M, 3)`` utilisation fractions at ``slot``."""
        if slot >= self.horizon:
            return np.zeros(self.capacity_units.shape)
        return self.usage[:, slot, :] / self.capacity_units

    def check_conservation(self) -> None:
        for pm in self.pms:
            pm.check_conservation()


def fits(pm: PhysicalMachine, demand: ResourceVector, start: int = 0, end: int | None = None) -> bool:
    return pm.fits(demand, start, end)


def allocate(pm: PhysicalMachine, req: VmRequest, interval: tuple[int, int] | None = None) -> PhysicalMachine:
    start, end = interval if interval is not None else (req.start, req.end)
    pm.allocate(req, start, end)
    return pm


def release(pm: PhysicalMachine, req: VmRequest) -> PhysicalMachine:
    pm.release(req)
    return pm


def utilization(pm: PhysicalMachine, slot: int) -> ResourceVector:
    return pm.utilization(slot)


def request_from_fraction(
    vm_id: int, fraction: float, capacity: ResourceVector, start: int, end: int
) -> VmRequest:
    """A request demanding ``fraction`` of ``capacity`` in every component."""
    return VmRequest(vm_id, capacity.scaled(fraction), start, end)


__all__ = [
    "CapacityViolation",
    "Datacenter",
    "DIMENSIONS",
    "NotHostedError",
    "PM_TYPES",
    "PhysicalMachine",
    "PmType",
    "ResourceVector",
    "TimeGrid",
    "UNIT_SCALE",
    "VM_TYPES",
    "VmRequest",
    "VmType",
    "allocate",
    "fits",
    "release",
    "request_from_fraction",
    "utilization",
]
