"""Scheduling strategies behind one interface, plus the name registry used by the CLI.

Online strategies see one request at a time in arrival order; offline
strategies receive the whole batch. All of them write placements into a
:class:`~vmalloc.core.Datacenter` and return a :class:`SchedulePlan`.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import ClassVar, Iterable, Sequence

import numpy as np

from .core import Datacenter, VmRequest

ONLINE_LB = "online-LB"
OFFLINE_LB = "offline-LB"
ONLINE_ENERGY = "online-energy"
OFFLINE_ENERGY = "offline-energy"
FAMILIES = (ONLINE_LB, OFFLINE_LB, ONLINE_ENERGY, OFFLINE_ENERGY)


@dataclass(frozen=True)
class Assignment:
    vm_id: int
    pm_id: int
    start: int
    end: int


@dataclass(frozen=True)
class Event:
    slot: int
    vm_id: int
    pm_id: int  # -1 for rejections
    action: str  # place | migrate | reject | release


@dataclass
class SchedulePlan:
    assignments: list[Assignment] = field(default_factory=list)
    rejections: list[tuple[int, str]] = field(default_factory=list)
    migration_count: int = 0
    turned_on: set[int] = field(default_factory=set)
    events: list[Event] = field(default_factory=list)

    def place(self, req: VmRequest, pm_id: int, start: int | None = None, end: int | None = None,
              action: str = "place") -> None:
        start = req.start if start is None else start
        end = req.end if end is None else end
        self.assignments.append(Assignment(req.vm_id, pm_id, start, end))
        self.events.append(Event(start, req.vm_id, pm_id, action))

    def reject(self, req: VmRequest, reason: str) -> None:
        req.status = "rejected"
        self.rejections.append((req.vm_id, reason))
        self.events.append(Event(req.start, req.vm_id, -1, "reject"))

    def by_vm(self) -> dict[int, list[Assignment]]:
        out: dict[int, list[Assignment]] = {}
        for a in self.assignments:
            out.setdefault(a.vm_id, []).append(a)
        return out

    @property
    def accepted(self) -> set[int]:
        return {a.vm_id for a in self.assignments}


class UnknownSchedulerError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


# -- placement primitives -------------------------------------------------


def _cpu_caps(fleet: Datacenter) -> np.ndarray:
    return fleet.capacity_units[:, 0].astype(float)


def random_place(req: VmRequest, fleet: Datacenter, rng: random.Random) -> int | None:
    """Draw PM indices uniformly until one fits.

    After ``M`` consecutive misses a single in-order scan decides; ``None``
    means no PM can host the request.
    """
    m = len(fleet)
    ok = fleet.fits_mask(req.demand, req.start)
    for _ in range(m):
        idx = rng.randrange(m)
        if ok[idx]:
            return idx
    hits = np.flatnonzero(ok)
    return int(hits[0]) if hits.size else None


def round_robin_place(req: VmRequest, fleet: Datacenter, cursor: int) -> tuple[int | None, int]:
    m = len(fleet)
    if not 0 <= cursor < m:
        raise ValueError(f"cursor {cursor} outside 0..{m - 1}")
    ok = fleet.fits_mask(req.demand, req.start)
    for step in range(m):
        idx = (cursor + step) % m
        if ok[idx]:
            return idx, (idx + 1) % m
    return None, cursor


def ls_place(req: VmRequest, fleet: Datacenter) -> int | None:
    """Least mean (cpu, memory, storage) utilisation at ``req.start`` among fitting PMs."""
    ok = fleet.fits_mask(req.demand, req.start)
    if not ok.any():
        return None
    score = fleet.utilization_at(req.start).mean(axis=1)
    score = np.where(ok, score, np.inf)
    return int(np.argmin(score))


def _lowest_load(ok: np.ndarray, loads: np.ndarray) -> int | None:
    if not ok.any():
        return None
    return int(np.argmin(np.where(ok, loads, np.inf)))


def _cm(req: VmRequest, cpu_cap: float | np.ndarray, length: int | None = None):
    """Capacity-makespan contribution ``c * t`` with ``c`` relative to ``cpu_cap`` (units)."""
    return req.demand.to_units()[0] / cpu_cap * (req.duration if length is None else length)


def lpt_schedule(requests: Sequence[VmRequest], fleet: Datacenter) -> SchedulePlan:
    """Longest lifecycle first, each onto the fitting PM with the least capacity_makespan."""
    plan = SchedulePlan()
    caps = _cpu_caps(fleet)
    loads = np.zeros(len(fleet))
    for req in sorted(requests, key=lambda r: (-r.duration, r.vm_id)):
        pm_id = _lowest_load(fleet.fits_mask(req.demand, req.start, req.end), loads)
        if pm_id is None:
            plan.reject(req, "no PM fits")
            continue
        fleet[pm_id].allocate(req)
        loads[pm_id] += _cm(req, caps[pm_id])
        plan.place(req, pm_id)
    return plan


def edf_energy_schedule(requests: Sequence[VmRequest], fleet: Datacenter) -> SchedulePlan:
    """Latest end time first; first-fit on running PMs, powering on a new PM only when needed."""
    plan = SchedulePlan()
    for pm in fleet:
        pm.powered_on = False
    for req in sorted(requests, key=lambda r: (-r.end, r.vm_id)):
        ok = fleet.fits_mask(req.demand, req.start, req.end)
        hits = np.flatnonzero(ok)
        if hits.size == 0:
            spare = np.flatnonzero(~fleet.powered)
            candidates = [int(i) for i in spare if _fits_if_on(fleet, int(i), req)]
            if not candidates:
                plan.reject(req, "cannot be served by the data center")
                continue
            pm_id = candidates[0]
            fleet[pm_id].powered_on = True
            plan.turned_on.add(pm_id)
        else:
            pm_id = int(hits[0])
        fleet[pm_id].allocate(req)
        plan.place(req, pm_id)
    return plan


def _fits_if_on(fleet: Datacenter, pm_id: int, req: VmRequest) -> bool:
    pm = fleet[pm_id]
    was = pm.powered_on
    pm.powered_on = True
    try:
        return pm.fits(req.demand, req.start, req.end)
    finally:
        pm.powered_on = was


def post_migration(
    plan: SchedulePlan,
    fleet: Datacenter,
    requests: Sequence[VmRequest],
    factor: float = 0.1,
) -> SchedulePlan:
    """Rebalance an LPT plan in place around the mean capacity_makespan.

    VMs are pulled from PMs whose load exceeds ``avg*(1-factor)`` without
    taking the donor under that mark, then handed to PMs that stay at or
    under ``avg*(1+factor)``. A VM whose own PM still qualifies goes back
    there. Whatever is left goes to the least-loaded PM that fits.
    """
    if factor < 0:
        raise ValueError("factor must be >= 0")
    by_id = {r.vm_id: r for r in requests}
    caps = _cpu_caps(fleet)
    host = {a.vm_id: a.pm_id for a in plan.assignments}
    loads = np.zeros(len(fleet))
    for vm_id, pm_id in host.items():
        loads[pm_id] += _cm(by_id[vm_id], caps[pm_id])
    if not host:
        return plan
    avg = loads.mean()
    up, low = avg * (1 + factor), avg * (1 - factor)

    pending: list[tuple[VmRequest, int]] = []
    for donor in sorted(range(len(fleet)), key=lambda i: (-loads[i], i)):
        if not loads[donor] > low:
            continue
        mine = sorted((by_id[v] for v, p in host.items() if p == donor),
                      key=lambda r: (-_cm(r, caps[donor]), r.vm_id))
        for req in mine:
            cm = _cm(req, caps[donor])
            if loads[donor] - cm >= low:
                fleet[donor].release(req)
                loads[donor] -= cm
                pending.append((req, donor))

    def target(req: VmRequest, origin: int, bounded: bool) -> int | None:
        ok = fleet.fits_mask(req.demand, req.start, req.end)
        if bounded:
            ok &= loads + _cm(req, caps) <= up
            if ok[origin]:
                return origin
        return _lowest_load(ok, loads)

    leftover = []
    pending.sort(key=lambda x: (-_cm(x[0], 1.0), x[0].vm_id))
    for phase in ("bounded", "leftover"):
        queue, leftover = (pending, []) if phase == "bounded" else (leftover, [])
        for req, origin in queue:
            pm_id = target(req, origin, phase == "bounded")
            if pm_id is None:
                leftover.append((req, origin))
                continue
            fleet[pm_id].allocate(req)
            loads[pm_id] += _cm(req, caps[pm_id])
            if pm_id != origin:
                host[req.vm_id] = pm_id
                plan.migration_count += 1
                plan.events.append(Event(req.start, req.vm_id, pm_id, "migrate"))
    for req, origin in leftover:
        del host[req.vm_id]
        plan.reject(req, "no PM fits after migration")

    plan.assignments = [Assignment(v, host[v], by_id[v].start, by_id[v].end)
                        for v in (a.vm_id for a in plan.assignments) if v in host]
    return plan


def compute_p0(cms: Iterable[float], m: int) -> float:
    """Lower bound on the optimal capacity_makespan: ``max(max CM, sum CM / m)``."""
    if m < 1:
        raise ValueError("PM count must be >= 1")
    values = list(cms)
    if not values:
        raise ValueError("need at least one request")
    return max(max(values), sum(values) / m)


def split_lifecycle(req: VmRequest, bound: float, cpu_fraction: float) -> list[tuple[int, int]]:
    """Cut ``[start, end)`` into consecutive pieces whose capacity_makespan is at most ``bound``."""
    if cpu_fraction * req.duration <= bound:
        return [(req.start, req.end)]
    piece = max(1, math.floor(bound / cpu_fraction))
    return [(s, min(s + piece, req.end)) for s in range(req.start, req.end, piece)]


def prepartition_schedule(requests: Sequence[VmRequest], fleet: Datacenter, k: int = 4) -> SchedulePlan:
    """Split long reservations into bounded pieces and place each on the least-loaded fitting PM.

    Requests go in decreasing capacity_makespan order. Sizes are measured
    against the fleet's mean CPU capacity when computing the partition
    bound; loads are tracked per host.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    plan = SchedulePlan()
    if not requests:
        return plan
    caps = _cpu_caps(fleet)
    ref = caps.mean()
    p0 = compute_p0((_cm(r, ref) for r in requests), len(fleet))
    bound = math.ceil(p0 / k)
    loads = np.zeros(len(fleet))
    # largest capacity_makespan first (LPT measured in c*t)
    for req in sorted(requests, key=lambda r: (-_cm(r, ref), r.vm_id)):
        pieces = split_lifecycle(req, bound, req.demand.to_units()[0] / ref)
        placed: list[tuple[int, int, int]] = []
        for s, e in pieces:
            pm_id = _lowest_load(fleet.fits_mask(req.demand, s, e), loads)
            if pm_id is None:
                break
            fleet[pm_id].allocate(req, s, e)
            loads[pm_id] += _cm(req, caps[pm_id], e - s)
            placed.append((pm_id, s, e))
        if len(placed) < len(pieces):
            for pm_id, s, e in placed:
                fleet[pm_id].release(req, (s, e))
                loads[pm_id] -= _cm(req, caps[pm_id], e - s)
            plan.reject(req, "a subinterval found no PM")
            continue
        for i, (pm_id, s, e) in enumerate(placed):
            plan.place(req, pm_id, s, e, "place" if i == 0 else "migrate")
        req.status = "allocated"
        plan.migration_count += len(placed) - 1
    return plan


# -- scheduler interface ---------------------------------------------------


class Scheduler:
    """Base class; subclasses declare ``name`` and ``family`` and implement :meth:`schedule`."""

    name: ClassVar[str]
    family: ClassVar[str]
    online: ClassVar[bool] = False

    def __init__(self, **params) -> None:
        self.params = params

    def schedule(self, requests: Sequence[VmRequest], fleet: Datacenter) -> SchedulePlan:
        raise NotImplementedError


class OnlineScheduler(Scheduler):
    online = True

    def place(self, req: VmRequest, fleet: Datacenter) -> int | None:
        raise NotImplementedError

    def schedule(self, requests: Sequence[VmRequest], fleet: Datacenter) -> SchedulePlan:
        plan = SchedulePlan()
        # arrivals in start order; ties keep submission order
        for req in sorted(requests, key=lambda r: r.start):
            pm_id = self.place(req, fleet)
            if pm_id is None:
                plan.reject(req, "no PM fits")
                continue
            fleet[pm_id].allocate(req)
            plan.place(req, pm_id)
        return plan


class RandomScheduler(OnlineScheduler):
    name = "random"
    family = ONLINE_LB

    def __init__(self, seed: int = 0, **params) -> None:
        super().__init__(seed=seed, **params)
        self.rng = random.Random(seed)

    def place(self, req, fleet):
        return random_place(req, fleet, self.rng)


class RoundRobinScheduler(OnlineScheduler):
    name = "round-robin"
    family = ONLINE_LB

    def __init__(self, **params) -> None:
        super().__init__(**params)
        self.cursor = 0

    def place(self, req, fleet):
        pm_id, self.cursor = round_robin_place(req, fleet, self.cursor)
        return pm_id


class ListScheduler(OnlineScheduler):
    name = "ls"
    family = ONLINE_LB

    def place(self, req, fleet):
        return ls_place(req, fleet)


class LptScheduler(Scheduler):
    name = "lpt"
    family = OFFLINE_LB

    def schedule(self, requests, fleet):
        return lpt_schedule(requests, fleet)


class PostMigrationScheduler(Scheduler):
    name = "mig"
    family = OFFLINE_LB

    def __init__(self, factor: float = 0.1, **params) -> None:
        super().__init__(factor=factor, **params)
        self.factor = factor

    def schedule(self, requests, fleet):
        return post_migration(lpt_schedule(requests, fleet), fleet, requests, self.factor)


class PrepartitionScheduler(Scheduler):
    name = "prepartition"
    family = OFFLINE_LB

    def __init__(self, k: int = 4, **params) -> None:
        super().__init__(k=k, **params)
        self.k = k

    def schedule(self, requests, fleet):
        return prepartition_schedule(requests, fleet, self.k)


class EdfScheduler(Scheduler):
    name = "edf"
    family = OFFLINE_ENERGY

    def schedule(self, requests, fleet):
        return edf_energy_schedule(requests, fleet)


REGISTRY: dict[str, type[Scheduler]] = {
    cls.name: cls
    for cls in (RandomScheduler, RoundRobinScheduler, ListScheduler, LptScheduler,
                PostMigrationScheduler, PrepartitionScheduler, EdfScheduler)
}
ALIASES = {"rr": "round-robin", "r-r": "round-robin", "cmp": "prepartition"}


def register(cls: type[Scheduler]) -> type[Scheduler]:
    """Class decorator adding a custom strategy to the registry."""
    if cls.family not in FAMILIES:
        raise ValueError(f"{cls.__name__}: family must be one of {FAMILIES}")
    REGISTRY[cls.name] = cls
    return cls


def canonical_name(name: str) -> str:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in REGISTRY:
        raise UnknownSchedulerError(f"unknown algorithm {name!r}; valid: {', '.join(sorted(REGISTRY))}")
    return key


def get_scheduler(name: str, **params) -> Scheduler:
    """Instantiate a registered strategy, passing only the parameters it accepts."""
    cls = REGISTRY[canonical_name(name)]
    wanted = {"random": ("seed",), "mig": ("factor",), "prepartition": ("k",)}.get(cls.name, ())
    return cls(**{k: v for k, v in params.items() if k in wanted})


__all__ = [
    "ALIASES", "Assignment", "Event", "FAMILIES", "REGISTRY", "SchedulePlan", "Scheduler",
    "UnknownSchedulerError", "canonical_name", "compute_p0", "edf_energy_schedule", "get_scheduler",
    "lpt_schedule", "ls_place", "post_migration", "prepartition_schedule", "random_place",
    "register", "round_robin_place", "split_lifecycle",
]
