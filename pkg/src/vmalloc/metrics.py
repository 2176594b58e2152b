"""Performance indices computed from a replayed plan's load profile."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import Datacenter, PmType

# two-sided 95% normal quantile (1.96 to two places)
Z95 = statistics.NormalDist().inv_cdf(0.975)


class MetricError(ValueError):
    pass


@dataclass
class LoadProfile:
    """Per-PM, per-slot utilisation plus integrated loads.

    ``loads[i, d]`` is sum over hosted pieces of (demand_d / capacity_d) * length,
    so ``loads[:, 0]`` is each PM's capacity_makespan.
    """

    loads: np.ndarray  # (M, 3)
    slot_util: np.ndarray  # (M, H, 3)
    t_obs: float
    slot_length: float
    p_min: np.ndarray
    p_max: np.ndarray
    submitted: int = 0
    rejected: int = 0

    @classmethod
    def from_datacenter(cls, dc: Datacenter, t_obs: float, slot_length: float = 1.0,
                        submitted: int = 0, rejected: int = 0) -> LoadProfile:
        caps = dc.capacity_units.astype(float)
        util = dc.usage / caps[:, None, :]
        return cls(
            loads=util.sum(axis=1),
            slot_util=util,
            t_obs=float(t_obs),
            slot_length=float(slot_length),
            p_min=np.array([t.p_min for t in dc.pm_types], dtype=float),
            p_max=np.array([t.p_max for t in dc.pm_types], dtype=float),
            submitted=submitted,
            rejected=rejected,
        )

    @property
    def n_pms(self) -> int:
        return self.loads.shape[0]

    @property
    def cpu_util(self) -> np.ndarray:
        return self.slot_util[:, :, 0]

    def on_spans(self) -> list[tuple[int, int] | None]:
        """Slots ``[first, last+1)`` during which each PM hosts anything; ``None`` if never used."""
        busy = (self.slot_util > 0).any(axis=2)
        spans: list[tuple[int, int] | None] = []
        for row in busy:
            idx = np.flatnonzero(row)
            spans.append((int(idx[0]), int(idx[-1]) + 1) if idx.size else None)
        return spans


def _need_horizon(profile: LoadProfile) -> None:
    if not profile.t_obs > 0:
        raise MetricError("observation horizon must be > 0")


def utilization_by_resource(profile: LoadProfile) -> np.ndarray:
    """``(M, 3)``: each PM's integrated load per resource divided by the observation horizon."""
    _need_horizon(profile)
    return profile.loads / profile.t_obs


def avg_utilization(profile: LoadProfile) -> float:
    """Fleet mean of ``L_i / T_obs`` (CPU)."""
    return float(utilization_by_resource(profile)[:, 0].mean())


def avg_utilization_per_slot(profile: LoadProfile) -> float:
    """Time-weighted CPU utilisation over every slot of the grid, averaged over PMs."""
    if profile.slot_util.shape[1] == 0:
        raise MetricError("empty time grid")
    return float(profile.cpu_util.mean())


def ilb(per_pm_utils: Sequence[float], dc_averages: Sequence[float]) -> float:
    """Integrated load imbalance of one PM against the datacenter-wide averages."""
    u = np.asarray(per_pm_utils, dtype=float)
    avg_i = u.mean()
    return float(np.mean((avg_i - np.asarray(dc_averages, dtype=float)) ** 2))


def ilb_values(utils: np.ndarray) -> np.ndarray:
    """ILB for every row of an ``(M, 3)`` utilisation matrix."""
    dc_avg = utils.mean(axis=0)
    avg_i = utils.mean(axis=1, keepdims=True)
    return ((avg_i - dc_avg) ** 2).mean(axis=1)


def imbalance_degree(profile: LoadProfile) -> float:
    return float(ilb_values(utilization_by_resource(profile)).mean())


def _skew(values: np.ndarray) -> float:
    hi = float(values.max())
    if hi == 0:
        return 1.0  # an idle fleet is perfectly balanced
    return float(values.min()) / hi


def capacity_makespan(profile: LoadProfile) -> float:
    return float(profile.loads[:, 0].max())


def skew_capacity_makespan(profile: LoadProfile) -> float:
    return _skew(profile.loads[:, 0])


def makespan(profile: LoadProfile) -> float:
    """Peak instantaneous CPU utilisation over all PMs and slots."""
    return float(profile.cpu_util.max()) if profile.cpu_util.size else 0.0


def skew_makespan(profile: LoadProfile) -> float:
    return _skew(profile.loads[:, 0])


def power(u: float, pm_type: PmType) -> float:
    if not 0.0 <= u <= 1.0:
        raise MetricError(f"utilisation {u} outside [0, 1]")
    return pm_type.p_min + (pm_type.p_max - pm_type.p_min) * u


def _span_energy(util: np.ndarray, spans, p_min, p_max, slot_length, marginal: bool) -> np.ndarray:
    out = np.zeros(len(spans))
    for i, span in enumerate(spans):
        if span is None:
            continue
        u = util[i, span[0]:span[1]]
        base = 0.0 if marginal else p_min[i]
        out[i] = float(np.sum(base + (p_max[i] - p_min[i]) * u)) * slot_length
    return out


def energy(profile: LoadProfile, marginal: bool = False) -> tuple[np.ndarray, float]:
    """Per-PM and total energy in W*min.

    A PM draws ``P(u)`` on every slot between its first and last hosted slot
    (``p_min`` when idle inside that span) and nothing otherwise.
    ``marginal=True`` drops the idle floor.
    """
    per_pm = _span_energy(profile.cpu_util, profile.on_spans(), profile.p_min, profile.p_max,
                          profile.slot_length, marginal)
    return per_pm, float(per_pm.sum())


def turned_on_pms(profile: LoadProfile) -> int:
    return sum(span is not None for span in profile.on_spans())


@dataclass(frozen=True)
class ConfidenceInterval:
    mean: float
    stddev: float
    low: float
    high: float
    n: int

    @property
    def half_width(self) -> float:
        return (self.high - self.low) / 2


def confidence_interval(samples: Sequence[float]) -> ConfidenceInterval:
    """95% normal interval ``mean +- z s / sqrt(n)``, z ~ 1.96, with the n-1 standard deviation."""
    xs = [float(x) for x in samples]
    if len(xs) < 2:
        raise MetricError("need at least 2 samples for a confidence interval")
    mean = statistics.fmean(xs)
    s = statistics.stdev(xs, xbar=mean)
    h = Z95 * s / math.sqrt(len(xs))
    return ConfidenceInterval(mean, s, mean - h, mean + h, len(xs))


@dataclass
class MetricsReport:
    avg_utilization: float
    avg_utilization_by_resource: tuple[float, float, float]
    avg_utilization_per_slot: float
    imbalance_degree: float
    makespan: float
    skew_makespan: float
    capacity_makespan: float
    skew_capacity_makespan: float
    energy_total: float
    turned_on_pms: int
    rejected_count: int
    submitted: int
    migration_count: int = 0

    def value(self, metric: str) -> float:
        return float(getattr(self, METRICS[metric]))

    def as_dict(self) -> dict:
        return asdict(self)


# CLI identifier -> report attribute
METRICS = {
    "avg-util": "avg_utilization",
    "imbalance": "imbalance_degree",
    "makespan": "makespan",
    "skew-makespan": "skew_makespan",
    "cm": "capacity_makespan",
    "skew-cm": "skew_capacity_makespan",
    "energy": "energy_total",
    "on-pms": "turned_on_pms",
    "rejected": "rejected_count",
    "migrations": "migration_count",
}


def compute_report(profile: LoadProfile, migration_count: int = 0) -> MetricsReport:
    by_res = utilization_by_resource(profile).mean(axis=0) if profile.n_pms else np.zeros(3)
    return MetricsReport(
        avg_utilization=avg_utilization(profile),
        avg_utilization_by_resource=tuple(float(x) for x in by_res),
        avg_utilization_per_slot=avg_utilization_per_slot(profile),
        imbalance_degree=imbalance_degree(profile),
        makespan=makespan(profile),
        skew_makespan=skew_makespan(profile),
        capacity_makespan=capacity_makespan(profile),
        skew_capacity_makespan=skew_capacity_makespan(profile),
        energy_total=energy(profile)[1],
        turned_on_pms=turned_on_pms(profile),
        rejected_count=profile.rejected,
        submitted=profile.submitted,
        migration_count=migration_count,
    )
