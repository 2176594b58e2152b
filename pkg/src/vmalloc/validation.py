"""Built-in theoretical test cases with closed-form expected indices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PM_TYPES, PmType, VmRequest, request_from_fraction
from .core import CapacityViolation
from .engine import InvariantError, RunResult, run
from .metrics import LoadProfile, energy

PM = PmType("validation", PM_TYPES[0].capacity, p_min=300.0, p_max=500.0)
TOLERANCE = 1e-9


@dataclass
class Scenario:
    name: str
    algorithm: str
    n_pms: int
    requests: list[VmRequest]
    t_obs: float
    expected: dict[str, float]

    @property
    def pm_types(self) -> list[PmType]:
        return [PM] * self.n_pms


def ls_scenario() -> Scenario:
    """100 PMs, 100 half-PM requests starting 1..100, each lasting 100 slots."""
    reqs = [request_from_fraction(j, 0.5, PM.capacity, j, j + 100) for j in range(1, 101)]
    return Scenario("ls-staircase", "ls", 100, reqs, 100, {
        "avg-util": 0.5, "imbalance": 0.0, "makespan": 0.5,
        "skew-makespan": 1.0, "cm": 50.0, "skew-cm": 1.0,
    })


def lpt_scenario() -> Scenario:
    """50 PMs, 100 half-PM requests starting 1..100 with durations 100..1."""
    reqs = [request_from_fraction(j, 0.5, PM.capacity, j, 101) for j in range(1, 101)]
    return Scenario("lpt-staircase", "lpt", 50, reqs, 100, {
        "avg-util": 0.505, "imbalance": 0.0, "makespan": 1.0,
        "skew-makespan": 1.0, "cm": 50.5, "skew-cm": 1.0,
    })


def edf_scenario() -> Scenario:
    """20 PMs, 50 half-PM requests starting 1..50 and ending 100..51."""
    reqs = [request_from_fraction(j, 0.5, PM.capacity, j, 101 - j) for j in range(1, 51)]
    return Scenario("edf-nested", "edf", 20, reqs, 100, {"rejected": 10, "on-pms": 20})


SCENARIOS = (ls_scenario, lpt_scenario, edf_scenario)
REFERENCE_ENERGY = 250000.0


@dataclass
class Row:
    scenario: str
    metric: str
    expected: float
    actual: float

    @property
    def passed(self) -> bool:
        return abs(self.actual - self.expected) <= TOLERANCE


@dataclass
class ValidationReport:
    rows: list[Row] = field(default_factory=list)
    energy: dict[str, float] = field(default_factory=dict)
    runs: dict[str, RunResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def closest_energy_convention(self) -> str:
        return min(self.energy, key=lambda k: abs(self.energy[k] - REFERENCE_ENERGY))


def run_scenario(scenario: Scenario) -> RunResult:
    return run(scenario.algorithm, scenario.requests, scenario.pm_types,
               t_obs=scenario.t_obs, slot_length=1.0)


def inclusive_profile(result: RunResult, slot_length: float = 1.0) -> LoadProfile:
    """Profile in which every piece also occupies its end slot (no capacity check)."""
    prof = result.profile
    util = np.zeros((prof.n_pms, prof.slot_util.shape[1] + 1, 3))
    by_id = {r.vm_id: r for r in result.requests}
    caps = np.array([[*PM.capacity] for _ in range(prof.n_pms)])
    for a in result.plan.assignments:
        util[a.pm_id, a.start:a.end + 1] += np.array([*by_id[a.vm_id].demand]) / caps[a.pm_id]
    return LoadProfile(util.sum(axis=1), util, prof.t_obs, slot_length, prof.p_min, prof.p_max,
                       prof.submitted, prof.rejected)


def energy_conventions(result: RunResult) -> dict[str, float]:
    """Total energy of a finished run under the shipped rule and two alternatives."""
    inclusive = inclusive_profile(result)
    return {
        "full-halfopen": energy(result.profile)[1],
        "marginal-halfopen": energy(result.profile, marginal=True)[1],
        "full-inclusive": energy(inclusive)[1],
    }


def validate() -> ValidationReport:
    report = ValidationReport()
    for make in SCENARIOS:
        sc = make()
        try:
            result = run_scenario(sc)
        except (CapacityViolation, InvariantError):
            # a broken strategy fails every row of its scenario
            report.rows.extend(Row(sc.name, m, e, float("nan")) for m, e in sc.expected.items())
            continue
        report.runs[sc.name] = result
        for metric, expected in sc.expected.items():
            report.rows.append(Row(sc.name, metric, expected, result.report.value(metric)))
        if sc.algorithm == "edf":
            report.energy = energy_conventions(result)
    return report
