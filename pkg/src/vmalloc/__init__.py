"""Discrete-time simulator for VM allocation in a cloud datacenter."""

from .algorithms import REGISTRY, SchedulePlan, compute_p0, get_scheduler, register
from .core import (
    PM_TYPES,
    VM_TYPES,
    CapacityViolation,
    Datacenter,
    PhysicalMachine,
    PmType,
    ResourceVector,
    VmRequest,
    VmType,
)
from .engine import ExperimentConfig, compare, run
from .metrics import METRICS, MetricsReport, confidence_interval
from .workload import GeneratorSpec, generate, mixed_fleet, parse_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "CapacityViolation", "Datacenter", "ExperimentConfig", "GeneratorSpec", "METRICS", "MetricsReport",
    "PM_TYPES", "PhysicalMachine", "PmType", "REGISTRY", "ResourceVector", "SchedulePlan", "VM_TYPES",
    "VmRequest", "VmType", "compare", "compute_p0", "confidence_interval", "generate", "get_scheduler",
    "mixed_fleet", "parse_trace", "register", "run", "write_trace",
]
