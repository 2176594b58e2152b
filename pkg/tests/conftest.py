import pytest

from vmalloc.core import PM_TYPES, VM_TYPES, Datacenter, PmType, ResourceVector, VmRequest

TYPE1 = PM_TYPES[0]
VM = {t.type_id: t for t in VM_TYPES}


def req(vm_id, demand, start, end):
    if not isinstance(demand, ResourceVector):
        demand = ResourceVector(*demand)
    return VmRequest(vm_id, demand, start, end)


def unit_pm(cpu=1.0, mem=1.0, storage=1.0):
    return PmType("unit", ResourceVector(cpu, mem, storage))


@pytest.fixture
def type1_dc():
    return Datacenter([TYPE1], horizon=10)


# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
