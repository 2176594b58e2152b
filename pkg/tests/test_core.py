import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TYPE1, VM, req, unit_pm
from vmalloc.core import (
    PM_TYPES,
    VM_TYPES,
    CapacityViolation,
    Datacenter,
    NotHostedError,
    PhysicalMachine,
    PmType,
    ResourceVector,
    TimeGrid,
    VmRequest,
    VmType,
    allocate,
    fits,
    release,
    request_from_fraction,
    utilization,
)


class TestResourceVector:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ResourceVector(-1, 0, 0)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            ResourceVector(float("nan"), 0, 0)

    def test_fits_in_is_componentwise(self):
        assert ResourceVector(1, 2, 3).fits_in(ResourceVector(1, 2, 3))
        assert not ResourceVector(1, 2, 4).fits_in(ResourceVector(9, 9, 3))

    def test_units_roundtrip(self):
        v = ResourceVector(6.5, 17.1, 420)
        assert ResourceVector.from_units(v.to_units()) == v


class TestTypes:
    def test_pm_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            PmType("x", ResourceVector(1, 0, 1))

    def test_pm_power_order(self):
        with pytest.raises(ValueError):
            PmType("x", ResourceVector(1, 1, 1), p_min=500, p_max=300)

    def test_vm_type_needs_cpu(self):
        with pytest.raises(ValueError):
            VmType("x", ResourceVector(0, 1, 1))

    def test_request_needs_one_slot(self):
        with pytest.raises(ValueError):
            VmRequest(0, ResourceVector(1, 1, 1), 3, 3)

    def test_duration(self):
        assert req(0, (1, 1, 1), 3, 6).duration == 3

    def test_time_grid_validation(self):
        assert TimeGrid().slot_length == 5.0
        with pytest.raises(ValueError):
            TimeGrid(slot_length=0)


class TestFits:
    def test_small_vm_fits_empty_type1(self):
        pm = PhysicalMachine(0, TYPE1)
        assert fits(pm, VM["1-1"].demand)

    def test_zero_demand_always_fits(self):
        pm = PhysicalMachine(0, unit_pm())
        pm.allocate(req(0, (1, 1, 1), 0, 1))
        assert fits(pm, ResourceVector(0, 0, 0))

    def test_cpu_component_blocks(self):
        pm = PhysicalMachine(0, PmType("p", ResourceVector(1, 10, 100)))
        pm.allocate(req(0, (0.5, 0, 0), 0, 1))
        assert pm.remaining(0) == ResourceVector(0.5, 10, 100)
        assert not fits(pm, ResourceVector(1, 1, 1))

    def test_memory_alone_blocks(self):
        pm = PhysicalMachine(0, PM_TYPES[2])  # (40, 14, 3380)
        assert not pm.fits(ResourceVector(1, 15, 1))

    def test_powered_off_never_fits(self):
        pm = PhysicalMachine(0, TYPE1, powered_on=False)
        assert not pm.fits(ResourceVector(0, 0, 0))

    def test_fit_checks_every_slot(self):
        pm = PhysicalMachine(0, unit_pm(), 10)
        pm.allocate(req(0, (1, 1, 1), 5, 6))
        assert pm.fits(ResourceVector(1, 1, 1), 0, 5)
        assert not pm.fits(ResourceVector(1, 1, 1), 0, 6)


class TestAllocate:
    def test_component_subtraction(self):
        pm = PhysicalMachine(0, TYPE1)
        r = VmRequest(0, VM["1-2"].demand, 0, 1)
        allocate(pm, r)
        assert pm.remaining(0) == ResourceVector(12, 22.5, 2530)
        assert r.status == "allocated"

    def test_round_trip(self):
        pm = PhysicalMachine(0, TYPE1)
        before = pm.remaining(0)
        r = VmRequest(0, VM["2-1"].demand, 0, 1)
        allocate(pm, r)
        release(pm, r)
        assert pm.remaining(0) == before
        assert r.status == "released"

    def test_exact_saturation(self):
        pm = PhysicalMachine(0, TYPE1)
        for i in range(2):
            pm.allocate(VmRequest(i, VM["1-3"].demand, 0, 1))
        assert pm.remaining(0) == ResourceVector(0, 0, 0)
        with pytest.raises(CapacityViolation):
            pm.allocate(VmRequest(2, VM["1-3"].demand, 0, 1))

    def test_release_last_vm_restores_full_capacity(self):
        pm = PhysicalMachine(0, TYPE1)
        r = VmRequest(0, VM["1-1"].demand, 2, 4)
        pm.allocate(r)
        pm.release(r)
        assert all(pm.remaining(s) == TYPE1.capacity for s in range(5))

    def test_release_not_hosted(self):
        pm = PhysicalMachine(0, TYPE1)
        with pytest.raises(NotHostedError):
            pm.release(req(0, (1, 1, 1), 0, 1))

    def test_interval_outside_lifecycle(self):
        pm = PhysicalMachine(0, TYPE1)
        with pytest.raises(ValueError):
            pm.allocate(req(0, (1, 1, 1), 2, 4), 1, 3)

    def test_powered_off_refuses(self):
        pm = PhysicalMachine(0, TYPE1, powered_on=False)
        with pytest.raises(CapacityViolation):
            pm.allocate(req(0, (1, 1, 1), 0, 1))

    def test_double_cover_refused(self):
        pm = PhysicalMachine(0, TYPE1)
        r = req(0, (1, 1, 1), 0, 4)
        pm.allocate(r, 0, 2)
        with pytest.raises(CapacityViolation):
            pm.allocate(r, 1, 3)

    def test_pieces_released_individually(self):
        pm = PhysicalMachine(0, TYPE1)
        r = req(0, (1, 1, 1), 0, 4)
        pm.allocate(r, 0, 2)
        pm.allocate(r, 2, 4)
        pm.release(r, (0, 2))
        assert pm.hosted[0] == [(2, 4)]
        pm.check_conservation()

    def test_release_visible_at_end_slot(self):
        pm = PhysicalMachine(0, unit_pm())
        pm.allocate(req(0, (1, 1, 1), 0, 3))
        assert pm.fits(ResourceVector(1, 1, 1), 3, 5)

    def test_timeline_grows(self):
        pm = PhysicalMachine(0, TYPE1, 1)
        pm.allocate(req(0, (1, 1, 1), 50, 60))
        assert pm.utilization(55).cpu == pytest.approx(1 / 16)


class TestUtilization:
    def test_empty(self):
        assert utilization(PhysicalMachine(0, TYPE1), 0) == ResourceVector(0, 0, 0)

    def test_half(self):
        pm = PhysicalMachine(0, TYPE1)
        pm.allocate(request_from_fraction(0, 0.5, TYPE1.capacity, 0, 1))
        assert pm.utilization(0).as_tuple() == (0.5, 0.5, 0.5)

    def test_small_vm_share_over_three_slots(self):
        # a one-unit VM on a sixteen-unit server, occupying slots 3, 4 and 5
        pm = PhysicalMachine(0, TYPE1)
        r = VmRequest(2, VM["1-1"].demand, 3, 6)
        pm.allocate(r)
        assert r.duration == 3
        assert [pm.utilization(s).cpu for s in range(2, 7)] == [0, 0.0625, 0.0625, 0.0625, 0]


class TestDatacenter:
    def test_ids_and_shared_array(self):
        dc = Datacenter.from_counts([(TYPE1, 3)], horizon=4)
        assert [pm.pm_id for pm in dc] == [0, 1, 2]
        dc[1].allocate(req(0, (8, 15, 1690), 0, 2))
        assert dc.usage[1, 0, 0] == 8_000_000
        assert dc.fits_mask(ResourceVector(9, 1, 1), 0).tolist() == [True, False, True]

    def test_growth_keeps_binding(self):
        dc = Datacenter([TYPE1], horizon=2)
        dc[0].allocate(req(0, (1, 1, 1), 0, 1))
        dc[0].allocate(req(1, (1, 1, 1), 40, 41))
        assert dc.horizon >= 41
        assert dc.usage[0, 0, 0] == 1_000_000
        dc.check_conservation()

    def test_powered_mask(self):
        dc = Datacenter([TYPE1, TYPE1], powered_on=False)
        dc[1].powered_on = True
        assert dc.fits_mask(ResourceVector(1, 1, 1), 0).tolist() == [False, True]

    def test_empty_fleet_rejected(self):
        with pytest.raises(ValueError):
            Datacenter([])


ops = st.lists(
    st.tuples(
        st.integers(0, 7),  # vm type
        st.integers(0, 2),  # pm
        st.integers(0, 15),  # start
        st.integers(1, 6),  # duration
        st.booleans(),  # release afterwards
    ),
    max_size=40,
)


@settings(max_examples=150, deadline=None)
@given(ops)
def test_conservation_under_random_operations(seq):
    dc = Datacenter(PM_TYPES, horizon=4)
    live = []
    for i, (t, p, s, d, rel) in enumerate(seq):
        r = VmRequest(i, VM_TYPES[t].demand, s, s + d)
        if dc[p].fits(r.demand, r.start, r.end):
            dc[p].allocate(r)
            live.append((p, r))
        else:
            with pytest.raises(CapacityViolation):
                dc[p].allocate(r)
        if rel and live:
            q, old = live.pop(0)
            dc[q].release(old)
        dc.check_conservation()
        assert np.all(dc.usage <= dc.capacity_units[:, None, :])
    for q, old in live:
        dc[q].release(old)
    assert not dc.usage.any()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 7), st.integers(0, 20), st.integers(1, 20))
def test_allocate_release_identity(t, s, d):
    pm = PhysicalMachine(0, PmType("big", ResourceVector(100, 200, 5000)), 1)
    pm.allocate(VmRequest(99, ResourceVector(3.3, 7.7, 11.1), 0, 50))
    before = pm.usage_units.copy()
    r = VmRequest(0, VM_TYPES[t].demand, s, s + d)
    pm.allocate(r)
    pm.release(r)
    assert np.array_equal(pm.usage_units[: len(before)], before)
    assert not pm.usage_units[len(before):].any()
