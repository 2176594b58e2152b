import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmalloc.core import PM_TYPES, VM_TYPES
from vmalloc.workload import (
    GeneratorSpec,
    WorkloadError,
    boot_fleet,
    default_config_path,
    generate,
    load_pm_config,
    load_vm_config,
    mixed_fleet,
    parse_trace,
    read_trace,
    write_trace,
)


class TestGenerate:
    def test_degenerate_uniform(self):
        reqs = generate(GeneratorSpec(5, "uniform", "start", low=0, high=0, other_range=(10, 10)))
        assert [(r.start, r.end) for r in reqs] == [(0, 10)] * 5

    def test_deterministic(self):
        spec = GeneratorSpec(200, "normal", "duration", mean=20, stddev=8, other_range=(0, 50), seed=7)
        assert generate(spec) == generate(spec)

    def test_seed_changes_output(self):
        a = generate(GeneratorSpec(50, "uniform", low=0, high=100, other_range=(1, 5), seed=1))
        b = generate(GeneratorSpec(50, "uniform", low=0, high=100, other_range=(1, 5), seed=2))
        assert a != b

    def test_poisson_interarrival_mean(self):
        reqs = generate(GeneratorSpec(10_000, "poisson", "start", rate=2.0, other_range=(1, 1), seed=3))
        starts = np.array([r.start for r in reqs])
        assert np.all(np.diff(starts) >= 0)
        gap = (starts[-1] - starts[0]) / (len(starts) - 1)
        assert gap == pytest.approx(0.5, rel=0.05)

    def test_poisson_durations(self):
        reqs = generate(GeneratorSpec(5000, "poisson", "duration", rate=6.0, other_range=(0, 10), seed=0))
        assert min(r.duration for r in reqs) >= 1
        assert np.mean([r.duration for r in reqs]) == pytest.approx(6.0, rel=0.05)

    def test_normal_truncated_at_zero(self):
        reqs = generate(GeneratorSpec(2000, "normal", "start", mean=1, stddev=5, other_range=(1, 3), seed=0))
        assert min(r.start for r in reqs) >= 0

    def test_normal_zero_stddev(self):
        reqs = generate(GeneratorSpec(4, "normal", "duration", mean=7, stddev=0, other_range=(2, 2)))
        assert {(r.start, r.end) for r in reqs} == {(2, 9)}

    def test_duration_clamped_to_one(self):
        reqs = generate(GeneratorSpec(100, "uniform", "duration", low=0, high=0.4, other_range=(0, 0)))
        assert all(r.duration == 1 for r in reqs)

    def test_type_mix(self):
        mix = (0, 0, 1, 0, 0, 0, 0, 0)
        reqs = generate(GeneratorSpec(30, "uniform", other_range=(1, 2), vm_type_mix=mix))
        assert {r.vm_type for r in reqs} == {"1-3"}
        assert all(r.demand == VM_TYPES[2].demand for r in reqs)

    @pytest.mark.parametrize("kw", [
        {"count": 0},
        {"count": 3, "distribution": "weibull"},
        {"count": 3, "target_field": "end"},
        {"count": 3, "distribution": "poisson", "rate": 0},
        {"count": 3, "distribution": "normal", "stddev": -1},
        {"count": 3, "low": 5, "high": 1},
        {"count": 3, "other_range": (0, 3)},
        {"count": 3, "vm_type_mix": (1, 2)},
        {"count": 3, "vm_type_mix": (0,) * 8},
    ])
    def test_invalid(self, kw):
        with pytest.raises(WorkloadError):
            generate(GeneratorSpec(**kw))


SWF_LINE = "1 0 0 1500 8 -1 -1 8 3600 -1 1 1 1 1 1 -1 -1 -1"


class TestTrace:
    def test_conversion(self, tmp_path):
        p = tmp_path / "t.swf"
        p.write_text("; UnixStartTime: 0\n" + SWF_LINE + "\n")
        (r,) = parse_trace(p, 5)
        assert (r.vm_id, r.start, r.duration, r.demand.cpu) == (1, 0, 5, 8)
        assert r.demand.memory == pytest.approx(30 * 8 / 16)

    def test_minimum_duration(self, tmp_path):
        p = tmp_path / "t.swf"
        p.write_text("7 600 0 1 2\n")
        (r,) = parse_trace(p)
        assert (r.start, r.duration) == (2, 1)

    def test_start_rounds_half_up(self, tmp_path):
        p = tmp_path / "t.swf"
        p.write_text("1 150 0 10 1\n2 149 0 10 1\n")
        assert [r.start for r in parse_trace(p)] == [1, 0]

    def test_comments_only(self, tmp_path):
        p = tmp_path / "t.swf"
        p.write_text("; Version: 2\n;\n\n")
        assert parse_trace(p) == []

    def test_too_few_fields(self, tmp_path):
        p = tmp_path / "t.swf"
        p.write_text(SWF_LINE + "\n1 2 3\n")
        with pytest.raises(WorkloadError, match=":2:"):
            parse_trace(p)

    def test_malformed_skipped_and_counted(self, tmp_path):
        p = tmp_path / "t.swf"
        p.write_text("\n".join([SWF_LINE, "2 10 0 -1 4", "3 x 0 60 4", "4 10 0 60 0", "5 20 0 60 4"]) + "\n")
        res = read_trace(p)
        assert [r.vm_id for r in res.requests] == [1, 5]
        assert res.skipped == 3
        assert len(res.requests) + res.skipped == res.data_lines == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            parse_trace(tmp_path / "nope.swf")

    def test_round_trip(self, tmp_path):
        reqs = generate(GeneratorSpec(300, "uniform", low=0, high=500, other_range=(1, 40), seed=5))
        p = tmp_path / "g.swf"
        write_trace(reqs, p, 5)
        back = parse_trace(p, 5)
        assert back == reqs


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10**6), st.sampled_from([1.0, 2.5, 5.0, 10.0, 60.0]))
def test_quantization_preserves_minutes(tmp_path_factory, submit, run, slot):
    p = tmp_path_factory.mktemp("q") / "t.swf"
    p.write_text(f"1 {submit} 0 {run} 1\n")
    (r,) = parse_trace(p, slot)
    minutes = run / 60
    assert r.duration == max(1, math.ceil(minutes / slot))
    assert r.duration * slot - minutes < slot
    assert abs(r.start * slot - submit / 60) <= slot / 2


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60), st.sampled_from(["poisson", "normal", "uniform"]),
       st.sampled_from(["start", "duration"]))
def test_generate_parse_round_trip(tmp_path_factory, seed, count, dist, target):
    spec = GeneratorSpec(count, dist, target, rate=1.5, mean=10, stddev=4, low=0, high=30,
                         other_range=(1, 9), seed=seed)
    reqs = generate(spec)
    p = tmp_path_factory.mktemp("rt") / "g.swf"
    write_trace(reqs, p, 5)
    assert parse_trace(p, 5) == reqs


PM_XML = """<?xml version="1.0"?>
<datacenter>
  <pmtype id="1" cpu="16" mem="30" storage="3380" pmin="300" pmax="500" count="2" bandwidth="10"/>
  <pmtype id="2" cpu="52" mem="136" storage="3380" pmin="300" pmax="500" count="1"><rack>7</rack></pmtype>
  <pmtype id="3" count="1">
    <cpu>40</cpu><mem>14</mem><storage>3380</storage><pmin>250</pmin><pmax>450</pmax>
  </pmtype>
</datacenter>
"""


class TestConfig:
    def test_table_of_pm_types(self, tmp_path):
        p = tmp_path / "pm.xml"
        p.write_text(PM_XML)
        fleet = load_pm_config(p)
        assert [t.capacity.as_tuple() for t, _ in fleet] == [(16, 30, 3380), (52, 136, 3380), (40, 14, 3380)]
        assert [n for _, n in fleet] == [2, 1, 1]
        assert fleet[2][0].p_min == 250

    def test_fleet_ids(self, tmp_path):
        p = tmp_path / "pm.xml"
        p.write_text('<d><pmtype id="a" cpu="1" mem="1" storage="1" pmin="1" pmax="2" count="50"/></d>')
        from vmalloc.core import Datacenter
        dc = Datacenter(boot_fleet(load_pm_config(p)))
        assert [pm.pm_id for pm in dc] == list(range(50))

    def test_missing_pmax(self, tmp_path):
        p = tmp_path / "pm.xml"
        p.write_text('<d><pmtype id="a" cpu="1" mem="1" storage="1" pmin="1"/></d>')
        with pytest.raises(WorkloadError, match="pmax"):
            load_pm_config(p)

    @pytest.mark.parametrize("attrs", ['cpu="0" mem="1" storage="1" pmin="1" pmax="2"',
                                       'cpu="1" mem="1" storage="1" pmin="3" pmax="2"',
                                       'cpu="x" mem="1" storage="1" pmin="1" pmax="2"'])
    def test_invalid_values(self, tmp_path, attrs):
        p = tmp_path / "pm.xml"
        p.write_text(f'<d><pmtype id="a" {attrs}/></d>')
        with pytest.raises(WorkloadError):
            load_pm_config(p)

    def test_parse_error_has_line(self, tmp_path):
        p = tmp_path / "pm.xml"
        p.write_text('<d>\n<pmtype id="a"\n</d>')
        with pytest.raises(WorkloadError, match="line"):
            load_pm_config(p)

    def test_bundled_defaults(self):
        fleet = load_pm_config(default_config_path())
        assert [t.capacity for t, _ in fleet] == [t.capacity for t in PM_TYPES]
        assert load_vm_config(default_config_path()) == list(VM_TYPES)

    def test_mixed_fleet(self):
        fleet = mixed_fleet(31)
        assert len(fleet) == 31
        assert [fleet.count(t) for t in PM_TYPES] == [11, 10, 10]
        assert mixed_fleet(3) == list(PM_TYPES)
