import numpy as np
import pytest

from memchan import noise
from memchan.backends import (HeadroomError, RealActuator, SimMedium,
                              SystemSampler, TraceSampler)
from memchan.modulation import (ALLOC, FREE, MIB, ActuationEvent,
                                ModulationParams, Schedule, schedule_bits)
from memchan.trace import MemoryTrace


def _meminfo_text(total_kb, free_kb, buffers_kb=0, cached_kb=0):
    return (f"MemTotal: {total_kb} kB\nMemFree: {free_kb} kB\n"
            f"Buffers: {buffers_kb} kB\nCached: {cached_kb} kB\n")


class FakeClock:
    """Monotonic ns clock that only advances when slept on."""

    def __init__(self, overshoot_ns=0):
        self.ns = 0
        self.overshoot_ns = overshoot_ns

    def clock_ns(self):
        return self.ns

    def sleep(self, seconds):
        self.ns += int(seconds * 1e9) + self.overshoot_ns


def _sched(bits=(1, 0, 1)):
    return schedule_bits(list(bits), ModulationParams(block_bytes=2 * MIB))


def test_sim_medium_deterministic():
    model = noise.NoiseModel((noise.gaussian(1e6), noise.random_walk(4096, 1e8)))
    medium = SimMedium(512 * MIB, lead_in_us=10_000, tail_us=10_000)
    a = medium.execute_and_sample(_sched(), model, 1000, 42)
    b = medium.execute_and_sample(_sched(), model, 1000, 42)
    c = medium.execute_and_sample(_sched(), model, 1000, 43)
    assert np.array_equal(a.used_bytes, b.used_bytes)
    assert np.array_equal(a.t_us, b.t_us)
    assert not np.array_equal(a.used_bytes, c.used_bytes)
    assert a.meta["seed"] == "42"


def test_sim_medium_noiseless_is_ideal_staircase():
    medium = SimMedium(100 * MIB)
    tr = medium.execute_and_sample(_sched([1]), None, 1000, 0)
    assert tr.used_bytes[0] == 100 * MIB + 2 * MIB  # sample on the alloc edge
    assert tr.used_bytes[-1] == 100 * MIB
    assert set(np.unique(tr.used_bytes)) == {100 * MIB, 102 * MIB}


def test_sim_medium_empty_schedule_flat_baseline():
    medium = SimMedium(1024 ** 3)
    tr = medium.execute_and_sample(Schedule((), 50_000, 0), None, 1000, 0)
    assert (tr.used_bytes == 1024 ** 3).all()
    assert tr.duration_us == 50_000


def test_sim_medium_empty_noise_model_identity():
    medium = SimMedium(256 * MIB)
    quiet = medium.execute_and_sample(_sched(), noise.NoiseModel(()), 1000, 5)
    ideal = medium.execute_and_sample(_sched(), None, 1000, 5)
    assert np.array_equal(quiet.used_bytes, ideal.used_bytes)


def test_sim_medium_validates_baseline():
    with pytest.raises(ValueError):
        SimMedium(-1)


def test_trace_sampler_replays_and_truncates():
    values = np.arange(100) * MIB
    tr = MemoryTrace(np.arange(100, dtype=np.int64) * 1000, values, 1000,
                     {"origin": "unit"})
    out = TraceSampler(tr).run(100_000, 1000)
    assert np.array_equal(out.used_bytes, values)
    assert out.meta["origin"] == "unit"
    head = TraceSampler(tr).run(30_000, 1000)
    assert len(head) == 30
    assert np.array_equal(head.used_bytes, values[:30])


def test_trace_sampler_rejects_period_mismatch():
    tr = MemoryTrace(np.arange(10, dtype=np.int64) * 1000, np.arange(10), 1000)
    with pytest.raises(ValueError, match="1000"):
        TraceSampler(tr).run(5_000, 500)


def test_system_sampler_reads_fixture(tmp_path):
    path = tmp_path / "meminfo"
    path.write_text(_meminfo_text(8_000_000, 2_000_000, 500_000, 1_500_000))
    clock = FakeClock()
    sampler = SystemSampler(str(path), clock_ns=clock.clock_ns,
                            sleep=clock.sleep)
    tr = sampler.run(10_000, 1000)
    assert len(tr) == 10
    assert (tr.used_bytes == 4_000_000 * 1024).all()
    assert np.array_equal(tr.t_us, np.arange(10) * 1000)
    assert tr.meta["missed_deadlines"] == "0"
    assert tr.meta["source"] == str(path)


def test_system_sampler_skips_missed_deadlines(tmp_path):
    path = tmp_path / "meminfo"
    path.write_text(_meminfo_text(4_000_000, 1_000_000))
    clock = FakeClock(overshoot_ns=2_500_000)  # every sleep runs 2.5 ms long
    sampler = SystemSampler(str(path), clock_ns=clock.clock_ns,
                            sleep=clock.sleep)
    tr = sampler.run(20_000, 1000)
    missed = int(tr.meta["missed_deadlines"])
    assert missed > 0
    assert len(tr) == 20 - missed
    assert (np.diff(tr.t_us) > 0).all()  # gaps, never fabricated samples


def test_system_sampler_validates(tmp_path):
    clock = FakeClock()
    with pytest.raises(ValueError):
        SystemSampler(str(tmp_path / "m"), clock.clock_ns, clock.sleep).run(1000, 0)
    with pytest.raises(RuntimeError, match="cannot sample"):
        SystemSampler(str(tmp_path / "absent"), clock.clock_ns,
                      clock.sleep).run(1000, 1000)


def test_real_actuator_refuses_without_headroom(tmp_path):
    path = tmp_path / "meminfo"
    # 3 MiB reclaimable < 2x the 2 MiB peak
    path.write_text(_meminfo_text(1_000_000, 1024, 1024, 1024))
    act = RealActuator(meminfo_path=str(path))
    with pytest.raises(HeadroomError, match="refusing"):
        act.execute(_sched())
    # nothing was allocated before the refusal, so a roomy file succeeds
    path.write_text(_meminfo_text(16_000_000, 8_000_000))
    report = act.execute(_sched([1]))
    assert not report.aborted


def test_real_actuator_completes_schedule(tmp_path):
    path = tmp_path / "meminfo"
    path.write_text(_meminfo_text(16_000_000, 8_000_000))
    clock = FakeClock()
    act = RealActuator(meminfo_path=str(path), clock_ns=clock.clock_ns,
                       sleep=clock.sleep)
    sched = _sched([1, 1, 0, 1])
    report = act.execute(sched)
    assert report.scheduled_events == len(sched.events)
    assert report.completed_events == len(sched.events)
    assert not report.aborted and report.error == ""
    assert report.jitter_p95_us >= report.jitter_p50_us >= 0.0


def test_real_actuator_empty_schedule(tmp_path):
    path = tmp_path / "meminfo"
    path.write_text(_meminfo_text(16_000_000, 8_000_000))
    report = RealActuator(meminfo_path=str(path)).execute(Schedule((), 0, 0))
    assert report.scheduled_events == 0 and report.completed_events == 0


def test_real_actuator_faithful_doubles_footprint(tmp_path):
    path = tmp_path / "meminfo"
    # 5 MiB reclaimable: enough for 2x2 MiB peak, not for the 4x of faithful
    path.write_text(_meminfo_text(16_000_000, 5 * 1024))
    clock = FakeClock()
    plain = RealActuator(meminfo_path=str(path), clock_ns=clock.clock_ns,
                         sleep=clock.sleep)
    assert not plain.execute(_sched([1])).aborted
    with pytest.raises(HeadroomError):
        RealActuator(faithful=True, meminfo_path=str(path)).execute(_sched([1]))
