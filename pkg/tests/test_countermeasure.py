import numpy as np
import pytest

from memchan import scenario
from memchan.countermeasure import (BLOCK_MAX, BLOCK_MIN, JammerParams,
                                    NoChannelError, build_jam_schedule,
                                    default_block_bytes,
                                    estimate_channel_frequency,
                                    estimate_jammer_params, jam)
from memchan.modulation import (ALLOC, FREE, MIB, ModulationParams,
                                ideal_waveform, schedule_bits)
from memchan.trace import MemoryTrace

BAND = (5.0, 100.0)


def _trace(values, period=1000):
    values = np.asarray(values)
    return MemoryTrace(np.arange(len(values), dtype=np.int64) * period,
                       values.astype(np.int64), period)


def _pulse_trace(n_bits=50, block=30 * MIB):
    sched = schedule_bits([1] * n_bits, ModulationParams(block_bytes=block))
    return ideal_waveform(sched, 1000, 512 * MIB)


def test_estimate_hits_pulse_rate():
    tr = _pulse_trace()
    f = estimate_channel_frequency(tr, BAND)
    bin_hz = 1e6 / (len(tr) * 1000)
    assert abs(f - 25.0) <= bin_hz


def test_estimate_dc_and_scale_invariant():
    tr = _pulse_trace()
    f0 = estimate_channel_frequency(tr, BAND)
    shifted = _trace(tr.used_bytes + 3_000_000_000)
    tripled = _trace(tr.used_bytes * 3)
    assert estimate_channel_frequency(shifted, BAND) == f0
    assert estimate_channel_frequency(tripled, BAND) == f0


def test_estimate_flat_trace_raises():
    with pytest.raises(NoChannelError):
        estimate_channel_frequency(_trace(np.full(4000, 2 * 1024 ** 3)), BAND)


def test_estimate_toneless_noise_raises():
    rng = np.random.default_rng(5)
    vals = 2 * 1024 ** 3 + rng.normal(0, 1e6, 4000)
    with pytest.raises(NoChannelError, match="no dominant tone"):
        estimate_channel_frequency(_trace(vals), BAND)


def test_estimate_validates():
    tr = _pulse_trace(4)
    with pytest.raises(ValueError, match="band"):
        estimate_channel_frequency(tr, (0.0, 50.0))
    with pytest.raises(ValueError, match="band"):
        estimate_channel_frequency(tr, (50.0, 10.0))
    with pytest.raises(ValueError, match="Nyquist"):
        estimate_channel_frequency(tr, (5.0, 600.0))
    with pytest.raises(ValueError, match="short"):
        estimate_channel_frequency(_trace(np.arange(8)), BAND)


def test_default_block_clamps():
    quiet = np.full(4000, 1024 ** 3, dtype=float)
    quiet[::40] += 3000  # tiny wiggle, far below 1 MiB
    assert default_block_bytes(_trace(quiet), BAND) == BLOCK_MIN
    assert default_block_bytes(_pulse_trace(block=200 * MIB), BAND) == BLOCK_MAX
    mid = default_block_bytes(_pulse_trace(block=30 * MIB), BAND)
    assert BLOCK_MIN < mid < BLOCK_MAX
    # high-pass ringing can nearly double the swing, never more
    assert 30 * MIB <= mid <= 2 * 30 * MIB


def test_params_validation_and_period():
    p = JammerParams(f_est=25.0, block_bytes=30 * MIB)
    assert p.period_us == 40_000
    assert p.with_overrides(duty=0.3).duty == 0.3
    for bad in (dict(f_est=0.0), dict(duty=0.0), dict(duty=1.0),
                dict(block_bytes=0)):
        with pytest.raises(ValueError):
            JammerParams(**{**dict(f_est=25.0, block_bytes=MIB), **bad})


def test_estimate_jammer_params_end_to_end():
    channel = dict(t_h_us=20_000, t_l_us=20_000, pulses_per_bit=2,
                   block_bytes=48 * MIB)
    tr = scenario.attack_trace(7, 48, channel, "game")
    params = estimate_jammer_params(tr, BAND)
    bin_hz = 1.0 / params.est_window_s
    assert abs(params.f_est - 25.0) <= bin_hz
    assert BLOCK_MIN <= params.block_bytes <= BLOCK_MAX
    tuned = estimate_jammer_params(tr, BAND, duty=0.4, jitter=0.5)
    assert tuned.duty == 0.4 and tuned.jitter == 0.5
    assert tuned.f_est == params.f_est


def test_jam_schedule_layout():
    params = JammerParams(f_est=25.0, block_bytes=30 * MIB)
    sched = build_jam_schedule(params, 1_000_000, seed=3)
    assert sched.peak_bytes == 30 * MIB
    allocs = [e for e in sched.events if e.kind == ALLOC]
    frees = [e for e in sched.events if e.kind == FREE]
    assert len(allocs) == len(frees) == 25  # one pulse per 40 ms period
    for k, (a, f) in enumerate(zip(allocs, frees)):
        assert k * 40_000 <= a.t_us < (k + 1) * 40_000
        assert f.t_us - a.t_us <= 20_000  # duty 0.5 pulse width
        assert f.t_us <= 1_000_000


def test_jam_schedule_jitter_and_determinism():
    params = JammerParams(f_est=25.0, block_bytes=MIB)
    a = build_jam_schedule(params, 2_000_000, seed=1)
    b = build_jam_schedule(params, 2_000_000, seed=1)
    c = build_jam_schedule(params, 2_000_000, seed=2)
    assert a.events == b.events
    assert a.events != c.events
    rigid = build_jam_schedule(params.with_overrides(jitter=0.0),
                               2_000_000, seed=9)
    starts = [e.t_us for e in rigid.events if e.kind == ALLOC]
    assert starts == [k * 40_000 for k in range(50)]


def test_jam_drives_actuator():
    seen = {}

    class Spy:
        def execute(self, schedule):
            seen["schedule"] = schedule
            return "report"

    params = JammerParams(f_est=50.0, block_bytes=2 * MIB)
    assert jam(Spy(), params, 500_000, seed=4) == "report"
    assert seen["schedule"].duration_us == 500_000
