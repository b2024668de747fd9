"""Bit-to-actuation scheduling for the two modulation schemes.

A schedule is a time-ordered list of allocator events (alloc / free / hold)
that a backend replays. Two schemes are supported:

* rz-ook: a 1-bit is `pulses_per_bit` alloc/free pulses of `block_bytes`
  (held for t_h, idle for t_l); a 0-bit is silence for the same duration.
  Every bit returns to the baseline, so bit energy lives at the pulse rate.
* nrz-delta: each 1-bit slot stacks another `delta_bytes` on top of the
  current level, a 0-bit holds, and the whole stack is released after each
  8-bit group, followed by `guard_slots` of settle time.
"""

from dataclasses import dataclass, replace

import numpy as np

from .trace import MemoryTrace

SCHEME_RZ_OOK = "rz-ook"
SCHEME_NRZ_DELTA = "nrz-delta"
SCHEMES = (SCHEME_RZ_OOK, SCHEME_NRZ_DELTA)

ALLOC = "alloc"
FREE = "free"
HOLD = "hold"

MIB = 1024 * 1024


@dataclass(frozen=True)
class ModulationParams:
    scheme: str = SCHEME_RZ_OOK
    t_h_us: int = 20_000
    t_l_us: int = 20_000
    pulses_per_bit: int = 2
    block_bytes: int = 20 * MIB
    delta_bytes: int = 40 * MIB
    delta_threshold_bytes: int = 25 * MIB
    guard_slots: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme: {self.scheme!r}")
        for name in ("t_h_us", "t_l_us", "pulses_per_bit", "block_bytes", "delta_bytes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta_threshold_bytes <= self.delta_bytes:
            raise ValueError("delta_threshold_bytes must be in (0, delta_bytes]")
        if self.guard_slots < 0:
            raise ValueError("guard_slots must be non-negative")

    @property
    def pulse_period_us(self) -> int:
        # always derived, never stored, so t_h/t_l edits cannot go stale
        return self.t_h_us + self.t_l_us

    @property
    def pulse_hz(self) -> float:
        return 1e6 / self.pulse_period_us

    @property
    def bit_duration_us(self) -> int:
        if self.scheme == SCHEME_RZ_OOK:
            return self.pulses_per_bit * self.pulse_period_us
        return self.pulse_period_us

    @property
    def raw_bit_rate(self) -> float:
        return 1e6 / self.bit_duration_us

    def with_overrides(self, **kwargs) -> "ModulationParams":
        return replace(self, **kwargs)

    @classmethod
    def nrz_defaults(cls) -> "ModulationParams":
        # 200 ms slots (5 raw bps) with a one-slot settle gap per group
        return cls(scheme=SCHEME_NRZ_DELTA, t_h_us=100_000, t_l_us=100_000,
                   pulses_per_bit=1)

    @classmethod
    def from_mapping(cls, mapping) -> "ModulationParams":
        """Build params from a key=value mapping (config file or CLI)."""
        scheme = mapping.get("scheme", SCHEME_RZ_OOK)
        base = cls.nrz_defaults() if scheme == SCHEME_NRZ_DELTA else cls()
        kwargs = {}
        for name in ("t_h_us", "t_l_us", "pulses_per_bit", "block_bytes",
                     "delta_bytes", "delta_threshold_bytes", "guard_slots"):
            if name in mapping:
                kwargs[name] = int(mapping[name])
        return base.with_overrides(**kwargs)


@dataclass(frozen=True)
class ActuationEvent:
    t_us: int
    kind: str
    nbytes: int = 0

    def __post_init__(self):
        if self.kind not in (ALLOC, FREE, HOLD):
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if self.kind == ALLOC and self.nbytes <= 0:
            raise ValueError("alloc events need a positive size")


@dataclass(frozen=True)
class Schedule:
    """Events in non-decreasing time order plus total span and peak demand.

    `peak_bytes` is the largest amount held live at any instant; backends
    use it for headroom checks before replaying.
    """

    events: tuple
    duration_us: int
    peak_bytes: int

    def __post_init__(self):
        times = [e.t_us for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("schedule events must be time ordered")
        if self.events and times[-1] > self.duration_us:
            raise ValueError("event past schedule end")


def schedule_rz_ook(bits, params: ModulationParams) -> Schedule:
    """Pulse-train schedule: `pulses_per_bit` alloc/free pairs per 1-bit."""
    events = []
    t_bit = params.pulses_per_bit * params.pulse_period_us
    for i, bit in enumerate(bits):
        if bit not in (0, 1):
            raise ValueError(f"bits must be 0/1, got {bit!r}")
        if not bit:
            continue
        for j in range(params.pulses_per_bit):
            start = i * t_bit + j * params.pulse_period_us
            events.append(ActuationEvent(start, ALLOC, params.block_bytes))
            events.append(ActuationEvent(start + params.t_h_us, FREE))
    peak = params.block_bytes if events else 0
    return Schedule(tuple(events), len(bits) * t_bit, peak)


def schedule_nrz_delta(bits, params: ModulationParams) -> Schedule:
    """Staircase schedule: stack `delta_bytes` per 1-bit, release per group.

    Bits are processed in 8-bit groups; after each group the full stack is
    freed and `guard_slots` empty slots let the release settle before the
    next group's first slot. All-zero input produces no allocations.
    """
    t_slot = params.pulse_period_us
    events = []
    slot = 0
    peak = 0
    for start in range(0, len(bits), 8):
        group = bits[start : start + 8]
        live = 0
        for bit in group:
            if bit not in (0, 1):
                raise ValueError(f"bits must be 0/1, got {bit!r}")
            t = slot * t_slot
            if bit:
                events.append(ActuationEvent(t, ALLOC, params.delta_bytes))
                live += params.delta_bytes
                peak = max(peak, live)
            else:
                events.append(ActuationEvent(t, HOLD))
            slot += 1
        events.append(ActuationEvent(slot * t_slot, FREE))
        slot += params.guard_slots
    duration = slot * t_slot
    if params.guard_slots == 0 and events:
        duration = max(duration, events[-1].t_us)
    return Schedule(tuple(events), duration, peak)


def schedule_bits(bits, params: ModulationParams) -> Schedule:
    if params.scheme == SCHEME_RZ_OOK:
        return schedule_rz_ook(bits, params)
    return schedule_nrz_delta(bits, params)


def schedule_levels(schedule: Schedule):
    """Collapse a schedule into step points (t_us, live_bytes).

    FREE releases everything currently live. Coincident events fold into
    the final level at that timestamp.
    """
    points_t = []
    points_live = []
    live = 0
    for ev in schedule.events:
        if ev.kind == ALLOC:
            live += ev.nbytes
        elif ev.kind == FREE:
            live = 0
        if points_t and points_t[-1] == ev.t_us:
            points_live[-1] = live
        else:
            points_t.append(ev.t_us)
            points_live.append(live)
    return np.asarray(points_t, dtype=np.int64), np.asarray(points_live, dtype=np.int64)


def ideal_waveform(schedule: Schedule, sample_period_us: int, baseline_bytes: int,
                   lead_in_us: int = 0, tail_us: int = 0, meta=None) -> MemoryTrace:
    """Sample the noiseless usage staircase a schedule would produce.

    The schedule starts at `lead_in_us`; samples run on a uniform grid from
    t=0 to lead_in + duration + tail. Instantaneous alloc/free is assumed,
    with a sample landing exactly on an event seeing the post-event level.
    """
    if sample_period_us <= 0:
        raise ValueError("sample_period_us must be positive")
    if baseline_bytes < 0:
        raise ValueError("baseline_bytes must be non-negative")
    total_us = lead_in_us + schedule.duration_us + tail_us
    n = total_us // sample_period_us + 1
    t = np.arange(n, dtype=np.int64) * sample_period_us
    step_t, step_live = schedule_levels(schedule)
    idx = np.searchsorted(step_t + lead_in_us, t, side="right")
    live = np.concatenate(([0], step_live))[idx]
    return MemoryTrace(t, baseline_bytes + live, sample_period_us, dict(meta or {}))
