"""Execution backends: replay schedules against a medium and sample it.

Two implementations sit behind the same pair of interfaces. The real
backend allocates actual memory and samples a meminfo-format source; the
simulated backend turns a schedule into an ideal waveform, adds seeded
noise, and is bit-deterministic, which is what the test suite runs on.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import noise as noise_mod
from .modulation import ALLOC, FREE, Schedule, ideal_waveform
from .trace import MemoryTrace, TraceBuilder, parse_meminfo, used_memory

PAGE_BYTES = 4096
MEMINFO_PATH = "/proc/meminfo"


class HeadroomError(RuntimeError):
    """Raised before any allocation when a schedule cannot fit in memory."""


@dataclass
class ExecutionReport:
    """What actually happened while replaying a schedule."""

    scheduled_events: int
    completed_events: int
    jitter_p50_us: float
    jitter_p95_us: float
    aborted: bool = False
    error: str = ""


def _percentile(values, q):
    if not values:
        return 0.0
    return float(np.percentile(np.asarray(values, dtype=np.float64), q))


class RealActuator:
    """Replays a schedule with real allocations, touching every page.

    By default each allocated block is committed by writing one byte per
    4 KiB page; `faithful` mode instead writes the whole block and copies
    it to a second buffer, doubling the footprint.
    """

    def __init__(self, faithful=False, meminfo_path=MEMINFO_PATH,
                 clock_ns=time.monotonic_ns, sleep=time.sleep):
        self.faithful = faithful
        self.meminfo_path = meminfo_path
        self._clock_ns = clock_ns
        self._sleep = sleep

    def _available_bytes(self):
        with open(self.meminfo_path, "r", encoding="ascii") as fh:
            stats = parse_meminfo(fh.read())
        return stats.mem_free + stats.buffers + stats.cache

    def _commit(self, nbytes):
        buf = bytearray(nbytes)
        if self.faithful:
            buf[:] = b"\xaa" * nbytes
            return [buf, bytes(buf)]
        npages = (nbytes + PAGE_BYTES - 1) // PAGE_BYTES
        buf[0 : npages * PAGE_BYTES : PAGE_BYTES] = b"\xaa" * npages
        return [buf]

    def execute(self, schedule: Schedule) -> ExecutionReport:
        factor = 4 if self.faithful else 2
        if schedule.peak_bytes and self._available_bytes() < factor * schedule.peak_bytes:
            raise HeadroomError(
                f"schedule needs {schedule.peak_bytes} bytes live "
                f"(headroom factor {factor}) but less is available; refusing")
        live = []
        deviations = []
        completed = 0
        aborted = False
        error = ""
        start_ns = self._clock_ns()
        try:
            for ev in schedule.events:
                target_ns = start_ns + ev.t_us * 1000
                lag_ns = target_ns - self._clock_ns()
                if lag_ns > 0:
                    self._sleep(lag_ns / 1e9)
                try:
                    if ev.kind == ALLOC:
                        live.extend(self._commit(ev.nbytes))
                    elif ev.kind == FREE:
                        live.clear()
                except MemoryError:
                    aborted = True
                    error = f"allocation of {ev.nbytes} bytes failed at t={ev.t_us}us"
                    break
                deviations.append(abs(self._clock_ns() - target_ns) / 1000.0)
                completed += 1
        finally:
            live.clear()
        return ExecutionReport(
            scheduled_events=len(schedule.events),
            completed_events=completed,
            jitter_p50_us=_percentile(deviations, 50),
            jitter_p95_us=_percentile(deviations, 95),
            aborted=aborted,
            error=error,
        )


class SystemSampler:
    """Samples used memory from a meminfo-format source on a fixed period.

    Deadlines are absolute (next = start + i * period) so lateness does not
    accumulate. A deadline missed by more than one period is skipped and
    counted in metadata; samples are never fabricated.
    """

    def __init__(self, source_path=MEMINFO_PATH,
                 clock_ns=time.monotonic_ns, sleep=time.sleep):
        self.source_path = source_path
        self._clock_ns = clock_ns
        self._sleep = sleep

    def _read_used(self):
        with open(self.source_path, "r", encoding="ascii") as fh:
            return used_memory(parse_meminfo(fh.read()))

    def run(self, duration_us: int, period_us: int) -> MemoryTrace:
        if period_us <= 0:
            raise ValueError("period_us must be positive")
        try:
            self._read_used()
        except OSError as exc:
            raise RuntimeError(f"cannot sample {self.source_path}: {exc}") from exc
        builder = TraceBuilder(period_us)
        missed = 0
        n = duration_us // period_us
        start_ns = self._clock_ns()
        for i in range(n):
            target_ns = start_ns + i * period_us * 1000
            now_ns = self._clock_ns()
            if now_ns > target_ns + period_us * 1000:
                missed += 1
                continue
            if now_ns < target_ns:
                self._sleep((target_ns - now_ns) / 1e9)
            builder.append(i * period_us, self._read_used())
        builder.meta.update({"source": str(self.source_path),
                             "missed_deadlines": str(missed)})
        return builder.finish()


class TraceSampler:
    """Sampler that replays a recorded trace instead of a live system.

    Lets the monitor and CLI run against trace CSVs; the requested period
    must match the recording's nominal period.
    """

    def __init__(self, trace: MemoryTrace):
        self.trace = trace

    def run(self, duration_us: int, period_us: int) -> MemoryTrace:
        if period_us != self.trace.nominal_period_us:
            raise ValueError(
                f"trace was recorded at {self.trace.nominal_period_us}us, "
                f"cannot replay at {period_us}us")
        n = min(len(self.trace), duration_us // period_us)
        return MemoryTrace(self.trace.t_us[:n], self.trace.used_bytes[:n],
                           period_us, dict(self.trace.meta))


class SimMedium:
    """Deterministic stand-in for actuator+sampler against a quiet machine.

    The schedule becomes an ideal usage staircase over a constant baseline,
    then a noise model perturbs it. Fixed seed means bit-identical output.
    """

    def __init__(self, baseline_bytes=1024 * 1024 * 1024,
                 lead_in_us=0, tail_us=0):
        if baseline_bytes < 0:
            raise ValueError("baseline_bytes must be non-negative")
        self.baseline_bytes = baseline_bytes
        self.lead_in_us = lead_in_us
        self.tail_us = tail_us

    def execute_and_sample(self, schedule: Schedule, noise, period_us: int,
                           seed: int) -> MemoryTrace:
        trace = ideal_waveform(schedule, period_us, self.baseline_bytes,
                               lead_in_us=self.lead_in_us, tail_us=self.tail_us,
                               meta={"seed": str(seed)})
        if noise is None or not noise.components:
            return trace
        return noise_mod.apply_noise(trace, noise.with_seed(seed))
