"""Channel-frequency estimation and jamming.

The defender watches a short stretch of the usage trace, finds the
dominant pulse frequency in a configured band (after the same high-pass
the receiver uses), then emits alloc/free pulses at that rate with random
per-period phase jitter. In-phase pulses could accidentally reinforce the
sender instead of corrupting it; jitter decorrelates the two trains, which
pushes the receiver toward coin-flip decisions.
"""

from dataclasses import dataclass, replace

import numpy as np

from .demod import butterworth_highpass
from .modulation import ALLOC, FREE, MIB, ActuationEvent, Schedule

BLOCK_MIN = 1 * MIB
BLOCK_MAX = 64 * MIB


class NoChannelError(RuntimeError):
    """No spectral peak stands out in the band: nothing to jam."""


@dataclass(frozen=True)
class JammerParams:
    f_est: float
    block_bytes: int
    duty: float = 0.5
    est_window_s: float = 5.0
    jitter: float = 1.0
    start_us: int = 0

    def __post_init__(self):
        if not 0 < self.duty < 1:
            raise ValueError("duty must be in (0, 1)")
        if self.f_est <= 0:
            raise ValueError("f_est must be positive")
        if self.block_bytes <= 0:
            raise ValueError("block_bytes must be positive")

    @property
    def period_us(self) -> int:
        return int(round(1e6 / self.f_est))

    def with_overrides(self, **kwargs) -> "JammerParams":
        return replace(self, **kwargs)


def _filtered(trace, band, hp_order=5):
    sample_rate = 1e6 / trace.nominal_period_us
    cutoff = min(band[0] / 2.0, sample_rate / 4.0)
    return butterworth_highpass(trace.used_bytes, cutoff, hp_order, sample_rate), sample_rate


def estimate_channel_frequency(trace, band, min_peak_ratio=3.0) -> float:
    """Dominant frequency in [f_lo, f_hi]: argmax of the DFT magnitude.

    The trace is high-pass filtered first so baseline drift cannot win the
    argmax. If the peak does not exceed the in-band median magnitude by
    `min_peak_ratio` there is no channel to speak of and this raises.
    """
    f_lo, f_hi = band
    if f_lo <= 0 or f_hi <= f_lo:
        raise ValueError("band must be 0 < f_lo < f_hi")
    if len(trace) < 16:
        raise ValueError("trace too short for a frequency estimate")
    values, sample_rate = _filtered(trace, band)
    if f_hi > sample_rate / 2:
        raise ValueError("band exceeds the trace's Nyquist rate")
    spectrum = np.abs(np.fft.rfft(values))
    freqs = np.fft.rfftfreq(len(values), d=trace.nominal_period_us / 1e6)
    in_band = np.nonzero((freqs >= f_lo) & (freqs <= f_hi))[0]
    if len(in_band) == 0:
        raise ValueError("band contains no DFT bins at this trace length")
    mags = spectrum[in_band]
    peak = int(np.argmax(mags))
    median = float(np.median(mags))
    if median <= 0 or float(mags[peak]) < min_peak_ratio * median:
        raise NoChannelError(
            f"no dominant tone in {f_lo}-{f_hi} Hz "
            f"(peak/median {float(mags[peak]) / median if median else 0:.2f})")
    return float(freqs[in_band[peak]])


def default_block_bytes(trace, band) -> int:
    """Jam block sized to the filtered signal's peak-to-peak swing."""
    values, _ = _filtered(trace, band)
    return int(min(BLOCK_MAX, max(BLOCK_MIN, float(np.ptp(values)))))


def estimate_jammer_params(trace, band, duty=0.5, **overrides) -> JammerParams:
    """One-stop estimation: frequency plus a block size matched to the signal."""
    window = overrides.get("est_window_s", 5.0)
    n = int(window * 1e6 / trace.nominal_period_us)
    probe = trace if len(trace) <= n else _head(trace, n)
    f_est = estimate_channel_frequency(probe, band)
    params = JammerParams(f_est=f_est, block_bytes=default_block_bytes(probe, band),
                          duty=duty)
    return params.with_overrides(**overrides) if overrides else params


def _head(trace, n):
    from .trace import MemoryTrace

    return MemoryTrace(trace.t_us[:n], trace.used_bytes[:n],
                       trace.nominal_period_us, dict(trace.meta))


def build_jam_schedule(params: JammerParams, duration_us: int, seed=0) -> Schedule:
    """Random-phase pulse train as a replayable schedule.

    Each period holds one pulse of width duty/f_est whose offset within the
    period is uniform over the idle fraction (scaled by `jitter`), so
    consecutive pulses never overlap.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    period = params.period_us
    width = int(round(params.duty * period))
    slack = (1.0 - params.duty) * period * params.jitter
    events = []
    k = 0
    while True:
        t0 = k * period
        if t0 >= duration_us:
            break
        off = t0 + int(round(rng.uniform(0.0, slack))) if slack > 0 else t0
        events.append(ActuationEvent(off, ALLOC, params.block_bytes))
        events.append(ActuationEvent(min(off + width, duration_us), FREE))
        k += 1
    return Schedule(tuple(events), duration_us, params.block_bytes if events else 0)


def jam(actuator, params: JammerParams, duration_us: int, seed=0):
    """Drive an actuator with the jam schedule; returns its execution report."""
    return actuator.execute(build_jam_schedule(params, duration_us, seed))
