"""Receiver: recover packet bits from a memory-usage trace.

Pipeline for the pulse (rz-ook) scheme: high-pass filter to strip the slow
baseline, find a header by its rise/fall pulse pattern, slice 8 bit-windows
of N samples, take each window's single-bin DFT amplitude at the pulse
frequency, and threshold against a calibrated A_0 (ties classify as 1).
The staircase (nrz-delta) scheme instead thresholds per-slot level deltas
on a median-smoothed trace. ECC decoding lives in the codec module.
"""

import numpy as np
from dataclasses import dataclass, replace
from scipy.signal import butter, medfilt, sosfilt

from . import kernels
from .modulation import ModulationParams, SCHEME_RZ_OOK

MIB = 1024 * 1024


class CalibrationError(RuntimeError):
    """Preamble clusters too close (or absent) to pick a threshold."""


@dataclass(frozen=True)
class DemodParams:
    """Receiver-side knowledge of the channel plus tuning knobs.

    `n_window` is the samples-per-bit window (bit duration over sample
    period); `a_0` is the amplitude threshold, usually calibrated from the
    preamble rather than set by hand. Sync parameters describe the header's
    time-domain pulse shape.
    """

    f_t: float = 25.0
    n_window: int = 80
    sample_period_us: int = 1000
    a_0: float = 0.0
    hp_cutoff: float = 12.5
    hp_order: int = 5
    pulses_per_bit: int = 2
    t_h_us: int = 20_000
    edge_min_bytes: float = 10.0 * MIB
    search_stride: int = 1
    delta_threshold_bytes: float = 25.0 * MIB
    slot_us: int = 200_000
    median_k: int = 5
    guard_slots: int = 1

    def __post_init__(self):
        if self.sample_rate < 2 * self.f_t:
            raise ValueError("sample rate below Nyquist for the pulse frequency")
        if self.n_window < 2:
            raise ValueError("n_window must be at least 2")
        if self.median_k % 2 == 0:
            raise ValueError("median_k must be odd")

    @property
    def sample_rate(self) -> float:
        return 1e6 / self.sample_period_us

    @property
    def bin_k(self) -> int:
        return int(round(self.f_t * self.n_window / self.sample_rate))

    @property
    def slot_samples(self) -> int:
        return int(round(self.slot_us / self.sample_period_us))

    def with_overrides(self, **kwargs) -> "DemodParams":
        return replace(self, **kwargs)

    @classmethod
    def for_channel(cls, mod: ModulationParams, sample_period_us: int,
                    **overrides) -> "DemodParams":
        """Derive receiver params from the transmitter's modulation params."""
        f_t = mod.pulse_hz
        fields = dict(
            f_t=f_t,
            n_window=int(round(mod.bit_duration_us / sample_period_us)),
            sample_period_us=sample_period_us,
            hp_cutoff=f_t / 2.0,
            pulses_per_bit=mod.pulses_per_bit if mod.scheme == SCHEME_RZ_OOK else 1,
            t_h_us=mod.t_h_us,
            edge_min_bytes=mod.block_bytes / 2.0,
            delta_threshold_bytes=float(mod.delta_threshold_bytes),
            slot_us=mod.pulse_period_us,
            guard_slots=mod.guard_slots,
        )
        fields.update(overrides)
        return cls(**fields)


@dataclass(frozen=True)
class BitDecision:
    window_index: int
    amplitude_at_ft: float
    bit: int

    def __post_init__(self):
        if self.amplitude_at_ft < 0:
            raise ValueError("amplitudes are magnitudes, must be >= 0")
        if self.bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")


def butterworth_highpass(values, cutoff_hz, order, sample_rate):
    """Causal IIR high-pass (bilinear-designed), DC gain 0, passband 1.

    The first sample is treated as the resting level and subtracted before
    filtering; with zero DC gain this changes nothing in steady state but
    keeps the startup transient proportional to the signal, not to the
    multi-GiB baseline.
    """
    if not 0 < cutoff_hz < sample_rate / 2:
        raise ValueError("cutoff must sit strictly below the Nyquist rate")
    if order < 1:
        raise ValueError("order must be >= 1")
    x = np.asarray(values, dtype=np.float64)
    if len(x) == 0:
        return x
    sos = butter(order, cutoff_hz, btype="highpass", output="sos", fs=sample_rate)
    return sosfilt(sos, x - x[0])


def window_amplitude(window, f_t, sample_rate) -> float:
    """Magnitude of the DFT at the bin nearest f_t, normalized by N."""
    w = np.asarray(window, dtype=np.float64)
    if len(w) < 2:
        raise ValueError("window must have at least 2 samples")
    k = int(round(f_t * len(w) / sample_rate))
    return float(kernels.single_bin_amplitudes(w.reshape(1, -1), k)[0])


def window_amplitudes(windows, k):
    """Batch form over rows of a 2-D array at integer bin k."""
    return kernels.single_bin_amplitudes(np.asarray(windows, dtype=np.float64), k)


def classify_bit(amplitude, a_0) -> int:
    """Threshold rule: 1 iff amplitude >= a_0 (ties are 1)."""
    if a_0 <= 0:
        raise ValueError("a_0 must be positive")
    return 1 if amplitude >= a_0 else 0


def _edge_indices(filtered, edge_min):
    d = np.diff(filtered)
    rises = np.nonzero(d >= edge_min)[0] + 1
    falls = np.nonzero(d <= -edge_min)[0] + 1
    return rises, falls


def _match_header(rises, falls, params, from_index, n):
    h = int(round(params.t_h_us / params.sample_period_us))
    lo, hi = int(np.floor(0.75 * h)), int(np.ceil(1.25 * h))
    t_p = int(round(params.n_window / params.pulses_per_bit))
    tol = max(1, h // 4)

    def pulse_at(lo_idx, hi_idx):
        # first rise in [lo_idx, hi_idx] whose fall lands t_h +/- 25% later
        a = np.searchsorted(rises, lo_idx, side="left")
        b = np.searchsorted(rises, hi_idx, side="right")
        for r in rises[a:b]:
            fa = np.searchsorted(falls, r + lo, side="left")
            fb = np.searchsorted(falls, r + hi, side="right")
            if fb > fa:
                return int(r)
        return None

    start = from_index
    while start < n:
        first = pulse_at(start, n)
        if first is None:
            return None
        ok = True
        for j in range(1, params.pulses_per_bit):
            expect = first + j * t_p
            if pulse_at(expect - tol, expect + tol) is None:
                ok = False
                break
        if ok:
            return first
        start = first + max(1, params.search_stride)
    return None


def find_header(filtered, params: DemodParams, from_index=0):
    """Earliest index >= from_index of a full header pulse pattern, or None.

    A header is `pulses_per_bit` pulses at the pulse period: each a rise of
    at least edge_min_bytes followed within t_h +/- 25% by a matching fall.
    """
    filtered = np.asarray(filtered, dtype=np.float64)
    rises, falls = _edge_indices(filtered, params.edge_min_bytes)
    return _match_header(rises, falls, params, from_index, len(filtered))


def _match_header_near(rises, falls, params, expect, tol, n):
    """Header whose first rise lies within +/- tol of the expected index."""
    h = int(round(params.t_h_us / params.sample_period_us))
    lo, hi = int(np.floor(0.75 * h)), int(np.ceil(1.25 * h))
    t_p = int(round(params.n_window / params.pulses_per_bit))
    ptol = max(1, h // 4)
    a = np.searchsorted(rises, max(0, expect - tol), side="left")
    b = np.searchsorted(rises, expect + tol, side="right")

    def has_fall(r):
        fa = np.searchsorted(falls, r + lo, side="left")
        fb = np.searchsorted(falls, r + hi, side="right")
        return fb > fa

    for r in rises[a:b]:
        if not has_fall(r):
            continue
        ok = True
        for j in range(1, params.pulses_per_bit):
            ra = np.searchsorted(rises, r + j * t_p - ptol, side="left")
            rb = np.searchsorted(rises, r + j * t_p + ptol, side="right")
            if not any(has_fall(rr) for rr in rises[ra:rb]):
                ok = False
                break
        if ok:
            return int(r)
    return None


def demodulate_rz(trace, params: DemodParams, from_index=0, max_dead=3,
                  assume_grid=False):
    """Slice bit windows from every synchronized packet and threshold them.

    Sync is a flywheel: the first header is searched for in the time domain
    and confirmed by the frequency rule (a candidate whose own window fails
    the 1-check is discarded), after which packets are expected on the
    8-window grid. With assume_grid=True the caller vouches that from_index
    is already on the grid (it followed a located preamble), so the first
    packet goes through the same tolerant grid logic instead of a cold
    search that could skip it. A grid header damaged in the time domain still counts if
    its window passes the frequency check; one damaged in both domains
    yields a placeholder packet (its windows classified as-is, header 0 =>
    framing loss downstream) so later packets keep their positions. After
    `max_dead` consecutive dead slots the lock is abandoned, trailing
    placeholders are dropped, and a fresh search starts; trailing partial
    packets are returned truncated.

    Returns (bits, decisions): raw channel bits and one BitDecision per
    emitted window.
    """
    if params.a_0 <= 0:
        raise ValueError("demodulate_rz needs a calibrated a_0")
    n_w = params.n_window
    filtered = butterworth_highpass(trace.used_bytes, params.hp_cutoff,
                                    params.hp_order, params.sample_rate)
    rises, falls = _edge_indices(filtered, params.edge_min_bytes)
    n = len(filtered)
    tol = max(2, n_w // 32)
    bits = []
    decisions = []

    def window_amp(start):
        return float(window_amplitudes(
            filtered[start : start + n_w].reshape(1, n_w), params.bin_k)[0])

    def consume(h):
        n_win = min(8, (n - h) // n_w)
        windows = filtered[h : h + n_win * n_w].reshape(n_win, n_w)
        for a in window_amplitudes(windows, params.bin_k):
            bit = classify_bit(float(a), params.a_0)
            decisions.append(BitDecision(len(decisions), float(a), bit))
            bits.append(bit)
        return n_win == 8

    idx = from_index
    expect = from_index if assume_grid else None
    pending = []
    dead_start = 0
    while True:
        if expect is None:
            pending = []
            h = _match_header(rises, falls, params, idx, n)
            if h is None or (n - h) // n_w == 0:
                break
            if classify_bit(window_amp(h), params.a_0) != 1:
                idx = h + max(1, params.search_stride)
                continue
            if not consume(h):
                break
            expect = h + 8 * n_w
            continue
        if expect + n_w > n:
            break
        anchor = _match_header_near(rises, falls, params, expect, tol, n)
        if anchor is None and classify_bit(window_amp(expect), params.a_0) == 1:
            anchor = expect
        if anchor is None:
            if not pending:
                dead_start = expect
            pending.append(expect)
            if len(pending) >= max_dead:
                expect = None
                idx = dead_start + 1
                continue
            expect = expect + 8 * n_w
            continue
        full = True
        for miss in pending:
            full = consume(miss) and full
        pending = []
        full = consume(anchor) and full
        if not full:
            break
        expect = anchor + 8 * n_w
    return bits, decisions


def _smoothed(trace, params):
    values = np.asarray(trace.used_bytes, dtype=np.float64)
    if len(values) >= params.median_k:
        values = medfilt(values, params.median_k)
    return values


def demodulate_nrz_delta(trace, params: DemodParams):
    """Per-slot delta thresholding for the staircase scheme.

    Aligns the slot grid on the first delta crossing (the first packet's
    header step), then reads one bit per slot from center-to-center level
    differences, dropping the settle slots after each 8-bit group. With no
    crossing anywhere the raw (all-zero) slot bits are returned as-is.
    """
    s = params.slot_samples
    delta = params.delta_threshold_bytes
    values = _smoothed(trace, params)
    n = len(values)
    if n < 2 * s:
        return []
    lagged = values[s:] - values[:-s]
    crossings = np.nonzero(lagged >= delta)[0]
    if len(crossings) == 0:
        return [0] * (n // s)
    start = int(crossings[0]) + s  # lag index i compares values[i+s] to values[i]
    half = s // 2
    bits = []
    pos = 0  # slot position within the 8+guard group cycle
    cycle = 8 + params.guard_slots
    j = 0
    while True:
        center = start + j * s + half
        prev = center - s
        if center >= n or prev < 0:
            break
        if pos < 8:
            bits.append(1 if values[center] - values[prev] >= delta else 0)
        pos = (pos + 1) % cycle
        j += 1
    return bits


def _header_edge_evidence(rises, falls, params, pos):
    """Any one of the header's four edges present near its expected offset."""
    h = int(round(params.t_h_us / params.sample_period_us))
    t_p = int(round(params.n_window / params.pulses_per_bit))
    tol = max(1, h // 4)

    def near(arr, center):
        a = np.searchsorted(arr, center - tol, side="left")
        b = np.searchsorted(arr, center + tol, side="right")
        return b > a

    for j in range(params.pulses_per_bit):
        if near(rises, pos + j * t_p) or near(falls, pos + j * t_p + h):
            return True
    return False


def _cluster_stats(amps):
    ones, zeros = amps[0::2], amps[1::2]
    mean1, mean0 = float(np.mean(ones)), float(np.mean(zeros))
    pooled = float(np.sqrt((np.var(ones, ddof=1) + np.var(zeros, ddof=1)) / 2.0))
    return mean1, mean0, pooled


def _preamble_search(trace, params):
    """Locate the preamble start and derive A_0 in one pass.

    Candidate headers come from the time-domain matcher. A candidate whose
    first pulse was eaten by noise locks two windows late (on the next
    1-slot), so from each candidate we walk back in 2-window steps while the
    earlier pair still looks like (1, 0) and the earlier slot shows at least
    one header edge. The walked-back 1-slot is by definition noise-damaged,
    so its bar sits low: 30% of the way up between the candidate's
    provisional cluster means. A candidate is accepted only if the 8 windows
    at the walked-back start split into clusters separated by twice their
    pooled std (the calibration rule); otherwise the search advances, and a
    trace with no acceptable candidate raises CalibrationError.
    """
    filtered = butterworth_highpass(trace.used_bytes, params.hp_cutoff,
                                    params.hp_order, params.sample_rate)
    rises, falls = _edge_indices(filtered, params.edge_min_bytes)
    n = len(filtered)
    n_w = params.n_window

    def amps_at(start):
        windows = filtered[start : start + 8 * n_w].reshape(8, n_w)
        return window_amplitudes(windows, params.bin_k)

    def window_amp(start):
        return float(window_amplitudes(
            filtered[start : start + n_w].reshape(1, n_w), params.bin_k)[0])

    idx = 0
    while True:
        cand = _match_header(rises, falls, params, idx, n)
        if cand is None or cand + 8 * n_w > n:
            raise CalibrationError("no preamble pulse pattern found in trace")
        mean1, mean0, _ = _cluster_stats(amps_at(cand))
        bar = mean0 + 0.3 * (mean1 - mean0)
        start = cand
        while start - 2 * n_w >= 0:
            back = start - 2 * n_w
            if (window_amp(back) >= bar and window_amp(back + n_w) < bar
                    and _header_edge_evidence(rises, falls, params, back)):
                start = back
            else:
                break
        mean1, mean0, pooled = _cluster_stats(amps_at(start))
        if mean1 - mean0 >= 2.0 * pooled:
            return start, (mean1 + mean0) / 2.0
        idx = cand + max(1, params.search_stride)


def locate_preamble(trace, params: DemodParams):
    """Find the 8-window calibration preamble; returns (start, end) indices."""
    start, _ = _preamble_search(trace, params)
    return start, start + 8 * params.n_window


def calibrate_threshold(trace, params: DemodParams) -> float:
    """Pick A_0 from a trace that starts with the raw preamble 10101010.

    A_0 is the midpoint of the mean window amplitude over the preamble's
    1-slots and 0-slots. Calibration fails if the clusters are separated by
    less than twice their pooled standard deviation.
    """
    _, a_0 = _preamble_search(trace, params)
    return a_0


PREAMBLE_BITS = (1, 0, 1, 0, 1, 0, 1, 0)
