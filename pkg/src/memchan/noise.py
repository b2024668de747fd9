"""Seeded noise models that corrupt ideal usage waveforms.

A NoiseModel is a list of additive components plus a seed. Components:

* gaussian: white noise, sigma_bytes.
* random_walk: integrated white noise with level clamped to +/- clamp_bytes,
  modeling slow drift from allocator churn.
* burst: sporadic trapezoid bumps (alloc-heavy phases); edges are ramped
  over ramp_ms rather than stepped, as abrupt rises/falls of real workloads
  arrive spread over many sampler ticks.
* replay: a recorded trace re-based to zero and tiled over the horizon.
* jammer: a periodic alloc/free pulse train with per-period phase jitter,
  the countermeasure's contribution to the medium.

Every component draws from its own child of one root seed sequence, so a
model is bit-deterministic for a fixed seed regardless of component count.
Named background profiles (flat key=value files) wrap a level plus one
model; they ship with the package and synthesize standalone traces.
"""

import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import kernels
from .config import read_kv
from .trace import MemoryTrace, read_trace

GAUSSIAN = "gaussian"
RANDOM_WALK = "random_walk"
BURST = "burst"
RIPPLE = "ripple"
REPLAY = "replay"
JAMMER = "jammer"
KINDS = (GAUSSIAN, RANDOM_WALK, BURST, RIPPLE, REPLAY, JAMMER)

_PROFILE_DIR = os.path.join(os.path.dirname(__file__), "data", "profiles")
_PROFILE_SUFFIX = ".profile"


@dataclass(frozen=True)
class NoiseComponent:
    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind: {self.kind!r}")

    @classmethod
    def make(cls, kind, **params):
        return cls(kind, tuple(sorted(params.items())))

    def get(self, name, default=None):
        for key, value in self.params:
            if key == name:
                return value
        return default


def gaussian(sigma_bytes):
    return NoiseComponent.make(GAUSSIAN, sigma_bytes=float(sigma_bytes))


def random_walk(step_bytes, clamp_bytes, rate_hz=0.0, ramp_ms=0.0):
    """Clamped random walk; rate_hz > 0 makes it event-driven.

    With a rate, steps land at Poisson-process instants (allocation events)
    and the level holds flat between them, which is how usage counters
    actually move. ramp_ms smears each event over a short window: an
    application touching memory takes a few milliseconds, it does not jump.
    rate_hz=0 keeps the dense per-sample walk.
    """
    if rate_hz < 0:
        raise ValueError("rate_hz must be >= 0")
    if ramp_ms < 0:
        raise ValueError("ramp_ms must be >= 0")
    return NoiseComponent.make(RANDOM_WALK, step_bytes=float(step_bytes),
                               clamp_bytes=float(clamp_bytes),
                               rate_hz=float(rate_hz), ramp_ms=float(ramp_ms))


def burst(rate_hz, amplitude_bytes, duration_ms, ramp_ms=80.0):
    if duration_ms < ramp_ms:
        raise ValueError("burst duration_ms must be >= ramp_ms")
    return NoiseComponent.make(BURST, rate_hz=float(rate_hz),
                               amplitude_bytes=float(amplitude_bytes),
                               duration_ms=float(duration_ms),
                               ramp_ms=float(ramp_ms))


def ripple(freq_hz, amplitude_bytes):
    """Smooth periodic churn from a frame loop.

    Video decoders and game engines cycle buffer pools at the frame rate,
    so their usage carries a small near-sinusoidal component. The phase is
    random per trace and the rate drifts ~1% against the sampler clock.
    """
    freq_hz = float(freq_hz)
    if freq_hz <= 0:
        raise ValueError("ripple freq_hz must be > 0")
    return NoiseComponent.make(RIPPLE, freq_hz=freq_hz,
                               amplitude_bytes=float(amplitude_bytes))


def replay(trace_or_path, scale=1.0):
    return NoiseComponent.make(REPLAY, trace=trace_or_path, scale=float(scale))


def jammer(period_us, block_bytes, duty=0.5, start_us=0, jitter=1.0):
    if not 0 < duty < 1:
        raise ValueError("duty must be in (0, 1)")
    return NoiseComponent.make(JAMMER, period_us=int(period_us),
                               block_bytes=int(block_bytes), duty=float(duty),
                               start_us=int(start_us), jitter=float(jitter))


@dataclass(frozen=True)
class NoiseModel:
    components: tuple = ()
    seed: int = 0

    def with_seed(self, seed: int) -> "NoiseModel":
        return replace(self, seed=int(seed))

    def extended(self, component: NoiseComponent) -> "NoiseModel":
        return replace(self, components=self.components + (component,))


def _synth_gaussian(comp, n, period_us, rng):
    sigma = comp.get("sigma_bytes", 0.0)
    if sigma <= 0:
        return np.zeros(n)
    return rng.normal(0.0, sigma, n)


def _synth_walk(comp, n, period_us, rng):
    step = comp.get("step_bytes", 0.0)
    clamp = comp.get("clamp_bytes", 0.0)
    if step <= 0 or clamp <= 0:
        return np.zeros(n)
    steps = rng.normal(0.0, step, n)
    rate = comp.get("rate_hz", 0.0)
    if rate > 0:
        # holds flat except at Poisson event instants
        steps = steps * (rng.random(n) < rate * period_us / 1e6)
    out = kernels.clamped_walk(steps, clamp)
    width = int(round(comp.get("ramp_ms", 0.0) * 1000 / period_us))
    if width > 1:
        out = uniform_filter1d(out, size=width, mode="nearest")
    return out


def _synth_burst(comp, n, period_us, rng):
    out = np.zeros(n)
    rate = comp.get("rate_hz", 0.0)
    amp = comp.get("amplitude_bytes", 0.0)
    horizon_s = n * period_us / 1e6
    if rate <= 0 or amp <= 0 or n == 0:
        return out
    ramp = max(1, int(round(comp.get("ramp_ms", 80.0) * 1000 / period_us)))
    # duration_ms is the full width at half maximum: plateau + one ramp
    width = int(round(comp.get("duration_ms") * 1000 / period_us))
    plateau = max(0, width - ramp)
    rise = amp * (np.arange(1, ramp + 1) / ramp)
    shape = np.concatenate([rise, np.full(plateau, amp), rise[::-1]])
    count = rng.poisson(rate * horizon_s)
    starts = np.sort(rng.integers(0, n, size=count))
    for start in starts:
        stop = min(n, start + len(shape))
        out[start:stop] += shape[: stop - start]
    return out


def _synth_ripple(comp, n, period_us, rng):
    amp = comp.get("amplitude_bytes", 0.0)
    freq = comp.get("freq_hz", 0.0)
    if amp <= 0 or freq <= 0 or n == 0:
        return np.zeros(n)
    t = np.arange(n) * (period_us / 1e6)
    freq = freq * (1.0 + rng.normal(0.0, 0.01))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    # offset so the contribution stays non-negative
    return 0.5 * amp * (1.0 + np.sin(2.0 * np.pi * freq * t + phase))


def _synth_replay(comp, n, period_us, rng):
    src = comp.get("trace")
    if isinstance(src, str):
        src = read_trace(src)
    if not isinstance(src, MemoryTrace) or len(src) == 0:
        raise ValueError("replay component needs a non-empty trace or path")
    vals = src.used_bytes.astype(np.float64)
    vals -= vals[0]
    if src.nominal_period_us != period_us:
        # nearest-sample resample onto the target grid
        t_target = np.arange(n, dtype=np.float64) * period_us
        idx = np.rint(t_target / src.nominal_period_us).astype(np.int64)
        vals = vals[np.minimum(idx % len(vals) if n else idx, len(vals) - 1)]
        return comp.get("scale", 1.0) * vals[:n]
    reps = -(-n // len(vals)) if n else 1
    tiled = np.tile(vals, reps)[:n]
    return comp.get("scale", 1.0) * tiled


def _synth_jammer(comp, n, period_us, rng):
    out = np.zeros(n)
    period = comp.get("period_us")
    block = comp.get("block_bytes")
    duty = comp.get("duty", 0.5)
    start = comp.get("start_us", 0)
    jitter = comp.get("jitter", 1.0)
    if not period or not block or n == 0:
        return out
    horizon_us = n * period_us
    width_us = duty * period
    slack_us = (1.0 - duty) * period * jitter
    k = 0
    while True:
        t0 = start + k * period
        if t0 >= horizon_us:
            break
        off = t0 + (rng.uniform(0.0, slack_us) if slack_us > 0 else 0.0)
        i0 = int(np.ceil(off / period_us))
        i1 = int(np.ceil((off + width_us) / period_us))
        if i0 < n:
            out[i0 : min(i1, n)] += block
        k += 1
    return out


_SYNTHS = {
    GAUSSIAN: _synth_gaussian,
    RANDOM_WALK: _synth_walk,
    BURST: _synth_burst,
    RIPPLE: _synth_ripple,
    REPLAY: _synth_replay,
    JAMMER: _synth_jammer,
}


def noise_values(model: NoiseModel, n: int, period_us: int):
    """Summed float contribution of all components on an n-sample grid."""
    total = np.zeros(n)
    children = np.random.SeedSequence(model.seed).spawn(max(1, len(model.components)))
    for comp, child in zip(model.components, children):
        rng = np.random.Generator(np.random.PCG64(child))
        total += _SYNTHS[comp.kind](comp, n, period_us, rng)
    return total


_PAGE = 4096


def apply_noise(trace: MemoryTrace, model: NoiseModel) -> MemoryTrace:
    """Perturb a trace's values in place of the medium; timestamps kept.

    Components are synthesized independently, summed, added to the values
    and the result clamped at zero (usage cannot go negative). Values are
    reported page-quantized, like the kernel's own counters.
    """
    if len(trace) == 0:
        raise ValueError("cannot apply noise to an empty trace")
    if not model.components:
        return MemoryTrace(trace.t_us, trace.used_bytes,
                           trace.nominal_period_us, dict(trace.meta))
    total = noise_values(model, len(trace), trace.nominal_period_us)
    if not np.any(total):
        # degenerate model (e.g. sigma 0): exact identity, no quantization
        return MemoryTrace(trace.t_us, trace.used_bytes,
                           trace.nominal_period_us, dict(trace.meta))
    values = np.maximum(0.0, trace.used_bytes + total)
    values = np.rint(values / _PAGE) * _PAGE
    return MemoryTrace(trace.t_us, values.astype(np.int64),
                       trace.nominal_period_us, dict(trace.meta))


def profile_dir():
    return _PROFILE_DIR


def known_profiles(directory=None):
    directory = directory or _PROFILE_DIR
    names = []
    if os.path.isdir(directory):
        for entry in sorted(os.listdir(directory)):
            if entry.endswith(_PROFILE_SUFFIX):
                names.append(entry[: -len(_PROFILE_SUFFIX)])
    return names


def load_profile(name, directory=None):
    """Read one background profile into (level_bytes, NoiseModel sans seed)."""
    directory = directory or _PROFILE_DIR
    path = os.path.join(directory, name + _PROFILE_SUFFIX)
    if not os.path.isfile(path):
        known = ", ".join(known_profiles(directory)) or "(none)"
        raise ValueError(f"unknown noise profile {name!r}; known profiles: {known}")
    raw = read_kv(path)
    level = int(float(raw.get("level_bytes", 0)))
    components = []
    if float(raw.get("gaussian_sigma_bytes", 0)) > 0:
        components.append(gaussian(raw["gaussian_sigma_bytes"]))
    if float(raw.get("walk_step_bytes", 0)) > 0:
        components.append(random_walk(raw["walk_step_bytes"],
                                      raw.get("walk_clamp_bytes", 0),
                                      float(raw.get("walk_rate_hz", 0)),
                                      float(raw.get("walk_ramp_ms", 0))))
    if float(raw.get("burst_rate_hz", 0)) > 0:
        components.append(burst(raw["burst_rate_hz"],
                                raw.get("burst_amplitude_bytes", 0),
                                float(raw.get("burst_duration_ms", 200)),
                                float(raw.get("burst_ramp_ms", 80))))
    if float(raw.get("ripple_freq_hz", 0)) > 0:
        components.append(ripple(raw["ripple_freq_hz"],
                                 raw.get("ripple_amplitude_bytes", 0)))
    return level, NoiseModel(tuple(components))


def synth_background(kind, duration_us, period_us, seed, directory=None) -> MemoryTrace:
    """Generate a standalone background trace for a named profile."""
    level, model = load_profile(kind, directory)
    n = duration_us // period_us + 1
    t = np.arange(n, dtype=np.int64) * period_us
    flat = MemoryTrace(t, np.full(n, level, dtype=np.int64), period_us,
                       {"profile": kind, "seed": str(seed)})
    if not model.components:
        return flat
    return apply_noise(flat, model.with_seed(seed))
