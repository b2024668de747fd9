"""Scenario files and the end-to-end pipeline runner.

A scenario is an INI file describing one reproducible run: payload,
modulation, backend, noise, optional jammer, receiver overrides. The
runner wires encode -> schedule -> medium -> trace -> demodulate -> decode
-> report, writing every intermediate artifact into an output directory.
Suite scenarios fan one transmission out over a list of noise profiles and
aggregate the reports. Simulated runs are deterministic per seed: the same
file and seed produce byte-identical reports.
"""

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .backends import SimMedium
from .codec import PACKET_LEN, decode_packets, encode_message, format_bits, packets_to_bits
from .countermeasure import default_block_bytes, estimate_channel_frequency
from .demod import (PREAMBLE_BITS, DemodParams, calibrate_threshold,
                    demodulate_nrz_delta, demodulate_rz, locate_preamble)
from .metrics import ChannelReport, compute_report, emit_plot_data, merge_reports
from .modulation import SCHEME_NRZ_DELTA, SCHEME_RZ_OOK, ModulationParams, schedule_bits
from . import noise as noise_mod
from .trace import write_trace


class ScenarioError(ValueError):
    pass


_NOISE_KEYS = ("gaussian_sigma_bytes", "walk_step_bytes", "walk_clamp_bytes",
               "burst_rate_hz", "burst_amplitude_bytes", "burst_duration_ms",
               "burst_ramp_ms")


@dataclass
class ScenarioSpec:
    name: str = "unnamed"
    seed: int = 0
    backend: str = "sim"
    scheme: str = SCHEME_RZ_OOK
    payload: bytes = b""
    mod: ModulationParams = None
    sample_period_us: int = 1000
    baseline_bytes: int = 1024 * 1024 * 1024
    lead_in_us: int = 200_000
    tail_us: int = 200_000
    profile: str = ""
    noise_keys: dict = field(default_factory=dict)
    matched_walk_margin: float = 0.0
    jam: dict = field(default_factory=dict)
    demod_overrides: dict = field(default_factory=dict)
    a_0: float = 0.0  # 0 means calibrate from the preamble
    suite_profiles: tuple = ()
    packets_per_profile: int = 0

    def __post_init__(self):
        if self.mod is None:
            base = (ModulationParams.nrz_defaults()
                    if self.scheme == SCHEME_NRZ_DELTA else ModulationParams())
            self.mod = base


def _derived_seed(seed, *key):
    """Independent child seed for a named sub-stream of one scenario run."""
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in key])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def _random_payload(seed, nbytes):
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed), 0x9A71])))
    return rng.integers(0, 256, size=nbytes, dtype=np.uint8).tobytes()


def _resolve_payload(section, seed, base_dir):
    if "hex" in section:
        return bytes.fromhex(section["hex"].replace(" ", ""))
    if "text" in section:
        return section["text"].encode("utf-8")
    if "file" in section:
        path = os.path.join(base_dir, section["file"])
        if not os.path.isfile(path):
            raise ScenarioError(f"payload file not found: {path}")
        with open(path, "rb") as fh:
            return fh.read()
    if "random_bytes" in section:
        return _random_payload(seed, int(section["random_bytes"]))
    raise ScenarioError("payload section needs one of hex/text/file/random_bytes")


def load_scenario(path) -> ScenarioSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not parser.read(path):
        raise ScenarioError(f"cannot read scenario file {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    sc = parser["scenario"] if parser.has_section("scenario") else {}
    spec = ScenarioSpec(
        name=sc.get("name", os.path.splitext(os.path.basename(path))[0]),
        backend=sc.get("backend", "sim"),
        scheme=sc.get("scheme", SCHEME_RZ_OOK),
    )
    if spec.backend == "sim" and "seed" not in sc:
        raise ScenarioError("simulated scenarios must carry a seed")
    spec.seed = int(sc.get("seed", 0))

    if parser.has_section("modulation"):
        overrides = {k: v for k, v in parser["modulation"].items()}
        overrides["scheme"] = spec.scheme
        spec.mod = ModulationParams.from_mapping(overrides)
    else:
        spec.mod = ModulationParams.from_mapping({"scheme": spec.scheme})

    sim = parser["sim"] if parser.has_section("sim") else {}
    nrz = spec.scheme == SCHEME_NRZ_DELTA
    spec.sample_period_us = int(sim.get("sample_period_us", 20_000 if nrz else 1000))
    spec.lead_in_us = int(sim.get("lead_in_us",
                                  2 * spec.mod.pulse_period_us if nrz else 200_000))
    spec.tail_us = int(sim.get("tail_us", spec.lead_in_us))
    baseline = sim.get("baseline_bytes", "")

    if parser.has_section("noise"):
        nsec = parser["noise"]
        spec.profile = nsec.get("profile", "")
        if spec.profile and spec.profile not in noise_mod.known_profiles():
            raise ScenarioError(f"unknown noise profile {spec.profile!r}")
        spec.noise_keys = {k: nsec[k] for k in _NOISE_KEYS if k in nsec}
        spec.matched_walk_margin = float(nsec.get("matched_walk_margin", 0))

    if spec.profile and not baseline:
        level, _ = noise_mod.load_profile(spec.profile)
        spec.baseline_bytes = level
    elif baseline:
        spec.baseline_bytes = int(baseline)

    if parser.has_section("jammer"):
        jsec = parser["jammer"]
        if jsec.getboolean("enabled", True):
            band = jsec.get("band_hz", "5:100")
            lo, hi = band.split(":")
            spec.jam = {
                "band": (float(lo), float(hi)),
                "duty": float(jsec.get("duty", 0.5)),
                "jitter": float(jsec.get("jitter", 1.0)),
                "freq_factor": float(jsec.get("freq_factor", 1.0)),
                "block_bytes": int(jsec["block_bytes"]) if "block_bytes" in jsec else 0,
                "start_us": (int(jsec["start_us"])
                             if jsec.get("start_us", "auto") != "auto" else -1),
                "est_window_s": float(jsec.get("est_window_s", 5.0)),
            }

    if parser.has_section("demod"):
        dsec = parser["demod"]
        if dsec.get("a_0", "auto") != "auto":
            spec.a_0 = float(dsec["a_0"])
        for key in ("edge_min_bytes", "hp_cutoff", "hp_order", "median_k",
                    "delta_threshold_bytes"):
            if key in dsec:
                spec.demod_overrides[key] = float(dsec[key])

    if parser.has_section("suite"):
        ssec = parser["suite"]
        spec.suite_profiles = tuple(
            p.strip() for p in ssec.get("profiles", "").split(",") if p.strip())
        spec.packets_per_profile = int(ssec.get("packets_per_profile", 100))
        for prof in spec.suite_profiles:
            if prof not in noise_mod.known_profiles():
                raise ScenarioError(f"unknown suite profile {prof!r}")

    if parser.has_section("payload"):
        spec.payload = _resolve_payload(parser["payload"], spec.seed, base_dir)
    elif not spec.suite_profiles:
        raise ScenarioError("scenario needs a payload section (or a suite)")
    return spec


def _noise_model_for(spec: ScenarioSpec, seed) -> noise_mod.NoiseModel:
    components = []
    if spec.profile:
        _, model = noise_mod.load_profile(spec.profile)
        components.extend(model.components)
    keys = spec.noise_keys
    if float(keys.get("gaussian_sigma_bytes", 0)) > 0:
        components.append(noise_mod.gaussian(keys["gaussian_sigma_bytes"]))
    walk_step = float(keys.get("walk_step_bytes", 0))
    if spec.matched_walk_margin > 0:
        walk_step = matched_walk_step(
            spec.mod, spec.sample_period_us, spec.matched_walk_margin,
            float(keys.get("walk_clamp_bytes", 512 * 1024 * 1024)),
            _derived_seed(seed, 0xCA11))
    if walk_step > 0:
        components.append(noise_mod.random_walk(
            walk_step, keys.get("walk_clamp_bytes", 512 * 1024 * 1024)))
    if float(keys.get("burst_rate_hz", 0)) > 0:
        components.append(noise_mod.burst(
            keys["burst_rate_hz"], keys.get("burst_amplitude_bytes", 0),
            float(keys.get("burst_duration_ms", 200)),
            float(keys.get("burst_ramp_ms", 80))))
    return noise_mod.NoiseModel(tuple(components))


def slot_delta_sigma(values, slot_samples, median_k=5):
    """Std of center-to-center slot deltas, the NRZ receiver's noise floor."""
    from scipy.signal import medfilt

    values = np.asarray(values, dtype=np.float64)
    if len(values) >= median_k:
        values = medfilt(values, median_k)
    half = slot_samples // 2
    centers = values[half::slot_samples]
    deltas = np.diff(centers)
    if len(deltas) < 8:
        raise ValueError("not enough slots to estimate the delta noise floor")
    return float(np.std(deltas))


def matched_walk_step(mod: ModulationParams, sample_period_us, margin,
                      clamp_bytes, seed, n_slots=4000):
    """Walk step such that delta_threshold / slot-delta sigma == margin.

    Measured empirically on a pure-noise run (no transmission) with the
    same clamp, smoothing and slot grid the receiver uses, then refined
    once because clamping makes sigma sub-linear in the step size.
    """
    slot_samples = int(round(mod.pulse_period_us / sample_period_us))
    n = n_slots * slot_samples
    target = mod.delta_threshold_bytes / margin
    step = 1024.0 * 1024.0
    for _ in range(2):
        comp = noise_mod.random_walk(step, clamp_bytes)
        model = noise_mod.NoiseModel((comp,), seed)
        vals = noise_mod.noise_values(model, n, sample_period_us)
        sigma = slot_delta_sigma(vals, slot_samples)
        if sigma <= 0:
            raise ValueError("flat noise run; cannot match SNR")
        step *= target / sigma
    return step


def _write_payload(path, payload: bytes):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(payload.hex() + "\n")


def _write_decisions(path, decisions):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("window,amplitude,bit\n")
        for d in decisions:
            fh.write(f"{d.window_index},{repr(d.amplitude_at_ft)},{d.bit}\n")


def _write_bits(path, bits):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_bits(bits) + "\n")


def run_single(spec: ScenarioSpec, out_dir, seed=None, payload=None,
               profile=None, tag="") -> ChannelReport:
    """One encode->simulate->demodulate->report pass; artifacts in out_dir."""
    if spec.backend != "sim":
        raise ScenarioError("only the sim backend can run scripted scenarios")
    seed = spec.seed if seed is None else seed
    payload = spec.payload if payload is None else payload
    os.makedirs(out_dir, exist_ok=True)

    rz = spec.scheme == SCHEME_RZ_OOK
    packets = encode_message(payload)
    packet_bits = packets_to_bits(packets)
    bits = (list(PREAMBLE_BITS) + packet_bits) if rz else packet_bits
    schedule = schedule_bits(bits, spec.mod)

    if profile is not None:
        spec = _with_profile(spec, profile)
    model = _noise_model_for(spec, seed)
    baseline = spec.baseline_bytes
    medium = SimMedium(baseline, spec.lead_in_us, spec.tail_us)

    meta = {
        "scenario": spec.name + (f"/{tag}" if tag else ""),
        "seed": str(seed),
        "scheme": spec.scheme,
        "profile": spec.profile or "(none)",
        "baseline_bytes": str(baseline),
        "raw_bit_rate_bps": f"{spec.mod.raw_bit_rate:.4f}",
        "net_payload_rate_bps": f"{spec.mod.raw_bit_rate / 2:.4f}",
    }

    if spec.jam:
        probe = medium.execute_and_sample(schedule, model, spec.sample_period_us, seed)
        write_trace(probe, os.path.join(out_dir, "probe_trace.csv"))
        est_n = int(spec.jam["est_window_s"] * 1e6 / spec.sample_period_us)
        head = probe if len(probe) <= est_n else _trace_head(probe, est_n)
        f_est = estimate_channel_frequency(head, spec.jam["band"])
        block = spec.jam["block_bytes"] or default_block_bytes(head, spec.jam["band"])
        f_jam = f_est * spec.jam["freq_factor"]
        start = spec.jam["start_us"]
        if start < 0:
            start = spec.lead_in_us + (8 * spec.mod.bit_duration_us if rz else 0)
        model = model.extended(noise_mod.jammer(
            int(round(1e6 / f_jam)), block, spec.jam["duty"], start,
            spec.jam["jitter"]))
        meta.update({
            "jam_f_est_hz": f"{f_est:.4f}",
            "jam_f_hz": f"{f_jam:.4f}",
            "jam_block_bytes": str(block),
            "jam_start_us": str(start),
        })

    trace = medium.execute_and_sample(schedule, model, spec.sample_period_us, seed)
    write_trace(trace, os.path.join(out_dir, "trace.csv"))

    dparams = DemodParams.for_channel(spec.mod, spec.sample_period_us,
                                      **spec.demod_overrides)
    if rz:
        a_0 = spec.a_0 or calibrate_threshold(trace, dparams)
        dparams = dparams.with_overrides(a_0=a_0)
        meta["a_0"] = repr(a_0)
        _, preamble_end = locate_preamble(trace, dparams)
        bits_rx, decisions = demodulate_rz(trace, dparams, from_index=preamble_end,
                                           assume_grid=True)
        _write_decisions(os.path.join(out_dir, "decisions.csv"), decisions)
    else:
        bits_rx = demodulate_nrz_delta(trace, dparams)
    _write_bits(os.path.join(out_dir, "bits.csv"), bits_rx)

    groups = [bits_rx[i : i + PACKET_LEN]
              for i in range(0, len(bits_rx) // PACKET_LEN * PACKET_LEN, PACKET_LEN)]
    payload_rx, outcomes = decode_packets(groups)
    report = compute_report(payload, payload_rx, outcomes, meta=meta)

    _write_payload(os.path.join(out_dir, "sent_payload.hex"), payload)
    _write_payload(os.path.join(out_dir, "decoded_payload.hex"), payload_rx)
    report.write(os.path.join(out_dir, "report.txt"))
    emit_plot_data(trace, os.path.join(out_dir, "plot"),
                   slot_samples=None if rz else dparams.slot_samples)
    return report


def _with_profile(spec: ScenarioSpec, profile):
    level, _ = noise_mod.load_profile(profile)
    out = ScenarioSpec(**{**spec.__dict__})
    out.profile = profile
    out.baseline_bytes = level
    return out


def _trace_head(trace, n):
    from .trace import MemoryTrace

    return MemoryTrace(trace.t_us[:n], trace.used_bytes[:n],
                       trace.nominal_period_us, dict(trace.meta))


def run_suite(spec: ScenarioSpec, out_dir) -> ChannelReport:
    """Run the payload across every suite profile; aggregate the counts."""
    os.makedirs(out_dir, exist_ok=True)
    nbytes = max(1, spec.packets_per_profile // 2)
    parts = []
    rows = []
    for i, prof in enumerate(spec.suite_profiles):
        payload = _random_payload(_derived_seed(spec.seed, 0xB0B, i), nbytes)
        sub = run_single(spec, os.path.join(out_dir, prof),
                         seed=_derived_seed(spec.seed, 0x5EED, i),
                         payload=payload, profile=prof, tag=prof)
        parts.append(sub)
        rows.append((prof, sub))
    meta = {"scenario": spec.name, "seed": str(spec.seed),
            "scheme": spec.scheme, "profiles": ",".join(spec.suite_profiles)}
    total = merge_reports(parts, meta=meta)
    lines = ["suite-report v1",
             f"scenario = {spec.name}",
             f"seed = {spec.seed}",
             "profile,packets,ber_pct,per_pct"]
    for prof, sub in rows:
        lines.append(f"{prof},{sub.packets_sent},{sub.ber_pct:.4f},{sub.per_pct:.4f}")
    lines.append(f"TOTAL,{total.packets_sent},{total.ber_pct:.4f},{total.per_pct:.4f}")
    with open(os.path.join(out_dir, "suite_report.txt"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    total.write(os.path.join(out_dir, "report.txt"))
    for prof, sub in rows:
        total.meta[f"profile_{prof}"] = (f"packets={sub.packets_sent} "
                                         f"ber={sub.ber_pct:.4f} per={sub.per_pct:.4f}")
    return total


def run_scenario(spec: ScenarioSpec, out_dir) -> ChannelReport:
    if spec.suite_profiles:
        return run_suite(spec, out_dir)
    return run_single(spec, out_dir)


def scenario_dir():
    return os.path.join(os.path.dirname(__file__), "data", "scenarios")


# Transmitter variants used to build the detector's training corpus. Fast
# bit rates keep all-zero stretches shorter than one 100-sample window, so
# provenance labels (attack trace => 1) stay honest for almost all windows.
_CORPUS_CHANNELS = (
    dict(t_h_us=10_000, t_l_us=10_000, pulses_per_bit=1, block_bytes=20 * 1024 * 1024),
    dict(t_h_us=5_000, t_l_us=5_000, pulses_per_bit=2, block_bytes=20 * 1024 * 1024),
    dict(t_h_us=5_000, t_l_us=5_000, pulses_per_bit=1, block_bytes=24 * 1024 * 1024),
    dict(t_h_us=10_000, t_l_us=10_000, pulses_per_bit=1, block_bytes=32 * 1024 * 1024),
)

_CORPUS_BACKGROUNDS = ("idle", "office", "video_1080p", "video_4k",
                       "game", "cachebench", "game_browser", "video_4k_hdr")

# Sparse-pulse variants (ppb 2: half the windows span no pulse at all) ride
# the quiet backgrounds; dense variants carry the heavy ones. The two
# noisiest pairings appear twice so the hard windows get real weight.
_CORPUS_PAIRS = (
    (0, "idle"), (0, "video_4k"),
    (1, "office"), (1, "video_1080p"),
    (2, "video_4k_hdr"), (2, "game"),
    (3, "game_browser"), (3, "cachebench"),
    (3, "game_browser"), (3, "cachebench"),
)


def attack_trace(seed, nbytes, channel_overrides, profile, sample_period_us=1000):
    """Simulated transmission over a background profile, for corpus building."""
    mod = ModulationParams(**channel_overrides)
    payload = _random_payload(seed, nbytes)
    bits = list(PREAMBLE_BITS) + packets_to_bits(encode_message(payload))
    schedule = schedule_bits(bits, mod)
    level, model = noise_mod.load_profile(profile)
    medium = SimMedium(level, lead_in_us=50_000, tail_us=50_000)
    return medium.execute_and_sample(schedule, model, sample_period_us, seed)


def synthetic_corpus(seed, windows_per_class=2500, sample_period_us=1000):
    """Seeded, balanced window corpus: transmissions vs pure backgrounds.

    Attack traces pair each transmitter variant with two backgrounds;
    benign traces are the shipped profiles alone. Returns a detector
    Dataset of normalized 100-sample windows.
    """
    from .detector import WINDOW, build_dataset

    samples_needed = windows_per_class * WINDOW
    attack = []
    pairs = [(_CORPUS_CHANNELS[ci], prof) for ci, prof in _CORPUS_PAIRS]
    per_trace = samples_needed // len(pairs) + WINDOW
    for i, (channel, prof) in enumerate(pairs):
        mod = ModulationParams(**channel)
        trace_us = per_trace * sample_period_us
        nbytes = max(1, int(trace_us / mod.bit_duration_us / 16) + 1)
        attack.append(attack_trace(_derived_seed(seed, 0xA77, i), nbytes,
                                   channel, prof, sample_period_us))
    benign = []
    per_profile_us = (samples_needed // len(_CORPUS_BACKGROUNDS) + WINDOW) * sample_period_us
    for i, prof in enumerate(_CORPUS_BACKGROUNDS):
        benign.append(noise_mod.synth_background(
            prof, per_profile_us, sample_period_us, _derived_seed(seed, 0xBE9, i)))
    return build_dataset(attack, benign, seed=_derived_seed(seed, 0xDA7A))
