"""Command-line surface tying the pieces into reproducible runs.

Every subcommand is a thin wrapper over the library: `send` drives a real
or simulated transmitter, `sample` records a trace, `demod` recovers a
payload from a trace file, `simulate` runs one seeded end-to-end pass,
`detect` trains/evaluates/runs the classifiers, `jam` estimates and jams,
`report` recomputes BER/PER from artifacts, and `scenario run` executes a
scenario file. Outputs are CSV or plain text.
"""

import os
import sys

import click

from . import noise as noise_mod
from .backends import RealActuator, SimMedium, SystemSampler, TraceSampler
from .codec import (PACKET_LEN, bytes_to_bits, decode_packets, encode_message,
                    format_bits, packets_to_bits, parse_bits)
from .config import read_kv
from .countermeasure import (JammerParams, NoChannelError, build_jam_schedule,
                             estimate_jammer_params, jam as jam_op)
from .demod import (PREAMBLE_BITS, CalibrationError, DemodParams,
                    calibrate_threshold, demodulate_nrz_delta, demodulate_rz,
                    locate_preamble)
from .detector import (evaluate, dtree_train, knn_train, load_dataset, load_model,
                       monitor, save_dataset, save_model, split_dataset)
from .metrics import compute_report
from .modulation import (SCHEME_NRZ_DELTA, SCHEME_RZ_OOK, SCHEMES,
                         ModulationParams, schedule_bits)
from .scenario import (ScenarioSpec, load_scenario, run_scenario, run_single,
                       synthetic_corpus)
from .trace import read_trace, write_trace


def _mod_params(scheme, config_path):
    mapping = {"scheme": scheme}
    if config_path:
        mapping.update(read_kv(config_path))
        mapping["scheme"] = scheme
    return ModulationParams.from_mapping(mapping)


def _payload_from_flags(hex_str, text, bits):
    given = [v for v in (hex_str, text, bits) if v]
    if len(given) != 1:
        raise click.UsageError("provide exactly one of --hex/--text/--bits")
    if hex_str:
        return bytes.fromhex(hex_str.replace(" ", "")), None
    if text:
        return text.encode("utf-8"), None
    return None, parse_bits(bits)


def _ascii_preview(payload: bytes) -> str:
    return "".join(chr(b) if 32 <= b < 127 else "." for b in payload)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Root seed for anything randomized.")
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.pass_context
def main(ctx, seed, out_dir):
    """Memory-usage covert channel toolkit."""
    ctx.obj = {"seed": seed, "out_dir": out_dir}


@main.command()
@click.option("--hex", "hex_str", default="", help="Payload as hex.")
@click.option("--text", default="", help="Payload as UTF-8 text.")
@click.option("--bits", default="", help="Raw channel bits (0/1 string).")
@click.option("--scheme", type=click.Choice(SCHEMES), default=SCHEME_RZ_OOK,
              show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None,
              help="key=value modulation params.")
@click.option("--preamble/--no-preamble", default=True,
              help="Prefix the 10101010 calibration preamble.")
@click.option("--dry-run", is_flag=True, help="Print the schedule, do not allocate.")
@click.pass_context
def send(ctx, hex_str, text, bits, scheme, config, preamble, dry_run):
    """Transmit a payload by modulating this machine's memory usage."""
    mod = _mod_params(scheme, config)
    payload, raw_bits = _payload_from_flags(hex_str, text, bits)
    if raw_bits is None:
        raw_bits = packets_to_bits(encode_message(payload))
    if preamble and scheme == SCHEME_RZ_OOK:
        raw_bits = list(PREAMBLE_BITS) + raw_bits
    schedule = schedule_bits(raw_bits, mod)
    click.echo(f"bits: {len(raw_bits)}  events: {len(schedule.events)}  "
               f"duration: {schedule.duration_us / 1e6:.2f}s  "
               f"peak: {schedule.peak_bytes} bytes")
    if dry_run:
        return
    report = RealActuator().execute(schedule)
    click.echo(f"completed {report.completed_events}/{report.scheduled_events} "
               f"events, jitter p50 {report.jitter_p50_us:.0f}us "
               f"p95 {report.jitter_p95_us:.0f}us")
    if report.aborted:
        raise click.ClickException(f"transmission aborted: {report.error}")


@main.command()
@click.option("--duration-s", type=float, required=True)
@click.option("--period-us", type=int, default=1000, show_default=True)
@click.option("--source", type=click.Path(exists=True), default="/proc/meminfo",
              show_default=True, help="meminfo-format file to sample.")
@click.option("--out", type=click.Path(), required=True)
def sample(duration_s, period_us, source, out):
    """Record a used-memory trace from a meminfo source."""
    sampler = SystemSampler(source_path=source)
    trace = sampler.run(int(duration_s * 1e6), period_us)
    write_trace(trace, out)
    click.echo(f"{len(trace)} samples -> {out} "
               f"(missed {trace.meta.get('missed_deadlines', '0')})")


@main.command()
@click.option("--trace", "trace_path", type=click.Path(exists=True), required=True)
@click.option("--scheme", type=click.Choice(SCHEMES), default=SCHEME_RZ_OOK,
              show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--a0", default="auto", show_default=True,
              help="Amplitude threshold, or 'auto' to calibrate.")
@click.pass_context
def demod(ctx, trace_path, scheme, config, a0):
    """Recover a payload from a recorded trace."""
    trace = read_trace(trace_path)
    mod = _mod_params(scheme, config)
    params = DemodParams.for_channel(mod, trace.nominal_period_us)
    if scheme == SCHEME_RZ_OOK:
        threshold = calibrate_threshold(trace, params) if a0 == "auto" else float(a0)
        params = params.with_overrides(a_0=threshold)
        _, preamble_end = locate_preamble(trace, params)
        bits, decisions = demodulate_rz(trace, params, from_index=preamble_end,
                                        assume_grid=True)
        click.echo(f"a_0 = {threshold:.1f}  windows = {len(decisions)}")
    else:
        bits = demodulate_nrz_delta(trace, params)
    groups = [bits[i : i + PACKET_LEN]
              for i in range(0, len(bits) // PACKET_LEN * PACKET_LEN, PACKET_LEN)]
    payload, outcomes = decode_packets(groups)
    lost = sum(1 for o in outcomes if o.uncorrectable)
    fixed = sum(1 for o in outcomes if o.corrected)
    click.echo(f"packets: {len(outcomes)}  corrected: {fixed}  lost: {lost}")
    click.echo(f"hex:   {payload.hex()}")
    click.echo(f"ascii: {_ascii_preview(payload)}")
    out_dir = ctx.obj["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "bits.csv"), "w", encoding="ascii") as fh:
        fh.write(format_bits(bits) + "\n")


@main.command()
@click.option("--hex", "hex_str", default="")
@click.option("--text", default="")
@click.option("--random-bytes", type=int, default=0,
              help="Seeded random payload of N bytes.")
@click.option("--scheme", type=click.Choice(SCHEMES), default=SCHEME_RZ_OOK,
              show_default=True)
@click.option("--profile", default="", help="Background noise profile name.")
@click.pass_context
def simulate(ctx, hex_str, text, random_bytes, scheme, profile):
    """One seeded end-to-end pass on the simulated medium."""
    spec = ScenarioSpec(name="cli-simulate", seed=ctx.obj["seed"], scheme=scheme)
    if profile:
        if profile not in noise_mod.known_profiles():
            raise click.ClickException(
                f"unknown profile {profile!r}; known: "
                f"{', '.join(noise_mod.known_profiles())}")
        spec.profile = profile
        spec.baseline_bytes = noise_mod.load_profile(profile)[0]
    if random_bytes:
        from .scenario import _random_payload

        spec.payload = _random_payload(spec.seed, random_bytes)
    else:
        payload, _ = _payload_from_flags(hex_str, text, "")
        spec.payload = payload
    if scheme == SCHEME_NRZ_DELTA:
        spec.sample_period_us = 20_000
        spec.lead_in_us = spec.tail_us = 2 * spec.mod.pulse_period_us
    report = run_single(spec, ctx.obj["out_dir"])
    click.echo(report.to_text().split("packet,", 1)[0].rstrip())


@main.group()
def detect():
    """Train, evaluate and run the covert-channel detectors."""


@detect.command("train")
@click.option("--kind", type=click.Choice(["knn", "dtree"]), default="knn",
              show_default=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--max-depth", type=int, default=7, show_default=True)
@click.option("--min-leaf", type=int, default=20, show_default=True)
@click.option("--windows", type=int, default=2500, show_default=True,
              help="Windows per class for the synthetic corpus.")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              default=None, help="Train from a dataset CSV instead.")
@click.option("--save-corpus", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.pass_context
def detect_train(ctx, kind, k, max_depth, min_leaf, windows, dataset_path,
                 save_corpus, model_path):
    """Train a classifier on a dataset or the seeded synthetic corpus."""
    if dataset_path:
        dataset = load_dataset(dataset_path)
    else:
        dataset = synthetic_corpus(ctx.obj["seed"], windows)
    if save_corpus:
        save_dataset(dataset, save_corpus)
    train, held_out = split_dataset(dataset, 0.2, ctx.obj["seed"])
    model = (knn_train(train, k) if kind == "knn"
             else dtree_train(train, max_depth, min_leaf))
    save_model(model, model_path)
    click.echo(f"trained {kind} on {len(train)} windows -> {model_path}")
    click.echo(f"held-out: {evaluate(model, held_out)}")


@detect.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              required=True)
def detect_eval(model_path, dataset_path):
    """Evaluate a saved model on a dataset CSV."""
    model = load_model(model_path)
    dataset = load_dataset(dataset_path)
    click.echo(str(evaluate(model, dataset)))


@detect.command("run")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--trace", "trace_path", type=click.Path(exists=True), required=True)
@click.option("--every-ms", type=int, default=100, show_default=True)
@click.option("--consecutive", type=int, default=3, show_default=True)
def detect_run(model_path, trace_path, every_ms, consecutive):
    """Replay a trace through the monitor and print predictions/alerts."""
    model = load_model(model_path)
    trace = read_trace(trace_path)
    sampler = TraceSampler(trace)
    events = monitor(sampler, model, trace.duration_us + trace.nominal_period_us,
                     trace.nominal_period_us, every_ms, consecutive)
    alerts = [e for e in events if e["alert"]]
    for e in events:
        flag = " ALERT" if e["alert"] else ""
        click.echo(f"t={e['t_us']}us pred={e['prediction']}{flag}")
    click.echo(f"{len(events)} windows, {len(alerts)} alerts")


@main.command("jam")
@click.option("--trace", "trace_path", type=click.Path(exists=True), required=True,
              help="Probe trace to estimate the channel from.")
@click.option("--band", default="5:100", show_default=True, help="f_lo:f_hi Hz.")
@click.option("--duration-s", type=float, default=10.0, show_default=True)
@click.option("--duty", type=float, default=0.5, show_default=True)
@click.option("--block-bytes", type=int, default=0, help="Override block size.")
@click.option("--dry-run", is_flag=True, help="Estimate and print, do not jam.")
@click.pass_context
def jam_cmd(ctx, trace_path, band, duration_s, duty, block_bytes, dry_run):
    """Estimate the channel frequency from a trace and jam it."""
    trace = read_trace(trace_path)
    lo, hi = (float(v) for v in band.split(":"))
    try:
        params = estimate_jammer_params(trace, (lo, hi), duty=duty)
    except NoChannelError as exc:
        raise click.ClickException(str(exc))
    if block_bytes:
        params = params.with_overrides(block_bytes=block_bytes)
    click.echo(f"f_est = {params.f_est:.2f} Hz  block = {params.block_bytes} "
               f"bytes  duty = {params.duty}")
    if dry_run:
        return
    report = jam_op(RealActuator(), params, int(duration_s * 1e6),
                    seed=ctx.obj["seed"])
    click.echo(f"jammed for {duration_s}s: {report.completed_events} events, "
               f"jitter p95 {report.jitter_p95_us:.0f}us")


@main.command()
@click.option("--sent", "sent_path", type=click.Path(exists=True), required=True,
              help="Ground-truth payload (hex, one line).")
@click.option("--bits", "bits_path", type=click.Path(exists=True), required=True,
              help="Received raw channel bits (0/1 string).")
def report(sent_path, bits_path):
    """Recompute BER/PER from a sent payload and received channel bits."""
    with open(sent_path, "r", encoding="ascii") as fh:
        sent = bytes.fromhex(fh.read().strip())
    with open(bits_path, "r", encoding="ascii") as fh:
        bits = parse_bits(fh.read())
    groups = [bits[i : i + PACKET_LEN]
              for i in range(0, len(bits) // PACKET_LEN * PACKET_LEN, PACKET_LEN)]
    payload, outcomes = decode_packets(groups)
    rep = compute_report(sent, payload, outcomes)
    click.echo(rep.to_text().split("packet,", 1)[0].rstrip())


@main.group()
def scenario():
    """Scenario-file operations."""


@scenario.command("run")
@click.argument("path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the file's seed.")
@click.pass_context
def scenario_run(ctx, path, seed):
    """Run a scenario file end to end; artifacts land in --out-dir."""
    spec = load_scenario(path)
    if seed is not None:
        spec.seed = seed
    try:
        rep = run_scenario(spec, ctx.obj["out_dir"])
    except (CalibrationError, NoChannelError) as exc:
        raise click.ClickException(f"scenario failed: {exc}")
    click.echo(rep.to_text().split("packet,", 1)[0].rstrip())
    click.echo(f"artifacts in {ctx.obj['out_dir']}")


if __name__ == "__main__":
    main()
