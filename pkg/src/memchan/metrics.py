"""BER/PER accounting over the padded nibble stream.

Error rates are computed on payload (post-ECC) bits: each packet carries 4
of them. Comparison is positional, packet i against sent nibble i; packets
that never arrived or failed framing count all 4 bits as errored, so a
fully jammed run converges to PER 100% with BER near 50% rather than
dropping silently out of the statistics.
"""

from dataclasses import dataclass, field

from .codec import bits_to_nibbles, bytes_to_bits


@dataclass(frozen=True)
class PacketDiag:
    index: int
    sent_nibble: int
    received_nibble: int
    bit_errors: int
    corrected: bool
    lost: bool

    @property
    def errored(self) -> bool:
        return self.bit_errors > 0


@dataclass
class ChannelReport:
    bits_sent: int = 0
    bits_errored: int = 0
    packets_sent: int = 0
    packets_errored: int = 0
    per_packet: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def ber_pct(self) -> float:
        return 100.0 * self.bits_errored / self.bits_sent if self.bits_sent else 0.0

    @property
    def per_pct(self) -> float:
        return (100.0 * self.packets_errored / self.packets_sent
                if self.packets_sent else 0.0)

    def to_text(self) -> str:
        lines = ["channel-report v1"]
        for key in sorted(self.meta):
            lines.append(f"meta {key} = {self.meta[key]}")
        lines.append(f"bits_sent = {self.bits_sent}")
        lines.append(f"bits_errored = {self.bits_errored}")
        lines.append(f"packets_sent = {self.packets_sent}")
        lines.append(f"packets_errored = {self.packets_errored}")
        lines.append(f"ber_pct = {self.ber_pct:.4f}")
        lines.append(f"per_pct = {self.per_pct:.4f}")
        lines.append("packet,sent,received,bit_errors,corrected,lost")
        for d in self.per_packet:
            lines.append(f"{d.index},{d.sent_nibble:04b},{d.received_nibble:04b},"
                         f"{d.bit_errors},{int(d.corrected)},{int(d.lost)}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())


def compute_report(sent_payload: bytes, received_payload: bytes, outcomes,
                   meta=None) -> ChannelReport:
    """Compare payloads positionally, guided by per-packet decode outcomes.

    `outcomes` is the DecodeOutcome list from decode_packets. Missing
    trailing packets (receiver saw fewer than sent) are charged as lost;
    extra received packets are noted in metadata but cannot flip sent-bit
    accounting.
    """
    sent_nibbles = bits_to_nibbles(bytes_to_bits(sent_payload))
    recv_nibbles = bits_to_nibbles(bytes_to_bits(received_payload))
    report = ChannelReport(meta=dict(meta or {}))
    report.packets_sent = len(sent_nibbles)
    report.bits_sent = 4 * len(sent_nibbles)
    for i, sent in enumerate(sent_nibbles):
        if i < len(outcomes):
            out = outcomes[i]
            lost = out.uncorrectable
            received = out.nibble
            corrected = out.corrected
        else:
            lost = True
            received = 0
            corrected = False
        bit_errors = 4 if lost else bin(sent ^ received).count("1")
        if bit_errors:
            report.packets_errored += 1
            report.bits_errored += bit_errors
        report.per_packet.append(PacketDiag(i, sent, received, bit_errors,
                                            corrected, lost))
    if len(outcomes) > len(sent_nibbles):
        report.meta["extra_packets_received"] = str(len(outcomes) - len(sent_nibbles))
    if len(recv_nibbles) > len(sent_nibbles):
        report.meta["extra_nibbles_received"] = str(len(recv_nibbles) - len(sent_nibbles))
    return report


def merge_reports(parts, meta=None) -> ChannelReport:
    """Aggregate counts across runs (per-profile suites); diagnostics kept."""
    total = ChannelReport(meta=dict(meta or {}))
    for part in parts:
        total.bits_sent += part.bits_sent
        total.bits_errored += part.bits_errored
        total.packets_sent += part.packets_sent
        total.packets_errored += part.packets_errored
    return total


def emit_plot_data(trace, out_prefix, slot_samples=None):
    """Write plot-friendly columns: the raw series and a lagged-delta series.

    `<prefix>_trace.csv` holds t_us,used_bytes; `<prefix>_delta.csv` holds
    t_us,delta_bytes where delta is the change over `slot_samples` samples
    (default: 1). No rendering here, any plotting tool can consume these.
    """
    lag = max(1, int(slot_samples or 1))
    trace_path = f"{out_prefix}_trace.csv"
    delta_path = f"{out_prefix}_delta.csv"
    with open(trace_path, "w", encoding="ascii") as fh:
        fh.write("t_us,used_bytes\n")
        for t, v in zip(trace.t_us, trace.used_bytes):
            fh.write(f"{t},{v}\n")
    with open(delta_path, "w", encoding="ascii") as fh:
        fh.write("t_us,delta_bytes\n")
        values = trace.used_bytes
        for i in range(lag, len(values)):
            fh.write(f"{trace.t_us[i]},{int(values[i]) - int(values[i - lag])}\n")
    return trace_path, delta_path
