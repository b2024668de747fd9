"""Packetizing codec: 4-bit nibbles, Hamming(7,4) ECC and a 1-bit header.

Payload bytes become a stream of 8-bit packets, each a constant `1` header
followed by a 7-bit codeword carrying one nibble. The codeword layout is
p1 p2 d1 p3 d2 d3 d4 (parity bits at positions 1, 2 and 4, even parity,
data MSB-first); single bit flips per packet are corrected on decode.

All bit sequences in this module are MSB-first tuples/lists of 0/1 ints.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence

HEADER_BIT = 1
PACKET_LEN = 8
NIBBLE_BITS = 4


@dataclass(frozen=True)
class Packet:
    bits: tuple

    def __post_init__(self):
        if len(self.bits) != PACKET_LEN or any(b not in (0, 1) for b in self.bits):
            raise ValueError("a packet is exactly 8 bits of 0/1")

    @property
    def header(self) -> int:
        return self.bits[0]

    @property
    def codeword(self) -> tuple:
        return self.bits[1:]

    def __str__(self):
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class DecodeOutcome:
    """Result of decoding one packet.

    `corrected` means a single flip was repaired; `uncorrectable` means the
    packet failed framing (header bit 0) and `nibble` is a placeholder 0.
    The two flags are mutually exclusive.
    """

    nibble: int
    corrected: bool
    uncorrectable: bool

    def __post_init__(self):
        if self.corrected and self.uncorrectable:
            raise ValueError("corrected and uncorrectable are mutually exclusive")


def hamming74_encode(nibble: int) -> tuple:
    """Encode a 4-bit value into the 7-bit codeword p1 p2 d1 p3 d2 d3 d4."""
    if not 0 <= nibble <= 15:
        raise ValueError(f"nibble out of range: {nibble}")
    d1 = (nibble >> 3) & 1
    d2 = (nibble >> 2) & 1
    d3 = (nibble >> 1) & 1
    d4 = nibble & 1
    p1 = d1 ^ d2 ^ d4
    p2 = d1 ^ d3 ^ d4
    p3 = d2 ^ d3 ^ d4
    return (p1, p2, d1, p3, d2, d3, d4)


def hamming74_decode(codeword: Sequence[int]) -> DecodeOutcome:
    """Decode 7 bits, repairing at most one flip.

    Every 7-bit word lies within distance 1 of some codeword, so this never
    reports uncorrectable; double flips silently miscorrect (the distance-3
    limit of the code). Framing-level loss is flagged by decode_packets.
    """
    if len(codeword) != 7:
        raise ValueError("codeword must be 7 bits")
    c = list(codeword)
    s1 = c[0] ^ c[2] ^ c[4] ^ c[6]
    s2 = c[1] ^ c[2] ^ c[5] ^ c[6]
    s3 = c[3] ^ c[4] ^ c[5] ^ c[6]
    syndrome = (s3 << 2) | (s2 << 1) | s1
    corrected = syndrome != 0
    if corrected:
        c[syndrome - 1] ^= 1
    nibble = (c[2] << 3) | (c[4] << 2) | (c[5] << 1) | c[6]
    return DecodeOutcome(nibble, corrected, False)


def bytes_to_bits(payload: bytes) -> list:
    return [(byte >> (7 - i)) & 1 for byte in payload for i in range(8)]


def bits_to_bytes(bits: Sequence[int]) -> bytes:
    """Pack bits MSB-first, padding the last byte with trailing zeros."""
    out = bytearray()
    for start in range(0, len(bits), 8):
        group = list(bits[start : start + 8])
        group += [0] * (8 - len(group))
        value = 0
        for b in group:
            value = (value << 1) | b
        out.append(value)
    return bytes(out)


def bits_to_nibbles(bits: Sequence[int]) -> list:
    """Split a bit string into 4-bit values, zero-padding the tail."""
    padded = list(bits)
    if len(padded) % NIBBLE_BITS:
        padded += [0] * (NIBBLE_BITS - len(padded) % NIBBLE_BITS)
    return [
        (padded[i] << 3) | (padded[i + 1] << 2) | (padded[i + 2] << 1) | padded[i + 3]
        for i in range(0, len(padded), NIBBLE_BITS)
    ]


def encode_bits(bits: Sequence[int]) -> list:
    """Encode a raw bit string into packets (header + codeword per nibble)."""
    return [Packet((HEADER_BIT,) + hamming74_encode(n)) for n in bits_to_nibbles(bits)]


def encode_message(payload: bytes) -> list:
    """Encode payload bytes into the packet stream, two packets per byte."""
    return encode_bits(bytes_to_bits(payload))


def packets_to_bits(packets: Iterable[Packet]) -> list:
    return [b for p in packets for b in p.bits]


def decode_packets(packet_bits: Iterable[Sequence[int]]):
    """Decode a sequence of 8-bit groups back into payload bytes.

    A group whose header bit is 0 is a framing loss: it is flagged
    uncorrectable, a placeholder 0 nibble keeps the payload aligned, and
    decoding continues with the next group. Returns (payload, outcomes).
    """
    outcomes = []
    nibbles = []
    for group in packet_bits:
        group = tuple(group)
        if len(group) != PACKET_LEN:
            raise ValueError(f"packet groups must be 8 bits, got {len(group)}")
        if group[0] != HEADER_BIT:
            outcome = DecodeOutcome(0, False, True)
        else:
            outcome = hamming74_decode(group[1:])
        outcomes.append(outcome)
        nibbles.append(outcome.nibble)
    payload = bytearray()
    for i in range(0, len(nibbles) - 1, 2):
        payload.append((nibbles[i] << 4) | nibbles[i + 1])
    if len(nibbles) % 2:
        payload.append(nibbles[-1] << 4)
    return bytes(payload), outcomes


def format_bits(bits: Sequence[int]) -> str:
    """ASCII '0'/'1' rendering used by the CLI for packet streams."""
    return "".join(str(b) for b in bits)


def parse_bits(text: str) -> list:
    bits = []
    for ch in text.strip():
        if ch not in "01":
            raise ValueError(f"bit strings may only contain 0/1, got {ch!r}")
        bits.append(int(ch))
    return bits
