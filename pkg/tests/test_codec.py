"""Codec tests built around an independent parity-check oracle.

The oracle: in the p1 p2 d1 p3 d2 d3 d4 layout, parity bit at position 2^i
(1-indexed) covers every position whose index has bit i set. A word is a
codeword iff all three parity checks come out even. Everything below is
asserted against that matrix, not against the encoder's own output.
"""

import itertools

import pytest

from memchan import codec

# H rows: positions (1-indexed) covered by p1, p2, p3
_CHECKS = ((1, 3, 5, 7), (2, 3, 6, 7), (4, 5, 6, 7))


def _syndrome(word):
    return tuple(sum(word[p - 1] for p in row) % 2 for row in _CHECKS)


def _oracle_encode(nibble):
    # brute force: the unique 7-bit word with zero syndrome whose data
    # positions 3,5,6,7 spell the nibble MSB-first
    data = [(nibble >> 3) & 1, (nibble >> 2) & 1, (nibble >> 1) & 1, nibble & 1]
    for word in itertools.product((0, 1), repeat=7):
        if [word[2], word[4], word[5], word[6]] == data and _syndrome(word) == (0, 0, 0):
            return word
    raise AssertionError("no codeword found")


def test_all_codewords_satisfy_parity_checks():
    for n in range(16):
        cw = codec.hamming74_encode(n)
        assert _syndrome(cw) == (0, 0, 0)
        assert cw == _oracle_encode(n)


def test_known_codeword_1011():
    assert codec.hamming74_encode(0b1011) == (0, 1, 1, 0, 0, 1, 1)


def test_zero_nibble_is_zero_codeword():
    assert codec.hamming74_encode(0) == (0,) * 7


def test_minimum_distance_is_exactly_three():
    words = [codec.hamming74_encode(n) for n in range(16)]
    dists = [sum(a != b for a, b in zip(u, v))
             for u, v in itertools.combinations(words, 2)]
    assert len(set(words)) == 16
    assert min(dists) == 3


def test_encode_rejects_out_of_range():
    with pytest.raises(ValueError):
        codec.hamming74_encode(16)
    with pytest.raises(ValueError):
        codec.hamming74_encode(-1)


def test_clean_decode_roundtrip():
    for n in range(16):
        out = codec.hamming74_decode(codec.hamming74_encode(n))
        assert (out.nibble, out.corrected, out.uncorrectable) == (n, False, False)


def test_every_single_flip_corrects():
    # 16 nibbles x 7 positions
    for n in range(16):
        cw = list(codec.hamming74_encode(n))
        for pos in range(7):
            flipped = cw.copy()
            flipped[pos] ^= 1
            out = codec.hamming74_decode(flipped)
            assert out.nibble == n
            assert out.corrected and not out.uncorrectable


def test_double_flip_can_miscorrect():
    cw = list(codec.hamming74_encode(0b1011))
    cw[0] ^= 1
    cw[4] ^= 1
    out = codec.hamming74_decode(cw)
    # distance-3 code: two flips land within distance 1 of a different word
    assert out.nibble != 0b1011


def test_decode_rejects_wrong_length():
    with pytest.raises(ValueError):
        codec.hamming74_decode((0, 1, 0))


def test_encode_message_packet_layout():
    pkts = codec.encode_bits([1, 0, 1, 0])
    assert len(pkts) == 1
    assert pkts[0].bits == (1,) + _oracle_encode(0b1010)
    assert str(pkts[0]) == "11011010"


def test_encode_message_empty():
    assert codec.encode_message(b"") == []


def test_0xaa_byte_gives_two_identical_packets():
    pkts = codec.encode_message(b"\xaa")
    assert len(pkts) == 2
    assert pkts[0] == pkts[1]
    assert pkts[0].codeword == _oracle_encode(0b1010)


def test_payload_roundtrip_with_flips(rng):
    for _ in range(25):
        payload = bytes(rng.integers(0, 256, size=rng.integers(1, 40)))
        pkts = codec.encode_message(payload)
        groups = [list(p.bits) for p in pkts]
        # clean
        got, outcomes = codec.decode_packets(groups)
        assert got == payload
        assert not any(o.corrected or o.uncorrectable for o in outcomes)
        # one flip somewhere in the codeword of every packet
        for g in groups:
            g[1 + rng.integers(0, 7)] ^= 1
        got, outcomes = codec.decode_packets(groups)
        assert got == payload
        assert all(o.corrected for o in outcomes)


def test_header_zero_flags_packet_and_continues():
    pkts = codec.encode_message(b"\x5a\x7e")
    groups = [list(p.bits) for p in pkts]
    groups[1][0] = 0
    got, outcomes = codec.decode_packets(groups)
    assert outcomes[1].uncorrectable and not outcomes[1].corrected
    assert [o.uncorrectable for o in outcomes] == [False, True, False, False]
    # neighbors decode fine; the lost nibble reads as placeholder 0
    assert got[0] == 0x50
    assert got[1] == 0x7E


def test_decode_rejects_short_group():
    with pytest.raises(ValueError):
        codec.decode_packets([[1, 0, 1]])


def test_odd_nibble_count_pads_low():
    payload, _ = codec.decode_packets([list(codec.encode_bits([1, 0, 1, 1])[0].bits)])
    assert payload == b"\xb0"


def test_bits_helpers_roundtrip():
    bits = codec.bytes_to_bits(b"\xc3\x01")
    assert bits == [1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 1]
    assert codec.bits_to_bytes(bits) == b"\xc3\x01"
    # tail padding
    assert codec.bits_to_bytes([1, 1, 1]) == b"\xe0"


def test_format_parse_bits():
    assert codec.format_bits([1, 0, 1]) == "101"
    assert codec.parse_bits(" 101\n") == [1, 0, 1]
    with pytest.raises(ValueError):
        codec.parse_bits("10x")
