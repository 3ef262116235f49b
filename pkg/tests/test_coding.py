import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictive_va.coding import (
    DEFAULT_REFERENCE,
    EncoderSpec,
    build_encoder_trellis,
    conv_encode,
    diff_decode,
    diff_encode,
    format_polynomial,
    parse_polynomial,
    phase_increment,
    qpsk_map,
    qpsk_unmap,
)


def register_encode(bits, s1=0, s2=0):
    """Shift-register model of [1, (1+D^2)/(1+D+D^2)]; returns dibits and (s1, s2)."""
    out = []
    for u in bits:
        w = u ^ s1 ^ s2
        parity = w ^ s2
        out.append(2 * u + parity)
        s1, s2 = w, s1
    return out, (s1, s2)


def series_parity(bits):
    """Parity stream u(D) (1+D^2) / (1+D+D^2) by GF(2) long division, zero initial state."""
    n = len(bits)
    num = [0] * (n + 2)
    for i, u in enumerate(bits):  # u(D) * (1 + D^2)
        num[i] ^= u
        num[i + 2] ^= u
    q = [0] * n
    rem = num[:]
    for i in range(n):  # divide by 1 + D + D^2, lowest order first
        q[i] = rem[i]
        if q[i]:
            rem[i] ^= 1
            if i + 1 < len(rem):
                rem[i + 1] ^= 1
            if i + 2 < len(rem):
                rem[i + 2] ^= 1
    return q


def test_trellis_matches_register_model(enc):
    assert enc.num_states == 4
    for s in range(4):
        for u in (0, 1):
            dib, (s1, s2) = register_encode([u], s >> 1, s & 1)
            assert enc.next_state[s, u] == 2 * s1 + s2
            assert enc.out_dibit[s, u] == dib[0]


@pytest.mark.parametrize(
    "state, bit, nxt",
    [(0, 1, 2), (1, 0, 2), (0, 0, 0)],
)
def test_trellis_examples(enc, state, bit, nxt):
    assert enc.next_state[state, bit] == nxt


def test_trellis_invariants(enc):
    # systematic bit is the MSB of the dibit
    assert np.array_equal(enc.out_dibit >> 1, np.tile([0, 1], (4, 1)))
    for h in range(4):
        for u in (0, 1):
            preds = [s for s in range(4) if enc.next_state[s, u] == h]
            assert preds == [enc.prev_state[h, u]]


def test_rejects_bad_specs():
    with pytest.raises(ValueError):
        EncoderSpec(feedback=0b110)  # no constant term
    with pytest.raises(ValueError):
        EncoderSpec(feedforward=0)
    with pytest.raises(ValueError):
        # feed-forward only: two predecessors per (state, input)
        build_encoder_trellis(EncoderSpec(feedforward=0b101, feedback=0b001))


def test_conv_encode_examples(enc):
    dib, final = conv_encode([0, 0, 0], enc, 0)
    assert list(dib) == [0, 0, 0] and final == 0
    dib, final = conv_encode([1], enc, 0)
    assert list(dib) == [3] and final == 2
    dib, final = conv_encode([1, 1], enc, 0)
    ref, (s1, s2) = register_encode([1, 1])
    assert list(dib) == ref and final == 2 * s1 + s2


def test_conv_encode_against_long_division(enc):
    rng = np.random.default_rng(5)
    bits = rng.integers(0, 2, 500).tolist()
    dib, _ = conv_encode(bits, enc, 0)
    assert list(dib & 1) == series_parity(bits)
    assert list(dib >> 1) == bits
    assert list(conv_encode(np.zeros(64, int), enc, 0)[0]) == [0] * 64


def test_conv_encode_rejects_bad_start(enc):
    with pytest.raises(ValueError):
        conv_encode([0], enc, 4)


def test_phase_increment_table():
    assert phase_increment(0) == 0
    assert phase_increment(1) == pytest.approx(np.pi / 2)
    assert phase_increment(2) == pytest.approx(3 * np.pi / 2)
    assert phase_increment(3) == pytest.approx(np.pi)


def test_diff_encode_examples():
    ref = (1 + 1j) / np.sqrt(2)
    assert np.allclose(diff_encode([0] * 5, ref), ref)
    assert np.allclose(diff_encode([3], 1), [-1])
    assert np.allclose(diff_encode([1, 1], 1), [1j, -1])
    with pytest.raises(ValueError):
        diff_encode([0], 2.0)


def test_diff_round_trip_long():
    rng = np.random.default_rng(9)
    d = rng.integers(0, 4, 10_000)
    s = diff_encode(d)
    assert np.max(np.abs(np.abs(s) - 1)) < 1e-12
    assert np.array_equal(diff_decode(s), d)
    # angles of consecutive ratios agree with the table to 1e-9
    ratios = s * np.conj(np.concatenate(([DEFAULT_REFERENCE], s[:-1])))
    expected = np.array([phase_increment(x) for x in d])
    assert np.max(np.abs(np.exp(1j * expected) - ratios)) < 1e-9


@pytest.mark.parametrize("phi", [np.pi / 7, np.pi / 2, 1.0])
def test_rotation_commutes_with_diff_encode(phi):
    d = np.random.default_rng(3).integers(0, 4, 256)
    rot = np.exp(1j * phi)
    assert np.allclose(diff_encode(d, DEFAULT_REFERENCE * rot), rot * diff_encode(d, DEFAULT_REFERENCE), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=200), st.floats(-np.pi, np.pi))
def test_diff_encode_properties(dibits, phi):
    ref = np.exp(1j * phi)
    s = diff_encode(dibits, ref)
    assert len(s) == len(dibits)
    assert np.allclose(np.abs(s), 1, atol=1e-12)
    assert list(diff_decode(s, ref)) == dibits


def test_qpsk_map_bijection():
    pts = [qpsk_map(d) for d in range(4)]
    assert pts[0] == 1 + 0j
    assert len({(round(p.real, 9), round(p.imag, 9)) for p in pts}) == 4
    assert all(abs(abs(p) - 1) < 1e-12 for p in pts)
    assert [qpsk_unmap(p) for p in pts] == [0, 1, 2, 3]


def test_polynomial_parsing():
    assert parse_polynomial("1+D^2") == 0b101
    assert parse_polynomial("1 + D + D**2") == 0b111
    assert format_polynomial(0b111) == "1+D+D^2"
    with pytest.raises(ValueError):
        parse_polynomial("1+X")
