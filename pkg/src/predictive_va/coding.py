"""Convolutional encoding and DQPSK mapping.

The inner code is the rate-1/2 recursive systematic code with generator
``[1, (1+D^2)/(1+D+D^2)]``.  Encoder state index is ``2*s1 + s2`` with
``s1`` the newest register cell (generally ``sum(s_i * 2**(nu-i))``).
Code digits ("dibits") are ``2*systematic + parity``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

# Quarter turns applied to the running phase for dibits 0, 1, 2, 3
# (phase change 0, pi/2, 3pi/2, pi).
QUARTER_TURNS = np.array([0, 1, 3, 2], dtype=np.int64)
UNIT_POWERS = np.array([1.0 + 0j, 1j, -1.0 + 0j, -1j])

# Gray-labelled coherent QPSK (00, 01, 11, 10 around the circle), pi/4 offset.
GRAY_QPSK = np.exp(1j * np.pi / 4) * np.array([1.0 + 0j, 1j, -1j, -1.0 + 0j])

# Reference symbol preceding the first DQPSK symbol of a frame.
DEFAULT_REFERENCE = complex(np.exp(1j * np.pi / 4))


@dataclass(frozen=True)
class EncoderSpec:
    """Recursive systematic rate-1/2 encoder.

    Polynomials are bitmasks with bit ``i`` holding the coefficient of ``D^i``.
    """

    feedforward: int = 0b101  # 1 + D^2
    feedback: int = 0b111  # 1 + D + D^2
    memory: int = 2
    rate_num: int = 1
    rate_den: int = 2

    def __post_init__(self):
        if self.rate_num != 1 or self.rate_den != 2:
            raise ValueError("only rate-1/2 codes are supported")
        if self.memory < 1:
            raise ValueError("encoder memory must be >= 1")
        if self.feedforward <= 0 or self.feedback <= 0:
            raise ValueError("generator polynomials must be nonzero")
        if not self.feedback & 1:
            raise ValueError("feedback polynomial needs a nonzero constant term")
        limit = 1 << (self.memory + 1)
        if self.feedforward >= limit or self.feedback >= limit:
            raise ValueError("polynomial degree exceeds encoder memory")

    @property
    def num_states(self) -> int:
        return 1 << self.memory


def parse_polynomial(text: str) -> int:
    """Parse ``"1+D+D^2"`` (or ``"1 + D**2"``) into a coefficient bitmask."""
    mask = 0
    for term in re.split(r"\s*\+\s*", text.strip()):
        term = term.strip().upper().replace("**", "^")
        if term == "1":
            power = 0
        elif term == "D":
            power = 1
        elif term.startswith("D^") and term[2:].isdigit():
            power = int(term[2:])
        else:
            raise ValueError(f"cannot parse polynomial term {term!r} in {text!r}")
        mask ^= 1 << power
    return mask


def format_polynomial(mask: int) -> str:
    terms = []
    for power in range(mask.bit_length()):
        if mask >> power & 1:
            terms.append("1" if power == 0 else "D" if power == 1 else f"D^{power}")
    return "+".join(terms)


@dataclass(frozen=True, eq=False)
class EncoderTrellis:
    num_states: int
    next_state: np.ndarray  # [state, input] -> state
    out_dibit: np.ndarray  # [state, input] -> code digit 0..3
    prev_state: np.ndarray  # [next state, input] -> unique predecessor


def _register_step(spec: EncoderSpec, state: int, bit: int) -> tuple[int, int]:
    nu = spec.memory
    regs = [(state >> (nu - i)) & 1 for i in range(1, nu + 1)]  # s1..s_nu
    fb = bit
    for i, s in enumerate(regs, start=1):
        if spec.feedback >> i & 1:
            fb ^= s
    parity = fb if spec.feedforward & 1 else 0
    for i, s in enumerate(regs, start=1):
        if spec.feedforward >> i & 1:
            parity ^= s
    new_regs = [fb] + regs[:-1]
    nxt = 0
    for s in new_regs:
        nxt = (nxt << 1) | s
    return nxt, 2 * bit + parity


def build_encoder_trellis(spec: EncoderSpec | None = None) -> EncoderTrellis:
    spec = spec or EncoderSpec()
    n = spec.num_states
    next_state = np.zeros((n, 2), dtype=np.int64)
    out_dibit = np.zeros((n, 2), dtype=np.int64)
    prev_state = np.full((n, 2), -1, dtype=np.int64)
    for s in range(n):
        for u in (0, 1):
            nxt, dibit = _register_step(spec, s, u)
            next_state[s, u] = nxt
            out_dibit[s, u] = dibit
            if prev_state[nxt, u] != -1:
                raise ValueError(
                    f"encoder is not backward-unique: state {nxt} with input {u} "
                    f"has predecessors {prev_state[nxt, u]} and {s}"
                )
            prev_state[nxt, u] = s
    if (prev_state < 0).any():
        raise ValueError("encoder is not backward-unique: unreachable (state, input) pair")
    for arr in (next_state, out_dibit, prev_state):
        arr.flags.writeable = False
    return EncoderTrellis(n, next_state, out_dibit, prev_state)


def conv_encode(bits, trellis: EncoderTrellis, start_state: int = 0) -> tuple[np.ndarray, int]:
    """Encode ``bits`` without termination; returns ``(dibits, final_state)``."""
    if not 0 <= start_state < trellis.num_states:
        raise ValueError(f"start state {start_state} out of range")
    nxt = trellis.next_state.tolist()
    out = trellis.out_dibit.tolist()
    state = int(start_state)
    dibits = np.empty(len(bits), dtype=np.int64)
    for k, b in enumerate(np.asarray(bits, dtype=np.int64).tolist()):
        dibits[k] = out[state][b]
        state = nxt[state][b]
    return dibits, state


def phase_increment(dibit: int) -> float:
    """Phase change in radians for one code digit."""
    return float(QUARTER_TURNS[dibit]) * np.pi / 2


def diff_encode(dibits, reference: complex = DEFAULT_REFERENCE) -> np.ndarray:
    """DQPSK symbols ``S_k = S_{k-1} exp(j theta(d_k))`` with ``S_{-1} = reference``.

    The running phase is tracked as an integer number of quarter turns, so
    the output never drifts off the unit circle.
    """
    reference = complex(reference)
    if abs(abs(reference) - 1.0) > 1e-12:
        raise ValueError("reference symbol must have unit magnitude")
    turns = np.cumsum(QUARTER_TURNS[np.asarray(dibits, dtype=np.int64)]) % 4
    return reference * UNIT_POWERS[turns]


def diff_decode(symbols, reference: complex = DEFAULT_REFERENCE) -> np.ndarray:
    """Inverse of :func:`diff_encode` by nearest quarter-turn phase difference."""
    symbols = np.asarray(symbols, dtype=complex)
    prev = np.concatenate(([complex(reference)], symbols[:-1]))
    turns = np.rint(np.angle(symbols * np.conj(prev)) / (np.pi / 2)).astype(np.int64) % 4
    # QUARTER_TURNS is its own inverse permutation.
    return QUARTER_TURNS[turns]


def qpsk_map(dibit: int) -> complex:
    """Non-differential mapping ``d -> exp(j d pi/2)``."""
    return complex(UNIT_POWERS[int(dibit)])


def qpsk_unmap(symbol: complex) -> int:
    return int(np.rint(np.angle(symbol) / (np.pi / 2))) % 4
