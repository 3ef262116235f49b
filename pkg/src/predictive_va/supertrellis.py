"""Supertrellis construction for the predictive Viterbi receiver.

The full machine pairs the encoder state with the last ``P`` input digits
that populated the prediction filter (``S_E * N^P`` states).  With
differential encoding only phase *ratios* between the filter taps matter,
so the reduced machine keeps the encoder state and ``P - 1`` input bits
(``S_E * 2^(P-1)`` states); the dibits in the filter are recovered by
walking the encoder backwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding import QUARTER_TURNS, UNIT_POWERS, EncoderTrellis, qpsk_map

N_INPUTS = 2  # binary inner-code input


@dataclass(frozen=True, eq=False)
class FullSupertrellis:
    order: int
    num_states: int
    encoder_state: np.ndarray  # [j] -> current encoder state E_i
    start_state: np.ndarray  # [j] -> encoder state E_s before the filter contents
    filter_digits: np.ndarray  # [j, t-1] -> input digit N_t, t = 1..P (N_1 newest)
    code_digits: np.ndarray  # [j, t-1] -> code digit S_t, t = 1..P
    filter_symbols: np.ndarray  # [j, t-1] -> mapped symbol M(S_t)
    next_state: np.ndarray  # [j, input] -> h
    out_digit: np.ndarray  # [j, input] -> S_0

    def table_rows(self) -> list[tuple[int, int, int]]:
        return [(j, u, int(self.next_state[j, u])) for j in range(self.num_states) for u in range(N_INPUTS)]


def build_full_supertrellis(enc: EncoderTrellis, order: int, mapper=qpsk_map) -> FullSupertrellis:
    P = order
    if P < 0:
        raise ValueError("order must be >= 0")
    nfilt = N_INPUTS**P
    n = enc.num_states * nfilt
    encoder_state = np.full(n, -1, dtype=np.int64)
    start_state = np.full(n, -1, dtype=np.int64)
    filter_digits = np.zeros((n, P), dtype=np.int64)
    code_digits = np.zeros((n, P), dtype=np.int64)

    for s in range(enc.num_states):
        for m in range(nfilt):
            # m = sum_t N_{P+1-t} N^{t-1}: N_1 is the most significant digit.
            digits = [(m >> (P - t)) & 1 for t in range(1, P + 1)]
            state = s
            codes = [0] * P
            for t in range(P, 0, -1):  # N_P is fed first
                codes[t - 1] = int(enc.out_dibit[state, digits[t - 1]])
                state = int(enc.next_state[state, digits[t - 1]])
            j = state * nfilt + m
            if encoder_state[j] != -1:
                raise ValueError(f"supertrellis state {j} generated twice; encoder is not backward-unique")
            encoder_state[j] = state
            start_state[j] = s
            filter_digits[j] = digits
            code_digits[j] = codes

    next_state = np.zeros((n, N_INPUTS), dtype=np.int64)
    out_digit = np.zeros((n, N_INPUTS), dtype=np.int64)
    for j in range(n):
        i = encoder_state[j]
        m = j % nfilt
        for u in range(N_INPUTS):
            f = enc.next_state[i, u]
            l = (u * nfilt + m) // N_INPUTS if P > 0 else 0
            next_state[j, u] = f * nfilt + l
            out_digit[j, u] = enc.out_dibit[i, u]

    filter_symbols = np.vectorize(mapper, otypes=[complex])(code_digits) if P else np.zeros((n, 0), complex)
    return FullSupertrellis(
        P, n, encoder_state, start_state, filter_digits, code_digits, filter_symbols, next_state, out_digit
    )


def format_table(rows) -> str:
    """Three whitespace-separated columns: present state, input, next state."""
    return "".join(f"{j} {u} {h}\n" for j, u, h in rows)


@dataclass(frozen=True, eq=False)
class ReducedSupertrellis:
    """Isometry-reduced machine; state ``n = e * 2^(P-1) + history``.

    ``history`` packs the ``P - 1`` most recent input bits, newest first
    (most significant).  Per branch ``(n, u)``:

    * ``dibits[n, u, t]`` is the code digit ``t`` steps back (``t = 0`` current),
    * ``ratios[n, u, j] = exp(j Phi_j) = S_0 / S_j`` for ``j = 0..P``.

    The ``pred_*`` arrays list, for each state, its two incoming branches in
    ascending order of predecessor index.
    """

    order: int
    enc: EncoderTrellis
    num_states: int
    encoder_state: np.ndarray
    history: np.ndarray
    next_state: np.ndarray  # [n, u]
    dibits: np.ndarray  # [n, u, P]
    ratios: np.ndarray  # [n, u, P + 1]
    pred_state: np.ndarray  # [n, c]
    pred_input: np.ndarray  # [n, c]

    def branch_phase_ratios(self, state: int, bit: int) -> np.ndarray:
        return self.ratios[state, bit]

    @property
    def incoming_ratios(self) -> np.ndarray:
        """``[n, c, P + 1]`` phase ratios of the incoming branches."""
        return self.ratios[self.pred_state, self.pred_input]


def _history_dibits(enc: EncoderTrellis, e: int, hist_bits: list[int]) -> list[int]:
    """Code digits produced by ``hist_bits`` (newest first) on the way into ``e``."""
    out = []
    state = e
    for u in hist_bits:
        prev = int(enc.prev_state[state, u])
        out.append(int(enc.out_dibit[prev, u]))
        state = prev
    return out


def build_reduced_supertrellis(enc: EncoderTrellis, order: int) -> ReducedSupertrellis:
    P = order
    if P < 1:
        raise ValueError("reduced supertrellis needs prediction order >= 1")
    nh = N_INPUTS ** (P - 1)
    n = enc.num_states * nh
    encoder_state = np.repeat(np.arange(enc.num_states), nh)
    history = np.tile(np.arange(nh), enc.num_states)
    next_state = np.zeros((n, N_INPUTS), dtype=np.int64)
    dibits = np.zeros((n, N_INPUTS, P), dtype=np.int64)
    turns = np.zeros((n, N_INPUTS, P + 1), dtype=np.int64)

    for s in range(n):
        e, h = int(encoder_state[s]), int(history[s])
        hist_bits = [(h >> (P - 1 - t)) & 1 for t in range(1, P)]  # u_1 .. u_{P-1}
        past = _history_dibits(enc, e, hist_bits)
        for u in range(N_INPUTS):
            d = [int(enc.out_dibit[e, u])] + past
            dibits[s, u] = d
            turns[s, u, 1:] = np.cumsum(QUARTER_TURNS[d]) % 4
            new_hist = (u * nh + h) // N_INPUTS if P > 1 else 0
            next_state[s, u] = int(enc.next_state[e, u]) * nh + new_hist

    pred_state = np.full((n, 2), -1, dtype=np.int64)
    pred_input = np.full((n, 2), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for s in range(n):
        for u in range(N_INPUTS):
            t = next_state[s, u]
            if fill[t] >= 2:
                raise ValueError(f"state {t} has more than two incoming branches")
            pred_state[t, fill[t]] = s
            pred_input[t, fill[t]] = u
            fill[t] += 1
    if (fill != 2).any():
        raise ValueError("every reduced state must have exactly two incoming branches")

    ratios = UNIT_POWERS[turns]
    for arr in (next_state, dibits, ratios, pred_state, pred_input):
        arr.flags.writeable = False
    return ReducedSupertrellis(
        P, enc, n, encoder_state, history, next_state, dibits, ratios, pred_state, pred_input
    )


def branch_phase_ratios(st: ReducedSupertrellis, state: int, bit: int) -> np.ndarray:
    """``[1, exp(j Phi_1), ..., exp(j Phi_P)]`` for one branch."""
    return st.branch_phase_ratios(state, bit)
