"""Predictive Viterbi receiver, exhaustive predictive-ML oracle, coherent baseline."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._viterbi import viterbi_kernel
from .channel import ReceivedFrame, SystemParams
from .coding import DEFAULT_REFERENCE, GRAY_QPSK, QUARTER_TURNS, UNIT_POWERS, EncoderTrellis, conv_encode, diff_encode
from .prediction import PredictorSet, steady_state_filter_matrix
from .supertrellis import ReducedSupertrellis

MAX_EXHAUSTIVE_LENGTH = 12

STEADY = "steady"  # order-P metric from step P on, unweighted
WEIGHTED = "weighted"  # transient orders 0..P-1, each term / (2 sigma_e^2)


@dataclass(eq=False)
class DetectorOutput:
    bits: np.ndarray
    final_metric: np.ndarray | None = None
    metric_trace: np.ndarray | None = None  # best path metric after each step
    errors: int | None = None

    def score(self, reference_bits) -> "DetectorOutput":
        reference_bits = np.asarray(reference_bits)
        if reference_bits.shape != self.bits.shape:
            raise ValueError("decoded and reference lengths differ")
        self.errors = int(np.count_nonzero(self.bits != reference_bits))
        return self


def _window(Y: np.ndarray, depth: int) -> np.ndarray:
    """``W[l, k, j] = Y[l, k - j]`` (zero before the frame start)."""
    num_rx, n = Y.shape
    padded = np.concatenate((np.zeros((num_rx, depth - 1), dtype=complex), Y), axis=1)
    idx = np.arange(n)[:, None] + (depth - 1) - np.arange(depth)[None, :]
    return padded[:, idx]


def predictive_branch_metric(Y_window, coeffs, phase_ratios) -> float:
    """``sum_l |sum_j a_j Y[l, j] exp(j Phi_j)|^2`` with ``Y_window[l, j] = Y_{k-j, l}``."""
    Y_window = np.atleast_2d(np.asarray(Y_window, dtype=complex))
    coeffs = np.asarray(coeffs, dtype=complex)
    phase_ratios = np.asarray(phase_ratios, dtype=complex)
    if Y_window.shape[1] < coeffs.shape[0] or phase_ratios.shape[0] < coeffs.shape[0]:
        raise ValueError("window shorter than the prediction filter")
    p = coeffs.shape[0]
    z = Y_window[:, :p] @ (coeffs * phase_ratios[:p])
    return float(np.sum(np.abs(z) ** 2))


def predictive_branch_metrics(
    Y: np.ndarray, st: ReducedSupertrellis, pred: PredictorSet, mode: str = STEADY
) -> np.ndarray:
    """All branch metrics ``[k, n, c]`` of one frame on the reduced supertrellis."""
    P = st.order
    if pred.order != P:
        raise ValueError(f"predictor order {pred.order} does not match supertrellis order {P}")
    num_rx, n = Y.shape
    W = _window(Y, P + 1)  # (num_rx, n, P+1)
    ratios = st.incoming_ratios.reshape(-1, P + 1)  # (branches, P+1)
    filters = pred.padded()  # row p: order-p filter

    def metrics(a):
        z = W @ (a[:, None] * ratios.T)  # (num_rx, n, branches)
        return np.einsum("lkb,lkb->kb", z.real, z.real) + np.einsum("lkb,lkb->kb", z.imag, z.imag)

    bm = metrics(filters[P])
    if mode == STEADY:
        bm[:P] = 0.0
    elif mode == WEIGHTED:
        bm[P:] /= 2 * pred.err_var[P]
        for k in range(min(P, n)):
            bm[k] = metrics(filters[k])[k] / (2 * pred.err_var[k])
    else:
        raise ValueError(f"unknown metric mode {mode!r}")
    return bm.reshape(n, st.num_states, 2)


def _initial_metric(num_states: int, encoder_of_state: np.ndarray, start_state: int | None) -> np.ndarray:
    init = np.zeros(num_states)
    if start_state is not None:
        init[encoder_of_state != start_state] = np.inf
    return init


def predictive_va(
    frame: ReceivedFrame,
    st: ReducedSupertrellis,
    pred: PredictorSet,
    params: SystemParams,
    mode: str = STEADY,
    start_state: int | None = 0,
    delay: int | None = None,
) -> DetectorOutput:
    """Predictive Viterbi decoding of one frame.

    ``start_state`` restricts the initial encoder state (the prediction
    filter contents are always unknown); ``None`` starts every state at
    zero metric.
    """
    Y = np.asarray(frame.Y)
    if Y.shape != (params.num_rx, params.frame_size):
        raise ValueError(f"frame shape {Y.shape} does not match parameters")
    bm = predictive_branch_metrics(Y, st, pred, mode)
    init = _initial_metric(st.num_states, st.encoder_state, start_state)
    delay = params.decoding_delay if delay is None else delay
    bits, metric, trace = viterbi_kernel(bm, st.pred_state, st.pred_input, init, delay)
    return DetectorOutput(bits=bits, final_metric=metric, metric_trace=trace)


@dataclass(frozen=True, eq=False)
class CoherentTrellis:
    """Product of the encoder trellis with the previous-symbol quarter turn."""

    num_states: int
    encoder_state: np.ndarray
    turns: np.ndarray  # quarter turns of S_{k-1} relative to the reference
    pred_state: np.ndarray
    pred_input: np.ndarray


def build_coherent_trellis(enc: EncoderTrellis) -> CoherentTrellis:
    n = enc.num_states * 4
    pred_state = np.full((n, 2), -1, dtype=np.int64)
    pred_input = np.full((n, 2), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for e in range(enc.num_states):
        for q in range(4):
            for u in (0, 1):
                q_next = (q + QUARTER_TURNS[enc.out_dibit[e, u]]) % 4
                t = enc.next_state[e, u] * 4 + q_next
                pred_state[t, fill[t]] = e * 4 + q
                pred_input[t, fill[t]] = u
                fill[t] += 1
    if (fill != 2).any():
        raise ValueError("coherent product trellis is not two-in per state")
    idx = np.arange(n)
    return CoherentTrellis(n, idx // 4, idx % 4, pred_state, pred_input)


def coherent_va(
    frame: ReceivedFrame,
    enc: EncoderTrellis,
    params: SystemParams,
    reference: complex = DEFAULT_REFERENCE,
    start_state: int | None = 0,
    trellis: CoherentTrellis | None = None,
    delay: int | None = None,
) -> DetectorOutput:
    """Viterbi decoding with perfect channel knowledge."""
    ct = trellis or build_coherent_trellis(enc)
    Y, H = np.asarray(frame.Y), np.asarray(frame.H)
    if Y.shape != (params.num_rx, params.frame_size) or H.shape != Y.shape:
        raise ValueError("frame shape does not match parameters")
    # Every branch into state (e, q) carries the symbol reference * j^q.
    candidates = complex(reference) * UNIT_POWERS  # (4,)
    diff = Y[:, :, None] - H[:, :, None] * candidates[None, None, :]
    per_turn = np.einsum("lkq,lkq->kq", diff.real, diff.real) + np.einsum("lkq,lkq->kq", diff.imag, diff.imag)
    bm = np.repeat(per_turn[:, ct.turns][:, :, None], 2, axis=2)
    init = np.full(ct.num_states, np.inf)
    allowed = ct.turns == 0
    if start_state is not None:
        allowed &= ct.encoder_state == start_state
    init[allowed] = 0.0
    delay = params.decoding_delay if delay is None else delay
    bits, metric, trace = viterbi_kernel(bm, ct.pred_state, ct.pred_input, init, delay)
    return DetectorOutput(bits=bits, final_metric=metric, metric_trace=trace)


def coherent_qpsk_va(
    frame: ReceivedFrame,
    enc: EncoderTrellis,
    params: SystemParams,
    constellation=GRAY_QPSK,
    start_state: int | None = 0,
    delay: int | None = None,
) -> DetectorOutput:
    """Viterbi decoding of non-differential coded QPSK with perfect channel knowledge.

    ``frame.Y`` must carry ``constellation[dibit]`` symbols; the search runs
    on the bare encoder trellis.
    """
    Y, H = np.asarray(frame.Y), np.asarray(frame.H)
    if Y.shape != (params.num_rx, params.frame_size) or H.shape != Y.shape:
        raise ValueError("frame shape does not match parameters")
    constellation = np.asarray(constellation, dtype=complex)
    if constellation.shape != (4,):
        raise ValueError("constellation must have four points")
    diff = Y[:, :, None] - H[:, :, None] * constellation[None, None, :]
    per_dibit = np.einsum("lkq,lkq->kq", diff.real, diff.real) + np.einsum("lkq,lkq->kq", diff.imag, diff.imag)
    pred_state = np.ascontiguousarray(enc.prev_state)
    pred_input = np.tile(np.arange(2, dtype=np.int64), (enc.num_states, 1))
    dibit_in = enc.out_dibit[pred_state, pred_input]  # (states, 2)
    bm = per_dibit[:, dibit_in]
    init = np.zeros(enc.num_states)
    if start_state is not None:
        init[:] = np.inf
        init[start_state] = 0.0
    delay = params.decoding_delay if delay is None else delay
    bits, metric, trace = viterbi_kernel(bm, pred_state, pred_input, init, delay)
    return DetectorOutput(bits=bits, final_metric=metric, metric_trace=trace)


def nondifferential_frame(frame: ReceivedFrame, diff_symbols, symbols) -> ReceivedFrame:
    """Same channel and noise as ``frame`` carrying ``symbols`` instead of ``diff_symbols``.

    Exact because the link is linear: ``Y' = Y - H S + H S'``.
    """
    H = np.asarray(frame.H)
    return ReceivedFrame(frame.Y + H * (np.asarray(symbols) - np.asarray(diff_symbols)), H)


@dataclass(frozen=True, eq=False)
class Candidates:
    bits: np.ndarray  # (Q, L)
    start_states: np.ndarray  # (Q,)
    symbols: np.ndarray  # (Q, L)


def coded_candidates(
    enc: EncoderTrellis, length: int, start_states=(0,), reference: complex = DEFAULT_REFERENCE
) -> Candidates:
    """Every coded DQPSK sequence of ``length`` symbols from the given start states."""
    if length > MAX_EXHAUSTIVE_LENGTH:
        raise ValueError(f"exhaustive search limited to {MAX_EXHAUSTIVE_LENGTH} symbols")
    bits, starts, symbols = [], [], []
    for s in start_states:
        for word in itertools.product((0, 1), repeat=length):
            dibits, _ = conv_encode(word, enc, s)
            bits.append(word)
            starts.append(s)
            symbols.append(diff_encode(dibits, reference))
    return Candidates(np.array(bits, dtype=np.uint8), np.array(starts), np.array(symbols))


def exhaustive_metrics(Y: np.ndarray, candidates: Candidates, B: np.ndarray, err_var: np.ndarray) -> np.ndarray:
    """``sum_l sum_k |z_k|^2 / (2 sigma_k^2)`` with ``z = B S^{-1} Y_l`` per candidate."""
    X = Y[None, :, :] * np.conj(candidates.symbols)[:, None, :]  # unit-magnitude symbols
    z = X @ B.T
    return np.sum(np.abs(z) ** 2 / (2 * err_var), axis=(1, 2))


def exhaustive_predictive_ml(
    frame: ReceivedFrame,
    candidates: Candidates,
    pred: PredictorSet,
    params: SystemParams,
    uniform: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force minimiser of the transient + steady-state predictive metric.

    ``uniform=True`` drops the ``1/(2 sigma_e^2)`` weights.  Returns
    ``(best_bits, metrics)``; ties go to the earliest candidate.
    """
    Y = np.asarray(frame.Y)
    L = Y.shape[1]
    if L > MAX_EXHAUSTIVE_LENGTH:
        raise ValueError(f"exhaustive search limited to {MAX_EXHAUSTIVE_LENGTH} symbols")
    if candidates.symbols.shape[1] != L:
        raise ValueError("candidate length does not match frame length")
    B = steady_state_filter_matrix(pred, L)
    if uniform:
        sig = np.full(L, 0.5)
    else:
        sig = np.array([pred.err_var[min(k, pred.order)] for k in range(L)])
    metrics = exhaustive_metrics(Y, candidates, B, sig)
    return candidates.bits[int(np.argmin(metrics))], metrics
