import copy

import numpy as np
import pytest

from conftest import make_frame
from predictive_va._viterbi import viterbi_kernel
from predictive_va.channel import ReceivedFrame, SystemParams, draw_channel, transmit_through
from predictive_va.coding import GRAY_QPSK, conv_encode, diff_encode, qpsk_map
from predictive_va.detectors import (
    STEADY,
    WEIGHTED,
    build_coherent_trellis,
    coded_candidates,
    coherent_qpsk_va,
    coherent_va,
    exhaustive_predictive_ml,
    nondifferential_frame,
    predictive_branch_metric,
    predictive_branch_metrics,
    predictive_va,
)
from predictive_va.prediction import AutocorrModel, design_predictors, prediction_error
from predictive_va.supertrellis import build_reduced_supertrellis

SMALL = SystemParams(frame_size=8, channel_taps=2, cp_len=1, decoding_delay=8)


@pytest.fixture(scope="module")
def setups(enc):
    return {P: build_reduced_supertrellis(enc, P) for P in (1, 2, 3)}


def preds_at(params, P):
    return design_predictors(AutocorrModel.from_params(params), P)


def test_scalar_branch_metric_example():
    # one antenna, a = [1, -1], ratios [1, j]: z = Y0 - j Y1
    Y = np.array([[1 + 1j, 1 + 0j]])
    assert predictive_branch_metric(Y, [1, -1], [1, 1j]) == pytest.approx(abs(1 + 1j - 1j) ** 2)
    # two antennas add
    Y2 = np.vstack([Y, Y])
    assert predictive_branch_metric(Y2, [1, -1], [1, 1j]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        predictive_branch_metric(Y[:, :1], [1, -1], [1, 1j])


@pytest.mark.parametrize("mode", [STEADY, WEIGHTED])
@pytest.mark.parametrize("P", [1, 2, 3])
def test_vectorized_metrics_match_scalar(enc, setups, rng, P, mode):
    params = SystemParams(frame_size=16, channel_taps=3, cp_len=2, num_rx=2).at_snr(6.0)
    pred = preds_at(params, P)
    st = setups[P]
    _, _, frame = make_frame(rng, params, enc)
    bm = predictive_branch_metrics(frame.Y, st, pred, mode)
    Ypad = np.concatenate([np.zeros((2, P)), frame.Y], axis=1)
    for k in range(16):
        window = Ypad[:, k + P :: -1][:, : P + 1]  # Y_k, Y_{k-1}, ...
        for n in range(st.num_states):
            for c in range(2):
                ratios = st.ratios[st.pred_state[n, c], st.pred_input[n, c]]
                if k >= P:
                    want = predictive_branch_metric(window, pred.coeffs[P], ratios)
                    if mode == WEIGHTED:
                        want /= 2 * pred.err_var[P]
                elif mode == STEADY:
                    want = 0.0
                else:
                    want = predictive_branch_metric(window[:, : k + 1], pred.coeffs[k], ratios) / (2 * pred.err_var[k])
                assert bm[k, n, c] == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_metric_argument_checks(setups, rng, enc):
    params = SMALL.at_snr(8)
    _, _, frame = make_frame(rng, params, enc)
    with pytest.raises(ValueError):
        predictive_branch_metrics(frame.Y, setups[2], preds_at(params, 3))
    with pytest.raises(ValueError):
        predictive_branch_metrics(frame.Y, setups[1], preds_at(params, 1), mode="bogus")
    with pytest.raises(ValueError):
        predictive_va(frame, setups[1], preds_at(params, 1), SystemParams())


def test_noiseless_frames_decode_exactly(enc, setups, rng, table2):
    preds = {P: preds_at(table2, P) for P in (1, 2, 3)}
    ct = build_coherent_trellis(enc)
    for _ in range(3):
        bits, symbols, frame = make_frame(rng, table2, enc)
        assert np.array_equal(coherent_va(frame, enc, table2, trellis=ct).bits, bits)
        dibits, _ = conv_encode(bits, enc)
        gray = nondifferential_frame(frame, symbols, GRAY_QPSK[dibits])
        assert np.array_equal(coherent_qpsk_va(gray, enc, table2).bits, bits)
        for P in (1, 2, 3):
            assert np.array_equal(predictive_va(frame, setups[P], preds[P], table2).bits, bits)


def test_nondifferential_frame_equals_direct_transmission(enc, rng, table2):
    params = table2.at_snr(4.0)
    bits = rng.integers(0, 2, params.frame_size)
    dibits, _ = conv_encode(bits, enc)
    S, G = diff_encode(dibits), GRAY_QPSK[dibits]
    ch = draw_channel(rng, params)
    r1, r2 = copy.deepcopy(rng), copy.deepcopy(rng)
    direct = transmit_through(G, ch, params.noise_var, r2, params.cp_len)
    derived = nondifferential_frame(transmit_through(S, ch, params.noise_var, r1, params.cp_len), S, G)
    assert np.max(np.abs(direct.Y - derived.Y)) < 1e-9


def test_gray_constellation_is_gray(enc):
    for a in range(4):
        for b in range(4):
            adjacent = np.isclose(abs(GRAY_QPSK[a] - GRAY_QPSK[b]), np.sqrt(2))
            if adjacent:
                assert bin(a ^ b).count("1") == 1


class TestInvariances:
    @pytest.fixture
    def noisy(self, enc, rng, table2):
        params = table2.at_snr(6.0)
        return params, make_frame(rng, params, enc)

    @pytest.mark.parametrize("phi", [0.3, np.pi / 2, 2.5])
    def test_predictive_global_phase(self, noisy, setups, phi):
        params, (_, _, frame) = noisy
        pred = preds_at(params, 2)
        base = predictive_va(frame, setups[2], pred, params).bits
        rot = ReceivedFrame(frame.Y * np.exp(1j * phi), frame.H)
        assert np.array_equal(predictive_va(rot, setups[2], pred, params).bits, base)

    def test_predictive_positive_scaling(self, noisy, setups):
        params, (_, _, frame) = noisy
        pred = preds_at(params, 3)
        base = predictive_va(frame, setups[3], pred, params).bits
        scaled = ReceivedFrame(frame.Y * 3.7, frame.H)
        assert np.array_equal(predictive_va(scaled, setups[3], pred, params).bits, base)

    def test_coherent_needs_co_rotated_channel(self, noisy, enc):
        params, (bits, _, frame) = noisy
        base = coherent_va(frame, enc, params)
        rot_y = ReceivedFrame(frame.Y * np.exp(1j * np.pi / 4), frame.H)
        both = ReceivedFrame(frame.Y * np.exp(1j * np.pi / 4), frame.H * np.exp(1j * np.pi / 4))
        assert np.array_equal(coherent_va(both, enc, params).bits, base.bits)
        assert np.count_nonzero(coherent_va(rot_y, enc, params).bits != bits) > 100


def test_path_metric_trace_is_monotone(enc, setups, rng, table2):
    params = table2.at_snr(4.0)
    _, _, frame = make_frame(rng, params, enc)
    for P in (1, 3):
        out = predictive_va(frame, setups[P], preds_at(params, P), params)
        assert np.all(np.diff(out.metric_trace) >= -1e-9 * out.metric_trace[-1])
    out = coherent_va(frame, enc, params)
    assert np.all(np.diff(out.metric_trace) >= 0)


@pytest.mark.parametrize("trial", range(30))
def test_va_equals_exhaustive_ml(enc, setups, trial):
    rng = np.random.default_rng([5, trial])
    params = SMALL.at_snr(8.0)
    P = 1 + trial % 3
    pred = preds_at(params, P)
    cands = _cands(enc)
    _, _, frame = make_frame(rng, params, enc)
    best, metrics = exhaustive_predictive_ml(frame, cands, pred, params)
    va = predictive_va(frame, setups[P], pred, params, mode=WEIGHTED, delay=params.frame_size)
    assert np.array_equal(va.bits, best)
    assert va.final_metric.min() == pytest.approx(metrics.min(), rel=1e-9)


def test_uniform_oracle_matches_unweighted_metric(enc, setups, rng):
    params = SMALL.at_snr(8.0)
    pred = preds_at(params, 2)
    _, _, frame = make_frame(rng, params, enc)
    _, metrics = exhaustive_predictive_ml(frame, _cands(enc), pred, params, uniform=True)
    # uniform weights equal the raw sum of |z|^2, transient terms included
    assert metrics.min() > 0
    _, weighted = exhaustive_predictive_ml(frame, _cands(enc), pred, params)
    assert not np.allclose(metrics, weighted)


def test_unknown_start_state_matches_all_start_oracle(enc, setups):
    params = SMALL.at_snr(8.0)
    cands = coded_candidates(enc, params.frame_size, start_states=range(4))
    assert cands.bits.shape == (4 * 256, 8)
    for t in range(10):
        rng = np.random.default_rng([6, t])
        pred = preds_at(params, 2)
        _, _, frame = make_frame(rng, params, enc)
        _, metrics = exhaustive_predictive_ml(frame, cands, pred, params)
        va = predictive_va(frame, setups[2], pred, params, mode=WEIGHTED, start_state=None, delay=8)
        assert va.final_metric.min() == pytest.approx(metrics.min(), rel=1e-9)


_CANDS = {}


def _cands(enc):
    if "c" not in _CANDS:
        _CANDS["c"] = coded_candidates(enc, 8)
    return _CANDS["c"]


def test_exhaustive_size_limit(enc):
    with pytest.raises(ValueError):
        coded_candidates(enc, 13)
    params = SystemParams(frame_size=16, channel_taps=2, cp_len=1)
    frame = ReceivedFrame(np.zeros((4, 16), complex), np.zeros((4, 16), complex))
    with pytest.raises(ValueError):
        exhaustive_predictive_ml(frame, _cands(enc), preds_at(params, 1), params)


def test_phase_ambiguity_without_differential_encoding():
    """Constant streams rotated by a quarter turn are indistinguishable to the metric.

    This is why the transmitter encodes differentially: the isometry of the
    predictive metric would otherwise hide the absolute phase.
    """
    rng = np.random.default_rng(9)
    H = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    a = np.array([1.0, -0.9, 0.1 + 0.05j])
    s0, s3 = qpsk_map(0), qpsk_map(3)
    Y = H * s0  # received stream of all-zero dibits
    errs = {}
    for name, s in (("zero", s0), ("three", s3)):
        X = Y / s
        errs[name] = [abs(prediction_error(X[k - 2 : k + 1][::-1], a)) ** 2 for k in range(2, 12)]
    assert np.allclose(errs["zero"], errs["three"])


def test_kernel_tie_break_and_release():
    # two states, each reachable from both; all metrics equal
    pred_state = np.array([[0, 1], [0, 1]])
    pred_input = np.array([[0, 0], [1, 1]])
    bm = np.zeros((5, 2, 2))
    bits, metric, trace = viterbi_kernel(bm, pred_state, pred_input, np.zeros(2), 2)
    assert bits.tolist() == [0] * 5  # ties go to state 0 / branch 0
    assert metric.tolist() == [0, 0]
    # make input 1 into state 1 strictly cheaper at every step
    bm[:, 0, :] = 1.0
    bits, _, trace = viterbi_kernel(bm, pred_state, pred_input, np.zeros(2), 2)
    assert bits.tolist() == [1] * 5
    assert trace.tolist() == [0] * 5


def test_kernel_initial_metric_restricts_start():
    pred_state = np.array([[0, 1], [0, 1]])
    pred_input = np.array([[0, 0], [1, 1]])
    bm = np.zeros((3, 2, 2))
    bm[0, :, 0] = 5.0  # leaving state 0 is expensive at step 0
    out = viterbi_kernel(bm, pred_state, pred_input, np.array([0.0, np.inf]), 3)
    assert out[1].min() == 5.0


def test_fixed_delay_matches_full_traceback_at_high_snr(enc, setups, rng, table2):
    params = table2.at_snr(12.0)
    pred = preds_at(params, 3)
    _, _, frame = make_frame(rng, params, enc)
    short = predictive_va(frame, setups[3], pred, params).bits
    full = predictive_va(frame, setups[3], pred, params, delay=params.frame_size).bits
    assert np.count_nonzero(short != full) <= 2


def test_start_state_none_decodes(enc, setups, rng, table2):
    params = table2.at_snr(12.0)
    bits, _, frame = make_frame(rng, params, enc)
    out = predictive_va(frame, setups[2], preds_at(params, 2), params, start_state=None)
    assert np.count_nonzero(out.bits != bits) < 20
