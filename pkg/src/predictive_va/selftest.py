"""Quick oracle checks runnable from the command line."""
from __future__ import annotations

import numpy as np

from .channel import ChannelRealization, SystemParams, channel_dft, dft, draw_channel, transmit_through
from .coding import build_encoder_trellis, conv_encode, diff_encode
from .detectors import WEIGHTED, coded_candidates, coherent_va, exhaustive_predictive_ml, predictive_va
from .prediction import (
    AutocorrModel,
    autocorr_sequence,
    autocovariance_matrix,
    design_predictors,
    r_hh,
    r_hh_closed_form,
    whitening_factors,
)
from .supertrellis import build_full_supertrellis, build_reduced_supertrellis, format_table

# Unnormalized supertrellis for P = 1 as published (present, input, next).
TABLE3 = """\
0 0 0
0 1 5
1 0 0
1 1 5
2 0 4
2 1 1
3 0 4
3 1 1
4 0 6
4 1 3
5 0 6
5 1 3
6 0 2
6 1 7
7 0 2
7 1 7
"""


def check_table3():
    got = format_table(build_full_supertrellis(build_encoder_trellis(), 1).table_rows())
    return got == TABLE3, "16 rows identical" if got == TABLE3 else "table differs"


def check_state_counts():
    enc = build_encoder_trellis()
    counts = [build_reduced_supertrellis(enc, p).num_states for p in (1, 2, 3)]
    return counts == [4, 8, 16], f"reduced states {counts}"


def check_levinson():
    worst = 0.0
    for snr in (0.0, 8.0, 17.0):
        model = AutocorrModel.from_params(SystemParams().at_snr(snr))
        pred = design_predictors(model, 8)
        r = autocorr_sequence(model, 8)
        for p in range(1, 9):
            dense = np.linalg.solve(autocovariance_matrix(model, p), -r[1 : p + 1])
            worst = max(worst, np.abs(dense - pred.coeffs[p][1:]).max())
    return worst < 1e-9, f"max |levinson - dense| = {worst:.2e}"


def check_whitening():
    model = AutocorrModel.from_params(SystemParams().at_snr(8.0))
    w = whitening_factors(model, 8)
    phi = autocovariance_matrix(model, 8)
    res = np.linalg.norm(w.B.conj().T @ np.linalg.inv(w.D) @ w.B @ phi - np.eye(8))
    return res < 1e-8, f"||B^H D^-1 B Phi - I||_F = {res:.2e}"


def check_rhh():
    model = AutocorrModel.from_params(SystemParams())
    worst = max(abs(r_hh(m, model) - r_hh_closed_form(m, model)) for m in range(-40, 41))
    return worst < 1e-12, f"max |direct - closed form| = {worst:.2e}"


def check_dft():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(1024) + 1j * rng.standard_normal(1024)
    err = max(np.abs(dft(x) - np.fft.fft(x)).max(), np.abs(dft(dft(x), inverse=True) - x).max())
    return err < 1e-9, f"max deviation {err:.2e}"


def _small_frame(rng, params, enc):
    bits = rng.integers(0, 2, params.frame_size)
    dibits, _ = conv_encode(bits, enc, 0)
    ch = draw_channel(rng, params)
    return bits, transmit_through(diff_encode(dibits), ch, params.noise_var, rng, params.cp_len)


def check_oracle(trials: int = 40):
    enc = build_encoder_trellis()
    params = SystemParams(frame_size=8, channel_taps=2, cp_len=1, decoding_delay=8).at_snr(8.0)
    model = AutocorrModel.from_params(params)
    cands = coded_candidates(enc, params.frame_size)
    rng = np.random.default_rng(2)
    agree = 0
    for t in range(trials):
        P = 1 + t % 3
        st = build_reduced_supertrellis(enc, P)
        pred = design_predictors(model, P)
        _, frame = _small_frame(rng, params, enc)
        best, _ = exhaustive_predictive_ml(frame, cands, pred, params)
        va = predictive_va(frame, st, pred, params, mode=WEIGHTED, delay=params.frame_size)
        agree += bool(np.array_equal(best, va.bits))
    return agree == trials, f"{agree}/{trials} frames agree"


def check_noiseless(frames: int = 20):
    enc = build_encoder_trellis()
    params = SystemParams()
    noiseless = AutocorrModel.from_params(params)
    rng = np.random.default_rng(3)
    sts = {P: build_reduced_supertrellis(enc, P) for P in (1, 2, 3)}
    preds = {P: design_predictors(noiseless, P) for P in (1, 2, 3)}
    errors = 0
    for _ in range(frames):
        bits, frame = _small_frame(rng, params, enc)
        errors += int(np.count_nonzero(coherent_va(frame, enc, params).bits != bits))
        for P in (1, 2, 3):
            errors += int(np.count_nonzero(predictive_va(frame, sts[P], preds[P], params).bits != bits))
    return errors == 0, f"{errors} bit errors over {frames} frames x 4 detectors"


def check_cp():
    rng = np.random.default_rng(4)
    params = SystemParams()
    ch = ChannelRealization(rng.standard_normal((4, 10)) + 1j * rng.standard_normal((4, 10)))
    s = diff_encode(rng.integers(0, 4, 1024))
    frame = transmit_through(s, ch, 0.0, rng, params.cp_len)
    err = np.abs(frame.Y - channel_dft(ch, 1024) * s).max()
    return err < 1e-9, f"max |Y - H S| = {err:.2e}"


CHECKS = {
    "table3": check_table3,
    "state-counts": check_state_counts,
    "levinson-vs-dense": check_levinson,
    "whitening-identity": check_whitening,
    "r_hh-closed-form": check_rhh,
    "radix2-dft": check_dft,
    "cyclic-prefix": check_cp,
    "va-vs-exhaustive": check_oracle,
    "noiseless": check_noiseless,
}


def run_all(echo=print) -> bool:
    ok_all = True
    for name, check in CHECKS.items():
        ok, detail = check()
        ok_all &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name:20s} {detail}")
    return ok_all
