"""Channel-DFT autocorrelation and optimal linear predictors.

Conventions: ``R(m) = 1/2 E[X_k X*_{k-m}]``, prediction error
``z_k = sum_{j=0..P} a_{P,j} X_{k-j}`` with ``a_{P,0} = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SystemParams

# Smallest admissible ratio between the order-p and order-0 error variance.
ILL_CONDITIONED = 1e-12


class IllConditionedError(ValueError):
    pass


@dataclass(frozen=True)
class AutocorrModel:
    fade_var: float
    channel_taps: int
    frame_size: int
    noise_var: float = 0.0
    symbol_energy: float = 1.0

    @classmethod
    def from_params(cls, params: SystemParams) -> "AutocorrModel":
        return cls(params.fade_var, params.channel_taps, params.frame_size, params.noise_var)


def r_hh(m: int, model: AutocorrModel) -> complex:
    """Autocorrelation of the channel DFT at subcarrier lag ``m`` (direct sum)."""
    n = np.arange(model.channel_taps)
    return complex(model.fade_var * np.exp(-2j * np.pi * n * m / model.frame_size).sum())


def r_hh_closed_form(m: int, model: AutocorrModel) -> complex:
    """Geometric-series form of :func:`r_hh`."""
    L, N = model.channel_taps, model.frame_size
    if m % N == 0:
        return complex(model.fade_var * L)
    phase = np.exp(-1j * np.pi * m * (L - 1) / N)
    return complex(model.fade_var * phase * np.sin(np.pi * m * L / N) / np.sin(np.pi * m / N))


def r_xx(m: int, model: AutocorrModel) -> complex:
    """Autocorrelation of ``X = Y / S``: channel part plus white noise at lag 0."""
    noise = model.noise_var * model.frame_size / model.symbol_energy if m == 0 else 0.0
    return r_hh(m, model) + noise


def autocorr_sequence(model: AutocorrModel, max_lag: int) -> np.ndarray:
    return np.array([r_xx(m, model) for m in range(max_lag + 1)])


def autocovariance_matrix(model: AutocorrModel, size: int) -> np.ndarray:
    """Hermitian Toeplitz ``Phi[i, j] = R(i - j)``."""
    r = autocorr_sequence(model, size - 1)
    idx = np.arange(size)
    lag = idx[:, None] - idx[None, :]
    return np.where(lag >= 0, r[np.abs(lag)], np.conj(r[np.abs(lag)]))


@dataclass(frozen=True, eq=False)
class PredictorSet:
    order: int
    coeffs: tuple  # coeffs[p] has length p + 1, coeffs[p][0] == 1
    err_var: np.ndarray  # err_var[p], real, non-increasing

    def padded(self) -> np.ndarray:
        """``(P+1, P+1)`` array, row ``p`` holding the order-p filter zero-padded."""
        out = np.zeros((self.order + 1, self.order + 1), dtype=complex)
        for p, a in enumerate(self.coeffs):
            out[p, : p + 1] = a
        return out


def levinson(r: np.ndarray, order: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Order-recursive solve of the complex (Hermitian Toeplitz) normal equations.

    ``r[m]`` is the autocorrelation at lag ``m >= 0``.  Returns the predictor
    ladder for orders ``0..order`` and the matching error variances.
    """
    r = np.asarray(r, dtype=complex)
    if r.shape[0] < order + 1:
        raise ValueError("need autocorrelation up to lag `order`")
    e0 = r[0].real
    if not e0 > 0:
        raise IllConditionedError("zero-lag autocorrelation must be positive")
    a = np.ones(1, dtype=complex)
    ladder = [a]
    err = [e0]
    for p in range(1, order + 1):
        k = -np.dot(a, r[p:0:-1]) / err[-1]
        ext = np.append(a, 0)
        a = ext + k * np.conj(ext[::-1])
        e = err[-1] * (1.0 - abs(k) ** 2)
        if e <= ILL_CONDITIONED * e0:
            raise IllConditionedError(f"autocovariance minor of order {p + 1} is numerically singular")
        ladder.append(a)
        err.append(e)
    return ladder, np.array(err)


def design_predictors(model: AutocorrModel, order: int) -> PredictorSet:
    if order < 0:
        raise ValueError("predictor order must be >= 0")
    r = autocorr_sequence(model, order)
    ladder, _ = levinson(r, order)
    err_var = []
    for p, a in enumerate(ladder):
        # sigma^2_{e,p} = sum_j a_{p,j} R(-j)
        e = np.dot(a, np.conj(r[: p + 1]))
        if abs(e.imag) > 1e-10 * max(1.0, abs(e.real)):
            raise IllConditionedError(f"order-{p} error variance is not real: {e}")
        err_var.append(e.real)
    for a in ladder:
        a.flags.writeable = False
    return PredictorSet(order, tuple(ladder), np.array(err_var))


def prediction_error(window, coeffs) -> complex:
    """``sum_j coeffs[j] * window[j]`` with ``window[j] = X_{k-j}``."""
    window = np.asarray(window, dtype=complex)
    coeffs = np.asarray(coeffs, dtype=complex)
    if window.shape != coeffs.shape:
        raise ValueError(f"window length {window.shape} does not match filter length {coeffs.shape}")
    return complex(np.dot(coeffs, window))


@dataclass(frozen=True, eq=False)
class WhiteningFactors:
    B: np.ndarray  # lower unitriangular
    D: np.ndarray  # diagonal error variances

    @property
    def size(self) -> int:
        return self.B.shape[0]


def whitening_factors(model: AutocorrModel, size: int) -> WhiteningFactors:
    """``B`` and ``D`` with ``Phi^{-1} = B^H D^{-1} B``; small sizes only."""
    if not 1 <= size <= 16:
        raise ValueError("whitening factors are meant for sizes 1..16")
    pred = design_predictors(model, size - 1)
    B = np.zeros((size, size), dtype=complex)
    for p, a in enumerate(pred.coeffs):
        B[p, : p + 1] = a[::-1]
    return WhiteningFactors(B=B, D=np.diag(pred.err_var))


def steady_state_filter_matrix(pred: PredictorSet, length: int) -> np.ndarray:
    """Like ``B`` but rows ``k >= P`` reuse the order-P filter (banded)."""
    P = pred.order
    B = np.zeros((length, length), dtype=complex)
    for k in range(length):
        p = min(k, P)
        B[k, k - p : k + 1] = pred.coeffs[p][::-1]
    return B
