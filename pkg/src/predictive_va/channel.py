"""OFDM link: radix-2 DFT, Rayleigh multipath with receive diversity, AWGN."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .coding import EncoderSpec


@dataclass(frozen=True)
class SystemParams:
    """Scalar link configuration (defaults follow the Table 2 setup)."""

    frame_size: int = 1024  # L_d, subcarriers = DQPSK symbols = data bits per frame
    channel_taps: int = 10  # L_h
    cp_len: int = 9  # L_CP
    num_rx: int = 4  # N_r
    fade_var: float = 0.5  # per-dimension tap variance
    noise_var: float = 0.0  # per-dimension time-domain noise variance
    order: int = 3  # predictor order P
    decoding_delay: int = 30  # D'_v
    encoder: EncoderSpec = field(default_factory=EncoderSpec)

    def __post_init__(self):
        n = self.frame_size
        if n < 1 or n & (n - 1):
            raise ValueError(f"frame size must be a power of two, got {n}")
        if not 1 <= self.channel_taps <= n:
            raise ValueError("channel taps must lie in [1, frame_size]")
        if self.cp_len < self.channel_taps - 1:
            raise ValueError("cyclic prefix shorter than the channel memory")
        if self.num_rx < 1:
            raise ValueError("need at least one receive antenna")
        if self.fade_var < 0 or self.noise_var < 0:
            raise ValueError("variances must be non-negative")
        if self.order < 0 or self.decoding_delay < 0:
            raise ValueError("order and decoding delay must be non-negative")

    @property
    def frame_len(self) -> int:
        """Time-domain samples per frame including the cyclic prefix (L_f)."""
        return self.frame_size + self.cp_len

    def at_snr(self, snr_db: float) -> "SystemParams":
        return replace(self, noise_var=noise_variance_for_snr(snr_db, self))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    taps: np.ndarray  # (num_rx, channel_taps)


@dataclass(frozen=True, eq=False)
class ReceivedFrame:
    Y: np.ndarray  # (num_rx, frame_size) DFT-domain samples
    H: np.ndarray  # (num_rx, frame_size) true channel DFT


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(half: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    tw = np.exp(sign * 1j * np.pi * np.arange(half) / half)
    tw.flags.writeable = False
    return tw


def dft(x, inverse: bool = False) -> np.ndarray:
    """Radix-2 decimation-in-time DFT along the last axis.

    Forward carries no scale factor; the inverse carries ``1/size``.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"transform size must be a power of two, got {n}")
    lead = x.shape[:-1]
    a = x[..., _bit_reverse(n)]
    half = 1
    while half < n:
        a = a.reshape(lead + (n // (2 * half), 2, half))
        even = a[..., 0, :]
        odd = a[..., 1, :] * _twiddles(half, inverse)
        a = np.stack((even + odd, even - odd), axis=-2)
        half *= 2
    a = a.reshape(lead + (n,))
    return a / n if inverse else a


def draw_channel(rng: np.random.Generator, params: SystemParams) -> ChannelRealization:
    """I.i.d. circularly-symmetric Gaussian taps, uniform power delay profile."""
    g = rng.standard_normal((params.num_rx, params.channel_taps, 2))
    taps = np.sqrt(params.fade_var) * (g[..., 0] + 1j * g[..., 1])
    return ChannelRealization(taps)


def channel_dft(ch: ChannelRealization, frame_size: int) -> np.ndarray:
    taps = ch.taps
    if taps.shape[-1] > frame_size:
        raise ValueError("more channel taps than subcarriers")
    padded = np.zeros(taps.shape[:-1] + (frame_size,), dtype=complex)
    padded[..., : taps.shape[-1]] = taps
    return dft(padded)


def transmit_through(
    symbols,
    ch: ChannelRealization,
    noise_var: float,
    rng: np.random.Generator,
    cp_len: int | None = None,
) -> ReceivedFrame:
    """IFFT, cyclic prefix, multipath per arm, AWGN, CP removal, FFT."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim != 1:
        raise ValueError("expected one frame of symbols")
    n = symbols.shape[0]
    num_rx, n_taps = ch.taps.shape
    if cp_len is None:
        cp_len = n_taps - 1
    if cp_len < n_taps - 1:
        raise ValueError("cyclic prefix shorter than the channel memory")
    if n_taps > n:
        raise ValueError("more channel taps than subcarriers")

    x = dft(symbols, inverse=True)
    tx = np.concatenate((x[n - cp_len :], x))
    frame_len = tx.shape[0]
    rx = np.empty((num_rx, frame_len), dtype=complex)
    for arm in range(num_rx):
        rx[arm] = np.convolve(ch.taps[arm], tx)[:frame_len]
    # Always consume the noise draw so the stream layout does not depend on SNR.
    g = rng.standard_normal((num_rx, frame_len, 2))
    if noise_var > 0:
        rx += np.sqrt(noise_var) * (g[..., 0] + 1j * g[..., 1])
    Y = dft(rx[:, cp_len : cp_len + n])
    return ReceivedFrame(Y=Y, H=channel_dft(ch, n))


def noise_variance_for_snr(snr_db: float, params: SystemParams, symbol_energy: float = 1.0) -> float:
    """Per-dimension noise variance giving the requested average SNR per bit.

    SNR = N_r * (L_h * 2 sigma_f^2) * |S|^2 / (L_d * 2 sigma_w^2)
    """
    snr = 10.0 ** (snr_db / 10.0)
    if not snr > 0:
        raise ValueError(f"SNR must be positive, got {snr_db} dB")
    return params.num_rx * params.channel_taps * params.fade_var * symbol_energy / (params.frame_size * snr)
