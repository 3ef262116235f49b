"""Predictive Viterbi detection of convolutional-coded DQPSK over SIMO-OFDM."""
from .channel import ChannelRealization, ReceivedFrame, SystemParams
from .coding import EncoderSpec, build_encoder_trellis
from .harness import BerRecord, RunConfig, run_ber_sweep

__all__ = [
    "BerRecord",
    "ChannelRealization",
    "EncoderSpec",
    "ReceivedFrame",
    "RunConfig",
    "SystemParams",
    "build_encoder_trellis",
    "run_ber_sweep",
]
