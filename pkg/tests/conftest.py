import numpy as np
import pytest

from predictive_va.channel import SystemParams, draw_channel, transmit_through
from predictive_va.coding import build_encoder_trellis, conv_encode, diff_encode

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def enc():
    return build_encoder_trellis()


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def make_frame(rng, params, enc, bits=None):
    """Random data through the full transmitter and channel."""
    if bits is None:
        bits = rng.integers(0, 2, params.frame_size)
    dibits, _ = conv_encode(bits, enc, 0)
    symbols = diff_encode(dibits)
    ch = draw_channel(rng, params)
    return np.asarray(bits), symbols, transmit_through(symbols, ch, params.noise_var, rng, params.cp_len)


@pytest.fixture(scope="session")
def table2():
    return SystemParams()
