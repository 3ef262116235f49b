"""Monte-Carlo BER engine, run configuration, CSV and SVG output."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .channel import SystemParams, draw_channel, transmit_through
from .coding import DEFAULT_REFERENCE, GRAY_QPSK, EncoderSpec, build_encoder_trellis, conv_encode, diff_encode, parse_polynomial
from .detectors import build_coherent_trellis, coherent_qpsk_va, coherent_va, nondifferential_frame, predictive_va
from .prediction import AutocorrModel, design_predictors
from .supertrellis import build_reduced_supertrellis

log = logging.getLogger(__name__)

CSV_COLUMNS = ("detector", "snr_db", "bits", "errors", "ber", "seconds")
BLOCK_FRAMES = 200  # early-stop decisions are taken at multiples of this

# Published BER curves (SNR per bit in dB, BER), used for the plot overlay.
PAPER_FIG4 = {
    "coherent": [(0, 0.1269034), (4, 0.0221382), (8, 0.001557), (12, 0.0000579), (14, 0.0000111)],
    "p1": [(0, 0.359), (4, 0.1865), (8, 0.03572), (12, 0.00246), (17, 0.0000418)],
    "p2": [(0, 0.33518), (4, 0.12656), (8, 0.0162), (12, 0.0009408), (17, 0.000027)],
    "p3": [(0, 0.311), (4, 0.0966), (8, 0.0102121), (12, 0.0005193), (17, 0.0000084)],
}


COHERENT_DETECTORS = ("coherent", "coherent-gray")


def predictor_order(detector: str) -> int | None:
    """``"p3" -> 3``; ``None`` for the coherent detectors."""
    if detector in COHERENT_DETECTORS:
        return None
    m = re.fullmatch(r"p([1-9][0-9]*)", detector)
    if not m:
        raise ValueError(f"unknown detector {detector!r} (expected coherent, coherent-gray or p1, p2, ...)")
    return int(m.group(1))


def detector_label(detector: str, encoder: EncoderSpec | None = None) -> str:
    order = predictor_order(detector)
    if detector == "coherent-gray":
        return "ideal coherent (Gray QPSK)"
    if order is None:
        return "ideal coherent"
    states = (encoder or EncoderSpec()).num_states * 2 ** (order - 1)
    return f"P={order},S_ST={states}"


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams = field(default_factory=SystemParams)
    snr_points_db: tuple = (0.0, 4.0, 8.0, 12.0, 17.0)
    detectors: tuple = ("coherent", "p1", "p2", "p3")
    frames_per_point: int = 10_000
    master_seed: int = 42
    workers: int = 1
    csv_path: str | None = None
    svg_path: str | None = None
    overlay_paper: bool = False
    early_stop: bool = False
    min_errors: int = 500
    record_timing: bool = True

    def __post_init__(self):
        if self.frames_per_point < 1:
            raise ValueError("frames_per_point must be >= 1")
        if not self.snr_points_db:
            raise ValueError("need at least one SNR point")
        if not self.detectors:
            raise ValueError("need at least one detector")
        for d in self.detectors:
            predictor_order(d)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class BerRecord:
    detector: str
    snr_db: float
    bits: int
    errors: int
    seconds: float = 0.0

    @property
    def ber(self) -> float:
        return self.errors / self.bits

    @property
    def std_error(self) -> float:
        p = self.ber
        return math.sqrt(p * (1 - p) / self.bits)


@dataclass(eq=False)
class FrameRecord:
    frame_index: int
    snr_db: float
    tx_bits: np.ndarray
    taps: np.ndarray
    Y: np.ndarray
    decoded: dict
    errors: dict
    seconds: dict


class PointContext:
    """Receiver tables for one SNR point, shared read-only by all frames."""

    def __init__(self, params: SystemParams, snr_db: float, detectors):
        self.snr_db = float(snr_db)
        self.params = params.at_snr(snr_db)
        self.enc = build_encoder_trellis(params.encoder)
        self.detectors = tuple(detectors)
        self.supertrellis = {}
        self.predictors = {}
        self.coherent = None
        model = AutocorrModel.from_params(self.params)
        for d in self.detectors:
            order = predictor_order(d)
            if d == "coherent":
                self.coherent = build_coherent_trellis(self.enc)
            elif order is None:
                continue
            else:
                self.supertrellis[d] = build_reduced_supertrellis(self.enc, order)
                self.predictors[d] = design_predictors(model, order)

    def decode(self, detector: str, frame):
        if detector == "coherent":
            return coherent_va(frame, self.enc, self.params, trellis=self.coherent)
        if detector == "coherent-gray":
            return coherent_qpsk_va(frame, self.enc, self.params, GRAY_QPSK)
        return predictive_va(frame, self.supertrellis[detector], self.predictors[detector], self.params)


def _snr_key(snr_db: float) -> int:
    return int(np.float64(snr_db).view(np.uint64))


def frame_rng(master_seed: int, snr_db: float, frame_index: int) -> np.random.Generator:
    """Independent stream per (seed, SNR, frame), independent of scheduling."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(_snr_key(snr_db), frame_index))
    return np.random.Generator(np.random.PCG64(seq))


_CONTEXTS: dict = {}


def _context(cfg: RunConfig, snr_db: float) -> PointContext:
    key = (cfg.params, float(snr_db), tuple(cfg.detectors))
    ctx = _CONTEXTS.get(key)
    if ctx is None:
        _CONTEXTS.clear()
        ctx = _CONTEXTS[key] = PointContext(cfg.params, snr_db, cfg.detectors)
    return ctx


def simulate_frame(cfg: RunConfig, snr_db: float, frame_index: int, ctx: PointContext | None = None) -> FrameRecord:
    if not 0 <= frame_index < cfg.frames_per_point:
        raise ValueError(f"frame index {frame_index} outside [0, {cfg.frames_per_point})")
    ctx = ctx or _context(cfg, snr_db)
    p = ctx.params
    rng = frame_rng(cfg.master_seed, snr_db, frame_index)
    bits = rng.integers(0, 2, p.frame_size, dtype=np.uint8)
    dibits, _ = conv_encode(bits, ctx.enc, 0)
    symbols = diff_encode(dibits, DEFAULT_REFERENCE)
    ch = draw_channel(rng, p)
    frame = transmit_through(symbols, ch, p.noise_var, rng, p.cp_len)
    decoded, errors, seconds = {}, {}, {}
    for d in ctx.detectors:
        t0 = time.perf_counter()
        rx = frame
        if d == "coherent-gray":
            rx = nondifferential_frame(frame, symbols, GRAY_QPSK[dibits])
        out = ctx.decode(d, rx).score(bits)
        seconds[d] = time.perf_counter() - t0
        decoded[d] = out.bits
        errors[d] = out.errors
    return FrameRecord(frame_index, float(snr_db), bits, ch.taps, frame.Y, decoded, errors, seconds)


def _simulate_range(cfg: RunConfig, snr_db: float, start: int, stop: int):
    ctx = _context(cfg, snr_db)
    errors = dict.fromkeys(ctx.detectors, 0)
    seconds = dict.fromkeys(ctx.detectors, 0.0)
    for i in range(start, stop):
        rec = simulate_frame(cfg, snr_db, i, ctx)
        for d in ctx.detectors:
            errors[d] += rec.errors[d]
            seconds[d] += rec.seconds[d]
    return errors, seconds


def _shards(start: int, stop: int, parts: int):
    edges = np.linspace(start, stop, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _check_writable(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write {path}: directory {parent} is missing or read-only")
    if os.path.isdir(path):
        raise OSError(f"cannot write {path}: is a directory")


def run_ber_sweep(cfg: RunConfig, progress=None) -> list[BerRecord]:
    """BER for every (SNR, detector) pair; integer error counts are reduced exactly."""
    for path in (cfg.csv_path, cfg.svg_path):
        if path:
            _check_writable(path)
    records = []
    pool = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for snr in cfg.snr_points_db:
            errors = dict.fromkeys(cfg.detectors, 0)
            seconds = dict.fromkeys(cfg.detectors, 0.0)
            done = 0
            while done < cfg.frames_per_point:
                stop = min(done + BLOCK_FRAMES, cfg.frames_per_point)
                if pool is None:
                    results = [_simulate_range(cfg, snr, done, stop)]
                else:
                    shards = _shards(done, stop, cfg.workers)
                    results = list(pool.map(_simulate_range, *zip(*[(cfg, snr, a, b) for a, b in shards])))
                for errs, secs in results:
                    for d in cfg.detectors:
                        errors[d] += errs[d]
                        seconds[d] += secs[d]
                done = stop
                if progress is not None:
                    progress(snr, done, dict(errors))
                if (
                    cfg.early_stop
                    and done >= 0.1 * cfg.frames_per_point
                    and all(e >= cfg.min_errors for e in errors.values())
                ):
                    log.info("early stop at %s dB after %d frames", snr, done)
                    break
            bits = done * cfg.params.frame_size
            for d in cfg.detectors:
                rec = BerRecord(d, float(snr), bits, errors[d], seconds[d] if cfg.record_timing else 0.0)
                log.info("%s @ %g dB: BER %.4g (%d/%d)", d, snr, rec.ber, rec.errors, rec.bits)
                records.append(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    if cfg.csv_path:
        write_csv(records, cfg.csv_path)
    if cfg.svg_path:
        render_svg(records, cfg.svg_path, overlay_paper=cfg.overlay_paper, encoder=cfg.params.encoder)
    return records


def format_csv(records) -> str:
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.detector, repr(float(r.snr_db)), r.bits, r.errors, repr(r.ber), repr(float(r.seconds))])
    return buf.getvalue()


def write_csv(records, path) -> None:
    text = format_csv(records)
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(text)


def read_csv(path) -> list[BerRecord]:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[:1]}")
    return [BerRecord(d, float(s), int(b), int(e), float(sec)) for d, s, b, e, _ber, sec in rows[1:]]


def render_svg(records, path, overlay_paper: bool = False, encoder: EncoderSpec | None = None) -> None:
    """Log-scale BER versus SNR per bit, one line per detector."""
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    markers = {"coherent": "p", "coherent-gray": "*", "p1": "s", "p2": "^", "p3": "o"}
    with matplotlib.rc_context({"svg.hashsalt": "predictive-va", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 6))
        detectors = list(dict.fromkeys(r.detector for r in records))
        for d in detectors:
            pts = sorted((r.snr_db, r.ber) for r in records if r.detector == d and r.errors > 0)
            if pts:
                x, y = zip(*pts)
                ax.semilogy(x, y, marker=markers.get(d, "x"), color="black", label=detector_label(d, encoder))
        if overlay_paper:
            published = dict.fromkeys("coherent" if d == "coherent-gray" else d for d in detectors)
            for d in published:
                if d in PAPER_FIG4:
                    x, y = zip(*PAPER_FIG4[d])
                    ax.semilogy(x, y, ls=":", marker=markers.get(d, "x"), color="grey", mfc="none",
                                label=f"{detector_label(d, encoder)} (published)")
        ax.set_xlabel("SNR per bit (dB)")
        ax.set_ylabel("BER")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(loc="lower left", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


# Flat config keys.  Table 2 rows first, then run options.
_PARAM_KEYS = {
    "frame_size": ("frame_size", int),
    "channel_memory": ("channel_taps", lambda v: int(v) + 1),
    "cp_len": ("cp_len", int),
    "decoding_delay": ("decoding_delay", int),
    "num_rx": ("num_rx", int),
    "fade_var": ("fade_var", float),
}
_RUN_KEYS = {
    "frames": ("frames_per_point", int),
    "snr_db": ("snr_points_db", lambda v: tuple(float(x) for x in _as_list(v))),
    "detectors": ("detectors", lambda v: tuple(str(x) for x in _as_list(v))),
    "seed": ("master_seed", int),
    "workers": ("workers", int),
    "out": ("csv_path", str),
    "plot": ("svg_path", str),
    "overlay_paper": ("overlay_paper", bool),
    "early_stop": ("early_stop", bool),
    "min_errors": ("min_errors", int),
    "record_timing": ("record_timing", bool),
}


def _as_list(v):
    if isinstance(v, str):
        return [x for x in re.split(r"[,\s]+", v.strip()) if x]
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def parse_generator(text: str) -> EncoderSpec:
    """Parse a generator row such as ``[1, (1+D^2)/(1+D+D^2)]``."""
    m = re.fullmatch(r"\s*\[?\s*1\s*,\s*\(([^)]*)\)\s*/\s*\(([^)]*)\)\s*\]?\s*", text)
    if not m:
        raise ValueError(f"cannot parse generator {text!r}")
    ff, fb = parse_polynomial(m.group(1)), parse_polynomial(m.group(2))
    return EncoderSpec(feedforward=ff, feedback=fb, memory=max(ff.bit_length(), fb.bit_length()) - 1)


def config_from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    params, run = {}, {}
    for key, value in values.items():
        if value is None:
            continue
        if key in _PARAM_KEYS:
            name, conv = _PARAM_KEYS[key]
            params[name] = conv(value)
        elif key == "generator":
            params["encoder"] = parse_generator(str(value))
        elif key in _RUN_KEYS:
            name, conv = _RUN_KEYS[key]
            run[name] = conv(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if "channel_taps" in params and "cp_len" not in params:
        params["cp_len"] = params["channel_taps"] - 1
    return replace(base, params=replace(base.params, **params), **run)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        values = yaml.safe_load(fh) or {}
    if not isinstance(values, dict):
        raise ValueError(f"{path}: expected a flat key/value mapping")
    return config_from_mapping(values, base)


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)

