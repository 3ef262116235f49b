"""Command line entry point: ``predictive-va simulate | dump-supertrellis | selftest``."""
from __future__ import annotations

import logging
import sys

import click

from . import harness, selftest
from .coding import build_encoder_trellis
from .supertrellis import build_full_supertrellis, build_reduced_supertrellis, format_table


def _csv_list(value):
    if value is None:
        return None
    return [x.strip() for x in value.split(",") if x.strip()]


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Flat YAML key/value file.")
@click.option("--snr", help="Comma-separated SNR points per bit in dB.")
@click.option("--detectors", help="Comma-separated subset of coherent,coherent-gray,p1,p2,p3.")
@click.option("--frames", type=int, help="Frames per SNR point.")
@click.option("--seed", type=int, help="Master seed (64-bit).")
@click.option("--out", help="CSV output path.")
@click.option("--plot", help="SVG output path.")
@click.option("--overlay-paper", is_flag=True, default=None, help="Overlay the published BER curves.")
@click.option("--workers", type=int, help="Worker processes.")
@click.option("--early-stop/--no-early-stop", default=None, help="Stop a point after enough errors.")
@click.option("--no-timing", is_flag=True, help="Write 0 in the seconds column (byte-stable CSV).")
def simulate(config_path, snr, detectors, frames, seed, out, plot, overlay_paper, workers, early_stop, no_timing):
    """Monte-Carlo BER sweep."""
    try:
        cfg = harness.load_config(config_path) if config_path else harness.RunConfig()
        cfg = harness.config_from_mapping(
            {
                "snr_db": _csv_list(snr),
                "detectors": _csv_list(detectors),
                "frames": frames,
                "seed": seed,
                "out": out,
                "plot": plot,
                "overlay_paper": overlay_paper,
                "workers": workers,
                "early_stop": early_stop,
                "record_timing": False if no_timing else None,
            },
            cfg,
        )

        def progress(snr_db, done, errors):
            logging.getLogger(__name__).info(
                "%g dB: %d/%d frames, errors %s", snr_db, done, cfg.frames_per_point, errors
            )

        records = harness.run_ber_sweep(cfg, progress=progress)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if not cfg.csv_path:
        click.echo(harness.format_csv(records), nl=False)
    else:
        for r in records:
            click.echo(f"{r.detector:9s} {r.snr_db:6.2f} dB  BER {r.ber:.4e}  ({r.errors}/{r.bits})")


@main.command("dump-supertrellis")
@click.option("--order", "-P", type=int, required=True, help="Prediction order.")
@click.option("--reduced", is_flag=True, help="Dump the isometry-reduced machine instead.")
def dump_supertrellis(order, reduced):
    """Print the transition table (present state, input, next state)."""
    try:
        enc = build_encoder_trellis()
        if reduced:
            st = build_reduced_supertrellis(enc, order)
            rows = [(n, u, int(st.next_state[n, u])) for n in range(st.num_states) for u in (0, 1)]
        else:
            rows = build_full_supertrellis(enc, order).table_rows()
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(format_table(rows), nl=False)


@main.command("selftest")
def selftest_cmd():
    """Run the oracle checks."""
    if not selftest.run_all(echo=click.echo):
        sys.exit(1)


if __name__ == "__main__":
    main()
