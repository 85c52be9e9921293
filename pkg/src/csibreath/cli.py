"""Command-line interface.

Subcommands: `synth` (generate datasets), `run` (full pipeline + reports +
figures), `spectrogram` (CSV + image export), `report` (re-aggregate
per-record report JSONs).

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import evaluation, plots, synth
from .data import DataFormatError, load_csi, load_reference
from .dsp import FilterSpec, preprocess_reference, spectrogram, spectrogram_csv_text
from .pipeline import (RecordInput, RunConfig, dataset_inputs, run_one,
                       write_record_outputs, write_run_manifest)
from .util import atomic_write_text, read_json, write_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

OUT_ENV_VAR = "CSIBREATH_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_out(p):
    p.add_argument("--out", type=Path,
                   default=os.environ.get(OUT_ENV_VAR),
                   help=f"output directory (default ${OUT_ENV_VAR})")


def _filter_spec(args) -> FilterSpec:
    return FilterSpec(
        hampel_window=args.hampel_window, hampel_threshold=args.hampel_threshold,
        target_rate=args.rate, ma_window=args.ma_window,
        bp_low=args.bp_low, bp_high=args.bp_high, bp_order=args.bp_order,
        phase_mode="zero_phase" if args.phase == "zero" else "causal")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csibreath",
                description="Respiration recovery from Wi-Fi CSI traces")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic dataset")
    ps.add_argument("--suite", choices=["default"], default="default")
    ps.add_argument("--subjects", type=int, default=5)
    ps.add_argument("--postures", nargs="+", default=["supine", "side", "prone"],
                    choices=["supine", "side", "prone"])
    ps.add_argument("--duration", type=float, default=300.0)
    ps.add_argument("--snr", type=float, default=20.0, help="noise SNR in dB")
    ps.add_argument("--subcarriers", type=int, default=50)
    ps.add_argument("--outlier-rate", type=float, default=0.01)
    ps.add_argument("--seed", type=int, default=0)
    _add_out(ps)

    pr = sub.add_parser("run", help="run the pipeline and write reports")
    pr.add_argument("--dataset", type=Path,
                    help="dataset directory with manifest.json")
    pr.add_argument("--input", type=Path, help="single CSI file (csv/ndjson)")
    pr.add_argument("--ref", type=Path, help="reference trace for --input")
    pr.add_argument("--method", choices=["correlation", "pca"], default="pca")
    pr.add_argument("--epoch", type=float, default=30.0)
    pr.add_argument("--max-lag", type=float, default=10.0)
    pr.add_argument("--edge-trim", type=float, default=5.0,
                    help="seconds dropped per end after filtering")
    pr.add_argument("--min-separation", type=float, default=1.2)
    pr.add_argument("--min-prominence", type=float, default=0.2)
    pr.add_argument("--bp-low", type=float, default=0.2)
    pr.add_argument("--bp-high", type=float, default=0.4)
    pr.add_argument("--bp-order", type=int, default=4)
    pr.add_argument("--hampel-window", type=float, default=1.0)
    pr.add_argument("--hampel-threshold", type=float, default=1.7)
    pr.add_argument("--ma-window", type=float, default=1.5)
    pr.add_argument("--rate", type=float, default=60.0)
    pr.add_argument("--phase", choices=["zero", "causal"], default="zero")
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--no-plots", action="store_true")
    _add_out(pr)

    pg = sub.add_parser("spectrogram", help="export a spectrogram (CSV + PNG)")
    pg.add_argument("--input", type=Path, required=True,
                    help="waveform/reference CSV")
    pg.add_argument("--compare", type=Path,
                    help="second waveform for a side-by-side image")
    pg.add_argument("--window", type=float, default=30.0)
    pg.add_argument("--overlap", type=float, default=0.5)
    pg.add_argument("--rate", type=float, default=60.0,
                    help="processing rate for band-limited inputs")
    pg.add_argument("--raw", action="store_true",
                    help="skip resample/band-pass preprocessing")
    _add_out(pg)

    pa = sub.add_parser("report", help="aggregate per-record report JSONs")
    pa.add_argument("inputs", nargs="+", type=Path,
                    help="per-record *_report.json files or a directory of them")
    pa.add_argument("--no-plots", action="store_true")
    _add_out(pa)
    return p


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"--out is required (or set ${OUT_ENV_VAR})")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    out = _require_out(args)
    profiles = synth.default_profiles()[:args.subjects]
    if args.subjects > len(profiles):
        extra = args.subjects - len(profiles)
        profiles = profiles + tuple(synth.SubjectProfile(1.0) for _ in range(extra))
    manifest = synth.subject_suite(
        out, profiles=profiles, postures=tuple(args.postures),
        duration=args.duration, noise_snr_db=args.snr, base_seed=args.seed,
        n_subcarriers=args.subcarriers, outlier_rate=args.outlier_rate)
    print(f"wrote {len(manifest['records'])} record(s) to {out}")
    return EXIT_OK


def _run_config(args) -> RunConfig:
    return RunConfig(method=args.method, filters=_filter_spec(args),
                     epoch_seconds=args.epoch, max_lag=args.max_lag,
                     min_separation=args.min_separation,
                     min_prominence=args.min_prominence,
                     edge_trim=args.edge_trim)


def _worker(payload):
    inp, config = payload
    return run_one(inp, config)


def cmd_run(args) -> int:
    out = _require_out(args)
    config = _run_config(args)

    if args.dataset is not None:
        inputs = dataset_inputs(args.dataset)
    elif args.input is not None:
        inputs = [RecordInput(args.input.stem, args.input, args.ref)]
    else:
        raise UsageError("provide --dataset or --input")
    if config.method == "correlation" and any(i.ref_path is None for i in inputs):
        raise UsageError("--method correlation requires a reference (--ref)")

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_worker, [(i, config) for i in inputs]))
    else:
        results = [run_one(i, config) for i in inputs]

    written: list[str] = []
    for res in results:
        written.extend(write_record_outputs(out, res))
        if not args.no_plots and res.reference_aligned is not None:
            plots.waveform_comparison(out / f"{res.record_id}_comparison.png",
                                      res.waveform, res.reference_aligned)
            written.append(f"{res.record_id}_comparison.png")

    reports = [r.report for r in results if r.report is not None]
    if reports:
        summary = evaluation.build_report(reports)
        write_json(out / "report.json", evaluation.summary_to_dict(summary))
        atomic_write_text(out / "report.txt",
                          evaluation.render_summary_text(summary))
        atomic_write_text(out / "histogram.csv",
                          evaluation.histogram_csv_text(summary.histogram))
        written.extend(["report.json", "report.txt", "histogram.csv"])
        if not args.no_plots:
            plots.error_histogram(out / "histogram.png", summary.histogram)
            written.append("histogram.png")
        print(evaluation.render_summary_text(summary))
    else:
        print("no reference traces given; wrote waveforms and epoch counts only")

    write_run_manifest(out, config, inputs, written)
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    out = _require_out(args)
    spec = FilterSpec(target_rate=args.rate)

    def prep(path):
        series = load_reference(path)
        if args.raw:
            return series
        return preprocess_reference(series, spec)

    inputs = [args.input] + ([args.compare] if args.compare else [])
    specs, labels = [], []
    for path in inputs:
        series = prep(path)
        specs.append(spectrogram(series, args.window, args.overlap))
        labels.append(path.stem)

    for path, sp in zip(inputs, specs):
        atomic_write_text(out / f"{path.stem}_spectrogram.csv",
                          spectrogram_csv_text(sp))
    image = out / (f"{args.input.stem}_spectrogram.png" if len(specs) == 1
                   else "spectrogram_comparison.png")
    plots.spectrogram_image(image, specs, labels)
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _require_out(args)
    paths: list[Path] = []
    for p in args.inputs:
        if p.is_dir():
            paths.extend(sorted(p.glob("*_report.json")))
        else:
            paths.append(p)
    if not paths:
        raise UsageError("no report files found")
    reports = [evaluation.EvaluationReport.from_dict(read_json(p)) for p in paths]
    summary = evaluation.build_report(reports)
    write_json(out / "report.json", evaluation.summary_to_dict(summary))
    atomic_write_text(out / "report.txt", evaluation.render_summary_text(summary))
    atomic_write_text(out / "histogram.csv",
                      evaluation.histogram_csv_text(summary.histogram))
    if not args.no_plots:
        plots.error_histogram(out / "histogram.png", summary.histogram)
    print(evaluation.render_summary_text(summary))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "spectrogram": cmd_spectrogram,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
