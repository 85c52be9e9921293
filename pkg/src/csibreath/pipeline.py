"""End-to-end runs: preprocess, extract, detect, count, evaluate, write outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import CsiRecord, UniformSeries, load_csi, load_reference, save_reference
from .dsp import FilterSpec, preprocess_reference, preprocess_subcarriers
from .evaluation import (EvaluationReport, align, build_record_report,
                         overlap_pair, pearson, windowed_mean_correlation)
from .respiration import (EpochSummary, count_cycles, detect_turning_points,
                          epoch_grid, epochs_csv_text)
from .selection import ExtractionResult, extract_pca, select_by_correlation
from .util import atomic_write_text, read_json, sha256_file, write_json


@dataclass(frozen=True)
class RunConfig:
    method: str = "pca"                    # "pca" | "correlation"
    filters: FilterSpec = field(default_factory=FilterSpec)
    selection_window: float = 10.0         # s, correlation selection + metric windows
    pca_window: float = 30.0               # s
    epoch_seconds: float = 30.0
    min_separation: float = 1.2            # s, turning-point spacing floor
    min_prominence: float = 0.2            # fraction of robust amplitude
    max_lag: float = 10.0                  # s, alignment search range
    edge_trim: float = 5.0                 # s dropped per end after filtering

    def __post_init__(self):
        if self.method not in ("pca", "correlation"):
            raise ValueError("method must be 'pca' or 'correlation'")
        if self.epoch_seconds <= 0:
            raise ValueError("epoch length must be > 0")
        if self.edge_trim < 0:
            raise ValueError("edge_trim must be >= 0")


def _trim_edges(x, config: RunConfig):
    """Drop the zero-phase filter's edge transients from the analysis span."""
    n_trim = int(round(config.edge_trim * x.rate))
    n = x.n_samples if hasattr(x, "n_samples") else len(x)
    if n_trim == 0 or n - 2 * n_trim < int(10 * x.rate):
        return x
    return x.crop(n_trim, n - n_trim) if hasattr(x, "crop") else x.slice(n_trim, n - n_trim)


@dataclass(frozen=True)
class RecordResult:
    record_id: str
    extraction: ExtractionResult
    waveform: UniformSeries
    epochs_sig: list[EpochSummary]
    epochs_ref: list[EpochSummary] | None
    reference_aligned: UniformSeries | None
    report: EvaluationReport | None


def process_record(record: CsiRecord, reference: UniformSeries | None,
                   config: RunConfig | None = None, record_id: str = "record"
                   ) -> RecordResult:
    """Run the full pipeline on one record.

    With a reference: the reference is resampled and band-passed like the CSI
    channels, auto-aligned via cross-correlation against a provisional PCA
    waveform (replacing by-hand synchronization), and both waveforms are
    detected and counted on one shared epoch grid.
    """
    config = config or RunConfig()
    if config.method == "correlation" and reference is None:
        raise ValueError("the correlation method requires a reference trace")

    channels = preprocess_subcarriers(record, config.filters)
    channels = _trim_edges(channels, config)

    if reference is None:
        extraction = extract_pca(channels, config.pca_window)
        wave = extraction.signal
        epochs = epoch_grid(wave.start_time, wave.end_time, config.epoch_seconds)
        tp = detect_turning_points(wave, config.min_separation, config.min_prominence)
        return RecordResult(record_id, extraction, wave,
                            count_cycles(tp, epochs), None, None, None)

    ref_proc = preprocess_reference(reference, config.filters)
    ref_proc = _trim_edges(ref_proc, config)
    provisional = extract_pca(channels, config.pca_window)
    lag = align(provisional.signal, ref_proc, config.max_lag)

    wave_probe, ref_aligned = overlap_pair(provisional.signal, ref_proc, lag)
    lo = int(round((wave_probe.start_time - channels.start_time) * channels.rate))
    channels_c = channels.crop(lo, lo + len(wave_probe))

    if config.method == "pca":
        extraction = extract_pca(channels_c, config.pca_window)
        # PCA polarity is arbitrary; resolve it once per record against the belt
        r_whole = pearson(extraction.signal.samples, ref_aligned.samples)
        if r_whole < 0:
            extraction = extraction.negated()
    else:
        extraction = select_by_correlation(channels_c, ref_aligned,
                                           config.selection_window)
    wave = extraction.signal

    tp_sig = detect_turning_points(wave, config.min_separation, config.min_prominence)
    tp_ref = detect_turning_points(ref_aligned, config.min_separation,
                                   config.min_prominence)
    epochs = epoch_grid(wave.start_time, wave.end_time, config.epoch_seconds)
    epochs_sig = count_cycles(tp_sig, epochs)
    epochs_ref = count_cycles(tp_ref, epochs)

    mean_r, window_rs = windowed_mean_correlation(wave, ref_aligned,
                                                  config.selection_window)
    report = build_record_report(
        record_id=record_id, subject=record.meta.subject or record_id,
        posture=record.meta.posture, method=config.method,
        counts_ref=[e.integer_count for e in epochs_ref],
        counts_sig=[e.integer_count for e in epochs_sig],
        mean_correlation=mean_r, window_correlations=window_rs,
        lag_applied=lag)
    return RecordResult(record_id, extraction, wave, epochs_sig, epochs_ref,
                        ref_aligned, report)


# ---------------------------------------------------------------------------
# Dataset-level runs

@dataclass(frozen=True)
class RecordInput:
    record_id: str
    csi_path: Path
    ref_path: Path | None


def dataset_inputs(dataset_dir) -> list[RecordInput]:
    """Record inputs listed by a synth dataset's manifest.json."""
    dataset_dir = Path(dataset_dir)
    manifest = read_json(dataset_dir / "manifest.json")
    out = []
    for entry in manifest["records"]:
        rid = f"s{entry['subject']}_{entry['posture']}"
        ref = entry.get("ref")
        out.append(RecordInput(rid, dataset_dir / entry["csi"],
                               dataset_dir / ref if ref else None))
    return out


def run_one(inp: RecordInput, config: RunConfig) -> RecordResult:
    record = load_csi(inp.csi_path)
    reference = load_reference(inp.ref_path) if inp.ref_path else None
    return process_record(record, reference, config, record_id=inp.record_id)


def write_record_outputs(out_dir, result: RecordResult) -> list[str]:
    """Waveform CSV, epoch CSV, extraction JSON and per-record report JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rid = result.record_id
    written = []

    wave_name = f"{rid}_waveform.csv"
    save_reference(out_dir / wave_name, result.waveform)
    written.append(wave_name)

    atomic_write_text(out_dir / f"{rid}_epochs.csv",
                      epochs_csv_text(result.epochs_sig))
    written.append(f"{rid}_epochs.csv")
    if result.epochs_ref is not None:
        atomic_write_text(out_dir / f"{rid}_epochs_ref.csv",
                          epochs_csv_text(result.epochs_ref))
        written.append(f"{rid}_epochs_ref.csv")

    write_json(out_dir / f"{rid}_extraction.json",
               result.extraction.to_dict(waveform_csv=wave_name))
    written.append(f"{rid}_extraction.json")

    if result.report is not None:
        write_json(out_dir / f"{rid}_report.json", result.report.to_dict())
        written.append(f"{rid}_report.json")
    return written


def write_run_manifest(out_dir, config: RunConfig, inputs: list[RecordInput],
                       written: list[str]) -> None:
    """Hashes of inputs and delimited/JSON outputs; figures are listed unhashed
    because image encoders do not guarantee stable bytes."""
    cfg = {
        "method": config.method,
        "selection_window": config.selection_window,
        "pca_window": config.pca_window,
        "epoch_seconds": config.epoch_seconds,
        "min_separation": config.min_separation,
        "min_prominence": config.min_prominence,
        "max_lag": config.max_lag,
        "edge_trim": config.edge_trim,
        "filters": {
            "hampel_window": config.filters.hampel_window,
            "hampel_threshold": config.filters.hampel_threshold,
            "target_rate": config.filters.target_rate,
            "ma_window": config.filters.ma_window,
            "bp_low": config.filters.bp_low,
            "bp_high": config.filters.bp_high,
            "bp_order": config.filters.bp_order,
            "phase_mode": config.filters.phase_mode,
        },
    }
    out_dir = Path(out_dir)
    inputs_info = []
    for inp in sorted(inputs, key=lambda i: i.record_id):
        info = {"record_id": inp.record_id, "csi": str(inp.csi_path),
                "csi_sha256": sha256_file(inp.csi_path)}
        if inp.ref_path:
            info["ref"] = str(inp.ref_path)
            info["ref_sha256"] = sha256_file(inp.ref_path)
        inputs_info.append(info)
    outputs_info = []
    for name in sorted(set(written)):
        path = out_dir / name
        entry = {"file": name}
        if path.suffix in (".csv", ".json", ".txt"):
            entry["sha256"] = sha256_file(path)
        outputs_info.append(entry)
    write_json(out_dir / "run_manifest.json",
               {"schema": "run v1", "config": cfg, "inputs": inputs_info,
                "outputs": outputs_info})
