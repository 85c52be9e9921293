"""Respiration monitoring from Wi-Fi channel state information."""

from .data import (CsiFrame, CsiRecord, DataFormatError, RecordMeta,
                   ReferenceTrace, UniformSeries, load_csi, load_reference,
                   magnitudes, save_csi, save_reference)
from .dsp import (ChannelSet, FilterSpec, Spectrogram, butterworth_bandpass,
                  hampel, moving_average, preprocess_reference,
                  preprocess_subcarriers, resample_linear, spectrogram,
                  znormalize)
from .evaluation import (EvaluationReport, SummaryReport, align, build_report,
                         epoch_error_stats, mad_rr, pearson,
                         windowed_mean_correlation)
from .pipeline import RecordResult, RunConfig, process_record
from .respiration import (EpochSummary, TurningPoints, count_cycles,
                          detect_turning_points, epoch_grid)
from .selection import ExtractionResult, extract_pca, select_by_correlation
from .synth import BreathSegment, GroundTruth, SubjectProfile, SynthSpec, generate, subject_suite

__version__ = "0.1.0"

__all__ = [
    "BreathSegment", "ChannelSet", "CsiFrame", "CsiRecord", "DataFormatError",
    "EpochSummary", "EvaluationReport", "ExtractionResult", "FilterSpec",
    "GroundTruth", "RecordMeta", "RecordResult", "ReferenceTrace", "RunConfig",
    "Spectrogram", "SubjectProfile", "SummaryReport", "SynthSpec",
    "TurningPoints", "UniformSeries", "align", "build_report",
    "butterworth_bandpass", "count_cycles", "detect_turning_points",
    "epoch_error_stats", "epoch_grid", "extract_pca", "generate", "hampel",
    "load_csi", "load_reference", "mad_rr", "magnitudes", "moving_average",
    "pearson", "preprocess_reference", "preprocess_subcarriers",
    "process_record", "resample_linear", "save_csi", "save_reference",
    "select_by_correlation", "spectrogram", "subject_suite",
    "windowed_mean_correlation", "znormalize",
]
