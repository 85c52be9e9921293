"""Alignment, agreement metrics and table-style reports.

Metrics: windowed Pearson correlation between the recovered waveform and the
reference, mean absolute difference (MAD) of per-epoch cycle counts, and the
percentage of epochs whose counts differ by >= 1 and >= 2, plus a signed
error histogram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import UniformSeries
from .dsp import partition_windows, znorm

POSTURE_ORDER = ("supine", "side", "prone")
ALL_LABEL = "all"


# ---------------------------------------------------------------------------
# Lag alignment

def align(a: UniformSeries, b: UniformSeries, max_lag: float = 10.0,
          min_overlap: float = 30.0) -> float:
    """Delay of `b` relative to `a`, in seconds (b(t) ~ a(t - lag)).

    Scans integer-sample lags within +-max_lag maximizing the absolute
    Pearson correlation of the overlap (waveform polarity is arbitrary for
    CSI-derived signals), then refines with a parabolic fit through the
    correlation peak. Exact ties go to the smaller |lag|.
    """
    if abs(a.rate - b.rate) > 1e-9:
        raise ValueError("series rates must match")
    r = a.rate
    base = b.start_time - a.start_time
    max_k = int(round(max_lag * r))
    need = int(math.ceil(min_overlap * r))
    na, nb = len(a), len(b)

    ks, cs = [], []
    for k in range(-max_k, max_k + 1):
        lo = max(0, -k)
        hi = min(na, nb - k)
        if hi - lo < need:
            continue
        sa = a.samples[lo:hi]
        sb = b.samples[lo + k:hi + k]
        da = sa - sa.mean()
        db = sb - sb.mean()
        denom = math.sqrt(float(da @ da) * float(db @ db))
        if denom == 0:
            continue
        ks.append(k)
        cs.append(abs(float(da @ db) / denom))
    if not ks:
        raise ValueError(f"no lag in range leaves at least {min_overlap} s of overlap")

    cs = np.array(cs)
    best_val = cs.max()
    ties = [j for j, c in enumerate(cs) if c == best_val]
    j = min(ties, key=lambda j: abs(base + ks[j] / r))
    k = ks[j]

    delta = 0.0
    if 0 < j < len(ks) - 1 and ks[j - 1] == k - 1 and ks[j + 1] == k + 1:
        c_m, c_0, c_p = cs[j - 1], cs[j], cs[j + 1]
        curv = c_m - 2 * c_0 + c_p
        if curv < 0:
            delta = float(np.clip(0.5 * (c_m - c_p) / curv, -0.5, 0.5))
    return base + (k + delta) / r


def overlap_pair(a: UniformSeries, b: UniformSeries, lag: float = 0.0
                 ) -> tuple[UniformSeries, UniformSeries]:
    """Crop two equal-rate series to their common span after shifting `b` back
    by `lag` (rounded to whole samples), both returned on `a`'s grid."""
    if abs(a.rate - b.rate) > 1e-9:
        raise ValueError("series rates must match")
    r = a.rate
    m = int(round((b.start_time - lag - a.start_time) * r))  # b[j] ~ a[j + m]
    lo_a = max(0, m)
    hi_a = min(len(a), len(b) + m)
    if hi_a - lo_a < 2:
        raise ValueError("series do not overlap after alignment")
    a_c = a.slice(lo_a, hi_a)
    b_c = UniformSeries(b.samples[lo_a - m:hi_a - m], r, a_c.start_time)
    return a_c, b_c


# ---------------------------------------------------------------------------
# Correlation

def pearson(a, b) -> float:
    """Product-moment correlation; NaN flags a degenerate (zero-variance) input."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D and equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        return math.nan
    return float(np.clip(dx @ dy / denom, -1.0, 1.0))


@dataclass(frozen=True)
class WindowCorrelation:
    start: float
    length: float
    r: float  # NaN when the window is degenerate


def windowed_mean_correlation(sig: UniformSeries, ref: UniformSeries,
                              window_seconds: float = 10.0
                              ) -> tuple[float, list[WindowCorrelation]]:
    """Mean Pearson r over consecutive windows (Z-normalized per window).

    Degenerate windows are kept in the per-window list with r = NaN but
    excluded from the mean.
    """
    if abs(sig.rate - ref.rate) > 1e-9 or len(sig) != len(ref):
        raise ValueError("signals must share one grid")
    rate = sig.rate
    out = []
    valid = []
    for lo, hi in partition_windows(len(sig), rate, window_seconds):
        zs, ds = znorm(sig.samples[lo:hi])
        zr, dr = znorm(ref.samples[lo:hi])
        r = math.nan if (ds or dr) else float(np.clip(zs @ zr / (hi - lo), -1.0, 1.0))
        out.append(WindowCorrelation(sig.start_time + lo / rate, (hi - lo) / rate, r))
        if not math.isnan(r):
            valid.append(r)
    if not valid:
        raise ValueError("no non-degenerate windows")
    return float(np.mean(valid)), out


# ---------------------------------------------------------------------------
# Count agreement

def mad_rr(counts_ref, counts_sig) -> float:
    """Mean absolute difference of per-epoch cycle counts (breaths/epoch)."""
    a = np.asarray(counts_ref, dtype=np.float64)
    b = np.asarray(counts_sig, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("count sequences must be 1-D and equal length")
    if len(a) == 0:
        raise ValueError("need at least one epoch")
    return float(np.mean(np.abs(a - b)))


def epoch_error_stats(counts_ref, counts_sig) -> tuple[float, float, dict[int, int]]:
    """(pct of epochs with |dN| >= 1, pct with |dN| >= 2, histogram of signed dN).

    dN is signal minus reference.
    """
    a = np.asarray(counts_ref)
    b = np.asarray(counts_sig)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise ValueError("count sequences must be 1-D, equal length and non-empty")
    d = (b - a).astype(int)
    n = len(d)
    pct1 = 100.0 * np.count_nonzero(np.abs(d) >= 1) / n
    pct2 = 100.0 * np.count_nonzero(np.abs(d) >= 2) / n
    hist: dict[int, int] = {}
    for delta in d.tolist():
        hist[delta] = hist.get(delta, 0) + 1
    return float(pct1), float(pct2), hist


# ---------------------------------------------------------------------------
# Per-record report

@dataclass(frozen=True)
class EvaluationReport:
    record_id: str
    subject: str
    posture: str
    method: str
    n_epochs: int
    mean_correlation: float
    window_correlations: tuple[WindowCorrelation, ...]
    mad: float
    pct_ge1: float
    pct_ge2: float
    histogram: dict[int, int] = field(compare=True, default_factory=dict)
    lag_applied: float = 0.0
    counts_ref: tuple[int, ...] = ()
    counts_sig: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mad < 0:
            raise ValueError("mad must be >= 0")
        if not (0 <= self.pct_ge2 <= self.pct_ge1 <= 100):
            raise ValueError("need 0 <= pct_ge2 <= pct_ge1 <= 100")
        if sum(self.histogram.values()) != self.n_epochs:
            raise ValueError("histogram counts must sum to the epoch count")
        for w in self.window_correlations:
            if not math.isnan(w.r) and not -1 <= w.r <= 1:
                raise ValueError("correlations must be in [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "subject": self.subject,
            "posture": self.posture,
            "method": self.method,
            "n_epochs": self.n_epochs,
            "mean_correlation": _num(self.mean_correlation),
            "window_correlations": [
                {"start": w.start, "length": w.length, "r": _num(w.r)}
                for w in self.window_correlations],
            "mad": self.mad,
            "pct_ge1": self.pct_ge1,
            "pct_ge2": self.pct_ge2,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "lag_applied": self.lag_applied,
            "counts_ref": list(self.counts_ref),
            "counts_sig": list(self.counts_sig),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            record_id=d["record_id"], subject=d["subject"], posture=d["posture"],
            method=d["method"], n_epochs=d["n_epochs"],
            mean_correlation=_denum(d["mean_correlation"]),
            window_correlations=tuple(
                WindowCorrelation(w["start"], w["length"], _denum(w["r"]))
                for w in d["window_correlations"]),
            mad=d["mad"], pct_ge1=d["pct_ge1"], pct_ge2=d["pct_ge2"],
            histogram={int(k): v for k, v in d["histogram"].items()},
            lag_applied=d["lag_applied"],
            counts_ref=tuple(d["counts_ref"]), counts_sig=tuple(d["counts_sig"]),
        )


def _num(x: float):
    return None if (x is None or math.isnan(x)) else x


def _denum(x) -> float:
    return math.nan if x is None else float(x)


def build_record_report(record_id: str, subject: str, posture: str, method: str,
                        counts_ref, counts_sig, mean_correlation: float,
                        window_correlations, lag_applied: float) -> EvaluationReport:
    pct1, pct2, hist = epoch_error_stats(counts_ref, counts_sig)
    return EvaluationReport(
        record_id=record_id, subject=subject, posture=posture, method=method,
        n_epochs=len(counts_ref), mean_correlation=mean_correlation,
        window_correlations=tuple(window_correlations),
        mad=mad_rr(counts_ref, counts_sig), pct_ge1=pct1, pct_ge2=pct2,
        histogram=hist, lag_applied=lag_applied,
        counts_ref=tuple(int(c) for c in counts_ref),
        counts_sig=tuple(int(c) for c in counts_sig),
    )


# ---------------------------------------------------------------------------
# Aggregated tables

@dataclass(frozen=True)
class ReportTable:
    """Subjects as rows, postures as columns, plus pooled 'all' column and a
    final row of column means (computed over present cells)."""

    title: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    cells: tuple[tuple[float | None, ...], ...]
    mean_row: tuple[float | None, ...]


@dataclass(frozen=True)
class SummaryReport:
    records: tuple[EvaluationReport, ...]
    mad_table: ReportTable
    pct_ge1_table: ReportTable
    pct_ge2_table: ReportTable
    correlation_by_subject: dict[str, float]
    correlation_overall: float
    correlation_range: tuple[float, float]
    histogram: dict[int, int]


def _pooled(reports: list[EvaluationReport]):
    ref = [c for r in reports for c in r.counts_ref]
    sig = [c for r in reports for c in r.counts_sig]
    return ref, sig


def _metric_cell(reports: list[EvaluationReport], metric: str) -> float | None:
    if not reports:
        return None
    ref, sig = _pooled(reports)
    if metric == "mad":
        return mad_rr(ref, sig)
    pct1, pct2, _ = epoch_error_stats(ref, sig)
    return pct1 if metric == "pct_ge1" else pct2


def _table(reports: list[EvaluationReport], metric: str, title: str) -> ReportTable:
    subjects = sorted({r.subject for r in reports})
    postures = [p for p in POSTURE_ORDER if any(r.posture == p for r in reports)]
    extra = sorted({r.posture for r in reports} - set(postures) - {p for p in POSTURE_ORDER})
    cols = postures + extra + [ALL_LABEL]

    cells = []
    for s in subjects:
        mine = [r for r in reports if r.subject == s]
        row = [_metric_cell([r for r in mine if r.posture == p], metric)
               for p in cols[:-1]]
        row.append(_metric_cell(mine, metric))
        cells.append(tuple(row))

    mean_row = []
    for j in range(len(cols)):
        vals = [row[j] for row in cells if row[j] is not None]
        mean_row.append(float(np.mean(vals)) if vals else None)
    return ReportTable(title, tuple(subjects), tuple(cols), tuple(cells),
                       tuple(mean_row))


def build_report(reports) -> SummaryReport:
    """Aggregate per-record reports into the three posture tables plus pooled
    correlation figures and the pooled error histogram."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one record report")

    by_subject: dict[str, float] = {}
    for s in sorted({r.subject for r in reports}):
        rs = [w.r for r in reports if r.subject == s
              for w in r.window_correlations if not math.isnan(w.r)]
        if rs:
            by_subject[s] = float(np.mean(rs))
    all_r = [w.r for r in reports for w in r.window_correlations
             if not math.isnan(w.r)]
    overall = float(np.mean(all_r)) if all_r else math.nan
    rng = ((min(by_subject.values()), max(by_subject.values()))
           if by_subject else (math.nan, math.nan))

    hist: dict[int, int] = {}
    for r in reports:
        for k, v in r.histogram.items():
            hist[k] = hist.get(k, 0) + v

    return SummaryReport(
        records=tuple(reports),
        mad_table=_table(reports, "mad", "Mean absolute difference of cycle counts (breaths/epoch)"),
        pct_ge1_table=_table(reports, "pct_ge1", "Percent of epochs with |dN| >= 1"),
        pct_ge2_table=_table(reports, "pct_ge2", "Percent of epochs with |dN| >= 2"),
        correlation_by_subject=by_subject,
        correlation_overall=overall,
        correlation_range=rng,
        histogram=hist,
    )


# ---------------------------------------------------------------------------
# Serialization / rendering

def summary_to_dict(s: SummaryReport) -> dict:
    def table_dict(t: ReportTable) -> dict:
        return {"title": t.title, "rows": list(t.row_labels),
                "cols": list(t.col_labels),
                "cells": [list(row) for row in t.cells],
                "mean_row": list(t.mean_row)}
    return {
        "schema": "report v1",
        "records": [r.to_dict() for r in s.records],
        "tables": {"mad": table_dict(s.mad_table),
                   "pct_ge1": table_dict(s.pct_ge1_table),
                   "pct_ge2": table_dict(s.pct_ge2_table)},
        "correlation": {
            "by_subject": s.correlation_by_subject,
            "overall": _num(s.correlation_overall),
            "range": [_num(s.correlation_range[0]), _num(s.correlation_range[1])],
        },
        "histogram": {str(k): v for k, v in sorted(s.histogram.items())},
    }


def summary_from_dict(d: dict) -> SummaryReport:
    if d.get("schema") != "report v1":
        raise ValueError("not a report v1 document")

    def table(td: dict, title: str) -> ReportTable:
        return ReportTable(td["title"], tuple(td["rows"]), tuple(td["cols"]),
                           tuple(tuple(row) for row in td["cells"]),
                           tuple(td["mean_row"]))
    rng = d["correlation"]["range"]
    return SummaryReport(
        records=tuple(EvaluationReport.from_dict(r) for r in d["records"]),
        mad_table=table(d["tables"]["mad"], "mad"),
        pct_ge1_table=table(d["tables"]["pct_ge1"], "pct_ge1"),
        pct_ge2_table=table(d["tables"]["pct_ge2"], "pct_ge2"),
        correlation_by_subject=dict(d["correlation"]["by_subject"]),
        correlation_overall=_denum(d["correlation"]["overall"]),
        correlation_range=(_denum(rng[0]), _denum(rng[1])),
        histogram={int(k): v for k, v in d["histogram"].items()},
    )


def _fmt_cell(x: float | None, decimals: int) -> str:
    return "-" if x is None else f"{x:.{decimals}f}"


def render_table(t: ReportTable, decimals: int) -> str:
    header = ["subject"] + [c if c != ALL_LABEL else "all postures"
                            for c in t.col_labels]
    rows = [header]
    for label, cells in zip(t.row_labels, t.cells):
        rows.append([label] + [_fmt_cell(c, decimals) for c in cells])
    rows.append(["mean"] + [_fmt_cell(c, decimals) for c in t.mean_row])
    widths = [max(len(r[j]) for r in rows) for j in range(len(header))]
    lines = [t.title]
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def render_summary_text(s: SummaryReport) -> str:
    parts = [render_table(s.mad_table, 2), "",
             render_table(s.pct_ge1_table, 0), "",
             render_table(s.pct_ge2_table, 0), ""]
    if not math.isnan(s.correlation_overall):
        lo, hi = s.correlation_range
        parts.append(f"mean windowed correlation: {s.correlation_overall:.2f}"
                     f" (subject range {lo:.2f}-{hi:.2f})")
    parts.append("epoch error histogram (dN: epochs): " +
                 ", ".join(f"{k}: {v}" for k, v in sorted(s.histogram.items())))
    return "\n".join(parts) + "\n"


def histogram_csv_text(hist: dict[int, int]) -> str:
    rows = ["delta,count"]
    rows.extend(f"{k},{v}" for k, v in sorted(hist.items()))
    return "\n".join(rows) + "\n"
