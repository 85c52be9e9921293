"""Respiratory cycle detection via turning points and per-epoch rate counting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .data import UniformSeries
from .util import fmt_value


@dataclass(frozen=True)
class TurningPoints:
    """Alternating peak/trough sample indices of a waveform."""

    peaks: np.ndarray
    troughs: np.ndarray
    rate: float
    start_time: float
    min_separation: float
    min_prominence: float

    def peak_times(self) -> np.ndarray:
        return self.start_time + self.peaks / self.rate

    def trough_times(self) -> np.ndarray:
        return self.start_time + self.troughs / self.rate


@dataclass(frozen=True)
class EpochSummary:
    epoch_index: int
    start: float
    length: float
    cycle_count: float     # fractional, from temporal overlap
    integer_count: int     # round-half-up of cycle_count
    rr_bpm: float

    def __post_init__(self):
        if self.cycle_count < 0:
            raise ValueError("cycle_count must be >= 0")


_PEAK, _TROUGH = 1, -1


def _candidates(v: np.ndarray):
    """Local extrema as a time-ordered list of (index, kind).

    Plateau-aware neighbour comparison (an extremum whose exact apex falls
    between samples shows up as two equal samples; the plateau midpoint is
    taken as the candidate).
    """
    peaks, _ = sps.find_peaks(v)
    troughs, _ = sps.find_peaks(-v)
    events = [(int(i), _PEAK) for i in peaks] + [(int(i), _TROUGH) for i in troughs]
    events.sort()
    return events


def _prominences(v: np.ndarray, events):
    """Prominence of each candidate extremum.

    A peak's flanking troughs are the minima between it and the nearest
    higher ground on each side (or the series edge); its prominence is the
    height above the higher of the two. Troughs are measured symmetrically.
    """
    peak_idx = np.array([i for i, k in events if k == _PEAK], dtype=np.intp)
    trough_idx = np.array([i for i, k in events if k == _TROUGH], dtype=np.intp)
    peak_prom = sps.peak_prominences(v, peak_idx)[0] if len(peak_idx) else []
    trough_prom = sps.peak_prominences(-v, trough_idx)[0] if len(trough_idx) else []
    by_index = {int(i): float(p) for i, p in zip(peak_idx, peak_prom)}
    by_index.update({int(i): float(p) for i, p in zip(trough_idx, trough_prom)})
    return [by_index[i] for i, _ in events]


def _more_extreme(v, a, b, kind):
    """Pick the stronger of two same-kind events; earlier one wins ties."""
    if kind == _PEAK:
        return a if v[a[0]] >= v[b[0]] else b
    return a if v[a[0]] <= v[b[0]] else b


def _enforce_alternation(v, events):
    out = []
    changed = False
    for ev in events:
        if out and out[-1][1] == ev[1]:
            out[-1] = _more_extreme(v, out[-1], ev, ev[1])
            changed = True
        else:
            out.append(ev)
    return out, changed


def _enforce_separation(v, events, min_gap_samples):
    """Drop the weaker of any same-kind pair closer than the minimum gap."""
    drop: set[int] = set()
    for kind in (_PEAK, _TROUGH):
        kept: list[int] = []
        for j, ev in enumerate(events):
            if ev[1] != kind:
                continue
            if kept and ev[0] - events[kept[-1]][0] < min_gap_samples:
                prev = events[kept[-1]]
                if _more_extreme(v, prev, ev, kind) is prev:
                    drop.add(j)
                else:
                    drop.add(kept[-1])
                    kept[-1] = j
            else:
                kept.append(j)
    if drop:
        events = [ev for j, ev in enumerate(events) if j not in drop]
    return events, bool(drop)


def detect_turning_points(x: UniformSeries, min_separation: float = 1.2,
                          min_prominence: float = 0.2) -> TurningPoints:
    """Find alternating breathing peaks and troughs.

    Candidates come from 3-point comparison; those whose prominence falls
    below min_prominence times the 10th-90th percentile span are dropped;
    alternation and a minimum temporal separation between same-kind points are
    then enforced, always keeping the more extreme point.
    """
    v = x.samples
    if len(v) < 3:
        raise ValueError("need at least 3 samples")
    events = _candidates(v)

    span = float(np.percentile(v, 90) - np.percentile(v, 10))
    threshold = min_prominence * span
    proms = _prominences(v, events)
    events = [ev for ev, p in zip(events, proms) if p >= threshold]

    min_gap = min_separation * x.rate
    changed = True
    while changed:
        events, c1 = _enforce_alternation(v, events)
        events, c2 = _enforce_separation(v, events, min_gap)
        changed = c1 or c2

    peaks = np.array([i for i, k in events if k == _PEAK], dtype=np.int64)
    troughs = np.array([i for i, k in events if k == _TROUGH], dtype=np.int64)
    return TurningPoints(peaks, troughs, x.rate, x.start_time,
                         min_separation, min_prominence)


# ---------------------------------------------------------------------------
# Epoch counting

def epoch_grid(start: float, end: float, epoch_seconds: float = 30.0) -> tuple[tuple[float, float], ...]:
    """Non-overlapping (start, length) epochs tiling [start, end).

    A trailing remainder shorter than half an epoch is dropped; longer ones
    become a final short epoch.
    """
    if epoch_seconds <= 0:
        raise ValueError("epoch length must be > 0")
    if end <= start:
        raise ValueError("empty time span")
    epochs = []
    t = start
    while t + epoch_seconds <= end + 1e-9:
        epochs.append((t, epoch_seconds))
        t += epoch_seconds
    rem = end - t
    if rem >= epoch_seconds / 2:
        epochs.append((t, rem))
    if not epochs:
        epochs.append((start, end - start))
    return tuple(epochs)


def fractional_counts(cycle_times: np.ndarray, epochs) -> np.ndarray:
    """Fractional cycles per epoch: each peak-to-peak cycle contributes its
    temporal overlap fraction with the epoch."""
    t = np.asarray(cycle_times, dtype=np.float64)
    counts = np.zeros(len(epochs))
    if len(t) < 2:
        return counts
    c0, c1 = t[:-1], t[1:]
    length = c1 - c0
    for j, (es, el) in enumerate(epochs):
        overlap = np.minimum(c1, es + el) - np.maximum(c0, es)
        np.clip(overlap, 0.0, None, out=overlap)
        counts[j] = float(np.sum(overlap / length))
    return counts


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def count_cycles(points: TurningPoints, epochs) -> list[EpochSummary]:
    """Per-epoch cycle counts from peak-to-peak intervals."""
    fractional = fractional_counts(points.peak_times(), epochs)
    out = []
    for j, ((es, el), c) in enumerate(zip(epochs, fractional)):
        out.append(EpochSummary(j, es, el, float(c), round_half_up(c),
                                float(c) * 60.0 / el))
    return out


def epochs_csv_text(epochs: list[EpochSummary]) -> str:
    rows = ["epoch_index,start,cycle_count,integer_count,rr_bpm"]
    for e in epochs:
        rows.append(f"{e.epoch_index},{fmt_value(e.start)},{fmt_value(e.cycle_count)},"
                    f"{e.integer_count},{fmt_value(e.rr_bpm)}")
    return "\n".join(rows) + "\n"
