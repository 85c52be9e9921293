"""Collapse preprocessed subcarrier channels into a single respiratory waveform.

Two methods: reference-guided per-window correlation selection (10 s windows)
and per-window PCA with the first component as the waveform (30 s windows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import UniformSeries
from .dsp import ChannelSet, partition_windows, znorm


@dataclass(frozen=True)
class CorrelationWindow:
    start: float
    length: float
    channel: int
    r: float


@dataclass(frozen=True)
class PcaWindow:
    start: float
    length: float
    loadings: tuple[float, ...]   # unit-norm, one weight per channel
    explained: float              # variance fraction of component 1
    degenerate: bool


@dataclass(frozen=True)
class ExtractionResult:
    signal: UniformSeries
    method: str                   # "correlation" | "pca"
    window_seconds: float
    windows: tuple

    def negated(self) -> "ExtractionResult":
        """Same extraction with the waveform polarity flipped.

        PCA loadings flip with the signal so projections stay consistent;
        correlation-window descriptors are unaffected by a global flip.
        """
        wave = UniformSeries(-self.signal.samples, self.signal.rate,
                             self.signal.start_time)
        windows = tuple(
            PcaWindow(w.start, w.length, tuple(-l for l in w.loadings),
                      w.explained, w.degenerate) if isinstance(w, PcaWindow) else w
            for w in self.windows)
        return ExtractionResult(wave, self.method, self.window_seconds, windows)

    def to_dict(self, waveform_csv: str | None = None) -> dict:
        desc = []
        for w in self.windows:
            if isinstance(w, CorrelationWindow):
                desc.append({"start": w.start, "length": w.length,
                             "channel": w.channel, "r": w.r})
            else:
                desc.append({"start": w.start, "length": w.length,
                             "loadings": list(w.loadings),
                             "explained": w.explained,
                             "degenerate": w.degenerate})
        out = {"method": self.method, "window_seconds": self.window_seconds,
               "windows": desc}
        if waveform_csv is not None:
            out["waveform_csv"] = waveform_csv
        return out


def _check_same_grid(channels: ChannelSet, ref: UniformSeries) -> None:
    if abs(channels.rate - ref.rate) > 1e-9:
        raise ValueError("reference rate does not match channel rate")
    if len(ref) != channels.n_samples:
        raise ValueError("reference length does not match channels")
    if abs(ref.start_time - channels.start_time) > 0.5 / channels.rate:
        raise ValueError("reference grid is offset from the channel grid")


def select_by_correlation(channels: ChannelSet, ref: UniformSeries,
                          window_seconds: float = 10.0) -> ExtractionResult:
    """Per 10 s window: pick the channel with the largest |Pearson r| against the
    reference, emit its Z-normalized segment with the sign of r restored."""
    _check_same_grid(channels, ref)
    rate = channels.rate
    windows = partition_windows(channels.n_samples, rate, window_seconds)

    pieces = []
    infos = []
    for lo, hi in windows:
        seg = channels.values[lo:hi]
        m = hi - lo
        zr, ref_degenerate = znorm(ref.samples[lo:hi])
        means = seg.mean(axis=0)
        stds = seg.std(axis=0)
        ok = stds > 1e-12
        zc = (seg - means) / np.where(ok, stds, 1.0)
        zc[:, ~ok] = 0.0
        if ref_degenerate:
            r = np.zeros(channels.n_channels)
        else:
            r = zc.T @ zr / m
        best = int(np.argmax(np.abs(r)))
        sign = -1.0 if r[best] < 0 else 1.0
        pieces.append(sign * zc[:, best])
        infos.append(CorrelationWindow(channels.start_time + lo / rate,
                                       m / rate, best, float(r[best])))

    wave = UniformSeries(np.concatenate(pieces), rate, channels.start_time)
    return ExtractionResult(wave, "correlation", window_seconds, tuple(infos))


def principal_components(matrix: np.ndarray):
    """PCA of a (samples x channels) window via SVD of the centered data.

    Returns (loadings, variances, projections): loadings rows are unit-norm
    components sorted by decreasing variance; projections = centered @ loadings.T
    reconstructs the centered data as projections @ loadings.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("window must be 2-D (samples x channels)")
    m = x.shape[0]
    if m < 2:
        raise ValueError("window must hold at least 2 samples")
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    variances = s ** 2 / (m - 1)
    projections = centered @ vt.T
    return vt, variances, projections


def extract_pca(channels: ChannelSet, window_seconds: float = 30.0,
                tail_seconds: float = 5.0) -> ExtractionResult:
    """Per 30 s window: project centered channels on the first principal axis.

    The sign of each window is chosen for continuity: the previous window's
    last `tail_seconds` of data, projected onto the current axis, must
    correlate non-negatively with the previous window's emitted tail. The
    first window's sign puts its maximum before its minimum.
    """
    rate = channels.rate
    if int(round(window_seconds * rate)) < channels.n_channels:
        raise ValueError("PCA window spans fewer samples than channels")
    windows = partition_windows(channels.n_samples, rate, window_seconds)

    pieces: list[np.ndarray] = []
    infos = []
    prev_hi = None
    for lo, hi in windows:
        seg = channels.values[lo:hi]
        mu = seg.mean(axis=0)
        centered = seg - mu
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        v1 = vt[0]
        total = float((s ** 2).sum())
        degenerate = s[0] <= 1e-12 * max(1.0, float(np.abs(seg).max()))
        if degenerate:
            proj = np.zeros(hi - lo)
            explained = 0.0
        else:
            proj = centered @ v1
            explained = float(s[0] ** 2 / total)

            if not pieces:
                if int(np.argmax(proj)) > int(np.argmin(proj)):
                    proj, v1 = -proj, -v1
            else:
                tail_n = max(2, min(int(round(tail_seconds * rate)), len(pieces[-1])))
                prev_tail = pieces[-1][-tail_n:]
                data_tail = (channels.values[prev_hi - tail_n:prev_hi] - mu) @ v1
                c = float(np.dot(prev_tail - prev_tail.mean(),
                                 data_tail - data_tail.mean()))
                if c < 0:
                    proj, v1 = -proj, -v1

        pieces.append(proj)
        infos.append(PcaWindow(channels.start_time + lo / rate, (hi - lo) / rate,
                               tuple(v1.tolist()), explained, bool(degenerate)))
        prev_hi = hi

    wave = UniformSeries(np.concatenate(pieces), rate, channels.start_time)
    return ExtractionResult(wave, "pca", window_seconds, tuple(infos))
