"""Per-subcarrier preprocessing chain and general signal utilities.

The chain applied to each subcarrier is: magnitude -> Hampel outlier removal
-> linear resampling to a uniform 60 Hz grid -> centered moving average ->
4th-order Butterworth band-pass (0.2-0.4 Hz), zero-phase by default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .data import CsiRecord, UniformSeries, magnitudes

MAD_SCALE = 1.4826  # scaled MAD approximates the standard deviation for Gaussian data
DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class FilterSpec:
    """Parameters of the preprocessing chain."""

    hampel_window: float = 1.0        # seconds
    hampel_threshold: float = 1.7     # multiples of the scaled MAD
    target_rate: float = 60.0         # Hz
    ma_window: float = 1.5            # seconds
    bp_low: float = 0.2               # Hz
    bp_high: float = 0.4              # Hz
    bp_order: int = 4
    phase_mode: str = "zero_phase"    # or "causal"

    def __post_init__(self):
        if not (0 < self.bp_low < self.bp_high < self.target_rate / 2):
            raise ValueError("need 0 < bp_low < bp_high < target_rate/2")
        if self.hampel_window <= 0 or self.ma_window <= 0:
            raise ValueError("window lengths must be > 0")
        if self.bp_order < 1:
            raise ValueError("bp_order must be >= 1")
        if self.phase_mode not in ("zero_phase", "causal"):
            raise ValueError("phase_mode must be 'zero_phase' or 'causal'")

    def with_overrides(self, **kwargs) -> "FilterSpec":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ChannelSet:
    """Multiple uniformly sampled waveforms on one shared time grid."""

    values: np.ndarray  # (n_samples, n_channels)
    rate: float
    start_time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be 2-D (samples x channels)")
        if not self.rate > 0:
            raise ValueError("rate must be > 0")
        v = np.array(v, copy=True)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def channel(self, k: int) -> UniformSeries:
        return UniformSeries(self.values[:, k], self.rate, self.start_time)

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.rate

    def crop(self, lo: int, hi: int) -> "ChannelSet":
        return ChannelSet(self.values[lo:hi], self.rate,
                          self.start_time + lo / self.rate)


# ---------------------------------------------------------------------------
# Hampel identifier

def _window_samples(window: float, rate: float) -> int:
    return int(round(window * rate))


def hampel_filter(values: np.ndarray, n_window: int, threshold: float) -> np.ndarray:
    """Sliding median/MAD outlier replacement on a plain array.

    Uses a centered window of half-width n_window//2 that shrinks at the
    series edges. A sample is replaced by its window median when it deviates
    from it by more than threshold * 1.4826 * MAD.
    """
    if n_window < 3:
        raise ValueError("Hampel window must span at least 3 samples")
    v = np.ascontiguousarray(values, dtype=np.float64)
    n = len(v)
    out = v.copy()
    h = n_window // 2
    full = 2 * h + 1

    if n >= full:
        win = sliding_window_view(v, full)
        med = np.partition(win, h, axis=1)[:, h]
        mad = np.partition(np.abs(win - med[:, None]), h, axis=1)[:, h]
        centre = v[h:n - h]
        mask = np.abs(centre - med) > threshold * MAD_SCALE * mad
        out[h:n - h] = np.where(mask, med, centre)
        edge_idx = list(range(h)) + list(range(n - h, n))
    else:
        edge_idx = range(n)

    for i in edge_idx:
        lo, hi = max(0, i - h), min(n, i + h + 1)
        m = np.median(v[lo:hi])
        s = MAD_SCALE * np.median(np.abs(v[lo:hi] - m))
        if np.abs(v[i] - m) > threshold * s:
            out[i] = m
    return out


def hampel(x: UniformSeries, window: float = 1.0, threshold: float = 1.7) -> UniformSeries:
    """Hampel identifier on a uniform series; window is in seconds."""
    n_w = _window_samples(window, x.rate)
    return UniformSeries(hampel_filter(x.samples, n_w, threshold), x.rate, x.start_time)


# ---------------------------------------------------------------------------
# Resampling

def resample_linear(timestamps, values, target_rate: float) -> UniformSeries:
    """Linear interpolation onto a uniform grid spanning the input timestamps.

    The grid starts at the first timestamp and never extrapolates beyond the
    last one.
    """
    t = np.asarray(timestamps, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.ndim != 1 or len(t) != len(v):
        raise ValueError("timestamps and values must be 1-D and equal length")
    if len(t) < 2:
        raise ValueError("need at least 2 points to resample")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    n_out = int(np.floor((t[-1] - t[0]) * target_rate + 1e-9)) + 1
    grid = t[0] + np.arange(n_out) / target_rate
    return UniformSeries(np.interp(grid, t, v), target_rate, float(t[0]))


# ---------------------------------------------------------------------------
# Moving average

def moving_average_filter(values: np.ndarray, n_window: int) -> np.ndarray:
    """Centered moving average with shrinking windows at the edges."""
    if n_window < 1:
        raise ValueError("moving-average window must span at least 1 sample")
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    h_left = (n_window - 1) // 2
    h_right = n_window // 2
    c = np.concatenate(([0.0], np.cumsum(v)))
    idx = np.arange(n)
    lo = np.maximum(idx - h_left, 0)
    hi = np.minimum(idx + h_right + 1, n)
    return (c[hi] - c[lo]) / (hi - lo)


def moving_average(x: UniformSeries, window: float = 1.5) -> UniformSeries:
    n_w = _window_samples(window, x.rate)
    return UniformSeries(moving_average_filter(x.samples, n_w), x.rate, x.start_time)


# ---------------------------------------------------------------------------
# Butterworth band-pass

def design_bandpass(spec: FilterSpec) -> np.ndarray:
    """Second-order sections of the digital band-pass (bilinear transform with
    frequency prewarping, analog Butterworth prototype of order bp_order)."""
    return sps.butter(spec.bp_order, [spec.bp_low, spec.bp_high],
                      btype="bandpass", fs=spec.target_rate, output="sos")


def bandpass_gain(spec: FilterSpec, freqs) -> np.ndarray:
    """Numeric |H(e^{j2*pi*f/fs})| of the designed single-pass filter."""
    sos = design_bandpass(spec)
    z = np.exp(-2j * np.pi * np.atleast_1d(np.asarray(freqs, dtype=float))
               / spec.target_rate)
    num = np.ones_like(z)
    den = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        num = num * (b0 + b1 * z + b2 * z * z)
        den = den * (a0 + a1 * z + a2 * z * z)
    return np.abs(num / den)


def apply_bandpass(values: np.ndarray, spec: FilterSpec) -> np.ndarray:
    sos = design_bandpass(spec)
    v = np.asarray(values, dtype=np.float64)
    if spec.phase_mode == "zero_phase":
        return sps.sosfiltfilt(sos, v)
    zi = sps.sosfilt_zi(sos) * v[0]
    out, _ = sps.sosfilt(sos, v, zi=zi)
    return out


def butterworth_bandpass(x: UniformSeries, spec: FilterSpec) -> UniformSeries:
    if abs(x.rate - spec.target_rate) > 1e-9:
        raise ValueError(f"series rate {x.rate} does not match spec rate {spec.target_rate}")
    return UniformSeries(apply_bandpass(x.samples, spec), x.rate, x.start_time)


# ---------------------------------------------------------------------------
# Full per-subcarrier chain

def preprocess_subcarriers(record: CsiRecord, spec: FilterSpec | None = None) -> ChannelSet:
    """Run the full chain on every subcarrier; outputs share one 60 Hz grid.

    The Hampel window is sized from the record's nominal rate because raw CSI
    timestamps are jittered; resampling then uses the true timestamps.
    """
    spec = spec or FilterSpec()
    mags = magnitudes(record)
    n_hampel = _window_samples(spec.hampel_window, record.nominal_rate)
    n_ma = _window_samples(spec.ma_window, spec.target_rate)

    cols = []
    for k in range(record.n_subcarriers):
        clean = hampel_filter(mags[:, k], n_hampel, spec.hampel_threshold)
        uni = resample_linear(record.timestamps, clean, spec.target_rate)
        smooth = moving_average_filter(uni.samples, n_ma)
        cols.append(apply_bandpass(smooth, spec))
    return ChannelSet(np.column_stack(cols), spec.target_rate,
                      float(record.timestamps[0]))


def preprocess_reference(ref: UniformSeries, spec: FilterSpec | None = None) -> UniformSeries:
    """Belt-style reference prep: resample to the target rate, band-pass the same range."""
    spec = spec or FilterSpec()
    uni = resample_linear(ref.times(), ref.samples, spec.target_rate)
    return UniformSeries(apply_bandpass(uni.samples, spec), uni.rate, uni.start_time)


# ---------------------------------------------------------------------------
# Normalization

def znorm(values: np.ndarray) -> tuple[np.ndarray, bool]:
    """Zero-mean unit-variance copy; constant inputs come back as zeros with a flag."""
    v = np.asarray(values, dtype=np.float64)
    std = v.std()
    if std < DEGENERATE_STD:
        return np.zeros_like(v), True
    return (v - v.mean()) / std, False


def znormalize(x: UniformSeries) -> tuple[UniformSeries, bool]:
    """Z-normalize a series. Returns (series, degenerate_flag)."""
    if len(x) < 2:
        raise ValueError("need at least 2 samples")
    out, degenerate = znorm(x.samples)
    return UniformSeries(out, x.rate, x.start_time), degenerate


# ---------------------------------------------------------------------------
# Spectrogram

@dataclass(frozen=True)
class Spectrogram:
    """Short-time Fourier magnitudes: rows are frames, columns frequency bins."""

    times: np.ndarray        # frame centers, seconds
    frequencies: np.ndarray  # Hz, 0..rate/2
    magnitudes: np.ndarray   # (n_frames, n_bins)


def spectrogram(x: UniformSeries, window: float, overlap: float = 0.5) -> Spectrogram:
    """Hann-windowed STFT magnitude with hop = window * (1 - overlap)."""
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    n_w = _window_samples(window, x.rate)
    if n_w < 8:
        raise ValueError("spectrogram window must span at least 8 samples")
    if len(x) < n_w:
        raise ValueError("series shorter than one spectrogram window")
    hop = max(1, int(round(n_w * (1 - overlap))))
    taper = np.hanning(n_w)
    starts = np.arange(0, len(x) - n_w + 1, hop)
    mags = np.empty((len(starts), n_w // 2 + 1))
    for i, s in enumerate(starts):
        mags[i] = np.abs(np.fft.rfft(x.samples[s:s + n_w] * taper))
    times = x.start_time + (starts + n_w / 2) / x.rate
    freqs = np.fft.rfftfreq(n_w, 1 / x.rate)
    return Spectrogram(times, freqs, mags)


def spectrogram_csv_text(spec: Spectrogram) -> str:
    """CSV rendering: frequency axis as header row, time axis as first column."""
    from .util import fmt_value
    head = "t," + ",".join(fmt_value(f) for f in spec.frequencies)
    rows = [head]
    for i, t in enumerate(spec.times):
        rows.append(fmt_value(t) + "," +
                    ",".join(fmt_value(v) for v in spec.magnitudes[i]))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Shared windowing

def partition_windows(n_samples: int, rate: float, window_seconds: float) -> list[tuple[int, int]]:
    """Consecutive index windows of `window_seconds`. A short trailing remainder
    is kept as its own window when at least half the nominal length, otherwise
    merged into the previous window."""
    w = int(round(window_seconds * rate))
    if w < 2:
        raise ValueError("window must span at least 2 samples")
    if n_samples <= w:
        return [(0, n_samples)]
    bounds = []
    start = 0
    while start + w <= n_samples:
        bounds.append((start, start + w))
        start += w
    rem = n_samples - start
    if rem:
        if 2 * rem >= w:
            bounds.append((start, n_samples))
        else:
            bounds[-1] = (bounds[-1][0], n_samples)
    return bounds
