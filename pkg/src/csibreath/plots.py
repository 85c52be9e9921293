"""Figure rendering for run reports and spectrogram export."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import UniformSeries  # noqa: E402
from .dsp import Spectrogram, znorm  # noqa: E402


def _save(fig, path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=150, bbox_inches="tight")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)


def waveform_comparison(path, wave: UniformSeries, reference: UniformSeries,
                        max_seconds: float = 120.0) -> None:
    """Overlay the extracted waveform and the reference (both Z-normalized)."""
    n = min(len(wave), int(max_seconds * wave.rate))
    t = wave.times()[:n]
    zw, _ = znorm(wave.samples[:n])
    fig, ax = plt.subplots(figsize=(10, 3.2))
    ax.plot(t, zw, lw=0.9, label="recovered")
    if reference is not None:
        zr, _ = znorm(reference.samples[:n])
        ax.plot(reference.times()[:n], zr, lw=0.9, alpha=0.75, label="reference")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("normalized amplitude")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def error_histogram(path, histogram: dict[int, int]) -> None:
    """Bar chart of per-epoch cycle-count differences (signal minus reference)."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if histogram:
        lo, hi = min(histogram), max(histogram)
        deltas = list(range(lo, hi + 1))
        counts = [histogram.get(d, 0) for d in deltas]
        ax.bar(deltas, counts, width=0.85, color="steelblue", edgecolor="black")
        ax.set_xticks(deltas)
    ax.set_xlabel("cycle count difference per epoch")
    ax.set_ylabel("epochs")
    ax.grid(True, axis="y", alpha=0.3)
    _save(fig, path)


def spectrogram_image(path, specs, labels=None, f_max: float | None = 1.0) -> None:
    """Grayscale spectrogram panels (one per input, stacked vertically)."""
    if isinstance(specs, Spectrogram):
        specs = [specs]
    labels = labels or [f"signal {i + 1}" for i in range(len(specs))]
    fig, axes = plt.subplots(len(specs), 1, figsize=(10, 2.8 * len(specs)),
                             squeeze=False, sharex=True)
    for ax, spec, label in zip(axes[:, 0], specs, labels):
        freqs = spec.frequencies
        sel = freqs <= f_max if f_max is not None else np.ones_like(freqs, bool)
        ax.pcolormesh(spec.times, freqs[sel], spec.magnitudes[:, sel].T,
                      cmap="gray_r", shading="auto")
        ax.set_ylabel("frequency (Hz)")
        ax.set_title(label, fontsize=9)
    axes[-1, 0].set_xlabel("time (s)")
    _save(fig, path)
