"""Synthetic CSI generator with planted breathing ground truth.

The magnitude model is phenomenological: each subcarrier is a baseline plus a
signed coupling weight times the breathing waveform, with additive Gaussian
noise, sporadic large spikes, and jittered frame timestamps around the nominal
62.5 Hz period. The reference trace is the clean breathing waveform at 100 Hz,
so every pipeline stage can be verified against exact ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CsiRecord, RecordMeta, UniformSeries, save_csi, save_reference
from .respiration import epoch_grid, fractional_counts, round_half_up
from .util import sha256_file, write_json

IN_BAND_BPM = (12.0, 24.0)  # the 0.2-0.4 Hz band-pass range
MIN_DT = 1e-4               # monotonicity clamp for jittered timestamps


@dataclass(frozen=True)
class BreathSegment:
    start: float      # seconds
    rate_bpm: float
    amplitude: float


@dataclass(frozen=True)
class SynthSpec:
    duration: float
    breathing: tuple[BreathSegment, ...]
    n_subcarriers: int = 50
    nominal_rate: float = 62.5
    jitter_std: float = 0.002
    weights: np.ndarray | None = None     # signed couplings; seeded default
    baselines: np.ndarray | None = None   # seeded default
    noise_snr_db: float = 20.0
    outlier_rate: float = 0.01
    outlier_scale: float = 20.0
    seed: int = 0
    allow_out_of_band: bool = False
    subject: str = ""
    posture: str = "unknown"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if not self.breathing:
            raise ValueError("need at least one breathing segment")
        if not 0 <= self.outlier_rate < 1:
            raise ValueError("outlier_rate must be in [0, 1)")
        if self.n_subcarriers < 1 or self.nominal_rate <= 0 or self.jitter_std < 0:
            raise ValueError("invalid acquisition parameters")
        for seg in self.breathing:
            if seg.amplitude < 0 or not math.isfinite(seg.amplitude):
                raise ValueError("segment amplitude must be finite and >= 0")
            in_band = IN_BAND_BPM[0] <= seg.rate_bpm <= IN_BAND_BPM[1]
            if not in_band and not self.allow_out_of_band:
                raise ValueError(
                    f"breathing rate {seg.rate_bpm} bpm lies outside the "
                    f"{IN_BAND_BPM[0]}-{IN_BAND_BPM[1]} bpm band-pass range; "
                    "set allow_out_of_band=True to generate it anyway")
        for name in ("weights", "baselines"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                if v.shape != (self.n_subcarriers,) or not np.all(np.isfinite(v)):
                    raise ValueError(f"{name} must be a finite vector of length "
                                     f"{self.n_subcarriers}")
                object.__setattr__(self, name, v)


@dataclass(frozen=True)
class GroundTruth:
    waveform: UniformSeries               # clean breathing on a 60 Hz grid
    reference: UniformSeries              # belt surrogate at 100 Hz
    cycle_boundaries: np.ndarray          # analytic peak times, seconds
    epochs: tuple[tuple[float, float], ...]
    epoch_counts: tuple[int, ...]
    n_outliers: int

    def recomputed_counts(self) -> tuple[int, ...]:
        """Per-epoch integer counts re-derived from the cycle boundaries."""
        frac = fractional_counts(self.cycle_boundaries, self.epochs)
        return tuple(round_half_up(c) for c in frac)


# ---------------------------------------------------------------------------
# Breathing waveform

def _segment_table(breathing, duration):
    segs = sorted(breathing, key=lambda s: s.start)
    if segs[0].start != 0:
        raise ValueError("first breathing segment must start at 0")
    starts = np.array([s.start for s in segs] + [duration])
    if np.any(np.diff(starts) <= 0):
        raise ValueError("segment starts must be strictly increasing and < duration")
    freqs = np.array([s.rate_bpm / 60.0 for s in segs])
    amps = np.array([s.amplitude for s in segs])
    phase0 = np.zeros(len(segs))
    for i in range(1, len(segs)):
        phase0[i] = phase0[i - 1] + 2 * np.pi * freqs[i - 1] * (starts[i] - starts[i - 1])
    return starts, freqs, amps, phase0


def breathing_waveform(breathing, duration: float, t) -> np.ndarray:
    """Evaluate the piecewise-rate breathing waveform (phase-continuous) at `t`."""
    starts, freqs, amps, phase0 = _segment_table(breathing, duration)
    t = np.asarray(t, dtype=np.float64)
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(freqs) - 1)
    phase = phase0[idx] + 2 * np.pi * freqs[idx] * (t - starts[idx])
    return amps[idx] * np.sin(phase)


def analytic_cycle_boundaries(breathing, duration: float) -> np.ndarray:
    """Times of the breathing waveform's maxima (phase = pi/2 mod 2*pi)."""
    starts, freqs, _, phase0 = _segment_table(breathing, duration)
    out = []
    for i in range(len(freqs)):
        p_lo = phase0[i]
        p_hi = phase0[i] + 2 * np.pi * freqs[i] * (starts[i + 1] - starts[i])
        k = math.ceil((p_lo - np.pi / 2) / (2 * np.pi))
        while True:
            phase = np.pi / 2 + 2 * np.pi * k
            if phase >= p_hi:
                break
            if phase >= p_lo:
                out.append(starts[i] + (phase - p_lo) / (2 * np.pi * freqs[i]))
            k += 1
    return np.array(out)


# ---------------------------------------------------------------------------
# Record generation

def generate(spec: SynthSpec) -> tuple[CsiRecord, GroundTruth]:
    """Deterministically generate one CSI record plus its ground truth.

    Random draws happen in a fixed order (timestamps, couplings, baselines,
    noise, outlier positions, outlier signs) so a seed pins the full record.
    """
    rng = np.random.default_rng(spec.seed)

    n_est = int(spec.duration * spec.nominal_rate * 1.15) + 16
    dts = 1.0 / spec.nominal_rate + rng.normal(0.0, spec.jitter_std, n_est)
    np.maximum(dts, MIN_DT, out=dts)
    t = np.concatenate(([0.0], np.cumsum(dts)))
    t = t[t <= spec.duration]

    k = spec.n_subcarriers
    weights = spec.weights
    if weights is None:
        weights = rng.uniform(0.3, 1.0, k) * rng.choice([-1.0, 1.0], k)
    baselines = spec.baselines
    if baselines is None:
        baselines = rng.uniform(8.0, 16.0, k)

    b = breathing_waveform(spec.breathing, spec.duration, t)
    coupled = np.outer(b, weights)
    values = baselines[None, :] + coupled

    sigma = np.sqrt(np.mean(coupled ** 2, axis=0))
    noise_std = sigma * 10 ** (-spec.noise_snr_db / 20.0)
    values += rng.standard_normal((len(t), k)) * noise_std[None, :]

    n_outliers = 0
    if spec.outlier_rate > 0:
        mask = rng.random((len(t), k)) < spec.outlier_rate
        signs = rng.choice([-1.0, 1.0], (len(t), k))
        values += mask * signs * (spec.outlier_scale * sigma[None, :])
        n_outliers = int(mask.sum())

    np.clip(values, 0.0, None, out=values)  # magnitudes cannot be negative
    record = CsiRecord(t, values, kind="magnitude", nominal_rate=spec.nominal_rate,
                       meta=RecordMeta(subject=spec.subject, posture=spec.posture))

    n60 = int(math.floor(spec.duration * 60.0)) + 1
    grid60 = np.arange(n60) / 60.0
    n100 = int(math.floor(spec.duration * 100.0)) + 1
    grid100 = np.arange(n100) / 100.0
    boundaries = analytic_cycle_boundaries(spec.breathing, spec.duration)
    epochs = epoch_grid(0.0, spec.duration)
    counts = tuple(round_half_up(c) for c in fractional_counts(boundaries, epochs))

    truth = GroundTruth(
        waveform=UniformSeries(breathing_waveform(spec.breathing, spec.duration, grid60), 60.0),
        reference=UniformSeries(breathing_waveform(spec.breathing, spec.duration, grid100), 100.0),
        cycle_boundaries=boundaries,
        epochs=epochs,
        epoch_counts=counts,
        n_outliers=n_outliers,
    )
    return record, truth


# ---------------------------------------------------------------------------
# Subject suite

@dataclass(frozen=True)
class SubjectProfile:
    amplitude: float
    posture_factors: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_POSTURE_FACTORS))


# Prone couples mostly through small back movements, so it gets the strongest
# attenuation; side is intermediate.
DEFAULT_POSTURE_FACTORS = {"supine": 1.0, "side": 0.8, "prone": 0.5}

DEFAULT_AMPLITUDES = (1.1, 0.7, 0.9, 1.0, 1.3)


def default_profiles() -> tuple[SubjectProfile, ...]:
    return tuple(SubjectProfile(a) for a in DEFAULT_AMPLITUDES)


def _record_seed(base_seed: int, subject_idx: int, posture_idx: int) -> int:
    return base_seed * 10007 + subject_idx * 101 + posture_idx


def random_schedule(duration: float, amplitude: float, rng: np.random.Generator
                    ) -> tuple[BreathSegment, ...]:
    """2-4 segments with rates drawn as even-bpm (+0.15..0.85) offsets.

    Keeping bpm/2 away from half-integers avoids epochs whose fractional cycle
    count sits exactly on the rounding boundary, where belt and CSI counts
    could round apart on numeric noise alone.
    """
    n_seg = int(rng.integers(2, 5))
    cuts = [(i / n_seg + float(rng.uniform(-0.05, 0.05))) * duration
            for i in range(1, n_seg)]
    starts = [0.0] + sorted(cuts)
    segs = []
    for s in starts:
        base = 12 + 2 * int(rng.integers(0, 6))
        rate = base + float(rng.uniform(0.15, 0.85))
        segs.append(BreathSegment(s, rate, amplitude * float(rng.uniform(0.9, 1.1))))
    return tuple(segs)


def subject_suite(out_dir, profiles=None, postures=("supine", "side", "prone"),
                  duration: float = 300.0, noise_snr_db: float = 20.0,
                  base_seed: int = 0, n_subcarriers: int = 50,
                  outlier_rate: float = 0.01) -> dict:
    """Write a dataset of one record per subject x posture, plus ground truth.

    Posture attenuation scales the breathing amplitude and, because the noise
    floor of a real link does not shrink with the subject's motion, also
    lowers that record's SNR by 20*log10(factor).
    """
    profiles = list(profiles) if profiles is not None else list(default_profiles())
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for si, profile in enumerate(profiles, start=1):
        for pi, posture in enumerate(postures):
            factor = profile.posture_factors.get(posture, 1.0)
            seed = _record_seed(base_seed, si, pi)
            schedule = random_schedule(duration, profile.amplitude * factor,
                                       np.random.default_rng([seed, 1]))
            snr = noise_snr_db + (20 * math.log10(factor) if factor > 0 else 0.0)
            spec = SynthSpec(duration=duration, breathing=schedule,
                             n_subcarriers=n_subcarriers, noise_snr_db=snr,
                             outlier_rate=outlier_rate, seed=seed,
                             subject=str(si), posture=posture)
            record, truth = generate(spec)

            stem = f"s{si}_{posture}"
            csi_path = out_dir / f"csi_{stem}.csv"
            ref_path = out_dir / f"ref_{stem}.csv"
            truth_path = out_dir / f"truth_{stem}.json"
            save_csi(csi_path, record)
            save_reference(ref_path, truth.reference)
            write_json(truth_path, {
                "schema": "truth v1",
                "subject": str(si), "posture": posture, "seed": seed,
                "duration": duration, "noise_snr_db": snr,
                "schedule": [{"start": s.start, "rate_bpm": s.rate_bpm,
                              "amplitude": s.amplitude} for s in schedule],
                "cycle_boundaries": truth.cycle_boundaries.tolist(),
                "epoch_grid": [list(e) for e in truth.epochs],
                "epoch_counts": list(truth.epoch_counts),
                "n_outliers": truth.n_outliers,
            })
            entries.append({
                "subject": str(si), "posture": posture, "seed": seed,
                "csi": csi_path.name, "ref": ref_path.name,
                "truth": truth_path.name,
                "sha256": {"csi": sha256_file(csi_path),
                           "ref": sha256_file(ref_path),
                           "truth": sha256_file(truth_path)},
            })

    manifest = {"schema": "synth v1", "base_seed": base_seed,
                "duration": duration, "noise_snr_db": noise_snr_db,
                "n_subcarriers": n_subcarriers, "outlier_rate": outlier_rate,
                "postures": list(postures), "n_subjects": len(profiles),
                "records": entries}
    write_json(out_dir / "manifest.json", manifest)
    return manifest
