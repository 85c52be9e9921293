import numpy as np
import pytest

from csibreath.data import CsiRecord, UniformSeries
from csibreath.dsp import (FilterSpec, apply_bandpass, bandpass_gain,
                           butterworth_bandpass, hampel, hampel_filter,
                           moving_average, moving_average_filter,
                           partition_windows, preprocess_subcarriers,
                           resample_linear, spectrogram, znorm, znormalize)
from csibreath.synth import BreathSegment, SynthSpec, generate


def hampel_oracle(values, n_window, threshold):
    """Direct per-sample sliding median/MAD reference implementation."""
    v = np.asarray(values, dtype=float)
    h = n_window // 2
    out = v.copy()
    for i in range(len(v)):
        win = v[max(0, i - h):min(len(v), i + h + 1)]
        m = np.median(win)
        s = 1.4826 * np.median(np.abs(win - m))
        if abs(v[i] - m) > threshold * s:
            out[i] = m
    return out


class TestHampel:
    def test_constant_unchanged(self):
        x = UniformSeries([5.0] * 5, 1.0)
        np.testing.assert_array_equal(hampel(x, 3.0, 1.7).samples, x.samples)

    def test_spike_replaced_by_median(self):
        x = UniformSeries([1, 1, 1, 100, 1, 1, 1], 1.0)
        np.testing.assert_array_equal(hampel(x, 7.0, 1.7).samples, np.ones(7))

    def test_matches_brute_force_oracle_exactly(self):
        rng = np.random.default_rng(21)
        v = np.cumsum(rng.normal(0, 1, 2000))
        spikes = rng.random(2000) < 0.01
        v[spikes] += rng.choice([-1, 1], spikes.sum()) * 20 * v.std()
        out = hampel_filter(v, 61, 1.7)
        np.testing.assert_array_equal(out, hampel_oracle(v, 61, 1.7))

    def test_small_deviations_never_touched(self):
        # cross-check sample-by-sample against the oracle decision rule
        rng = np.random.default_rng(4)
        v = rng.normal(0, 1, 500)
        out = hampel_filter(v, 11, 1.7)
        h = 5
        for i in range(len(v)):
            win = v[max(0, i - h):min(len(v), i + h + 1)]
            m = np.median(win)
            s = 1.4826 * np.median(np.abs(win - m))
            if abs(v[i] - m) <= 1.7 * s:
                assert out[i] == v[i]

    def test_window_too_short(self):
        with pytest.raises(ValueError):
            hampel(UniformSeries([1.0, 2.0, 3.0], 1.0), 1.0, 1.7)


class TestResample:
    def test_identity_on_uniform_grid(self):
        t = np.arange(300) / 60.0
        v = np.sin(t)
        out = resample_linear(t, v, 60.0)
        assert len(out) == 300
        np.testing.assert_allclose(out.samples, v, atol=1e-12, rtol=0)

    def test_two_point_line(self):
        out = resample_linear([0.0, 1.0], [0.0, 1.0], 60.0)
        np.testing.assert_allclose(out.samples, np.arange(61) / 60.0,
                                   atol=1e-12, rtol=0)

    def test_jittered_sinusoid_rms(self):
        rng = np.random.default_rng(17)
        dts = np.maximum(1 / 62.5 + rng.normal(0, 0.002, 3800), 1e-4)
        t = np.concatenate(([0.0], np.cumsum(dts)))
        t = t[t <= 60.0]
        v = np.sin(2 * np.pi * 0.3 * t)
        out = resample_linear(t, v, 60.0)
        truth = np.sin(2 * np.pi * 0.3 * out.times())
        rms = np.sqrt(np.mean((out.samples - truth) ** 2))
        assert rms < 1e-3

    def test_knot_values_reproduced(self):
        t = np.array([0.0, 0.25, 0.5, 1.0])
        v = np.array([1.0, -2.0, 4.0, 0.5])
        out = resample_linear(t, v, 4.0)  # grid: 0, .25, .5, .75, 1
        np.testing.assert_array_equal(out.samples[[0, 1, 2, 4]], v)

    def test_errors(self):
        with pytest.raises(ValueError):
            resample_linear([0.0], [1.0], 60.0)
        with pytest.raises(ValueError):
            resample_linear([0.0, 0.0], [1.0, 2.0], 60.0)


class TestMovingAverage:
    def test_constant(self):
        x = UniformSeries([3.0] * 50, 10.0)
        np.testing.assert_allclose(moving_average(x, 1.0).samples, 3.0)

    def test_impulse_response(self):
        v = np.zeros(101)
        v[50] = 1.0
        out = moving_average_filter(v, 9)
        np.testing.assert_allclose(out[46:55], np.full(9, 1 / 9), atol=1e-15)
        assert out[45] == 0 and out[55] == 0

    def test_dirichlet_gain(self):
        rate, f, window = 60.0, 0.3, 1.5
        n_w = int(round(window * rate))
        t = np.arange(int(90 * rate)) / rate
        x = UniformSeries(np.sin(2 * np.pi * f * t), rate)
        out = moving_average(x, window)
        # least-squares sin/cos fit on the interior (phase-insensitive)
        sel = (t > 10) & (t < 80)
        basis = np.column_stack([np.sin(2 * np.pi * f * t[sel]),
                                 np.cos(2 * np.pi * f * t[sel])])
        coef, *_ = np.linalg.lstsq(basis, out.samples[sel], rcond=None)
        measured = np.hypot(*coef)
        expected = abs(np.sin(np.pi * f * window) /
                       (n_w * np.sin(np.pi * f / rate)))
        assert abs(measured - expected) < 1e-6

    def test_length_preserved(self):
        x = UniformSeries(np.arange(25.0), 10.0)
        assert len(moving_average(x, 0.7)) == 25


class TestButterworth:
    def test_dc_killed(self):
        spec = FilterSpec()
        t = np.arange(int(60 * 60.0)) / 60.0
        x = UniformSeries(np.full(len(t), 7.3), 60.0)
        out = butterworth_bandpass(x, spec)
        inner = out.samples[(t > 10) & (t < 50)]
        assert np.max(np.abs(inner)) < 1e-6

    def test_gain_at_geometric_mean(self):
        rate = 60.0
        f0 = np.sqrt(0.2 * 0.4)
        t = np.arange(int(240 * rate)) / rate
        sine = np.sin(2 * np.pi * f0 * t)
        sel = (t > 60) & (t < 180)

        for mode, power in (("zero_phase", 2), ("causal", 1)):
            spec = FilterSpec(phase_mode=mode)
            out = apply_bandpass(sine, spec)
            measured = np.sqrt(2 * np.mean(out[sel] ** 2))
            expected = float(bandpass_gain(spec, f0)[0]) ** power
            assert abs(measured - expected) / expected < 0.02

    def test_stopband_rejection_at_1hz(self):
        spec = FilterSpec()
        rate = 60.0
        t = np.arange(int(120 * rate)) / rate
        out = apply_bandpass(np.sin(2 * np.pi * 1.0 * t), spec)
        sel = (t > 30) & (t < 90)
        atten_db = 20 * np.log10(np.sqrt(2 * np.mean(out[sel] ** 2)))
        assert atten_db < -40

    def test_cutoff_error(self):
        with pytest.raises(ValueError):
            FilterSpec(bp_high=40.0)

    def test_rate_mismatch(self):
        with pytest.raises(ValueError):
            butterworth_bandpass(UniformSeries(np.zeros(100), 30.0), FilterSpec())

    def test_linearity(self):
        rng = np.random.default_rng(9)
        x, y = rng.normal(size=1200), rng.normal(size=1200)
        a, b = 2.5, -1.25
        for func in (lambda v: apply_bandpass(v, FilterSpec()),
                     lambda v: moving_average_filter(v, 90)):
            combined = func(a * x + b * y)
            separate = a * func(x) + b * func(y)
            np.testing.assert_allclose(combined, separate, atol=1e-9, rtol=0)

    def test_zero_phase_has_no_group_delay(self):
        rate = 60.0
        t = np.arange(int(200 * rate)) / rate
        x = np.sin(2 * np.pi * 0.3 * t) + 0.4 * np.sin(2 * np.pi * 0.25 * t + 1.0)
        out = apply_bandpass(x, FilterSpec())
        sel = slice(int(30 * rate), int(170 * rate))
        lags = np.arange(-120, 121)
        xc = [np.dot(x[sel], out[sel.start + k:sel.stop + k]) for k in lags]
        assert lags[int(np.argmax(xc))] == 0


class TestZnormalize:
    def test_two_point(self):
        out, degenerate = znormalize(UniformSeries([0.0, 2.0], 1.0))
        np.testing.assert_allclose(out.samples, [-1.0, 1.0])
        assert not degenerate

    def test_constant_is_degenerate(self):
        out, degenerate = znormalize(UniformSeries([4.0] * 10, 1.0))
        assert degenerate
        np.testing.assert_array_equal(out.samples, np.zeros(10))

    def test_moments(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            v = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 10), 400)
            z, degenerate = znorm(v)
            assert not degenerate
            assert abs(z.mean()) < 1e-9
            assert abs(z.std() - 1.0) < 1e-9


class TestPreprocess:
    def test_equals_manual_composition(self):
        spec = FilterSpec()
        rng = np.random.default_rng(14)
        dts = np.maximum(1 / 62.5 + rng.normal(0, 0.002, 2500), 1e-4)
        ts = np.concatenate(([0.0], np.cumsum(dts)))[:2400]
        vals = np.abs(rng.normal(10, 1, size=(2400, 3)))
        rec = CsiRecord(ts, vals, nominal_rate=62.5)

        got = preprocess_subcarriers(rec, spec)
        for k in range(3):
            h = hampel(UniformSeries(vals[:, k], rec.nominal_rate, ts[0]),
                       spec.hampel_window, spec.hampel_threshold)
            r = resample_linear(ts, h.samples, spec.target_rate)
            m = moving_average(r, spec.ma_window)
            f = butterworth_bandpass(m, spec)
            np.testing.assert_array_equal(got.values[:, k], f.samples)

    def test_clean_sinusoid_channel_recovered(self):
        spec = SynthSpec(duration=90.0, breathing=(BreathSegment(0.0, 15.0, 1.0),),
                         n_subcarriers=4, noise_snr_db=80.0, jitter_std=0.0,
                         outlier_rate=0.0, seed=0,
                         weights=np.array([0.0, 1.0, 0.0, 0.0]),
                         baselines=np.array([10.0, 10.0, 10.0, 10.0]))
        record, truth = generate(spec)
        channels = preprocess_subcarriers(record)
        ch = channels.channel(1)
        sel = (ch.times() > 10) & (ch.times() < 80)
        ref = np.sin(2 * np.pi * 0.25 * ch.times()[sel])
        r = np.corrcoef(ch.samples[sel], ref)[0, 1]
        assert abs(r) > 0.99

    def test_constant_record_goes_to_zero(self):
        ts = np.arange(2500) / 62.5
        rec = CsiRecord(ts, np.full((2500, 2), 9.0), nominal_rate=62.5)
        channels = preprocess_subcarriers(rec)
        t = channels.times()
        inner = channels.values[(t > 10) & (t < t[-1] - 10)]
        assert np.max(np.abs(inner)) < 1e-6


class TestSpectrogram:
    def test_single_tone_ridge(self):
        rate = 60.0
        t = np.arange(int(120 * rate)) / rate
        x = UniformSeries(np.sin(2 * np.pi * 0.3 * t), rate)
        sp = spectrogram(x, 30.0, 0.5)
        bin_width = sp.frequencies[1] - sp.frequencies[0]
        for row in sp.magnitudes:
            assert abs(sp.frequencies[int(np.argmax(row))] - 0.3) <= bin_width

    def test_two_tones_match_dft_oracle(self):
        rate = 60.0
        t = np.arange(int(90 * rate)) / rate
        x = UniformSeries(np.sin(2 * np.pi * 0.2 * t) + np.sin(2 * np.pi * 0.4 * t),
                          rate)
        sp = spectrogram(x, 30.0, 0.0)
        n_w = int(30 * rate)
        frame = x.samples[:n_w] * np.hanning(n_w)
        # explicit DFT sums at the two tone bins
        for f in (0.2, 0.4):
            b = int(round(f * 30))
            expected = abs(np.sum(frame * np.exp(-2j * np.pi * b *
                                                 np.arange(n_w) / n_w)))
            np.testing.assert_allclose(sp.magnitudes[0, b], expected, rtol=1e-10)
            # both appear as dominant ridges over all frames
            assert np.all(sp.magnitudes[:, b] >
                          0.5 * sp.magnitudes.max(axis=1))

    def test_zero_signal(self):
        x = UniformSeries(np.zeros(1200), 60.0)
        sp = spectrogram(x, 10.0, 0.5)
        assert np.all(sp.magnitudes == 0)

    def test_too_short(self):
        with pytest.raises(ValueError):
            spectrogram(UniformSeries(np.zeros(100), 60.0), 10.0)


class TestPartitionWindows:
    def test_exact_tiling(self):
        assert partition_windows(600, 60.0, 5.0) == [(0, 300), (300, 600)]

    def test_short_tail_merged(self):
        wins = partition_windows(700, 60.0, 5.0)
        assert wins == [(0, 300), (300, 700)]

    def test_long_tail_kept(self):
        wins = partition_windows(850, 60.0, 5.0)
        assert wins == [(0, 300), (300, 600), (600, 850)]

    def test_short_series_single_window(self):
        assert partition_windows(100, 60.0, 5.0) == [(0, 100)]
