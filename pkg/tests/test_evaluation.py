import json
import math

import numpy as np
import pytest

from csibreath.data import UniformSeries
from csibreath.evaluation import (EvaluationReport, WindowCorrelation, align,
                                  build_record_report, build_report,
                                  epoch_error_stats, histogram_csv_text,
                                  mad_rr, overlap_pair, pearson,
                                  render_summary_text, summary_from_dict,
                                  summary_to_dict, windowed_mean_correlation)


def band_limited(rng, n, rate=60.0):
    t = np.arange(n) / rate
    x = np.zeros(n)
    for f in (0.22, 0.28, 0.35):
        x += rng.uniform(0.5, 1.5) * np.sin(2 * np.pi * f * t + rng.uniform(0, 7))
    return x


class TestAlign:
    def test_known_shift(self):
        rate = 60.0
        x = band_limited(np.random.default_rng(0), int(90 * rate))
        a = UniformSeries(x, rate)
        shift_n = int(2.0 * rate)
        b = UniformSeries(x[:-shift_n], rate, start_time=2.0)  # b(t) = a(t - 2)
        lag = align(a, b, max_lag=5.0)
        assert abs(lag - 2.0) <= 1 / rate

    def test_self_alignment_is_zero(self):
        a = UniformSeries(band_limited(np.random.default_rng(1), 3600), 60.0)
        assert align(a, a, max_lag=5.0) == pytest.approx(0.0, abs=1e-12)

    def test_noisy_monte_carlo(self):
        rate = 60.0
        shift = 1.35
        shift_n = int(round(shift * rate))
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = band_limited(rng, int(50 * rate))
            sigma = x.std() / math.sqrt(10)  # SNR 10 dB
            a = UniformSeries(x + rng.normal(0, sigma, len(x)), rate)
            shifted = x[:-shift_n] + rng.normal(0, sigma, len(x) - shift_n)
            b = UniformSeries(shifted, rate, start_time=shift_n / rate)
            hits += abs(align(a, b, max_lag=3.0) - shift) < 0.05
        assert hits == 100

    def test_polarity_insensitive(self):
        a = UniformSeries(band_limited(np.random.default_rng(2), 3600), 60.0)
        b = UniformSeries(-a.samples, 60.0)
        assert abs(align(a, b, max_lag=3.0)) <= 1 / 60.0

    def test_random_shift_property(self):
        # the same waveform restarted at t = k/rate is delayed by exactly that
        rate = 60.0
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = band_limited(rng, int(60 * rate))
            k = int(rng.integers(-150, 151))
            b = UniformSeries(x, rate, start_time=k / rate)
            lag = align(UniformSeries(x, rate), b, max_lag=4.0)
            assert abs(lag - k / rate) <= 1 / rate

    def test_insufficient_overlap(self):
        a = UniformSeries(np.sin(np.arange(600) / 10), 60.0)
        b = UniformSeries(np.sin(np.arange(600) / 10), 60.0)
        with pytest.raises(ValueError):
            align(a, b, max_lag=1.0, min_overlap=30.0)

    def test_overlap_pair_crops_to_common_grid(self):
        rate = 10.0
        a = UniformSeries(np.arange(100.0), rate, 0.0)
        b = UniformSeries(np.arange(80.0), rate, 3.0)
        a_c, b_c = overlap_pair(a, b, lag=0.0)
        assert len(a_c) == len(b_c) == 70
        assert a_c.start_time == pytest.approx(3.0)
        np.testing.assert_array_equal(a_c.samples, np.arange(30.0, 100.0))
        np.testing.assert_array_equal(b_c.samples, np.arange(70.0))


class TestPearson:
    def test_identical(self):
        v = np.array([1.0, 3.0, 2.0, 5.0])
        assert pearson(v, v) == pytest.approx(1.0)

    def test_negated(self):
        v = np.array([1.0, 3.0, 2.0, 5.0])
        assert pearson(v, -v) == pytest.approx(-1.0)

    def test_orthogonal_sin_cos(self):
        t = np.arange(600) / 60.0
        a = np.sin(2 * np.pi * 0.5 * t)
        b = np.cos(2 * np.pi * 0.5 * t)
        assert abs(pearson(a, b)) < 1e-9

    def test_degenerate_is_nan(self):
        assert math.isnan(pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))

    def test_affine_invariance_and_negation(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=200), rng.normal(size=200)
        r = pearson(a, b)
        assert pearson(3.0 * a + 1.0, b) == pytest.approx(r, abs=1e-12)
        assert pearson(a, 0.25 * b - 7.0) == pytest.approx(r, abs=1e-12)
        assert pearson(-a, b) == pytest.approx(-r, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])


class TestWindowedCorrelation:
    def test_identical_signals(self):
        rng = np.random.default_rng(5)
        x = UniformSeries(band_limited(rng, 3000), 60.0)
        mean_r, windows = windowed_mean_correlation(x, x, 10.0)
        assert mean_r == pytest.approx(1.0)
        assert len(windows) == 5

    def test_half_matching_half_orthogonal(self):
        rate = 60.0
        n_w = int(10 * rate)
        t = np.arange(n_w) / rate
        sin_w = np.sin(2 * np.pi * 0.3 * t)
        cos_w = np.cos(2 * np.pi * 0.3 * t)
        sig = UniformSeries(np.concatenate([sin_w, sin_w, cos_w, cos_w]), rate)
        ref = UniformSeries(np.concatenate([sin_w] * 4), rate)
        mean_r, _ = windowed_mean_correlation(sig, ref, 10.0)
        assert mean_r == pytest.approx(0.5, abs=1e-9)

    def test_degenerate_windows_excluded(self):
        rate = 60.0
        n_w = int(10 * rate)
        rng = np.random.default_rng(6)
        live = rng.normal(size=n_w)
        sig = UniformSeries(np.concatenate([live, np.zeros(n_w)]), rate)
        ref = UniformSeries(np.concatenate([live, np.zeros(n_w)]), rate)
        mean_r, windows = windowed_mean_correlation(sig, ref, 10.0)
        assert mean_r == pytest.approx(1.0)
        assert math.isnan(windows[1].r)


class TestMadAndStats:
    def test_hand_computed(self):
        assert mad_rr([12, 11, 10], [12, 10, 12]) == pytest.approx(1.0)
        assert mad_rr([5, 5], [5, 5]) == 0.0

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(7)
        a = rng.integers(5, 12, 30)
        b = rng.integers(5, 12, 30)
        assert mad_rr(a, b) == mad_rr(b, a) >= 0
        assert mad_rr(a, a) == 0.0

    def test_epoch_error_stats_enumeration(self):
        ref = np.full(10, 10)
        sig = ref + np.array([0, 0, 1, 0, -1, 0, 0, 2, 0, 0])
        pct1, pct2, hist = epoch_error_stats(ref, sig)
        assert pct1 == pytest.approx(30.0)
        assert pct2 == pytest.approx(10.0)
        assert hist == {-1: 1, 0: 7, 1: 1, 2: 1}

    def test_all_zero(self):
        pct1, pct2, hist = epoch_error_stats([7, 8], [7, 8])
        assert pct1 == 0.0 and pct2 == 0.0 and hist == {0: 2}


def table_iii_counts():
    """Stand-in per-record count vectors reproducing the published per-subject
    MAD values (subject 3's side record needs 11 epochs to make 0.36)."""
    def rec(subject, posture, diffs):
        n = len(diffs)
        ref = [10] * n
        sig = [10 + d for d in diffs]
        return subject, posture, ref, sig

    def spread(total, n=10, cap=1):
        out = []
        left = total
        for _ in range(n):
            d = min(cap, left)
            out.append(d)
            left -= d
        return out

    data = [
        rec("1", "supine", spread(6)), rec("1", "side", spread(7, cap=2)),
        rec("1", "prone", spread(8, cap=2)),
        rec("2", "supine", spread(2)), rec("2", "side", spread(0)),
        rec("2", "prone", spread(1)),
        rec("3", "supine", spread(5)), rec("3", "side", spread(4, n=11)),
        rec("3", "prone", spread(8, cap=2)),
        rec("4", "supine", spread(2)), rec("4", "side", spread(4, cap=2)),
        rec("4", "prone", spread(4, cap=2)),
        rec("5", "supine", spread(2)), rec("5", "side", spread(2, cap=2)),
        rec("5", "prone", spread(4, cap=2)),
    ]
    return data


class TestBuildReport:
    def _report(self, subject, posture, ref, sig):
        return build_record_report(
            record_id=f"s{subject}_{posture}", subject=subject, posture=posture,
            method="pca", counts_ref=ref, counts_sig=sig, mean_correlation=0.9,
            window_correlations=[WindowCorrelation(0.0, 10.0, 0.9)],
            lag_applied=0.0)

    def test_single_record_mean_equals_row(self):
        s = build_report([self._report("1", "supine", [10, 10], [11, 10])])
        assert s.mad_table.row_labels == ("1",)
        assert s.mad_table.cells[0][0] == pytest.approx(0.5)
        assert s.mad_table.mean_row[0] == pytest.approx(0.5)

    def test_mean_row_is_columnwise_mean(self):
        rng = np.random.default_rng(8)
        reports = []
        for subject in "12345":
            for posture in ("supine", "side", "prone"):
                ref = rng.integers(6, 12, 10)
                sig = ref + rng.integers(-2, 3, 10)
                reports.append(self._report(subject, posture, list(ref), list(sig)))
        s = build_report(reports)
        for table in (s.mad_table, s.pct_ge1_table, s.pct_ge2_table):
            for j in range(len(table.col_labels)):
                col = [row[j] for row in table.cells]
                assert table.mean_row[j] == pytest.approx(np.mean(col), abs=1e-9)

    def test_published_mad_means_reproduced(self):
        reports = [self._report(s, p, ref, sig)
                   for s, p, ref, sig in table_iii_counts()]
        s = build_report(reports)
        assert s.mad_table.col_labels == ("supine", "side", "prone", "all")
        rounded = [round(v, 2) for v in s.mad_table.mean_row]
        assert rounded == [0.34, 0.33, 0.50, 0.39]

    def test_subject2_style_epoch_errors(self):
        # one posture with 2 one-cycle errors, one clean, one with 1 error:
        # overall 10% of 30 epochs off by >= 1 and none by >= 2
        reports = [
            self._report("2", "supine", [10] * 10, [11, 11] + [10] * 8),
            self._report("2", "side", [10] * 10, [10] * 10),
            self._report("2", "prone", [10] * 10, [9] + [10] * 9),
        ]
        s = build_report(reports)
        row = s.pct_ge1_table.cells[0]
        assert [round(v) for v in row] == [20, 0, 10, 10]
        assert all(v == 0 for v in s.pct_ge2_table.cells[0])
        mad_row = s.mad_table.cells[0]
        assert [round(v, 2) for v in mad_row] == [0.2, 0.0, 0.1, 0.1]

    def test_json_round_trip_lossless(self):
        reports = [self._report(s, p, ref, sig)
                   for s, p, ref, sig in table_iii_counts()]
        s = build_report(reports)
        text = json.dumps(summary_to_dict(s), sort_keys=True)
        back = summary_from_dict(json.loads(text))
        assert back == s
        assert json.dumps(summary_to_dict(back), sort_keys=True) == text

    def test_record_report_round_trip(self):
        rep = self._report("3", "prone", [10, 11, 9], [10, 12, 9])
        assert EvaluationReport.from_dict(rep.to_dict()) == rep

    def test_render_text_contains_tables(self):
        s = build_report([self._report("1", "supine", [10, 10], [11, 10])])
        text = render_summary_text(s)
        assert "subject" in text and "mean" in text and "supine" in text

    def test_histogram_csv(self):
        assert histogram_csv_text({0: 5, -1: 2}) == "delta,count\n-1,2\n0,5\n"

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            EvaluationReport(record_id="x", subject="1", posture="supine",
                             method="pca", n_epochs=2, mean_correlation=0.5,
                             window_correlations=(), mad=-0.1, pct_ge1=0.0,
                             pct_ge2=0.0, histogram={0: 2})
        with pytest.raises(ValueError):
            EvaluationReport(record_id="x", subject="1", posture="supine",
                             method="pca", n_epochs=2, mean_correlation=0.5,
                             window_correlations=(), mad=0.0, pct_ge1=10.0,
                             pct_ge2=20.0, histogram={0: 2})
        with pytest.raises(ValueError):
            EvaluationReport(record_id="x", subject="1", posture="supine",
                             method="pca", n_epochs=3, mean_correlation=0.5,
                             window_correlations=(), mad=0.0, pct_ge1=0.0,
                             pct_ge2=0.0, histogram={0: 2})
