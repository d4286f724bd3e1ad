"""Latency histogram, throughput, and aggregation tests."""

import math

import pytest

from ivsbench.genkit import SplitMix64
from ivsbench.metrics import (
    HIGHEST_NS,
    LOWEST_NS,
    AggregateRow,
    LatencyHistogram,
    _bounds,
    _index,
    aggregate_trials,
    throughput,
)

US = 1_000  # ns
MS = 1_000_000


def bucket_width_at(ns: int) -> int:
    lo, hi = _bounds(_index(ns))
    return hi - lo


class TestBucketMath:
    def test_index_bounds_consistent(self):
        rng = SplitMix64(5)
        for _ in range(20_000):
            v = LOWEST_NS + rng.next_below(HIGHEST_NS - LOWEST_NS + 1)
            lo, hi = _bounds(_index(v))
            assert lo <= v < hi

    def test_resolution_three_sig_digits(self):
        # relative bucket width stays under 0.1% beyond the first bucket run
        for v in (10 * US, 1 * MS, 100 * MS, 10**9, HIGHEST_NS):
            assert bucket_width_at(v) / v < 1e-3


class TestRecord:
    def test_single_sample(self):
        h = LatencyHistogram()
        h.record(100 * US)
        assert h.mean_ns() == 100 * US
        assert abs(h.quantile_ns(0.99) - 100 * US) <= bucket_width_at(100 * US)

    def test_sorted_oracle_small(self):
        h = LatencyHistogram()
        samples = [i * US for i in range(1, 101)]
        for s in samples:
            h.record(s)
        exact_p99 = sorted(samples)[math.ceil(0.99 * len(samples)) - 1]
        assert abs(h.quantile_ns(0.99) - exact_p99) <= bucket_width_at(exact_p99)

    def test_empty_quantile_errors(self):
        with pytest.raises(ValueError):
            LatencyHistogram().quantile_ns(0.5)
        with pytest.raises(ValueError):
            LatencyHistogram().summarize()

    def test_clamping_counted(self):
        h = LatencyHistogram()
        h.record(10)  # below 1 us
        h.record(HIGHEST_NS * 2)
        assert h.under_range == 1 and h.over_range == 1
        assert h.count == 2
        assert h.min_ns == LOWEST_NS and h.max_ns == HIGHEST_NS


class TestSummarize:
    def test_constant_samples(self):
        h = LatencyHistogram()
        for _ in range(50):
            h.record(2 * MS)
        s = h.summarize()
        assert s.min_us == s.max_us == 2000.0
        assert s.mean_us == 2000.0
        assert abs(s.p99_us - 2000.0) <= bucket_width_at(2 * MS) / US

    def test_two_samples_mean(self):
        h = LatencyHistogram()
        h.record(1 * MS)
        h.record(3 * MS)
        assert h.summarize().mean_us == 2000.0

    def test_large_uniform_sorted_oracle(self):
        rng = SplitMix64(42)
        h = LatencyHistogram()
        samples = []
        for _ in range(100_000):
            v = LOWEST_NS + rng.next_below(50 * MS)
            samples.append(v)
            h.record(v)
        samples.sort()
        for q in (0.95, 0.99):
            exact = samples[math.ceil(q * len(samples)) - 1]
            assert abs(h.quantile_ns(q) - exact) <= bucket_width_at(exact)

    def test_mean_exact(self):
        # integer nanosecond sums make the histogram mean exact
        rng = SplitMix64(8)
        h = LatencyHistogram()
        samples = [LOWEST_NS + rng.next_below(10 * MS) for _ in range(10_000)]
        for s in samples:
            h.record(s)
        assert h.mean_ns() == sum(samples) / len(samples)


class TestMerge:
    def test_merge_associativity(self):
        rng = SplitMix64(3)
        parts = []
        for _ in range(3):
            h = LatencyHistogram()
            for _ in range(5000):
                h.record(LOWEST_NS + rng.next_below(20 * MS))
            parts.append(h)

        def merged(order):
            out = LatencyHistogram()
            for i in order:
                out.merge(parts[i])
            return out.summarize()

        assert merged([0, 1, 2]) == merged([2, 0, 1]) == merged([1, 2, 0])

    def test_quantile_monotonicity(self):
        rng = SplitMix64(4)
        h = LatencyHistogram()
        for _ in range(20_000):
            h.record(LOWEST_NS + rng.next_below(90 * MS))
        qs = [i / 20 for i in range(1, 21)]
        values = [h.quantile_ns(q) for q in qs]
        assert values == sorted(values)


class TestBase64Export:
    def test_round_trip(self):
        rng = SplitMix64(6)
        h = LatencyHistogram()
        for _ in range(3000):
            h.record(LOWEST_NS + rng.next_below(5 * MS))
        back = LatencyHistogram.from_base64(h.to_base64())
        assert back.summarize() == h.summarize()
        assert back.count == h.count and back.sum_ns == h.sum_ns


class TestThroughput:
    def test_simple(self):
        assert throughput(100_000, 10.0) == 10_000.0

    def test_zero_ops(self):
        assert throughput(0, 5.0) == 0.0

    def test_zero_wall_rejected(self):
        with pytest.raises(ValueError):
            throughput(10, 0.0)


class TestAggregateTrials:
    def test_hand_oracle(self):
        # trials {10, 12, 14}: mean 12, stderr 2/sqrt(3), band 12 +/- 2.263
        agg = aggregate_trials([[{"throughput": 10.0}], [{"throughput": 12.0}], [{"throughput": 14.0}]])
        row = agg.row(0, "throughput")
        assert row.mean == 12.0
        assert row.stderr == pytest.approx(2.0 / math.sqrt(3), abs=1e-12)
        assert row.band_lo == pytest.approx(12 - 2.2632, abs=1e-3)
        assert row.band_hi == pytest.approx(12 + 2.2632, abs=1e-3)

    def test_single_trial_band_omitted(self):
        agg = aggregate_trials([[{"x": 1.0}, {"x": 2.0}]])
        for epoch in (0, 1):
            row = agg.row(epoch, "x")
            assert row.band_lo is None and row.band_hi is None and row.stderr is None

    def test_identical_trials_zero_width(self):
        agg = aggregate_trials([[{"x": 5.0}]] * 4)
        row = agg.row(0, "x")
        assert row.band_lo == row.band_hi == row.mean == 5.0

    def test_ragged_rejected(self):
        with pytest.raises(ValueError):
            aggregate_trials([[{"x": 1.0}], [{"x": 1.0}, {"x": 2.0}]])

    def test_metric_union(self):
        agg = aggregate_trials([[{"a": 1.0, "b": 2.0}], [{"a": 3.0}]])
        assert agg.row(0, "a").mean == 2.0
        assert agg.row(0, "b").mean == 2.0  # present in one trial only

    def test_row_lookup_missing(self):
        agg = aggregate_trials([[{"a": 1.0}]])
        with pytest.raises(KeyError):
            agg.row(0, "zzz")

    def test_stderr_derived_from_band(self):
        row = AggregateRow(0, "m", 10.0, 8.04, 11.96)
        assert row.stderr == pytest.approx(1.0)
