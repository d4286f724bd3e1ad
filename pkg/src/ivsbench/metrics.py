"""Latency recording, throughput, and cross-trial aggregation.

Latencies are recorded in integer nanoseconds into a log-bucketed
histogram (power-of-two buckets with 1024 linear sub-buckets, i.e.
better than 0.1% relative resolution) covering 1 microsecond to 100
seconds.  Out-of-range samples are clamped and tallied separately.
Quantiles are bucket-accurate; means are exact because sample sums are
integers.
"""

from __future__ import annotations

import base64
import math
import struct
from dataclasses import dataclass

LOWEST_NS = 1_000  # 1 us
HIGHEST_NS = 100 * 10**9  # 100 s

_UNIT_MAG = 0  # 1 ns base units: every value >= 1024 ns lands in a
# bucket whose width is at most value/1024 (better than 3 sig digits)
_SUB_BITS = 11  # 2048 sub-buckets per power of two
_SUB_COUNT = 1 << _SUB_BITS
_SUB_HALF = _SUB_COUNT >> 1


def _index(ns: int) -> int:
    m = ns >> _UNIT_MAG
    if m < _SUB_COUNT:
        return m
    shift = m.bit_length() - _SUB_BITS
    return shift * _SUB_HALF + (m >> shift)


def _bounds(index: int) -> tuple[int, int]:
    """Half-open value range [lo, hi) covered by a bucket index."""
    if index < _SUB_COUNT:
        return index << _UNIT_MAG, (index + 1) << _UNIT_MAG
    shift = (index - _SUB_COUNT) // _SUB_HALF + 1
    sub = index - shift * _SUB_HALF
    lo = sub << (_UNIT_MAG + shift)
    return lo, lo + (1 << (_UNIT_MAG + shift))


_COUNTS_LEN = _index(HIGHEST_NS) + 1


@dataclass
class LatencySummary:
    count: int
    mean_us: float
    min_us: float
    max_us: float
    p95_us: float
    p99_us: float

    def as_dict(self) -> dict[str, float]:
        return {
            "count": self.count,
            "mean_us": self.mean_us,
            "min_us": self.min_us,
            "max_us": self.max_us,
            "p95_us": self.p95_us,
            "p99_us": self.p99_us,
        }


class LatencyHistogram:
    """Bounded-range latency recorder with bucket-accurate quantiles."""

    __slots__ = ("_counts", "count", "sum_ns", "min_ns", "max_ns", "under_range", "over_range")

    def __init__(self) -> None:
        self._counts = [0] * _COUNTS_LEN
        self.count = 0
        self.sum_ns = 0
        self.min_ns = 0
        self.max_ns = 0
        self.under_range = 0
        self.over_range = 0

    def record(self, duration_ns: int) -> None:
        if duration_ns < LOWEST_NS:
            self.under_range += 1
            duration_ns = LOWEST_NS
        elif duration_ns > HIGHEST_NS:
            self.over_range += 1
            duration_ns = HIGHEST_NS
        self._counts[_index(duration_ns)] += 1
        if self.count == 0:
            self.min_ns = duration_ns
            self.max_ns = duration_ns
        else:
            if duration_ns < self.min_ns:
                self.min_ns = duration_ns
            if duration_ns > self.max_ns:
                self.max_ns = duration_ns
        self.count += 1
        self.sum_ns += duration_ns

    def mean_ns(self) -> float:
        if self.count == 0:
            raise ValueError("empty histogram")
        return self.sum_ns / self.count

    def quantile_ns(self, q: float) -> int:
        """Bucket midpoint at quantile ``q``; within one bucket width of
        the exact order statistic."""
        if self.count == 0:
            raise ValueError("empty histogram")
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must be in [0, 1]")
        target = max(1, math.ceil(q * self.count))
        cum = 0
        for i, n in enumerate(self._counts):
            if n:
                cum += n
                if cum >= target:
                    lo, hi = _bounds(i)
                    return lo + (hi - lo) // 2
        raise AssertionError("count drifted from bucket totals")

    def summarize(self) -> LatencySummary:
        if self.count == 0:
            raise ValueError("empty histogram")
        return LatencySummary(
            count=self.count,
            mean_us=self.sum_ns / self.count / 1e3,
            min_us=self.min_ns / 1e3,
            max_us=self.max_ns / 1e3,
            p95_us=self.quantile_ns(0.95) / 1e3,
            p99_us=self.quantile_ns(0.99) / 1e3,
        )

    def merge(self, other: "LatencyHistogram") -> None:
        for i, n in enumerate(other._counts):
            if n:
                self._counts[i] += n
        if other.count:
            if self.count == 0:
                self.min_ns = other.min_ns
                self.max_ns = other.max_ns
            else:
                self.min_ns = min(self.min_ns, other.min_ns)
                self.max_ns = max(self.max_ns, other.max_ns)
            self.count += other.count
            self.sum_ns += other.sum_ns
        self.under_range += other.under_range
        self.over_range += other.over_range

    # -- bucket-array export --------------------------------------------
    #
    # Base64 of: header '<4sHQQQQQQ' = magic b'IVSH', version, count,
    # sum_ns, min_ns, max_ns, under_range, over_range, followed by one
    # '<IQ' (bucket index, bucket count) pair per occupied bucket.

    def to_base64(self) -> str:
        blob = bytearray(
            struct.pack(
                "<4sHQQQQQQ",
                b"IVSH",
                1,
                self.count,
                self.sum_ns,
                self.min_ns,
                self.max_ns,
                self.under_range,
                self.over_range,
            )
        )
        for i, n in enumerate(self._counts):
            if n:
                blob += struct.pack("<IQ", i, n)
        return base64.b64encode(bytes(blob)).decode("ascii")

    @classmethod
    def from_base64(cls, text: str) -> "LatencyHistogram":
        blob = base64.b64decode(text.encode("ascii"))
        head = struct.calcsize("<4sHQQQQQQ")
        magic, version, count, sum_ns, mn, mx, under, over = struct.unpack_from("<4sHQQQQQQ", blob)
        if magic != b"IVSH" or version != 1:
            raise ValueError("not a histogram export")
        hist = cls()
        hist.count = count
        hist.sum_ns = sum_ns
        hist.min_ns = mn
        hist.max_ns = mx
        hist.under_range = under
        hist.over_range = over
        for off in range(head, len(blob), struct.calcsize("<IQ")):
            i, n = struct.unpack_from("<IQ", blob, off)
            hist._counts[i] = n
        return hist


def throughput(op_count: int, wall_seconds: float) -> float:
    """Operations per second over phase wall-clock time."""
    if wall_seconds <= 0:
        raise ValueError("wall time must be positive")
    return op_count / wall_seconds


@dataclass
class AggregateRow:
    epoch: int
    metric: str
    mean: float
    band_lo: float | None
    band_hi: float | None

    @property
    def stderr(self) -> float | None:
        if self.band_hi is None:
            return None
        return (self.band_hi - self.mean) / 1.96


@dataclass
class TrialAggregate:
    """Per-epoch, per-metric mean with a 1.96 x stderr confidence band."""

    trials: int
    rows: list[AggregateRow]

    def row(self, epoch: int, metric: str) -> AggregateRow:
        for r in self.rows:
            if r.epoch == epoch and r.metric == metric:
                return r
        raise KeyError(f"no row for epoch {epoch}, metric {metric!r}")

    def metrics(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.metric not in seen:
                seen.append(r.metric)
        return seen


def aggregate_trials(metrics_by_trial: list[list[dict[str, float]]]) -> TrialAggregate:
    """Aggregate per-epoch metric dicts across trials.

    ``metrics_by_trial[t][e]`` maps metric name -> value for trial t,
    epoch e.  All trials must report the same number of epochs.  With a
    single trial the band is omitted (stderr undefined).
    """
    if not metrics_by_trial:
        raise ValueError("no trials to aggregate")
    epochs = len(metrics_by_trial[0])
    for t, per_epoch in enumerate(metrics_by_trial):
        if len(per_epoch) != epochs:
            raise ValueError(
                f"ragged trial lengths: trial {t} has {len(per_epoch)} epochs, expected {epochs}"
            )
    rows: list[AggregateRow] = []
    for e in range(epochs):
        names: list[str] = []
        for per_epoch in metrics_by_trial:
            for name in per_epoch[e]:
                if name not in names:
                    names.append(name)
        for name in names:
            values = [t[e][name] for t in metrics_by_trial if name in t[e]]
            mean = sum(values) / len(values)
            if len(values) < 2:
                rows.append(AggregateRow(e, name, mean, None, None))
                continue
            var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
            stderr = math.sqrt(var) / math.sqrt(len(values))
            half = 1.96 * stderr
            rows.append(AggregateRow(e, name, mean, mean - half, mean + half))
    return TrialAggregate(trials=len(metrics_by_trial), rows=rows)
