"""Deterministic generators for keys, payloads, operation types, and lengths.

All randomness flows from SplitMix64 streams (documented constants, no
OS entropy), so the full operation trace of a run is a pure function of
(config, seed, trial).  Each concern draws from its own derived
sub-seed: exhausting one stream never perturbs another.
"""

from __future__ import annotations

import sys
from array import array
from bisect import bisect_right

import numpy as np

from ivsbench.core import MASK64, MIX_OPS, OpType, ValueSizeHistogram, fnv1a64, mix64

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_B = 0xBF58476D1CE4E5B9
_MIX_C = 0x94D049BB133111EB

# 64-character payload alphabet: 6 low bits of each output byte index it.
_ALPHABET = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
_TRANSLATE = bytes(_ALPHABET[i & 0x3F] for i in range(256))


def derive_seed(seed: int, *parts: object) -> int:
    """Fold string/int labels into ``seed`` to name an independent stream."""
    h = seed & MASK64
    for part in parts:
        h = mix64(h ^ fnv1a64(str(part).encode("utf-8")))
    return h


class SplitMix64:
    """SplitMix64 stream (Steele & Vigna 2014): 64-bit state, additive
    constant 0x9E3779B97F4A7C15, two xor-multiply finalizer rounds."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX_B) & MASK64
        z = ((z ^ (z >> 27)) * _MIX_C) & MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n), exact via rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n


class UniformKeys:
    """Uniform ordinal chooser over [0, item_count)."""

    def __init__(self, item_count: int, seed: int) -> None:
        if item_count < 1:
            raise ValueError("item_count must be at least 1")
        self.item_count = item_count
        self._rng = SplitMix64(seed)

    def next(self) -> int:
        return self._rng.next_below(self.item_count)


class ZipfianKeys:
    """Zipfian ordinal chooser: rank-r popularity proportional to 1/r^theta.

    Sampling inverts the exact cumulative distribution over the
    item_count ranks (zeta normalizer precomputed at construction), so
    empirical frequencies match the analytic PMF to sampling noise.
    With ``scramble`` on, ranks are dispersed across the keyspace via
    mix64(rank) % item_count; the map is stable and collisions are
    accepted, which merges a little probability mass between indices.
    """

    def __init__(self, item_count: int, theta: float, seed: int, scramble: bool = True) -> None:
        if item_count < 1:
            raise ValueError("item_count must be at least 1")
        if not 0.0 < theta < 1.0:
            raise ValueError(f"zipfian theta must be in (0, 1), got {theta}")
        self.item_count = item_count
        self.theta = theta
        self.scramble = scramble
        weights = np.arange(1, item_count + 1, dtype=np.float64) ** -theta
        self.zeta = float(weights.sum())
        cdf = np.cumsum(weights) / self.zeta
        cdf[-1] = 1.0
        self._cdf = array("d", cdf)
        self._rng = SplitMix64(seed)

    def next(self) -> int:
        rank = bisect_right(self._cdf, self._rng.next_float())
        if self.scramble:
            return mix64(rank) % self.item_count
        return rank


def make_key_chooser(distribution, item_count: int, seed: int, scramble: bool = True):
    if distribution.kind == "uniform":
        return UniformKeys(item_count, seed)
    return ZipfianKeys(item_count, distribution.theta, seed, scramble)


class ValueGenerator:
    """Printable payload bytes, a pure function of (seed, key, field, length).

    An extend *replaces* a field with a freshly generated longer value;
    no prefix relationship between lengths is promised.  Content is the
    SplitMix64 word stream keyed by the inputs, serialized little-endian
    and mapped onto a 64-character alphabet; short values take a scalar
    path and long ones a vectorized path, producing identical bytes.
    """

    _SCALAR_LIMIT = 256  # below this, Python ints beat numpy call overhead

    def __init__(self, seed: int) -> None:
        self._seed = seed & MASK64
        self._idx_golden = np.arange(1, 4097, dtype=np.uint64) * np.uint64(_GOLDEN)

    def value(self, key_ordinal: int, field_index: int, length: int) -> bytes:
        if length < 0:
            raise ValueError("length must be non-negative")
        if length == 0:
            return b""
        state = mix64(self._seed ^ key_ordinal)
        state = mix64(state ^ field_index)
        state = mix64(state ^ length)
        nwords = (length + 7) // 8
        if length <= self._SCALAR_LIMIT:
            words = bytearray()
            s = state
            for _ in range(nwords):
                s = (s + _GOLDEN) & MASK64
                z = ((s ^ (s >> 30)) * _MIX_B) & MASK64
                z = ((z ^ (z >> 27)) * _MIX_C) & MASK64
                words += (z ^ (z >> 31)).to_bytes(8, "little")
            return bytes(words[:length]).translate(_TRANSLATE)
        if nwords > len(self._idx_golden):
            self._idx_golden = np.arange(1, nwords + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        z = self._idx_golden[:nwords] + np.uint64(state)
        t = z >> np.uint64(30)
        np.bitwise_xor(z, t, out=z)
        np.multiply(z, np.uint64(_MIX_B), out=z)
        np.right_shift(z, np.uint64(27), out=t)
        np.bitwise_xor(z, t, out=z)
        np.multiply(z, np.uint64(_MIX_C), out=z)
        np.right_shift(z, np.uint64(31), out=t)
        np.bitwise_xor(z, t, out=z)
        if sys.byteorder == "little":
            raw = z.view(np.uint8)[:length].tobytes()
        else:
            raw = z.astype("<u8").view(np.uint8)[:length].tobytes()
        return raw.translate(_TRANSLATE)


class OperationMixSampler:
    """Draws run-phase operation types per configured proportions."""

    def __init__(self, mix: dict[OpType, float], seed: int) -> None:
        self._ops: list[OpType] = []
        self._cum: list[float] = []
        total = 0.0
        for op in MIX_OPS:
            p = mix.get(op, 0.0)
            if p < 0:
                raise ValueError(f"negative proportion for {op.value}")
            if p > 0:
                total += p
                self._ops.append(op)
                self._cum.append(total)
        if not self._ops or abs(total - 1.0) > 1e-9:
            raise ValueError(f"mix proportions sum to {total!r}, expected 1")
        self._cum[-1] = 1.0
        self._rng = SplitMix64(seed)

    def next(self) -> OpType:
        u = self._rng.next_float()
        for op, c in zip(self._ops, self._cum):
            if u < c:
                return op
        return self._ops[-1]


class HistogramLengthSampler:
    """Field lengths drawn from a frozen size histogram.

    A bin is chosen with probability count/total and the bin's lower
    edge is returned (exact when lengths are multiples of the bin
    width, as with the default extend delta), clamped to the cap.
    """

    def __init__(self, source: ValueSizeHistogram, seed: int, max_length: int) -> None:
        if source.total == 0:
            raise ValueError("empty histogram")
        self._bin_width = source.bin_width
        self._bins: list[int] = []
        self._cum: list[int] = []
        running = 0
        for b in sorted(source.counts):
            running += source.counts[b]
            self._bins.append(b)
            self._cum.append(running)
        self._total = running
        self._max_length = max_length
        self._rng = SplitMix64(seed)

    def next(self) -> int:
        v = self._rng.next_below(self._total)
        i = bisect_right(self._cum, v)
        return min(self._bins[i] * self._bin_width, self._max_length)


class ConstantLengthSampler:
    """Degenerate sampler: every length equals the configured constant."""

    def __init__(self, length: int) -> None:
        if length < 0:
            raise ValueError("length must be non-negative")
        self.length = length

    def next(self) -> int:
        return self.length
