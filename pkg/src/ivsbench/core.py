"""Domain model shared by the whole harness.

Records are identified by a hash-ordered key string, their per-field
byte lengths live in a client-side :class:`LengthLedger` (the ground
truth for extend deltas, volume accounting, and size histograms), and
:class:`ExperimentConfig` carries every experiment knob.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

DEFAULT_BIN_WIDTH = 100


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit scramble.

    Constants are Steele & Vigna's; being a bijection makes every
    derived key rendering injective.
    """
    x &= MASK64
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash, used for label-based seed derivation."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def render_key(index: int) -> str:
    """Render record ordinal ``index`` as its stable key string.

    The ordinal is scrambled through :func:`mix64` and zero-padded to
    20 digits, so lexicographic key order equals numeric order of the
    scrambled value and popular ordinals are dispersed across the
    keyspace. The scramble is bijective, hence rendering is injective.
    """
    if index < 0:
        raise ValueError(f"record index must be non-negative, got {index}")
    return f"user{mix64(index):020d}"


class OpType(str, Enum):
    READ = "read"
    UPDATE = "update"
    INSERT = "insert"
    SCAN = "scan"
    DELETE = "delete"
    EXTEND = "extend"


# Operation mix is defined over these five; EXTEND is phase-implicit.
MIX_OPS = (OpType.READ, OpType.UPDATE, OpType.INSERT, OpType.SCAN, OpType.DELETE)


class Mode(str, Enum):
    MAIN_RUN = "main-run"
    CLEAN_RUN = "clean-run"
    SPREAD_BASELINE = "spread-baseline"
    AVERAGE_BASELINE = "average-baseline"


@dataclass(frozen=True)
class KeyDistribution:
    """Key-choice distribution: ``uniform`` or ``zipfian`` (with theta)."""

    kind: str
    theta: float = 0.99

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "zipfian"):
            raise ValueError(f"unknown distribution kind: {self.kind!r}")
        if self.kind == "zipfian" and not 0.0 < self.theta < 1.0:
            raise ValueError(f"zipfian theta must be in (0, 1), got {self.theta}")

    @classmethod
    def uniform(cls) -> "KeyDistribution":
        return cls("uniform")

    @classmethod
    def zipfian(cls, theta: float = 0.99) -> "KeyDistribution":
        return cls("zipfian", theta)


@dataclass(frozen=True)
class RecordSchema:
    """Shape of every record: field count, initial/extend/max field bytes."""

    field_count: int = 10
    initial_field_length: int = 100
    extend_delta: int = 100
    max_field_length: int = 1_600_000

    def __post_init__(self) -> None:
        if self.field_count <= 0:
            raise ValueError("field_count must be positive")
        if self.initial_field_length < 0:
            raise ValueError("initial_field_length must be non-negative")
        if self.extend_delta <= 0:
            raise ValueError("extend_delta must be positive")
        if self.initial_field_length > self.max_field_length:
            raise ValueError("initial_field_length exceeds max_field_length")


class ValueSizeHistogram:
    """Counts of field lengths bucketed as ``floor(length / bin_width)``."""

    def __init__(self, bin_width: int = DEFAULT_BIN_WIDTH) -> None:
        if bin_width <= 0:
            raise ValueError("bin_width must be positive")
        self.bin_width = bin_width
        self.counts: dict[int, int] = {}
        self._total = 0

    @classmethod
    def from_lengths(cls, lengths: Iterable[int], bin_width: int = DEFAULT_BIN_WIDTH) -> "ValueSizeHistogram":
        hist = cls(bin_width)
        for length in lengths:
            hist.add(length)
        return hist

    def add(self, length: int) -> None:
        b = length // self.bin_width
        self.counts[b] = self.counts.get(b, 0) + 1
        self._total += 1

    def remove(self, length: int) -> None:
        b = length // self.bin_width
        n = self.counts.get(b, 0)
        if n <= 0:
            raise ValueError(f"no samples recorded in bin {b}")
        if n == 1:
            del self.counts[b]
        else:
            self.counts[b] = n - 1
        self._total -= 1

    @property
    def total(self) -> int:
        return self._total

    def mean(self) -> float:
        """Mean of bin lower edges, weighted by count."""
        if self._total == 0:
            raise ValueError("empty histogram")
        return sum(b * self.bin_width * n for b, n in self.counts.items()) / self._total

    def quantile_length(self, q: float) -> int:
        """Lower edge of the bin containing the q-quantile sample."""
        if self._total == 0:
            raise ValueError("empty histogram")
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must be in [0, 1]")
        target = max(1, min(self._total, math.ceil(q * self._total)))
        cum = 0
        for b in sorted(self.counts):
            cum += self.counts[b]
            if cum >= target:
                return b * self.bin_width
        return max(self.counts) * self.bin_width

    def emd(self, other: "ValueSizeHistogram") -> float:
        """Earth-mover distance between normalized histograms, in bytes."""
        if self.bin_width != other.bin_width:
            raise ValueError("bin widths differ")
        if self._total == 0 or other.total == 0:
            raise ValueError("empty histogram")
        bins = sorted(set(self.counts) | set(other.counts))
        carry = 0.0
        dist = 0.0
        for b in bins:
            carry += self.counts.get(b, 0) / self._total - other.counts.get(b, 0) / other.total
            dist += abs(carry)
        return dist * self.bin_width

    def copy(self) -> "ValueSizeHistogram":
        dup = ValueSizeHistogram(self.bin_width)
        dup.counts = dict(self.counts)
        dup._total = self._total
        return dup

    def snapshot(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "counts": {str(b): n for b, n in sorted(self.counts.items())},
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "ValueSizeHistogram":
        hist = cls(int(snap["bin_width"]))
        for b, n in snap["counts"].items():
            hist.counts[int(b)] = int(n)
            hist._total += int(n)
        return hist

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ValueSizeHistogram):
            return NotImplemented
        return self.bin_width == other.bin_width and self.counts == other.counts


class LengthLedger:
    """Client-side map key -> per-field byte lengths.

    The ledger is authoritative for current field lengths: extend
    consults it instead of issuing a read-modify-write against the
    backend.  It keeps an incremental volume total, an incremental
    size histogram, and per-record totals so per-epoch statistics are
    cheap.  Single-writer; share read-only snapshots across threads.
    """

    def __init__(self, schema: RecordSchema, bin_width: int = DEFAULT_BIN_WIDTH) -> None:
        self.schema = schema
        self._entries: dict[str, list[int]] = {}
        self._record_totals: dict[str, int] = {}
        self._volume = 0
        self._hist = ValueSizeHistogram(bin_width)
        self._max_field = 0
        self._max_field_dirty = False
        self._max_record = 0
        self._max_record_dirty = False
        self._capped_fields: dict[str, int] = {}

    # -- membership ----------------------------------------------------

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self) -> Iterator[str]:
        return iter(self._entries)

    def lengths_of(self, key: str) -> list[int]:
        return list(self._entries[key])

    # -- mutation ------------------------------------------------------

    def add_record(self, key: str, lengths: Iterable[int]) -> None:
        if key in self._entries:
            raise KeyError(f"duplicate record key {key!r}")
        row = list(lengths)
        if len(row) != self.schema.field_count:
            raise ValueError(
                f"record {key!r} has {len(row)} fields, schema says {self.schema.field_count}"
            )
        cap = self.schema.max_field_length
        for length in row:
            if length < 0 or length > cap:
                raise ValueError(f"field length {length} outside [0, {cap}]")
            self._hist.add(length)
        self._entries[key] = row
        total = sum(row)
        self._record_totals[key] = total
        self._volume += total
        top = max(row)
        if top > self._max_field:
            self._max_field = top
        if total > self._max_record:
            self._max_record = total
        ncapped = sum(1 for length in row if length == cap)
        if ncapped:
            self._capped_fields[key] = ncapped

    def delete_record(self, key: str) -> None:
        row = self._entries.pop(key)
        total = self._record_totals.pop(key)
        self._volume -= total
        for length in row:
            self._hist.remove(length)
        if max(row) == self._max_field:
            self._max_field_dirty = True
        if total == self._max_record:
            self._max_record_dirty = True
        self._capped_fields.pop(key, None)

    def set_length(self, key: str, field_index: int, new_length: int) -> None:
        """Replace one field's length (run-phase update path)."""
        row = self._entries[key]
        if not 0 <= field_index < self.schema.field_count:
            raise IndexError(f"field index {field_index} out of range")
        cap = self.schema.max_field_length
        if new_length < 0 or new_length > cap:
            raise ValueError(f"field length {new_length} outside [0, {cap}]")
        old = row[field_index]
        if new_length == old:
            return
        row[field_index] = new_length
        self._hist.remove(old)
        self._hist.add(new_length)
        self._volume += new_length - old
        total = self._record_totals[key] + new_length - old
        self._record_totals[key] = total
        if new_length > self._max_field:
            self._max_field = new_length
        elif old == self._max_field:
            self._max_field_dirty = True
        if total > self._max_record:
            self._max_record = total
        elif total - new_length + old == self._max_record:
            self._max_record_dirty = True
        if old == cap or new_length == cap:
            delta = (1 if new_length == cap else 0) - (1 if old == cap else 0)
            n = self._capped_fields.get(key, 0) + delta
            if n:
                self._capped_fields[key] = n
            else:
                self._capped_fields.pop(key, None)

    def apply_extend(self, key: str, field_index: int, delta: int, cap: int) -> int | None:
        """Grow one field by ``delta`` unless that would exceed ``cap``.

        Returns the new length, or None when the attempt is bypassed
        (the ledger is left untouched).
        """
        if delta <= 0:
            raise ValueError("extend delta must be positive")
        row = self._entries[key]
        if not 0 <= field_index < self.schema.field_count:
            raise IndexError(f"field index {field_index} out of range")
        new_length = row[field_index] + delta
        if new_length > cap:
            return None
        self.set_length(key, field_index, new_length)
        return new_length

    # -- statistics ----------------------------------------------------

    def total_volume(self) -> int:
        return self._volume

    def mean_field_length(self) -> float:
        if not self._entries:
            raise ValueError("empty ledger")
        return self._volume / (len(self._entries) * self.schema.field_count)

    def max_field_length(self) -> int:
        if self._max_field_dirty:
            self._max_field = max(
                (max(row) for row in self._entries.values()), default=0
            )
            self._max_field_dirty = False
        return self._max_field

    def max_record_size(self) -> int:
        if self._max_record_dirty:
            self._max_record = max(self._record_totals.values(), default=0)
            self._max_record_dirty = False
        return self._max_record

    def capped_records(self) -> int:
        """Number of records with at least one field at the cap."""
        return len(self._capped_fields)

    def histogram(self) -> ValueSizeHistogram:
        """Copy of the incrementally maintained field-length histogram."""
        return self._hist.copy()

    def rebuild_histogram(self, bin_width: int = DEFAULT_BIN_WIDTH) -> ValueSizeHistogram:
        """Histogram recomputed from scratch (oracle for the incremental one)."""
        hist = ValueSizeHistogram(bin_width)
        for row in self._entries.values():
            for length in row:
                hist.add(length)
        return hist

    # -- sidecar serialization ------------------------------------------
    #
    # One line per record, sorted by key string:
    #   key,len0,len1,...,len{field_count-1}
    # ASCII decimal, comma-separated, '\n' line ends. Bit-exact across
    # platforms.

    def sidecar_lines(self) -> Iterator[str]:
        for key in sorted(self._entries):
            row = self._entries[key]
            yield key + "," + ",".join(str(length) for length in row)

    def write_sidecar(self, path: str | Path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as f:
            for line in self.sidecar_lines():
                f.write(line + "\n")

    @classmethod
    def load_sidecar(
        cls, path: str | Path, schema: RecordSchema, bin_width: int = DEFAULT_BIN_WIDTH
    ) -> "LengthLedger":
        ledger = cls(schema, bin_width)
        with open(path, "r", encoding="ascii") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != schema.field_count + 1:
                    raise ValueError(f"{path}:{lineno}: expected {schema.field_count} lengths")
                ledger.add_record(parts[0], [int(p) for p in parts[1:]])
        return ledger


DEFAULT_WORKLOAD_MIX = {OpType.READ: 1.0}


@dataclass
class ExperimentConfig:
    """Every knob of one experiment.

    Defaults follow the harness's reference configuration: 10,000
    records of 10 fields at 100 B, 100,000 extend attempts and 100,000
    run operations per epoch, 100 B growth per extend, 1.6 MB field cap.
    """

    record_count: int = 10_000
    schema: RecordSchema = field(default_factory=RecordSchema)
    extend_ops_per_epoch: int = 100_000
    run_ops_per_epoch: int = 100_000
    epochs: int = 100
    extend_key_distribution: KeyDistribution = field(default_factory=KeyDistribution.uniform)
    run_key_distribution: KeyDistribution = field(default_factory=KeyDistribution.uniform)
    workload_mix: dict[OpType, float] = field(default_factory=lambda: dict(DEFAULT_WORKLOAD_MIX))
    mode: Mode = Mode.MAIN_RUN
    trials: int = 5
    seed: int = 42
    backend_id: str = "memstore"
    max_scan_length: int = 1000
    length_mode: str = "histogram"  # run-phase insert/update lengths: histogram | constant
    histogram_bin_width: int = DEFAULT_BIN_WIDTH
    workers: int = 1
    output_dir: str = "ivs-results"

    def validate(self) -> None:
        if self.record_count <= 0:
            raise ValueError("record_count must be positive")
        if self.extend_ops_per_epoch < 0:
            raise ValueError("extend_ops_per_epoch must be non-negative")
        if self.run_ops_per_epoch < 0:
            raise ValueError("run_ops_per_epoch must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.trials <= 0:
            raise ValueError("trials must be positive")
        if self.workers <= 0:
            raise ValueError("workers must be positive")
        if self.max_scan_length <= 0:
            raise ValueError("max_scan_length must be positive")
        if self.length_mode not in ("histogram", "constant"):
            raise ValueError(f"unknown length_mode {self.length_mode!r}")
        if self.histogram_bin_width <= 0:
            raise ValueError("histogram_bin_width must be positive")
        for op, p in self.workload_mix.items():
            if op not in MIX_OPS:
                raise ValueError(f"{op.value} is not a run-phase operation")
            if p < 0:
                raise ValueError(f"negative proportion for {op.value}")
        total = sum(self.workload_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"workload mix proportions sum to {total!r}, expected 1")

    # -- hashing ---------------------------------------------------------

    def canonical_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "schema": {
                "field_count": self.schema.field_count,
                "initial_field_length": self.schema.initial_field_length,
                "extend_delta": self.schema.extend_delta,
                "max_field_length": self.schema.max_field_length,
            },
            "extend_ops_per_epoch": self.extend_ops_per_epoch,
            "run_ops_per_epoch": self.run_ops_per_epoch,
            "epochs": self.epochs,
            "extend_key_distribution": [
                self.extend_key_distribution.kind,
                self.extend_key_distribution.theta,
            ],
            "run_key_distribution": [
                self.run_key_distribution.kind,
                self.run_key_distribution.theta,
            ],
            "workload_mix": {op.value: self.workload_mix.get(op, 0.0) for op in MIX_OPS},
            "mode": self.mode.value,
            "trials": self.trials,
            "seed": self.seed,
            "backend_id": self.backend_id,
            "max_scan_length": self.max_scan_length,
            "length_mode": self.length_mode,
            "histogram_bin_width": self.histogram_bin_width,
            "workers": self.workers,
        }

    def config_hash(self) -> str:
        """Hash of the full resolved configuration."""
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def base_hash(self) -> str:
        """Hash of the experiment identity, ignoring mode/trials/workers.

        Reports produced by different modes of the same experiment share
        this hash; the report tooling refuses to overlay mismatches.
        """
        d = self.canonical_dict()
        for k in ("mode", "trials", "workers"):
            del d[k]
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
