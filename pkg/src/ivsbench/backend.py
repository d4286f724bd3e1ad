"""Storage drivers and logical dump/restore.

Two reference engines share one driver contract:

* :class:`MemStore` updates records in place and carries no physical
  history, so its cost depends only on the logical state.
* :class:`LogStore` appends every field write to segment files and
  materializes records at read time by walking the key's entry chain
  newest-to-oldest until every field is resolved.  Old versions are
  read past physically, so a history of overwrites inflates bytes
  scanned per read until :meth:`LogStore.compact` rewrites the log.

Dumps capture the logical state (sorted records, length-prefixed,
little-endian, trailing 64-bit checksum) plus a ledger sidecar and a
JSON manifest, and can be restored into any empty driver.
"""

from __future__ import annotations

import abc
import hashlib
import json
import mmap
import os
import struct
import threading
from bisect import bisect_left
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

from ivsbench.core import LengthLedger

# Log entry framing: key length u16, field index u16, value length u32,
# then key bytes and value bytes.  24-byte keys keep the per-entry
# framing at 32 bytes.
_ENTRY_HEAD = struct.Struct("<HHI")

# Dump record framing: key length u32 + key bytes, then per field a u32
# length + bytes.  Field count is uniform per dump and recorded in the
# manifest.  The file ends with the first 8 bytes of the SHA-256 of
# everything before it.
_U32 = struct.Struct("<I")

CHECKSUM_LEN = 8


class ChecksumError(Exception):
    """Dump payload does not match its trailing checksum."""


class StorageDriver(abc.ABC):
    """Contract every engine implements.

    Per-key operations are linearizable under single-writer usage:
    concurrent readers are allowed during run phases, every mutating
    phase is single-writer.  ``read``/``scan`` return freshly
    materialized byte copies, modelling the transfer of the record to
    the client.
    """

    @abc.abstractmethod
    def read(self, key: str) -> list[bytes] | None:
        """All fields of ``key``, or None when absent."""

    @abc.abstractmethod
    def read_field(self, key: str, field_index: int) -> bytes | None:
        """One field of ``key``, or None when the key is absent."""

    @abc.abstractmethod
    def update_field(self, key: str, field_index: int, value: bytes) -> None:
        """Replace one field's value; updating an absent key is a no-op."""

    @abc.abstractmethod
    def insert(self, key: str, record: list[bytes]) -> None:
        """Insert a new record with all its fields."""

    @abc.abstractmethod
    def delete(self, key: str) -> None:
        """Remove a record; removing an absent key is a no-op."""

    @abc.abstractmethod
    def scan(self, start_key: str, count: int) -> list[tuple[str, list[bytes]]]:
        """Up to ``count`` records with key >= start_key, in key order."""

    @abc.abstractmethod
    def iter_records(self) -> Iterator[tuple[str, list[bytes]]]:
        """All records in key order (dump/verify path)."""

    @abc.abstractmethod
    def flush(self) -> None:
        """Push buffered writes down to the OS."""

    @abc.abstractmethod
    def stats(self) -> dict[str, int]:
        """Flat counters: bytes_written, bytes_read_physical,
        entries_live, entries_dead, compactions."""

    def is_empty(self) -> bool:
        for _ in self.iter_records():
            return False
        return True

    def close(self) -> None:  # noqa: B027 - optional hook
        pass


class MemStore(StorageDriver):
    """Ordered in-memory store with update-in-place records."""

    def __init__(self) -> None:
        self._data: dict[str, list[bytes]] = {}
        self._sorted_keys: list[str] | None = None
        self._bytes_written = 0
        self._bytes_read = 0
        self._entries = 0

    def read(self, key: str) -> list[bytes] | None:
        rec = self._data.get(key)
        if rec is None:
            return None
        # bytes(memoryview(...)) forces a real copy; bytes() alone would
        # alias the stored object and hide the record-transfer cost
        out = [bytes(memoryview(v)) for v in rec]
        self._bytes_read += sum(len(v) for v in out)
        return out

    def read_field(self, key: str, field_index: int) -> bytes | None:
        rec = self._data.get(key)
        if rec is None:
            return None
        v = bytes(memoryview(rec[field_index]))
        self._bytes_read += len(v)
        return v

    def update_field(self, key: str, field_index: int, value: bytes) -> None:
        rec = self._data.get(key)
        if rec is None:
            return
        rec[field_index] = value
        self._bytes_written += len(value)

    def insert(self, key: str, record: list[bytes]) -> None:
        if key in self._data:
            raise KeyError(f"duplicate key {key!r}")
        self._data[key] = list(record)
        self._bytes_written += sum(len(v) for v in record)
        self._entries += len(record)
        self._sorted_keys = None

    def delete(self, key: str) -> None:
        rec = self._data.pop(key, None)
        if rec is not None:
            self._entries -= len(rec)
            self._sorted_keys = None

    def _keys(self) -> list[str]:
        if self._sorted_keys is None:
            self._sorted_keys = sorted(self._data)
        return self._sorted_keys

    def scan(self, start_key: str, count: int) -> list[tuple[str, list[bytes]]]:
        keys = self._keys()
        i = bisect_left(keys, start_key)
        out = []
        for key in keys[i : i + count]:
            out.append((key, self.read(key)))
        return out

    def iter_records(self) -> Iterator[tuple[str, list[bytes]]]:
        for key in self._keys():
            yield key, self.read(key)

    def flush(self) -> None:
        pass

    def stats(self) -> dict[str, int]:
        return {
            "bytes_written": self._bytes_written,
            "bytes_read_physical": self._bytes_read,
            "entries_live": self._entries,
            "entries_dead": 0,
            "compactions": 0,
        }


class _LogRecord:
    __slots__ = ("chain", "latest", "field_count")

    def __init__(self, field_count: int) -> None:
        # chain: every (segment, offset, entry_len) ever appended for the
        # key; latest: the newest entry per field.
        self.chain: list[tuple[int, int, int]] = []
        self.latest: list[tuple[int, int, int] | None] = [None] * field_count
        self.field_count = field_count


class LogStore(StorageDriver):
    """Append-only segmented log with read-time record materialization.

    The in-memory index keeps, per key, the chain of entry locations;
    which field an entry holds lives only in the entry header on disk.
    A record read therefore walks the chain newest-to-oldest, reading
    each visited entry in full, until every field has been resolved:
    superseded versions sitting above the last unresolved field are
    paid for physically.  Compaction rewrites the latest version of
    every field into fresh segments.
    """

    def __init__(self, root: str | Path, segment_bytes: int = 32 << 20) -> None:
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._segment_bytes = segment_bytes
        self._index: dict[str, _LogRecord] = {}
        self._sorted_keys: list[str] | None = None
        self._write_lock = threading.Lock()
        self._seg_id = -1
        self._write_f = None
        self._write_off = 0
        self._flushed_off = 0
        self._read_fds: dict[int, int] = {}
        self._bytes_written = 0
        self._bytes_read = 0
        self._appended_entries = 0
        self._live_entries = 0
        self._appended_bytes = 0
        self._live_bytes = 0
        self._compactions = 0
        self._roll_segment()

    # -- segment plumbing ------------------------------------------------

    def _seg_path(self, seg_id: int) -> Path:
        return self._root / f"segment-{seg_id:06d}.log"

    def _roll_segment(self) -> None:
        if self._write_f is not None:
            self._write_f.flush()
            self._write_f.close()
        self._seg_id += 1
        self._write_f = open(self._seg_path(self._seg_id), "ab")
        self._write_off = 0
        self._flushed_off = 0

    def _append(self, key: str, field_index: int, value: bytes) -> tuple[int, int, int]:
        kb = key.encode("ascii")
        entry = _ENTRY_HEAD.pack(len(kb), field_index, len(value)) + kb + value
        with self._write_lock:
            if self._write_off + len(entry) > self._segment_bytes and self._write_off > 0:
                self._roll_segment()
            pos = (self._seg_id, self._write_off, len(entry))
            self._write_f.write(entry)
            self._write_off += len(entry)
            self._bytes_written += len(entry)
            self._appended_entries += 1
            self._appended_bytes += len(entry)
        return pos

    def _read_entry(self, seg: int, off: int, length: int) -> bytes:
        if seg == self._seg_id and off + length > self._flushed_off:
            with self._write_lock:
                self._write_f.flush()
                self._flushed_off = self._write_off
        fd = self._read_fds.get(seg)
        if fd is None:
            fd = os.open(self._seg_path(seg), os.O_RDONLY)
            self._read_fds[seg] = fd
        buf = os.pread(fd, length, off)
        self._bytes_read += length
        return buf

    # -- driver contract ---------------------------------------------------

    def read(self, key: str) -> list[bytes] | None:
        rec = self._index.get(key)
        if rec is None:
            return None
        fields: list[bytes | None] = [None] * rec.field_count
        remaining = rec.field_count
        for seg, off, length in reversed(rec.chain):
            buf = self._read_entry(seg, off, length)
            klen, field_index, vlen = _ENTRY_HEAD.unpack_from(buf)
            if fields[field_index] is None:
                fields[field_index] = buf[_ENTRY_HEAD.size + klen :]
                remaining -= 1
                if remaining == 0:
                    break
        return fields  # type: ignore[return-value]

    def read_field(self, key: str, field_index: int) -> bytes | None:
        rec = self._index.get(key)
        if rec is None:
            return None
        seg, off, length = rec.latest[field_index]
        buf = self._read_entry(seg, off, length)
        klen, _, _ = _ENTRY_HEAD.unpack_from(buf)
        return buf[_ENTRY_HEAD.size + klen :]

    def update_field(self, key: str, field_index: int, value: bytes) -> None:
        rec = self._index.get(key)
        if rec is None:
            return
        pos = self._append(key, field_index, value)
        old = rec.latest[field_index]
        rec.latest[field_index] = pos
        rec.chain.append(pos)
        self._live_bytes += pos[2] - (old[2] if old else 0)
        if old is None:
            self._live_entries += 1

    def insert(self, key: str, record: list[bytes]) -> None:
        if key in self._index:
            raise KeyError(f"duplicate key {key!r}")
        rec = _LogRecord(len(record))
        self._index[key] = rec
        for field_index, value in enumerate(record):
            self.update_field(key, field_index, value)
        self._sorted_keys = None

    def delete(self, key: str) -> None:
        rec = self._index.pop(key, None)
        if rec is not None:
            self._live_entries -= sum(1 for e in rec.latest if e is not None)
            self._live_bytes -= sum(e[2] for e in rec.latest if e is not None)
            self._sorted_keys = None

    def _keys(self) -> list[str]:
        if self._sorted_keys is None:
            self._sorted_keys = sorted(self._index)
        return self._sorted_keys

    def scan(self, start_key: str, count: int) -> list[tuple[str, list[bytes]]]:
        keys = self._keys()
        i = bisect_left(keys, start_key)
        return [(key, self.read(key)) for key in keys[i : i + count]]

    def iter_records(self) -> Iterator[tuple[str, list[bytes]]]:
        for key in self._keys():
            yield key, self.read(key)

    def flush(self) -> None:
        with self._write_lock:
            self._write_f.flush()
            self._flushed_off = self._write_off

    def stats(self) -> dict[str, int]:
        return {
            "bytes_written": self._bytes_written,
            "bytes_read_physical": self._bytes_read,
            "entries_live": self._live_entries,
            "entries_dead": self._appended_entries - self._live_entries,
            "compactions": self._compactions,
        }

    def garbage_ratio(self) -> float:
        if self._appended_bytes == 0:
            return 0.0
        return (self._appended_bytes - self._live_bytes) / self._appended_bytes

    def compact(self) -> int:
        """Drop superseded entries; returns bytes reclaimed on disk."""
        self.flush()
        old_segments = list(range(self._seg_id + 1))
        old_bytes = self._appended_bytes
        live: list[tuple[str, list[bytes]]] = []
        for key in self._keys():
            rec = self._index[key]
            values = []
            for field_index in range(rec.field_count):
                seg, off, length = rec.latest[field_index]
                buf = self._read_entry(seg, off, length)
                klen, _, _ = _ENTRY_HEAD.unpack_from(buf)
                values.append(buf[_ENTRY_HEAD.size + klen :])
            live.append((key, values))
        for fd in self._read_fds.values():
            os.close(fd)
        self._read_fds.clear()
        self._write_f.close()
        self._write_f = None
        self._appended_entries = 0
        self._live_entries = 0
        self._appended_bytes = 0
        self._live_bytes = 0
        self._index.clear()
        self._sorted_keys = None
        self._seg_id += 1  # never reuse an old segment id
        self._write_f = open(self._seg_path(self._seg_id), "ab")
        self._write_off = 0
        self._flushed_off = 0
        for key, values in live:
            self.insert(key, values)
        self.flush()
        for seg in old_segments:
            self._seg_path(seg).unlink(missing_ok=True)
        self._compactions += 1
        return old_bytes - self._appended_bytes

    def close(self) -> None:
        for fd in self._read_fds.values():
            os.close(fd)
        self._read_fds.clear()
        if self._write_f is not None:
            self._write_f.close()
            self._write_f = None


_BACKENDS = {"memstore", "logstore"}


def make_driver(backend_id: str, root: str | Path | None = None) -> StorageDriver:
    """Instantiate a driver by id; ``logstore`` needs a directory."""
    if backend_id == "memstore":
        return MemStore()
    if backend_id == "logstore":
        if root is None:
            raise ValueError("logstore requires a storage directory")
        return LogStore(root)
    raise ValueError(f"unknown backend {backend_id!r}; known: {sorted(_BACKENDS)}")


# -- logical dumps --------------------------------------------------------


@dataclass
class DumpManifest:
    epoch: int
    volume_bytes: int
    record_count: int
    field_count: int
    checksum: str
    config_hash: str
    inserted_records: int = 0
    format_version: int = 1

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as f:
            json.dump(asdict(self), f, sort_keys=True, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "DumpManifest":
        with open(path, "r", encoding="ascii") as f:
            return cls(**json.load(f))


def dump_paths(directory: str | Path, epoch: int) -> tuple[Path, Path, Path]:
    """(.bin, .ledger, .manifest) paths for one epoch's dump."""
    stem = Path(directory) / f"dump-epoch-{epoch:03d}"
    return (
        stem.with_suffix(".bin"),
        stem.with_suffix(".ledger"),
        stem.with_suffix(".manifest"),
    )


def dump(
    driver: StorageDriver,
    ledger: LengthLedger,
    directory: str | Path,
    epoch: int,
    config_hash: str,
    inserted_records: int = 0,
) -> DumpManifest:
    """Write the driver's full logical state plus ledger sidecar and manifest.

    The driver is quiesced by contract (no in-flight operations); its
    state is unchanged.  Raises if the scanned volume disagrees with the
    ledger, which would mean driver and ledger have diverged.
    """
    bin_path, ledger_path, manifest_path = dump_paths(directory, epoch)
    Path(directory).mkdir(parents=True, exist_ok=True)
    sha = hashlib.sha256()
    volume = 0
    record_count = 0
    field_count = ledger.schema.field_count
    try:
        with open(bin_path, "wb") as f:
            for key, fields in driver.iter_records():
                kb = key.encode("ascii")
                parts = [_U32.pack(len(kb)), kb]
                for value in fields:
                    parts.append(_U32.pack(len(value)))
                    parts.append(value)
                    volume += len(value)
                blob = b"".join(parts)
                sha.update(blob)
                f.write(blob)
                record_count += 1
            f.write(sha.digest()[:CHECKSUM_LEN])
    except OSError as exc:
        raise OSError(f"dump to {bin_path} failed: {exc}") from exc
    if volume != ledger.total_volume():
        raise RuntimeError(
            f"dump volume {volume} != ledger volume {ledger.total_volume()}; "
            "driver and ledger have diverged"
        )
    ledger.write_sidecar(ledger_path)
    manifest = DumpManifest(
        epoch=epoch,
        volume_bytes=volume,
        record_count=record_count,
        field_count=field_count,
        checksum=sha.digest()[:CHECKSUM_LEN].hex(),
        config_hash=config_hash,
        inserted_records=inserted_records,
    )
    manifest.write(manifest_path)
    return manifest


def verify_checksum(bin_path: str | Path) -> str:
    """Checksum of the dump payload; raises ChecksumError on mismatch."""
    size = os.path.getsize(bin_path)
    if size < CHECKSUM_LEN:
        raise ChecksumError(f"{bin_path}: truncated dump")
    sha = hashlib.sha256()
    remaining = size - CHECKSUM_LEN
    with open(bin_path, "rb") as f:
        while remaining > 0:
            chunk = f.read(min(1 << 20, remaining))
            if not chunk:
                raise ChecksumError(f"{bin_path}: short read")
            sha.update(chunk)
            remaining -= len(chunk)
        trailer = f.read(CHECKSUM_LEN)
    digest = sha.digest()[:CHECKSUM_LEN]
    if trailer != digest:
        raise ChecksumError(
            f"{bin_path}: checksum mismatch (stored {trailer.hex()}, computed {digest.hex()})"
        )
    return digest.hex()


def iter_dump_records(bin_path: str | Path, field_count: int) -> Iterator[tuple[str, list[bytes]]]:
    """Parse dump records; assumes the checksum was verified already."""
    size = os.path.getsize(bin_path)
    payload_end = size - CHECKSUM_LEN
    with open(bin_path, "rb") as f:
        pos = 0
        while pos < payload_end:
            (klen,) = _U32.unpack(f.read(4))
            key = f.read(klen).decode("ascii")
            fields = []
            for _ in range(field_count):
                (vlen,) = _U32.unpack(f.read(4))
                fields.append(f.read(vlen))
                pos += 4 + vlen
            pos += 4 + klen
            yield key, fields


def restore(bin_path: str | Path, driver: StorageDriver, field_count: int | None = None) -> DumpManifest:
    """Load a dump into an empty driver after verifying its checksum."""
    bin_path = Path(bin_path)
    manifest = DumpManifest.load(bin_path.with_suffix(".manifest"))
    if field_count is None:
        field_count = manifest.field_count
    if not driver.is_empty():
        raise ValueError("restore target driver is not empty")
    checksum = verify_checksum(bin_path)
    if checksum != manifest.checksum:
        raise ChecksumError(
            f"{bin_path}: manifest checksum {manifest.checksum} != file checksum {checksum}"
        )
    for key, fields in iter_dump_records(bin_path, field_count):
        driver.insert(key, fields)
    driver.flush()
    return manifest
