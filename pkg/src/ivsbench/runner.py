"""Experiment orchestration: load, epoch loop, and the four run modes.

A main-run loads the store once, then per epoch grows values (extend
phase), dumps the logical state, and measures a run phase against the
persistent driver, so physical history accumulates.  A clean-run
restores each epoch's dump into a fresh driver and measures the same
run phase without any history.  The two baselines load synthetic
uniform data matching each epoch's data volume: spread keeps the
initial field length and scales the record count, average keeps the
record count and scales the field length.

Phase latency windows cover only the synchronous driver call; value
generation and ledger bookkeeping count toward phase wall time, as in
a closed-loop client.  Every phase folds its operations into a rolling
64-bit trace hash so determinism is checkable end to end.
"""

from __future__ import annotations

import gc
import json
import shutil
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable

from ivsbench import backend as be
from ivsbench.core import (
    MASK64,
    ExperimentConfig,
    LengthLedger,
    Mode,
    OpType,
    render_key,
)
from ivsbench.genkit import (
    ConstantLengthSampler,
    HistogramLengthSampler,
    OperationMixSampler,
    SplitMix64,
    ValueGenerator,
    derive_seed,
    make_key_chooser,
)
from ivsbench.metrics import LatencyHistogram, throughput

_TRACE_INIT = 0xCBF29CE484222325
_TRACE_PRIME = 0x100000001B3

_OP_CODE = {
    OpType.READ: 1,
    OpType.UPDATE: 2,
    OpType.INSERT: 3,
    OpType.SCAN: 4,
    OpType.DELETE: 5,
    OpType.EXTEND: 6,
}


def _trace(h: int, code: int, a: int, b: int, c: int) -> int:
    h = ((h ^ code) * _TRACE_PRIME) & MASK64
    h = ((h ^ a) * _TRACE_PRIME) & MASK64
    h = ((h ^ b) * _TRACE_PRIME) & MASK64
    return ((h ^ c) * _TRACE_PRIME) & MASK64


class ConsistencyError(RuntimeError):
    """Driver state disagrees with the length ledger."""


@dataclass
class EpochPlan:
    """What one epoch executes; attempts and op counts match the config."""

    epoch_index: int
    extend_attempts: int
    run_operations: int
    mode: Mode
    dump_path: Path | None


@dataclass
class BaselineSpec:
    """Synthetic uniform load matching one epoch-equivalent data volume."""

    target_volume: int
    record_count: int
    uniform_field_length: int
    clamped: bool = False

    @classmethod
    def spread(cls, config: ExperimentConfig, target_volume: int) -> "BaselineSpec":
        length = config.schema.initial_field_length
        per_record = config.schema.field_count * length
        count = max(1, round(target_volume / per_record))
        return cls(target_volume, count, length)

    @classmethod
    def average(cls, config: ExperimentConfig, target_volume: int) -> "BaselineSpec":
        count = config.record_count
        length = round(target_volume / (count * config.schema.field_count))
        clamped = False
        if length > config.schema.max_field_length:
            length = config.schema.max_field_length
            clamped = True
        return cls(target_volume, count, max(0, length), clamped)

    @classmethod
    def for_mode(cls, mode: Mode, config: ExperimentConfig, target_volume: int) -> "BaselineSpec":
        if mode is Mode.SPREAD_BASELINE:
            return cls.spread(config, target_volume)
        if mode is Mode.AVERAGE_BASELINE:
            return cls.average(config, target_volume)
        raise ValueError(f"{mode.value} is not a baseline mode")


def analytic_volume(config: ExperimentConfig, completed_extend_phases: int) -> int:
    """Data volume after k extend phases, assuming zero skipped extends."""
    initial = config.record_count * config.schema.field_count * config.schema.initial_field_length
    return initial + completed_extend_phases * config.extend_ops_per_epoch * config.schema.extend_delta


@dataclass
class ExtendPhaseStats:
    attempts: int
    applied: int
    skipped: int
    wall_s: float
    latency: LatencyHistogram
    trace_hash: int


@dataclass
class RunPhaseStats:
    operations: int
    wall_s: float
    op_counts: dict[str, int]
    latency: dict[str, LatencyHistogram]
    mean_length_before: float
    mean_length_after: float
    histogram_emd: float
    trace_hash: int


@dataclass
class EpochReport:
    """One measured epoch, serialized as one JSON object per line."""

    epoch: int
    mode: str
    trial: int
    seed: int
    config_hash: str
    base_hash: str
    backend_id: str
    volume_bytes: int
    record_count: int
    mean_field_length: float
    max_field_length: int
    max_record_size: int
    capped_records: int
    extend_attempts: int
    extend_applied: int
    extend_skipped: int
    extend_wall_s: float
    extend_throughput: float
    run_operations: int
    run_wall_s: float
    run_throughput: float
    op_counts: dict[str, int]
    latency: dict[str, dict[str, float]]
    drift_pct: float
    histogram_emd: float
    size_histogram: dict
    backend: dict[str, int]
    trace_hash: str
    dump_checksum: str | None = None
    target_volume_bytes: int | None = None
    histograms_b64: dict[str, str] | None = None

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "EpochReport":
        return cls(**json.loads(line))

    def metrics(self) -> dict[str, float]:
        """Flat per-epoch metrics for cross-trial aggregation."""
        out: dict[str, float] = {
            "throughput": self.run_throughput,
            "volume_bytes": float(self.volume_bytes),
            "mean_field_length": self.mean_field_length,
            "max_field_length": float(self.max_field_length),
            "max_record_size": float(self.max_record_size),
            "capped_records": float(self.capped_records),
            "drift_pct": self.drift_pct,
            "histogram_emd": self.histogram_emd,
        }
        if self.extend_attempts:
            out["extend_throughput"] = self.extend_throughput
        for op, summary in self.latency.items():
            for stat, value in summary.items():
                out[f"{op}.{stat}"] = float(value)
        return out


OnEpoch = Callable[[EpochReport], None]


# -- loading ---------------------------------------------------------------


def load_initial(driver: be.StorageDriver, config: ExperimentConfig, valgen: ValueGenerator) -> LengthLedger:
    """Insert ``record_count`` records with every field at the initial length."""
    if not driver.is_empty():
        raise ValueError("load target driver is not empty")
    config.validate()
    schema = config.schema
    ledger = LengthLedger(schema, config.histogram_bin_width)
    length = schema.initial_field_length
    for ordinal in range(config.record_count):
        key = render_key(ordinal)
        record = [valgen.value(ordinal, f, length) for f in range(schema.field_count)]
        driver.insert(key, record)
        ledger.add_record(key, [length] * schema.field_count)
    driver.flush()
    return ledger


def _load_uniform(
    driver: be.StorageDriver,
    config: ExperimentConfig,
    spec: BaselineSpec,
    valgen: ValueGenerator,
) -> LengthLedger:
    ledger = LengthLedger(config.schema, config.histogram_bin_width)
    fc = config.schema.field_count
    length = spec.uniform_field_length
    for ordinal in range(spec.record_count):
        key = render_key(ordinal)
        record = [valgen.value(ordinal, f, length) for f in range(fc)]
        driver.insert(key, record)
        ledger.add_record(key, [length] * fc)
    driver.flush()
    return ledger


def consistency_check(
    driver: be.StorageDriver,
    ledger: LengthLedger,
    seed: int,
    samples: int = 100,
) -> None:
    """Compare driver field lengths against the ledger on sampled keys."""
    keys = list(ledger.keys())
    if not keys:
        return
    rng = SplitMix64(seed)
    for _ in range(min(samples, len(keys))):
        key = keys[rng.next_below(len(keys))]
        record = driver.read(key)
        if record is None:
            raise ConsistencyError(f"key {key} in ledger but absent from driver")
        got = [len(v) for v in record]
        want = ledger.lengths_of(key)
        if got != want:
            raise ConsistencyError(f"key {key}: driver lengths {got} != ledger {want}")


# -- phases ---------------------------------------------------------------


def run_extend_phase(
    driver: be.StorageDriver,
    ledger: LengthLedger,
    config: ExperimentConfig,
    epoch: int,
    trial_seed: int,
    valgen: ValueGenerator,
) -> ExtendPhaseStats:
    """Submit ``extend_ops_per_epoch`` extend attempts.

    Each attempt picks a key per the extend distribution and a field
    uniformly, consults the ledger, and either skips (cap would be
    exceeded, or the record was deleted by a prior run phase) or
    generates the longer replacement value and updates the driver.
    Skipped attempts spend budget and are tallied.
    """
    schema = config.schema
    keys = make_key_chooser(
        config.extend_key_distribution,
        config.record_count,
        derive_seed(trial_seed, "extend", epoch, "keys"),
    )
    fields = SplitMix64(derive_seed(trial_seed, "extend", epoch, "fields"))
    hist = LatencyHistogram()
    trace = _TRACE_INIT
    extend_code = _OP_CODE[OpType.EXTEND]
    applied = 0
    skipped = 0
    gc.collect()  # phases start quiesced; keeps collector pauses out of the window
    clock = time.perf_counter_ns
    t_phase = clock()
    for _ in range(config.extend_ops_per_epoch):
        ordinal = keys.next()
        field_index = fields.next_below(schema.field_count)
        key = render_key(ordinal)
        if key in ledger:
            new_length = ledger.apply_extend(
                key, field_index, schema.extend_delta, schema.max_field_length
            )
        else:
            new_length = None
        if new_length is None:
            skipped += 1
            trace = _trace(trace, extend_code, ordinal, field_index, 0)
            continue
        value = valgen.value(ordinal, field_index, new_length)
        t0 = clock()
        driver.update_field(key, field_index, value)
        hist.record(clock() - t0)
        applied += 1
        trace = _trace(trace, extend_code, ordinal, field_index, new_length)
    wall_s = (clock() - t_phase) / 1e9
    driver.flush()
    return ExtendPhaseStats(
        attempts=config.extend_ops_per_epoch,
        applied=applied,
        skipped=skipped,
        wall_s=wall_s,
        latency=hist,
        trace_hash=trace,
    )


@dataclass
class _WorkerResult:
    op_counts: dict[OpType, int]
    latency: dict[OpType, LatencyHistogram]
    trace_hash: int
    # deferred ledger effects, applied by the coordinator at merge
    updates: list[tuple[str, int, int]]
    inserts: list[tuple[str, list[int]]]
    deletes: list[str]


def _run_worker(
    worker_id: int,
    op_count: int,
    driver: be.StorageDriver,
    ledger: LengthLedger,
    config: ExperimentConfig,
    epoch: int,
    trial_seed: int,
    valgen: ValueGenerator,
    frozen_hist,
    keyspace: int,
    insert_base: int,
    insert_stride: int,
    apply_inline: bool,
) -> _WorkerResult:
    schema = config.schema
    sub = derive_seed(trial_seed, "run", epoch, worker_id)
    mix = OperationMixSampler(config.workload_mix, derive_seed(sub, "ops"))
    keys = make_key_chooser(config.run_key_distribution, keyspace, derive_seed(sub, "keys"))
    aux = SplitMix64(derive_seed(sub, "aux"))
    if config.length_mode == "histogram":
        lengths = HistogramLengthSampler(
            frozen_hist, derive_seed(sub, "lengths"), schema.max_field_length
        )
    else:
        lengths = ConstantLengthSampler(schema.initial_field_length)
    hists = {op: LatencyHistogram() for op in config.workload_mix if config.workload_mix[op] > 0}
    counts = {op: 0 for op in hists}
    trace = _TRACE_INIT
    updates: list[tuple[str, int, int]] = []
    inserts: list[tuple[str, list[int]]] = []
    deletes: list[str] = []
    next_insert = insert_base + worker_id
    clock = time.perf_counter_ns

    for _ in range(op_count):
        op = mix.next()
        code = _OP_CODE[op]
        if op is OpType.READ:
            ordinal = keys.next()
            key = render_key(ordinal)
            t0 = clock()
            record = driver.read(key)
            hists[op].record(clock() - t0)
            got = 0 if record is None else sum(len(v) for v in record)
            trace = _trace(trace, code, ordinal, 0, got)
        elif op is OpType.UPDATE:
            ordinal = keys.next()
            field_index = aux.next_below(schema.field_count)
            length = lengths.next()
            key = render_key(ordinal)
            value = valgen.value(ordinal, field_index, length)
            t0 = clock()
            driver.update_field(key, field_index, value)
            hists[op].record(clock() - t0)
            if apply_inline:
                if key in ledger:
                    ledger.set_length(key, field_index, length)
            else:
                updates.append((key, field_index, length))
            trace = _trace(trace, code, ordinal, field_index, length)
        elif op is OpType.INSERT:
            ordinal = next_insert
            next_insert += insert_stride
            key = render_key(ordinal)
            row = [lengths.next() for _ in range(schema.field_count)]
            record = [valgen.value(ordinal, f, row[f]) for f in range(schema.field_count)]
            t0 = clock()
            driver.insert(key, record)
            hists[op].record(clock() - t0)
            if apply_inline:
                ledger.add_record(key, row)
            else:
                inserts.append((key, row))
            trace = _trace(trace, code, ordinal, 0, sum(row))
        elif op is OpType.SCAN:
            ordinal = keys.next()
            count = aux.next_below(config.max_scan_length) + 1
            key = render_key(ordinal)
            t0 = clock()
            rows = driver.scan(key, count)
            hists[op].record(clock() - t0)
            trace = _trace(trace, code, ordinal, count, len(rows))
        else:  # DELETE
            ordinal = keys.next()
            key = render_key(ordinal)
            t0 = clock()
            driver.delete(key)
            hists[op].record(clock() - t0)
            if apply_inline:
                if key in ledger:
                    ledger.delete_record(key)
            else:
                deletes.append(key)
            trace = _trace(trace, code, ordinal, 0, 0)
        counts[op] += 1

    return _WorkerResult(counts, hists, trace, updates, inserts, deletes)


def run_run_phase(
    driver: be.StorageDriver,
    ledger: LengthLedger,
    config: ExperimentConfig,
    epoch: int,
    trial_seed: int,
    valgen: ValueGenerator,
    keyspace: int | None = None,
    insert_base: int | None = None,
) -> RunPhaseStats:
    """Issue ``run_ops_per_epoch`` operations per the workload mix.

    Keys follow the run distribution over the fixed keyspace; insert
    and update lengths are drawn from the histogram frozen at phase
    start so the size distribution is preserved.  With one worker the
    operation set is fully deterministic; with N > 1 each worker's
    stream is deterministic and ledger effects are applied at merge in
    worker order.
    """
    frozen = ledger.histogram()
    mean_before = ledger.mean_field_length()
    if keyspace is None:
        keyspace = config.record_count
    if insert_base is None:
        insert_base = config.record_count
    workers = config.workers
    total_ops = config.run_ops_per_epoch
    gc.collect()
    clock = time.perf_counter_ns
    t_phase = clock()
    if workers == 1:
        results = [
            _run_worker(
                0, total_ops, driver, ledger, config, epoch, trial_seed, valgen,
                frozen, keyspace, insert_base, 1, apply_inline=True,
            )
        ]
    else:
        share = [total_ops // workers] * workers
        for i in range(total_ops % workers):
            share[i] += 1
        results: list[_WorkerResult | None] = [None] * workers
        errors: list[BaseException] = []

        def job(w: int) -> None:
            try:
                results[w] = _run_worker(
                    w, share[w], driver, ledger, config, epoch, trial_seed, valgen,
                    frozen, keyspace, insert_base, workers, apply_inline=False,
                )
            except BaseException as exc:  # propagate to coordinator
                errors.append(exc)

        threads = [threading.Thread(target=job, args=(w,)) for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        for res in results:
            for key, field_index, length in res.updates:
                if key in ledger:
                    ledger.set_length(key, field_index, length)
            for key, row in res.inserts:
                ledger.add_record(key, row)
            for key in res.deletes:
                if key in ledger:
                    ledger.delete_record(key)
    wall_s = (clock() - t_phase) / 1e9
    driver.flush()

    merged_hists: dict[OpType, LatencyHistogram] = {}
    merged_counts: dict[str, int] = {}
    trace = 0
    for res in results:
        for op, h in res.latency.items():
            if op not in merged_hists:
                merged_hists[op] = LatencyHistogram()
            merged_hists[op].merge(h)
        for op, n in res.op_counts.items():
            merged_counts[op.value] = merged_counts.get(op.value, 0) + n
        trace ^= res.trace_hash
    post = ledger.histogram()
    mean_after = ledger.mean_field_length() if len(ledger) else 0.0
    emd = frozen.emd(post) if post.total else 0.0
    return RunPhaseStats(
        operations=total_ops,
        wall_s=wall_s,
        op_counts=merged_counts,
        latency={op.value: h for op, h in merged_hists.items() if h.count},
        mean_length_before=mean_before,
        mean_length_after=mean_after,
        histogram_emd=emd,
        trace_hash=trace,
    )


# -- report assembly --------------------------------------------------------


def _ledger_snapshot(ledger: LengthLedger) -> dict:
    return {
        "volume_bytes": ledger.total_volume(),
        "record_count": len(ledger),
        "mean_field_length": ledger.mean_field_length(),
        "max_field_length": ledger.max_field_length(),
        "max_record_size": ledger.max_record_size(),
        "capped_records": ledger.capped_records(),
        "size_histogram": ledger.histogram().snapshot(),
    }


def _build_report(
    config: ExperimentConfig,
    mode: Mode,
    epoch: int,
    trial: int,
    snapshot: dict,
    extend: ExtendPhaseStats | None,
    run: RunPhaseStats,
    driver: be.StorageDriver,
    dump_checksum: str | None,
    target_volume: int | None = None,
    export_histograms: bool = False,
) -> EpochReport:
    latency: dict[str, dict[str, float]] = {}
    histograms_b64: dict[str, str] = {}
    for op, h in run.latency.items():
        latency[op] = h.summarize().as_dict()
        if export_histograms:
            histograms_b64[op] = h.to_base64()
    if extend is not None and extend.latency.count:
        latency[OpType.EXTEND.value] = extend.latency.summarize().as_dict()
        if export_histograms:
            histograms_b64[OpType.EXTEND.value] = extend.latency.to_base64()
    trace = run.trace_hash
    if extend is not None:
        trace = (trace * _TRACE_PRIME + extend.trace_hash) & MASK64
    drift = 0.0
    if run.mean_length_before:
        drift = abs(run.mean_length_after - run.mean_length_before) / run.mean_length_before * 100.0
    return EpochReport(
        epoch=epoch,
        mode=mode.value,
        trial=trial,
        seed=config.seed,
        config_hash=config.config_hash(),
        base_hash=config.base_hash(),
        backend_id=config.backend_id,
        volume_bytes=snapshot["volume_bytes"],
        record_count=snapshot["record_count"],
        mean_field_length=snapshot["mean_field_length"],
        max_field_length=snapshot["max_field_length"],
        max_record_size=snapshot["max_record_size"],
        capped_records=snapshot["capped_records"],
        extend_attempts=extend.attempts if extend else 0,
        extend_applied=extend.applied if extend else 0,
        extend_skipped=extend.skipped if extend else 0,
        extend_wall_s=extend.wall_s if extend else 0.0,
        extend_throughput=(
            throughput(extend.attempts, extend.wall_s)
            if extend and extend.attempts and extend.wall_s > 0
            else 0.0
        ),
        run_operations=run.operations,
        run_wall_s=run.wall_s,
        run_throughput=throughput(run.operations, run.wall_s) if run.wall_s > 0 else 0.0,
        op_counts=run.op_counts,
        latency=latency,
        drift_pct=drift,
        histogram_emd=run.histogram_emd,
        size_histogram=snapshot["size_histogram"],
        backend=driver.stats(),
        trace_hash=f"{trace:016x}",
        dump_checksum=dump_checksum,
        target_volume_bytes=target_volume,
        histograms_b64=histograms_b64 if export_histograms else None,
    )


# -- modes -------------------------------------------------------------------


def _trial_seed(config: ExperimentConfig, trial: int) -> int:
    return (config.seed + trial) & MASK64


def _make_store(config: ExperimentConfig, store_root: Path | None, label: str) -> tuple[be.StorageDriver, Path | None]:
    if config.backend_id == "memstore":
        return be.make_driver("memstore"), None
    root = Path(tempfile.mkdtemp(prefix=f"ivs-{label}-")) if store_root is None else Path(store_root) / label
    return be.make_driver(config.backend_id, root), root


def _drop_store(driver: be.StorageDriver, root: Path | None) -> None:
    driver.close()
    if root is not None:
        shutil.rmtree(root, ignore_errors=True)


def run_main(
    config: ExperimentConfig,
    dump_dir: str | Path,
    trial: int = 0,
    store_root: str | Path | None = None,
    on_epoch: OnEpoch | None = None,
    export_histograms: bool = False,
) -> list[EpochReport]:
    """Load once, then per epoch: extend phase, dump, run phase, report.

    The driver instance persists across epochs so physical history
    accumulates.  Dumps land in ``dump_dir`` as dump-epoch-NNN.* files.
    """
    config.validate()
    trial_seed = _trial_seed(config, trial)
    valgen = ValueGenerator(derive_seed(trial_seed, "values"))
    driver, root = _make_store(config, Path(store_root) if store_root else None, f"main-t{trial}")
    reports: list[EpochReport] = []
    inserted = 0
    try:
        ledger = load_initial(driver, config, valgen)
        consistency_check(driver, ledger, derive_seed(trial_seed, "consistency", "load"))
        for epoch in range(config.epochs):
            # dump files are numbered by completed extend phases, so
            # epoch index e produces dump-epoch-{e+1}; 000 is the load state
            plan = EpochPlan(
                epoch_index=epoch,
                extend_attempts=config.extend_ops_per_epoch,
                run_operations=config.run_ops_per_epoch,
                mode=Mode.MAIN_RUN,
                dump_path=be.dump_paths(dump_dir, epoch + 1)[0],
            )
            extend = run_extend_phase(driver, ledger, config, epoch, trial_seed, valgen)
            manifest = be.dump(
                driver, ledger, dump_dir, epoch + 1, config.base_hash(), inserted
            )
            snapshot = _ledger_snapshot(ledger)
            if config.workers == 1:
                consistency_check(
                    driver, ledger, derive_seed(trial_seed, "consistency", epoch)
                )
            run = run_run_phase(
                driver, ledger, config, epoch, trial_seed, valgen,
                insert_base=config.record_count + inserted,
            )
            inserted += run.op_counts.get(OpType.INSERT.value, 0)
            report = _build_report(
                config, Mode.MAIN_RUN, epoch, trial, snapshot, extend, run,
                driver, manifest.checksum, export_histograms=export_histograms,
            )
            reports.append(report)
            if on_epoch:
                on_epoch(report)
        return reports
    finally:
        _drop_store(driver, root)


def run_clean(
    config: ExperimentConfig,
    dump_dir: str | Path,
    trial: int = 0,
    store_root: str | Path | None = None,
    on_epoch: OnEpoch | None = None,
    export_histograms: bool = False,
) -> list[EpochReport]:
    """Per epoch: restore that epoch's dump into a fresh driver, run phase.

    No extend phase executes; the ledger is rebuilt from the dump's
    sidecar so the run phase reproduces the main-run streams exactly.
    """
    config.validate()
    trial_seed = _trial_seed(config, trial)
    valgen = ValueGenerator(derive_seed(trial_seed, "values"))
    reports: list[EpochReport] = []
    for epoch in range(config.epochs):
        bin_path, ledger_path, _ = be.dump_paths(dump_dir, epoch + 1)
        if not Path(bin_path).exists():
            raise FileNotFoundError(f"missing dump for epoch {epoch}: {bin_path}")
        driver, root = _make_store(
            config, Path(store_root) if store_root else None, f"clean-t{trial}-e{epoch:03d}"
        )
        try:
            manifest = be.restore(bin_path, driver)
            ledger = LengthLedger.load_sidecar(ledger_path, config.schema, config.histogram_bin_width)
            if manifest.volume_bytes != ledger.total_volume():
                raise ConsistencyError(
                    f"epoch {epoch}: manifest volume {manifest.volume_bytes} != "
                    f"sidecar volume {ledger.total_volume()}"
                )
            consistency_check(driver, ledger, derive_seed(trial_seed, "consistency", epoch))
            snapshot = _ledger_snapshot(ledger)
            run = run_run_phase(
                driver, ledger, config, epoch, trial_seed, valgen,
                insert_base=config.record_count + manifest.inserted_records,
            )
            report = _build_report(
                config, Mode.CLEAN_RUN, epoch, trial, snapshot, None, run,
                driver, None, export_histograms=export_histograms,
            )
            reports.append(report)
            if on_epoch:
                on_epoch(report)
        finally:
            _drop_store(driver, root)
    return reports


def run_baseline(
    config: ExperimentConfig,
    mode: Mode,
    volumes: Iterable[int] | None = None,
    trial: int = 0,
    store_root: str | Path | None = None,
    on_epoch: OnEpoch | None = None,
    export_histograms: bool = False,
) -> list[EpochReport]:
    """Per epoch-equivalent volume: fresh uniform load, then a run phase.

    ``volumes`` defaults to the analytic per-epoch volumes of the
    matching main-run config (zero skips); pass volumes taken from
    main-run reports to account for actual applied extends.
    """
    config.validate()
    if mode not in (Mode.SPREAD_BASELINE, Mode.AVERAGE_BASELINE):
        raise ValueError(f"{mode.value} is not a baseline mode")
    if volumes is None:
        volumes = [analytic_volume(config, e + 1) for e in range(config.epochs)]
    trial_seed = _trial_seed(config, trial)
    valgen = ValueGenerator(derive_seed(trial_seed, "values"))
    reports: list[EpochReport] = []
    for epoch, target in enumerate(volumes):
        spec = BaselineSpec.for_mode(mode, config, target)
        driver, root = _make_store(
            config, Path(store_root) if store_root else None,
            f"{mode.value}-t{trial}-e{epoch:03d}",
        )
        try:
            ledger = _load_uniform(driver, config, spec, valgen)
            consistency_check(driver, ledger, derive_seed(trial_seed, "consistency", epoch))
            snapshot = _ledger_snapshot(ledger)
            run = run_run_phase(
                driver, ledger, config, epoch, trial_seed, valgen,
                keyspace=spec.record_count,
                insert_base=spec.record_count,
            )
            report = _build_report(
                config, mode, epoch, trial, snapshot, None, run,
                driver, None, target_volume=target, export_histograms=export_histograms,
            )
            reports.append(report)
            if on_epoch:
                on_epoch(report)
        finally:
            _drop_store(driver, root)
    return reports
