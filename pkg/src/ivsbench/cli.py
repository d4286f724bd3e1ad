"""Workload-file configuration and the ``ivsbench`` command line.

Workload files use ``key=value`` properties with ``#`` comments.
Unknown keys and malformed values are errors that name the offending
line.  Omitted keys fall back to the reference defaults; properties
given with ``-p`` override the file, the ``IVS_SEED`` / ``IVS_OUTPUT``
environment variables override properties, and explicit flags override
everything.

Exit codes: 0 success, 2 configuration error, 3 runtime failure,
4 verification mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from ivsbench import backend as be
from ivsbench import report as rep
from ivsbench import runner as rn
from ivsbench.core import (
    ExperimentConfig,
    KeyDistribution,
    LengthLedger,
    Mode,
    OpType,
    RecordSchema,
)
from ivsbench.genkit import ValueGenerator, derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_VERIFY = 4


class ConfigError(Exception):
    pass


_INT_KEYS = {
    "recordcount",
    "fieldcount",
    "fieldlength",
    "extendfieldlength",
    "maxfieldlength",
    "operationcount",
    "extendoperationcount",
    "epochs",
    "trials",
    "seed",
    "workers",
    "maxscanlength",
}
_FLOAT_KEYS = {
    "readproportion",
    "updateproportion",
    "insertproportion",
    "scanproportion",
    "deleteproportion",
}
_ENUM_KEYS = {
    "requestdistribution": ("uniform", "zipfian"),
    "runrequestdistribution": ("uniform", "zipfian"),
    "fieldlengthdistribution": ("constant", "histogram"),
    "mode": tuple(m.value for m in Mode),
    "backend": ("memstore", "logstore"),
}
_STR_KEYS = {"outputdir"}

KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | set(_ENUM_KEYS) | _STR_KEYS

_PROPORTION_OPS = {
    "readproportion": OpType.READ,
    "updateproportion": OpType.UPDATE,
    "insertproportion": OpType.INSERT,
    "scanproportion": OpType.SCAN,
    "deleteproportion": OpType.DELETE,
}


def parse_properties(text: str, source: str = "<properties>") -> dict[str, tuple[str, str]]:
    """``key=value`` lines -> {key: (value, location)}; later keys win."""
    props: dict[str, tuple[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        props[key] = (value, where)
    return props


def _typed(props: dict[str, tuple[str, str]]) -> dict[str, object]:
    typed: dict[str, object] = {}
    for key, (value, where) in props.items():
        if key in _INT_KEYS:
            try:
                typed[key] = int(value)
            except ValueError:
                raise ConfigError(f"{where}: {key} must be an integer, got {value!r}") from None
        elif key in _FLOAT_KEYS:
            try:
                typed[key] = float(value)
            except ValueError:
                raise ConfigError(f"{where}: {key} must be a number, got {value!r}") from None
        elif key in _ENUM_KEYS:
            if value not in _ENUM_KEYS[key]:
                raise ConfigError(
                    f"{where}: {key} must be one of {', '.join(_ENUM_KEYS[key])}, got {value!r}"
                )
            typed[key] = value
        else:
            typed[key] = value
    return typed


def build_config(props: dict[str, tuple[str, str]], env: dict[str, str] | None = None) -> ExperimentConfig:
    """Resolve properties + environment into a validated config."""
    if env is None:
        env = dict(os.environ)
    typed = _typed(props)

    mix_sources = {k: props[k][1] for k in _PROPORTION_OPS if k in props}
    if mix_sources:
        mix = {op: float(typed.get(k, 0.0)) for k, op in _PROPORTION_OPS.items()}
        for key, where in mix_sources.items():
            if typed[key] < 0:
                raise ConfigError(f"{where}: {key} must be non-negative")
        total = sum(mix.values())
        if abs(total - 1.0) > 1e-9:
            lines = ", ".join(sorted(mix_sources.values()))
            raise ConfigError(f"workload proportions sum to {total:g} (see {lines}), expected 1")
        mix = {op: p for op, p in mix.items() if p > 0}
    else:
        mix = {OpType.READ: 1.0}

    seed = int(typed.get("seed", 42))
    if "IVS_SEED" in env:
        try:
            seed = int(env["IVS_SEED"])
        except ValueError:
            raise ConfigError(f"IVS_SEED must be an integer, got {env['IVS_SEED']!r}") from None
    output_dir = str(typed.get("outputdir", "ivs-results"))
    if "IVS_OUTPUT" in env:
        output_dir = env["IVS_OUTPUT"]

    schema = RecordSchema(
        field_count=int(typed.get("fieldcount", 10)),
        initial_field_length=int(typed.get("fieldlength", 100)),
        extend_delta=int(typed.get("extendfieldlength", 100)),
        max_field_length=int(typed.get("maxfieldlength", 1_600_000)),
    )
    extend_dist = KeyDistribution(str(typed.get("requestdistribution", "uniform")))
    run_dist = KeyDistribution(str(typed.get("runrequestdistribution", "uniform")))
    config = ExperimentConfig(
        record_count=int(typed.get("recordcount", 10_000)),
        schema=schema,
        extend_ops_per_epoch=int(typed.get("extendoperationcount", 100_000)),
        run_ops_per_epoch=int(typed.get("operationcount", 100_000)),
        epochs=int(typed.get("epochs", 100)),
        extend_key_distribution=extend_dist,
        run_key_distribution=run_dist,
        workload_mix=mix,
        mode=Mode(str(typed.get("mode", Mode.MAIN_RUN.value))),
        trials=int(typed.get("trials", 5)),
        seed=seed,
        backend_id=str(typed.get("backend", "memstore")),
        max_scan_length=int(typed.get("maxscanlength", 1000)),
        length_mode=str(typed.get("fieldlengthdistribution", "histogram")),
        workers=int(typed.get("workers", 1)),
        output_dir=output_dir,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def parse_config(path: str | Path | None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load a workload file (optional) plus ``key=value`` overrides."""
    props: dict[str, tuple[str, str]] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"workload file not found: {p}")
        props.update(parse_properties(p.read_text(encoding="utf-8"), str(p)))
    for i, item in enumerate(overrides or [], start=1):
        props.update(parse_properties(item, f"-p[{i}]"))
    return build_config(props)


# -- command helpers ---------------------------------------------------------


def _apply_flag_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "output", None):
        config.output_dir = args.output
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "trials", None) is not None:
        config.trials = args.trials
    if getattr(args, "epochs", None) is not None:
        config.epochs = args.epochs
    if getattr(args, "backend", None):
        config.backend_id = args.backend
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def _mode_dir(config: ExperimentConfig, mode: Mode) -> Path:
    out = Path(config.output_dir) / mode.value
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config_echo(config: ExperimentConfig, directory: Path) -> None:
    echo = config.canonical_dict()
    echo["output_dir"] = config.output_dir
    echo["config_hash"] = config.config_hash()
    echo["base_hash"] = config.base_hash()
    with open(directory / "config.json", "w", encoding="utf-8") as f:
        json.dump(echo, f, sort_keys=True, indent=2)
        f.write("\n")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _volumes_from_main(main_dir: Path, trial: int, epochs: int) -> list[int] | None:
    """Per-epoch realized volumes from main-run reports, if available."""
    path = main_dir / f"trial-{trial}.jsonl"
    if not path.is_file():
        path = main_dir / "trial-0.jsonl"
    if not path.is_file():
        return None
    reports = rep.load_report_file(path)
    by_epoch = {r.epoch: r.volume_bytes for r in reports}
    if not all(e in by_epoch for e in range(epochs)):
        return None
    return [by_epoch[e] for e in range(epochs)]


def _run_mode(config: ExperimentConfig, mode: Mode, args: argparse.Namespace) -> int:
    outdir = _mode_dir(config, mode)
    _write_config_echo(config, outdir)
    all_trials: list[list[rn.EpochReport]] = []
    for trial in range(config.trials):
        jsonl_path = outdir / f"trial-{trial}.jsonl"
        reports: list[rn.EpochReport] = []
        _progress(f"[{mode.value}] trial {trial}: {config.epochs} epochs on {config.backend_id}")
        try:
            with open(jsonl_path, "w", encoding="utf-8") as sink:

                def on_epoch(report: rn.EpochReport) -> None:
                    reports.append(report)
                    sink.write(report.to_json_line() + "\n")
                    sink.flush()
                    _progress(
                        f"[{mode.value}] trial {trial} epoch {report.epoch}: "
                        f"{report.run_throughput:,.0f} ops/s, volume {report.volume_bytes:,} B"
                    )

                if mode is Mode.MAIN_RUN:
                    dump_dir = outdir / "dumps" / f"trial-{trial}"
                    dump_dir.mkdir(parents=True, exist_ok=True)
                    rn.run_main(config, dump_dir, trial=trial, on_epoch=on_epoch)
                elif mode is Mode.CLEAN_RUN:
                    dumps_root = Path(getattr(args, "dumps", None) or
                                      Path(config.output_dir) / Mode.MAIN_RUN.value / "dumps")
                    dump_dir = dumps_root / f"trial-{trial}"
                    if not dump_dir.is_dir():
                        raise FileNotFoundError(f"no dump directory for trial {trial}: {dump_dir}")
                    rn.run_clean(config, dump_dir, trial=trial, on_epoch=on_epoch)
                else:
                    volumes = None
                    if getattr(args, "volumes", None):
                        volumes = [int(v) for v in args.volumes.split(",")]
                    elif getattr(args, "from_main", None):
                        volumes = _volumes_from_main(Path(args.from_main), trial, config.epochs)
                        if volumes is None:
                            raise FileNotFoundError(
                                f"--from-main {args.from_main}: no usable main-run reports"
                            )
                    if (
                        mode is Mode.SPREAD_BASELINE
                        and any(op is not OpType.READ for op in config.workload_mix)
                    ):
                        _progress(
                            "warning: spread-baseline with a mutating mix; sizes will drift"
                        )
                    rn.run_baseline(config, mode, volumes=volumes, trial=trial, on_epoch=on_epoch)
        except Exception as exc:
            (outdir / "FAILED").write_text(f"trial {trial}: {exc}\n", encoding="utf-8")
            print(f"error: trial {trial} failed: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        all_trials.append(reports)
    agg = rep.aggregate_trials([[r.metrics() for r in t] for t in all_trials])
    rep.write_aggregate_csv(outdir / "aggregate.csv", agg.rows)
    print(f"{mode.value}: {config.trials} trial(s) x {len(all_trials[0])} epochs -> {outdir}")
    return EXIT_OK


# -- subcommands -------------------------------------------------------------


def cmd_load(args: argparse.Namespace) -> int:
    config = _apply_flag_overrides(parse_config(args.workload, args.property), args)
    outdir = Path(config.output_dir) / "load"
    outdir.mkdir(parents=True, exist_ok=True)
    _write_config_echo(config, outdir)
    trial_seed = config.seed & ((1 << 64) - 1)
    valgen = ValueGenerator(derive_seed(trial_seed, "values"))
    driver, root = rn._make_store(config, None, "load")
    try:
        ledger = rn.load_initial(driver, config, valgen)
        rn.consistency_check(driver, ledger, derive_seed(trial_seed, "consistency", "load"))
        manifest = be.dump(driver, ledger, outdir, 0, config.base_hash(), 0)
        expected = config.record_count * config.schema.field_count * config.schema.initial_field_length
        print(f"loaded {config.record_count} records, volume {manifest.volume_bytes:,} B "
              f"(expected {expected:,} B)")
        if manifest.volume_bytes != expected:
            print("error: loaded volume differs from schema arithmetic", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"dump written to {be.dump_paths(outdir, 0)[0]}")
        return EXIT_OK
    finally:
        rn._drop_store(driver, root)


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_flag_overrides(parse_config(args.workload, args.property), args)
    return _run_mode(config, config.mode, args)


def cmd_clean_run(args: argparse.Namespace) -> int:
    config = _apply_flag_overrides(parse_config(args.workload, args.property), args)
    config.mode = Mode.CLEAN_RUN
    return _run_mode(config, Mode.CLEAN_RUN, args)


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _apply_flag_overrides(parse_config(args.workload, args.property), args)
    if args.variant == "spread":
        config.mode = Mode.SPREAD_BASELINE
    elif args.variant == "average":
        config.mode = Mode.AVERAGE_BASELINE
    elif config.mode not in (Mode.SPREAD_BASELINE, Mode.AVERAGE_BASELINE):
        raise ConfigError(
            "baseline needs --variant spread|average or a baseline mode in the workload file"
        )
    return _run_mode(config, config.mode, args)


def cmd_report(args: argparse.Namespace) -> int:
    reports = rep.load_reports(args.paths)
    written = rep.render_report(reports, args.output or "ivs-report")
    for path in written:
        print(path)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """Consistency oracles against an existing dump."""
    bin_path = Path(args.dump)
    failures = 0

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        status = "ok" if ok else "MISMATCH"
        print(f"verify {name}: {status}{' - ' + detail if detail and not ok else ''}")
        if not ok:
            failures += 1

    manifest = be.DumpManifest.load(bin_path.with_suffix(".manifest"))
    try:
        checksum = be.verify_checksum(bin_path)
        check("checksum", checksum == manifest.checksum)
    except be.ChecksumError as exc:
        check("checksum", False, str(exc))
        return EXIT_VERIFY

    # permissive schema: the sidecar is validated against the dump, not a config
    schema = RecordSchema(
        field_count=manifest.field_count, initial_field_length=0, max_field_length=1 << 31
    )
    ledger = LengthLedger.load_sidecar(bin_path.with_suffix(".ledger"), schema)
    volume = 0
    records = 0
    sorted_ok = True
    lengths_ok = True
    prev_key = ""
    for key, fields in be.iter_dump_records(bin_path, manifest.field_count):
        if key <= prev_key and records > 0:
            sorted_ok = False
        prev_key = key
        records += 1
        volume += sum(len(v) for v in fields)
        if key not in ledger or ledger.lengths_of(key) != [len(v) for v in fields]:
            lengths_ok = False
    check("record order", sorted_ok)
    check("record count", records == manifest.record_count,
          f"{records} != {manifest.record_count}")
    check("ledger lengths", lengths_ok and records == len(ledger))
    check("volume", volume == manifest.volume_bytes and volume == ledger.total_volume(),
          f"scan {volume}, manifest {manifest.volume_bytes}, ledger {ledger.total_volume()}")

    driver = be.make_driver("memstore")
    be.restore(bin_path, driver)
    # the fixpoint check is about bytes, so derive its ledger from the
    # restored records rather than the (independently checked) sidecar
    rebuilt = LengthLedger(schema)
    for key, fields in driver.iter_records():
        rebuilt.add_record(key, [len(v) for v in fields])
    with tempfile.TemporaryDirectory() as d:
        redump = be.dump(driver, rebuilt, d, manifest.epoch, manifest.config_hash,
                         manifest.inserted_records)
        original = bin_path.read_bytes()
        round_trip = be.dump_paths(d, manifest.epoch)[0].read_bytes()
        check("restore round-trip", original == round_trip and redump.checksum == manifest.checksum)

    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-P", "--workload", help="workload property file")
    parser.add_argument(
        "-p", "--property", action="append", default=[], metavar="KEY=VALUE",
        help="override one workload property (repeatable)",
    )
    parser.add_argument("-o", "--output", help="output directory (overrides outputdir)")
    parser.add_argument("--seed", type=int, help="override the seed")
    parser.add_argument("--trials", type=int, help="override trial count")
    parser.add_argument("--epochs", type=int, help="override epoch count")
    parser.add_argument("--backend", help="override the backend id")
    parser.add_argument("--workers", type=int, help="override run-phase worker count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivsbench",
        description="Benchmark key-value backends under growing value sizes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="load the initial dataset and dump it")
    _add_common(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("run", help="run the mode selected by the config")
    _add_common(p)
    p.add_argument("--dumps", help="dump directory root (clean-run mode)")
    p.add_argument("--volumes", help="comma-separated baseline volumes in bytes")
    p.add_argument("--from-main", dest="from_main", help="main-run output dir for baseline volumes")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("clean-run", help="restore per-epoch dumps and measure run phases")
    _add_common(p)
    p.add_argument("--dumps", help="dump directory root (default: <output>/main-run/dumps)")
    p.set_defaults(func=cmd_clean_run)

    p = sub.add_parser("baseline", help="measure a uniform-size baseline across volumes")
    _add_common(p)
    p.add_argument("--variant", choices=("spread", "average"), help="baseline family")
    p.add_argument("--volumes", help="comma-separated volumes in bytes")
    p.add_argument("--from-main", dest="from_main", help="main-run output dir for realized volumes")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="render charts and aggregate CSV from reports")
    p.add_argument("paths", nargs="+", help="report files or directories")
    p.add_argument("-o", "--output", help="report output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="run consistency oracles against a dump")
    p.add_argument("dump", help="path to a dump-epoch-NNN.bin file")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except rep.ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except be.ChecksumError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
