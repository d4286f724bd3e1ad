"""Workload-file parsing, overrides, subcommands, and exit codes."""

import json

import pytest

from ivsbench.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERIFY,
    ConfigError,
    build_config,
    main,
    parse_config,
    parse_properties,
)
from ivsbench.core import Mode, OpType


def config_from(text: str, env=None):
    return build_config(parse_properties(text, "wl"), env=env or {})


class TestParseProperties:
    def test_comments_and_blanks(self):
        props = parse_properties("# a comment\n\nrecordcount=5\n", "wl")
        assert props == {"recordcount": ("5", "wl:3")}

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match=r"wl:2.*fieldcont"):
            parse_properties("recordcount=5\nfieldcont=10\n", "wl")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="wl:1"):
            parse_properties("recordcount 5\n", "wl")

    def test_later_keys_win(self):
        props = parse_properties("seed=1\nseed=2\n", "wl")
        assert props["seed"][0] == "2"


class TestDefaults:
    def test_empty_file_reference_defaults(self):
        cfg = config_from("")
        assert cfg.record_count == 10_000
        assert cfg.schema.field_count == 10
        assert cfg.schema.initial_field_length == 100
        assert cfg.extend_ops_per_epoch == 100_000
        assert cfg.schema.extend_delta == 100
        assert cfg.run_ops_per_epoch == 100_000
        assert cfg.schema.max_field_length == 1_600_000
        assert cfg.workload_mix == {OpType.READ: 1.0}
        assert cfg.mode is Mode.MAIN_RUN
        assert cfg.trials == 5
        assert cfg.workers == 1
        assert cfg.length_mode == "histogram"

    def test_workload_a_mix(self):
        cfg = config_from("readproportion=0.5\nupdateproportion=0.5\n")
        assert cfg.workload_mix == {OpType.READ: 0.5, OpType.UPDATE: 0.5}

    def test_inconsistent_proportions(self):
        with pytest.raises(ConfigError, match="sum to 1.4"):
            config_from("readproportion=0.7\nupdateproportion=0.7\n")

    def test_malformed_int_names_line(self):
        with pytest.raises(ConfigError, match=r"wl:1.*recordcount"):
            config_from("recordcount=ten\n")

    def test_bad_enum(self):
        with pytest.raises(ConfigError, match="requestdistribution"):
            config_from("requestdistribution=latest\n")

    def test_distribution_wiring(self):
        cfg = config_from("requestdistribution=zipfian\n")
        assert cfg.extend_key_distribution.kind == "zipfian"
        assert cfg.extend_key_distribution.theta == 0.99
        assert cfg.run_key_distribution.kind == "uniform"


class TestOverrides:
    def test_env_seed_and_output(self):
        cfg = config_from("seed=1\noutputdir=file-dir\n",
                          env={"IVS_SEED": "777", "IVS_OUTPUT": "env-dir"})
        assert cfg.seed == 777
        assert cfg.output_dir == "env-dir"

    def test_bad_env_seed(self):
        with pytest.raises(ConfigError, match="IVS_SEED"):
            config_from("", env={"IVS_SEED": "abc"})

    def test_dash_p_overrides_file(self, tmp_path):
        wl = tmp_path / "w.properties"
        wl.write_text("recordcount=50\nepochs=2\n")
        cfg = parse_config(wl, ["recordcount=75"])
        assert cfg.record_count == 75
        assert cfg.epochs == 2

    def test_missing_workload_file(self):
        with pytest.raises(ConfigError, match="not found"):
            parse_config("does-not-exist.properties")


def write_tiny_workload(tmp_path, **extra) -> str:
    lines = {
        "recordcount": 30,
        "fieldcount": 3,
        "extendoperationcount": 100,
        "operationcount": 100,
        "epochs": 2,
        "trials": 1,
        "outputdir": str(tmp_path / "out"),
    }
    lines.update(extra)
    wl = tmp_path / "workload.properties"
    wl.write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
    return str(wl)


class TestCommands:
    def test_run_writes_outputs(self, tmp_path, capsys):
        wl = write_tiny_workload(tmp_path)
        assert main(["run", "-P", wl]) == EXIT_OK
        out = tmp_path / "out" / "main-run"
        assert (out / "trial-0.jsonl").is_file()
        assert (out / "aggregate.csv").is_file()
        assert (out / "config.json").is_file()
        assert (out / "dumps" / "trial-0" / "dump-epoch-002.bin").is_file()
        lines = (out / "trial-0.jsonl").read_text().splitlines()
        assert len(lines) == 2
        echo = json.loads((out / "config.json").read_text())
        assert echo["record_count"] == 30

    def test_clean_consumes_main_dumps(self, tmp_path):
        wl = write_tiny_workload(tmp_path)
        assert main(["run", "-P", wl]) == EXIT_OK
        assert main(["clean-run", "-P", wl]) == EXIT_OK
        clean = tmp_path / "out" / "clean-run" / "trial-0.jsonl"
        main_file = tmp_path / "out" / "main-run" / "trial-0.jsonl"
        clean_vols = [json.loads(l)["volume_bytes"] for l in clean.read_text().splitlines()]
        main_vols = [json.loads(l)["volume_bytes"] for l in main_file.read_text().splitlines()]
        assert clean_vols == main_vols

    def test_baseline_variant(self, tmp_path):
        wl = write_tiny_workload(tmp_path)
        assert main(["baseline", "-P", wl, "--variant", "average"]) == EXIT_OK
        assert (tmp_path / "out" / "average-baseline" / "trial-0.jsonl").is_file()

    def test_baseline_needs_variant(self, tmp_path):
        wl = write_tiny_workload(tmp_path)
        assert main(["baseline", "-P", wl]) == EXIT_CONFIG

    def test_spread_baseline_with_updates_warns_but_runs(self, tmp_path, capsys):
        wl = write_tiny_workload(tmp_path, readproportion=0.9, updateproportion=0.1)
        assert main(["baseline", "-P", wl, "--variant", "spread"]) == EXIT_OK
        assert "warning" in capsys.readouterr().err

    def test_clean_without_dumps_fails(self, tmp_path):
        wl = write_tiny_workload(tmp_path)
        assert main(["clean-run", "-P", wl]) == 3

    def test_config_error_exit_code(self, tmp_path):
        wl = tmp_path / "bad.properties"
        wl.write_text("unknownkey=1\n")
        assert main(["run", "-P", str(wl)]) == EXIT_CONFIG

    def test_flag_overrides(self, tmp_path):
        wl = write_tiny_workload(tmp_path)
        assert main(["run", "-P", wl, "--epochs", "1", "--trials", "2"]) == EXIT_OK
        out = tmp_path / "out" / "main-run"
        assert (out / "trial-1.jsonl").is_file()
        assert len((out / "trial-1.jsonl").read_text().splitlines()) == 1

    def test_load_command(self, tmp_path, capsys):
        wl = write_tiny_workload(tmp_path)
        assert main(["load", "-P", wl]) == EXIT_OK
        assert (tmp_path / "out" / "load" / "dump-epoch-000.bin").is_file()
        assert "volume 9,000 B" in capsys.readouterr().out


class TestVerify:
    def test_verify_good_dump(self, tmp_path, capsys):
        wl = write_tiny_workload(tmp_path)
        main(["run", "-P", wl])
        dump = tmp_path / "out" / "main-run" / "dumps" / "trial-0" / "dump-epoch-001.bin"
        assert main(["verify", str(dump)]) == EXIT_OK
        assert "all checks passed" in capsys.readouterr().out

    def test_verify_corrupt_dump(self, tmp_path, capsys):
        wl = write_tiny_workload(tmp_path)
        main(["run", "-P", wl])
        dump = tmp_path / "out" / "main-run" / "dumps" / "trial-0" / "dump-epoch-001.bin"
        blob = bytearray(dump.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        dump.write_bytes(bytes(blob))
        assert main(["verify", str(dump)]) == EXIT_VERIFY

    def test_verify_tampered_ledger(self, tmp_path):
        wl = write_tiny_workload(tmp_path)
        main(["run", "-P", wl])
        stem = tmp_path / "out" / "main-run" / "dumps" / "trial-0" / "dump-epoch-001"
        ledger = stem.with_suffix(".ledger")
        lines = ledger.read_text().splitlines()
        parts = lines[0].split(",")
        parts[1] = str(int(parts[1]) + 100)
        lines[0] = ",".join(parts)
        ledger.write_text("\n".join(lines) + "\n")
        assert main(["verify", str(stem.with_suffix(".bin"))]) == EXIT_VERIFY


class TestReportCommand:
    def test_report_from_run(self, tmp_path):
        wl = write_tiny_workload(tmp_path, trials=2)
        main(["run", "-P", wl])
        rc = main(["report", str(tmp_path / "out"), "-o", str(tmp_path / "rep")])
        assert rc == EXIT_OK
        assert (tmp_path / "rep" / "aggregate.csv").is_file()
        assert (tmp_path / "rep" / "throughput-vs-epoch.svg").is_file()

    def test_report_no_inputs(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["report", str(tmp_path / "empty")]) == EXIT_CONFIG
