"""Aggregate CSV round trip and chart determinism."""

import pytest

from ivsbench import report as rep
from ivsbench import runner as rn
from ivsbench.core import ExperimentConfig, Mode, OpType, RecordSchema
from ivsbench.metrics import AggregateRow, aggregate_trials


def tiny_config(**kw):
    defaults = dict(
        record_count=40,
        schema=RecordSchema(field_count=3, max_field_length=4000),
        extend_ops_per_epoch=150,
        run_ops_per_epoch=150,
        epochs=2,
        trials=1,
        seed=7,
        backend_id="memstore",
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def three_mode_reports(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("runs")
    cfg = tiny_config()
    reports = []
    for trial in range(2):
        reports += rn.run_main(cfg, tmp / f"dumps-{trial}", trial=trial)
        reports += rn.run_clean(cfg, tmp / f"dumps-{trial}", trial=trial)
        reports += rn.run_baseline(cfg, Mode.AVERAGE_BASELINE, trial=trial)
        reports += rn.run_baseline(cfg, Mode.SPREAD_BASELINE, trial=trial)
    return reports


class TestAggregateCSV:
    def test_round_trip_exact(self, tmp_path):
        agg = aggregate_trials(
            [
                [{"throughput": 10.123456789012345, "read.mean_us": 1.5}],
                [{"throughput": 12.000000000000002, "read.mean_us": 2.5}],
                [{"throughput": 14.999999999999999, "read.mean_us": 3.5}],
            ]
        )
        path = tmp_path / "aggregate.csv"
        rep.write_aggregate_csv(path, agg.rows)
        back = rep.read_aggregate_csv(path)
        assert back == agg.rows

    def test_single_trial_blank_bands(self, tmp_path):
        agg = aggregate_trials([[{"x": 3.0}]])
        path = tmp_path / "a.csv"
        rep.write_aggregate_csv(path, agg.rows)
        assert rep.read_aggregate_csv(path) == [AggregateRow(0, "x", 3.0, None, None)]

    def test_header_validated(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(rep.ReportError):
            rep.read_aggregate_csv(path)


class TestGrouping:
    def test_group_by_mode_and_trial(self, three_mode_reports):
        grouped = rep.group_reports(three_mode_reports)
        assert set(grouped) == {
            "main-run",
            "clean-run",
            "average-baseline",
            "spread-baseline",
        }
        assert len(grouped["main-run"]) == 2  # trials
        assert [r.epoch for r in grouped["main-run"][0]] == [0, 1]

    def test_incompatible_sets_rejected(self, three_mode_reports, tmp_path):
        other = rn.run_main(tiny_config(record_count=50), tmp_path / "d")
        with pytest.raises(rep.ReportError, match="incompatible"):
            rep.group_reports(three_mode_reports + other)


class TestCharts:
    def test_render_report_files(self, three_mode_reports, tmp_path):
        written = rep.render_report(three_mode_reports, tmp_path / "rep")
        names = {p.name for p in written}
        assert "aggregate.csv" in names
        assert "throughput-vs-epoch.svg" in names
        assert "read-mean-us-vs-epoch.svg" in names
        assert "size-distribution.svg" in names
        assert "baseline-throughput-vs-volume.svg" in names
        for p in written:
            assert p.stat().st_size > 0

    def test_chart_bytes_deterministic(self, three_mode_reports, tmp_path):
        a = rep.render_report(three_mode_reports, tmp_path / "a")
        b = rep.render_report(three_mode_reports, tmp_path / "b")
        for pa, pb in zip(a, b):
            assert pa.name == pb.name
            assert pa.read_bytes() == pb.read_bytes(), pa.name

    def test_epoch_axis_alignment(self, three_mode_reports):
        grouped = rep.group_reports(three_mode_reports)
        aggs = {m: rep.aggregate_mode(t) for m, t in grouped.items()}
        epochs = {
            m: sorted({r.epoch for r in agg.rows})
            for m, agg in aggs.items()
        }
        assert epochs["main-run"] == epochs["clean-run"] == epochs["average-baseline"]

    def test_missing_metric_rejected(self, three_mode_reports, tmp_path):
        grouped = rep.group_reports(three_mode_reports)
        aggs = {m: rep.aggregate_mode(t) for m, t in grouped.items()}
        with pytest.raises(rep.ReportError):
            rep.chart_metric_vs_epoch(aggs, "no.such.metric", "y", tmp_path / "x.svg")
