"""Results export: aggregate CSV and static SVG charts.

Charts are rendered with a pinned matplotlib style and a fixed SVG
hash salt, with no timestamps in the output, so the same reports
always produce byte-identical files.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from ivsbench.core import Mode, ValueSizeHistogram
from ivsbench.metrics import AggregateRow, TrialAggregate, aggregate_trials
from ivsbench.runner import EpochReport

_SVG_RC = {
    "svg.hashsalt": "ivsbench",
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}

_MODE_COLORS = {
    Mode.MAIN_RUN.value: "tab:blue",
    Mode.CLEAN_RUN.value: "tab:orange",
    Mode.AVERAGE_BASELINE.value: "tab:green",
    Mode.SPREAD_BASELINE.value: "tab:red",
}

# metric-vs-epoch charts emitted when the metric is present
_EPOCH_CHART_METRICS = [
    ("throughput", "throughput (ops/s)"),
    ("read.mean_us", "read mean latency (us)"),
    ("read.p99_us", "read p99 latency (us)"),
    ("update.mean_us", "update mean latency (us)"),
    ("update.p99_us", "update p99 latency (us)"),
]


class ReportError(Exception):
    """Report sets cannot be combined or rendered."""


# -- report files ------------------------------------------------------------


def load_report_file(path: str | Path) -> list[EpochReport]:
    reports = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                reports.append(EpochReport.from_json_line(line))
    return reports


def load_reports(paths: list[str | Path]) -> list[EpochReport]:
    """Read every ``*.jsonl`` report from files or directories."""
    files: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.jsonl")))
        else:
            files.append(p)
    reports: list[EpochReport] = []
    for f in files:
        reports.extend(load_report_file(f))
    if not reports:
        raise ReportError(f"no reports found under {', '.join(str(p) for p in paths)}")
    return reports


def group_reports(reports: list[EpochReport]) -> dict[str, list[list[EpochReport]]]:
    """Group by mode, then trial; epochs sorted within each trial.

    Refuses to mix reports from different experiments (base hash).
    """
    hashes = {r.base_hash for r in reports}
    if len(hashes) > 1:
        raise ReportError(f"incompatible report sets: base hashes {sorted(hashes)}")
    by_mode: dict[str, dict[int, list[EpochReport]]] = defaultdict(dict)
    for r in reports:
        by_mode[r.mode].setdefault(r.trial, []).append(r)
    out: dict[str, list[list[EpochReport]]] = {}
    for mode, trials in by_mode.items():
        out[mode] = [sorted(trials[t], key=lambda r: r.epoch) for t in sorted(trials)]
    return out


def aggregate_mode(trials: list[list[EpochReport]]) -> TrialAggregate:
    return aggregate_trials([[r.metrics() for r in per_trial] for per_trial in trials])


# -- aggregate CSV -----------------------------------------------------------

_CSV_HEADER = ["epoch", "metric", "mean", "band_lo", "band_hi"]


def write_aggregate_csv(path: str | Path, rows: list[AggregateRow]) -> None:
    """Write rows with full-precision floats so parsing is lossless."""
    with open(path, "w", encoding="ascii", newline="") as f:
        w = csv.writer(f)
        w.writerow(_CSV_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.epoch,
                    r.metric,
                    repr(r.mean),
                    "" if r.band_lo is None else repr(r.band_lo),
                    "" if r.band_hi is None else repr(r.band_hi),
                ]
            )


def read_aggregate_csv(path: str | Path) -> list[AggregateRow]:
    rows: list[AggregateRow] = []
    with open(path, "r", encoding="ascii", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != _CSV_HEADER:
            raise ReportError(f"{path}: unexpected CSV header {header}")
        for rec in reader:
            epoch, metric, mean, lo, hi = rec
            rows.append(
                AggregateRow(
                    int(epoch),
                    metric,
                    float(mean),
                    float(lo) if lo else None,
                    float(hi) if hi else None,
                )
            )
    return rows


# -- charts ------------------------------------------------------------------


def _series(agg: TrialAggregate, metric: str, x_metric: str | None = None):
    """(xs, means, lo, hi) for one metric; x defaults to epoch index."""
    rows = [r for r in agg.rows if r.metric == metric]
    rows.sort(key=lambda r: r.epoch)
    if x_metric is None:
        xs = [r.epoch for r in rows]
    else:
        xv = {r.epoch: r.mean for r in agg.rows if r.metric == x_metric}
        xs = [xv[r.epoch] for r in rows]
    means = [r.mean for r in rows]
    lo = [r.band_lo if r.band_lo is not None else r.mean for r in rows]
    hi = [r.band_hi if r.band_hi is not None else r.mean for r in rows]
    return xs, means, lo, hi


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _line_chart(series, xlabel: str, ylabel: str, path: Path, log_y: bool = False) -> None:
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots()
        for label, xs, ys, lo, hi in series:
            color = _MODE_COLORS.get(label)
            ax.plot(xs, ys, label=label, color=color, marker="o", markersize=3)
            if lo is not None and any(a != b for a, b in zip(lo, hi)):
                ax.fill_between(xs, lo, hi, color=color, alpha=0.2, linewidth=0)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def chart_metric_vs_epoch(
    aggregates: dict[str, TrialAggregate], metric: str, ylabel: str, path: Path
) -> None:
    """Overlay one metric across modes, shaded with 1.96 x stderr bands."""
    series = []
    for mode in (Mode.MAIN_RUN, Mode.CLEAN_RUN, Mode.AVERAGE_BASELINE, Mode.SPREAD_BASELINE):
        agg = aggregates.get(mode.value)
        if agg is None or metric not in agg.metrics():
            continue
        xs, ys, lo, hi = _series(agg, metric)
        series.append((mode.value, xs, ys, lo, hi))
    if not series:
        raise ReportError(f"metric {metric!r} absent from every report set")
    _line_chart(series, "epoch", ylabel, path)


def chart_size_distribution(trial_reports: list[EpochReport], path: Path) -> None:
    """Field-length distribution per epoch (log scale) plus max record size."""
    epochs, p50, p90, p99, mx, rec_mx = [], [], [], [], [], []
    for r in trial_reports:
        hist = ValueSizeHistogram.from_snapshot(r.size_histogram)
        epochs.append(r.epoch)
        p50.append(max(1, hist.quantile_length(0.50)))
        p90.append(max(1, hist.quantile_length(0.90)))
        p99.append(max(1, hist.quantile_length(0.99)))
        mx.append(max(1, r.max_field_length))
        rec_mx.append(max(1, r.max_record_size))
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots()
        ax.plot(epochs, p50, label="p50 field length", marker="o", markersize=3)
        ax.plot(epochs, p90, label="p90 field length", marker="o", markersize=3)
        ax.plot(epochs, p99, label="p99 field length", marker="o", markersize=3)
        ax.plot(epochs, mx, label="max field length", marker="o", markersize=3)
        ax.plot(epochs, rec_mx, label="max record size", linestyle="--", color="black")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("bytes")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def chart_baseline_vs_volume(
    aggregates: dict[str, TrialAggregate], metric: str, ylabel: str, path: Path
) -> None:
    """Baseline metric against data volume (MB)."""
    series = []
    for mode in (Mode.SPREAD_BASELINE, Mode.AVERAGE_BASELINE):
        agg = aggregates.get(mode.value)
        if agg is None or metric not in agg.metrics():
            continue
        xs, ys, lo, hi = _series(agg, metric, x_metric="volume_bytes")
        xs = [x / 1e6 for x in xs]
        series.append((mode.value, xs, ys, lo, hi))
    if not series:
        raise ReportError("no baseline reports with that metric")
    _line_chart(series, "data volume (MB)", ylabel, path)


def render_report(reports: list[EpochReport], outdir: str | Path) -> list[Path]:
    """Emit every applicable chart plus the merged aggregate CSV.

    CSV metric names are prefixed ``<mode>:`` so one file carries all
    modes. Returns the written paths.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grouped = group_reports(reports)
    aggregates = {mode: aggregate_mode(trials) for mode, trials in grouped.items()}
    written: list[Path] = []

    merged_rows: list[AggregateRow] = []
    for mode in sorted(aggregates):
        for r in aggregates[mode].rows:
            merged_rows.append(AggregateRow(r.epoch, f"{mode}:{r.metric}", r.mean, r.band_lo, r.band_hi))
    csv_path = outdir / "aggregate.csv"
    write_aggregate_csv(csv_path, merged_rows)
    written.append(csv_path)

    for metric, ylabel in _EPOCH_CHART_METRICS:
        if not any(metric in agg.metrics() for agg in aggregates.values()):
            continue
        slug = metric.replace(".", "-").replace("_", "-")
        path = outdir / f"{slug}-vs-epoch.svg"
        chart_metric_vs_epoch(aggregates, metric, ylabel, path)
        written.append(path)

    if Mode.MAIN_RUN.value in grouped:
        path = outdir / "size-distribution.svg"
        chart_size_distribution(grouped[Mode.MAIN_RUN.value][0], path)
        written.append(path)

    if any(m in aggregates for m in (Mode.SPREAD_BASELINE.value, Mode.AVERAGE_BASELINE.value)):
        path = outdir / "baseline-throughput-vs-volume.svg"
        chart_baseline_vs_volume(aggregates, "throughput", "throughput (ops/s)", path)
        written.append(path)
        if any(
            "read.mean_us" in agg.metrics()
            for m, agg in aggregates.items()
            if m in (Mode.SPREAD_BASELINE.value, Mode.AVERAGE_BASELINE.value)
        ):
            path = outdir / "baseline-read-mean-latency-vs-volume.svg"
            chart_baseline_vs_volume(aggregates, "read.mean_us", "read mean latency (us)", path)
            written.append(path)

    return written
