"""Writers for run outputs: report.json plus CSV data files."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from belief_pooling.core import format_float
from belief_pooling.harness import AggregateReport, RuleReport
from belief_pooling.schema import TrajectoryLayout, config_to_dict
from belief_pooling.stats import histogram_density, sample_moments

logger = logging.getLogger(__name__)


def _clean(value: Any) -> Any:
    """Make a value JSON-safe: NaN becomes null and infinities become strings."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        return _clean(value.item())
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


def write_json(data: Any, path: Path) -> Path:
    path.write_text(json.dumps(_clean(data), indent=2) + "\n")
    return path


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _rule_summary(report: AggregateReport, rule: RuleReport) -> dict[str, Any]:
    normality = []
    for check in rule.normality:
        entry: dict[str, Any] = {
            "theta": check.theta,
            "ks": check.ks.to_dict(),
            "shapiro_wilk": None if check.shapiro_wilk is None else check.shapiro_wilk.to_dict(),
        }
        if check.samples.size >= 2:
            mean, variance = sample_moments(check.samples)
            entry["mean"] = mean
            entry["variance"] = variance
        normality.append(entry)

    return {
        "params": [p.to_dict() for p in rule.params],
        "normality": normality,
        "slope_within_tolerance": {
            str(p.theta): rule.slope_fraction(p.theta) for p in rule.params
        },
        "bound_fraction": rule.bound_fraction,
        "error_curve": {
            "times": report.times,
            "empirical": rule.error_rates,
            "ci_low": rule.error_intervals[:, 0],
            "ci_high": rule.error_intervals[:, 1],
            "predicted": rule.predicted_error,
        },
    }


def report_to_dict(report: AggregateReport) -> dict[str, Any]:
    data: dict[str, Any] = {
        "config": config_to_dict(report.config),
        "identifiability": report.identifiability.to_dict(),
        "realizations": report.config.realizations,
        "rules": {str(r): _rule_summary(report, rep) for r, rep in report.rules.items()},
        "jensen": None if report.jensen is None else [j.to_dict() for j in report.jensen],
    }
    if report.config.hypotheses.count > 2:
        data["notes"] = [
            "predicted error is a union bound over wrong hypotheses (approximation)"
        ]
    return data


def _format_optional(value: float) -> str:
    return "" if np.isnan(value) else format_float(value)


def _statistic_rows(report: AggregateReport, columns: list[np.ndarray]):
    for r in range(report.config.realizations):
        yield [str(r), str(int(report.seeds[r]))] + [format_float(c[r]) for c in columns]


def write_histogram(path: Path, samples_by_theta: dict[int, np.ndarray], bins: int | None):
    rows = []
    for theta, samples in samples_by_theta.items():
        edges, densities = histogram_density(samples, bins)
        for left, right, d in zip(edges[:-1], edges[1:], densities):
            rows.append([str(theta), format_float(left), format_float(right), format_float(d)])
    return _write_csv(path, ["theta", "bin_left", "bin_right", "density"], rows)


def write_trajectories(report: AggregateReport, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    count = report.config.hypotheses.count
    header = (
        ["time"]
        + [f"log_belief_{h}" for h in range(count)]
        + [f"lambda_{h}" for h in range(count)]
    )
    written = []
    for rule in report.rules:
        records = report.records(rule)
        if report.config.trajectory_layout is TrajectoryLayout.LONG:
            rows = (
                [str(rec.realization_index)] + row
                for rec in records
                for row in rec.csv_rows()
            )
            written.append(
                _write_csv(directory / f"{rule}.csv", ["realization"] + header, rows)
            )
        else:
            for rec in records:
                path = directory / f"{rule}_{rec.realization_index:05d}.csv"
                written.append(_write_csv(path, header, rec.csv_rows()))
    return written


def write_report(report: AggregateReport, output_dir: Path | str | None = None) -> list[Path]:
    """Write every output file of a run and return their paths."""
    out = Path(output_dir) if output_dir is not None else report.config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    bins = report.config.histogram_bins
    written = [write_json(report_to_dict(report), out / "report.json")]

    for rule, rep in report.rules.items():
        wrong = [p.theta for p in rep.params]
        normalized = {c.theta: c.samples for c in rep.normality}
        written.append(
            _write_csv(
                out / f"lambda_tilde_{rule}.csv",
                ["realization", "seed"] + [f"theta_{t}" for t in normalized],
                _statistic_rows(report, list(normalized.values())),
            )
        )
        raw = {t: rep.lambda_at_horizon[:, t] for t in wrong}
        written.append(
            _write_csv(
                out / f"lambda_{rule}.csv",
                ["realization", "seed"] + [f"theta_{t}" for t in raw],
                _statistic_rows(report, list(raw.values())),
            )
        )
        if normalized:
            written.append(write_histogram(out / f"histogram_{rule}.csv", normalized, bins))
        written.append(write_histogram(out / f"histogram_raw_{rule}.csv", raw, bins))

    header = ["time"]
    for rule in report.rules:
        header += [f"{rule}_empirical", f"{rule}_ci_low", f"{rule}_ci_high", f"{rule}_predicted"]
    rows = []
    for idx, t in enumerate(report.times):
        row = [str(int(t))]
        for rep in report.rules.values():
            row += [
                format_float(rep.error_rates[idx]),
                format_float(rep.error_intervals[idx, 0]),
                format_float(rep.error_intervals[idx, 1]),
                _format_optional(rep.predicted_error[idx]),
            ]
        rows.append(row)
    written.append(_write_csv(out / "error_curve.csv", header, rows))

    if report.config.write_trajectories:
        written += write_trajectories(report, out / "trajectories")
    logger.info("Wrote %d files to %s", len(written), out)
    return written


def read_statistic_csv(path: Path | str) -> dict[str, np.ndarray]:
    """Read the statistic columns of a lambda_tilde/lambda CSV.

    Returns:
        Mapping from column name (e.g. "theta_1") to values.
    """
    with Path(path).open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"'{path}' is empty")
        rows = list(reader)
    columns = {}
    for idx, name in enumerate(header):
        if name in ("realization", "seed"):
            continue
        columns[name] = np.array([float(row[idx]) for row in rows])
    return columns
