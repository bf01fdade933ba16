"""Signal-quality metrics: per-component RMSE and Pearson correlation,
batch mean relative error, per-component L2 error, and the
max/min/mean summary rows used in the reports.

Per-component metrics take (L, 6) ground-truth/estimate arrays.  A
Pearson coefficient is *undefined* (returned as NaN, never 0) when
either signal is constant; summary means skip undefined entries and
report how many were skipped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COMPONENT_NAMES = ("fx", "fy", "fz", "tx", "ty", "tz")


@dataclass
class MetricReport:
    """Per-component metrics for one evaluation (normalized units unless
    converted; ``units`` records which)."""

    rmse: np.ndarray                 # (6,)
    pcc: np.ndarray                  # (6,) NaN where undefined
    mre_value: float
    l2: np.ndarray                   # (6,)
    units: str = "normalized"
    task: str = "all"

    def mean_pcc(self) -> float:
        """Mean over defined components (NaN if none defined)."""
        defined = self.pcc[np.isfinite(self.pcc)]
        return float(defined.mean()) if defined.size else float("nan")

    def n_undefined(self) -> int:
        return int(np.sum(~np.isfinite(self.pcc)))


def _check(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 2:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    return y, y_hat


def rmse_metric(y, y_hat) -> np.ndarray:
    """Root-mean-square error per component."""
    y, y_hat = _check(y, y_hat)
    if len(y) < 1:
        raise ValueError("rmse_metric: empty input")
    return np.sqrt(np.mean((y - y_hat) ** 2, axis=0))


def pcc(y, y_hat) -> np.ndarray:
    """Sample Pearson correlation per component; NaN where undefined."""
    y, y_hat = _check(y, y_hat)
    if len(y) < 2:
        raise ValueError("pcc: need at least 2 samples")
    yc = y - y.mean(axis=0)
    hc = y_hat - y_hat.mean(axis=0)
    sy = np.sqrt((yc ** 2).sum(axis=0))
    sh = np.sqrt((hc ** 2).sum(axis=0))
    out = np.full(y.shape[1], np.nan)
    ok = (sy > 0) & (sh > 0)
    out[ok] = (yc * hc).sum(axis=0)[ok] / (sy * sh)[ok]
    return out


def mre(y, y_hat, delta: float) -> float:
    """Mean relative error of one batch: (1/M) sum_i sum_j |err|/delta."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    y, y_hat = _check(y, y_hat)
    m = len(y)
    if m < 1:
        raise ValueError("mre: empty batch")
    return float(np.abs(y - y_hat).sum() / (delta * m))


def l2_per_component(y, y_hat) -> np.ndarray:
    """||r_j||_2 = sqrt(sum_i err_ij^2) per component."""
    y, y_hat = _check(y, y_hat)
    return np.sqrt(((y - y_hat) ** 2).sum(axis=0))


def evaluate(y, y_hat, mre_delta: float = 1e-3, task: str = "all",
             units: str = "normalized") -> MetricReport:
    return MetricReport(rmse=rmse_metric(y, y_hat), pcc=pcc(y, y_hat),
                        mre_value=mre(y, y_hat, mre_delta),
                        l2=l2_per_component(y, y_hat), units=units, task=task)


def summarize(values: np.ndarray) -> tuple[float, float, float]:
    """(max, min, mean) over the defined entries of a 6-component row."""
    values = np.asarray(values, dtype=float)
    if values.shape != (6,):
        raise ValueError(f"expected 6 components, got shape {values.shape}")
    defined = values[np.isfinite(values)]
    if defined.size == 0:
        return float("nan"), float("nan"), float("nan")
    return float(defined.max()), float(defined.min()), float(defined.mean())


# ---------------------------------------------------------------------------
# report files

METRIC_HEADER = ["component", "rmse_norm", "rmse_phys", "pcc", "task"]


def write_metric_report(path: Path, report: MetricReport,
                        force_scale: np.ndarray | None = None) -> None:
    """metrics CSV: one row per component, physical RMSE derived from the
    stored normalization scales when available."""
    rows = []
    for j, name in enumerate(COMPONENT_NAMES):
        phys = report.rmse[j] * force_scale[j] if force_scale is not None else ""
        p = report.pcc[j]
        rows.append([name, repr(float(report.rmse[j])),
                     repr(float(phys)) if phys != "" else "",
                     repr(float(p)) if np.isfinite(p) else "undefined",
                     report.task])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(METRIC_HEADER)
        wr.writerows(rows)


SUMMARY_HEADER = ["case", "task", "metric", "max", "min", "mean", "n_undefined"]


def write_summary(path: Path, rows: list[dict]) -> None:
    """Max/min/mean summary table, one row per (case, task, metric)."""
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER)
        wr.writeheader()
        for row in rows:
            wr.writerow(row)
