"""Nested forecast metrics: segment -> patient -> model, percentile tails,
and the variance-vs-difficulty diagnostics.

A segment's MSE/MAE is the per-point mean over its forecast window.  A
patient's metric is the unweighted mean over that patient's segments, and the
model metric is the unweighted mean over patients, so patients with many
segments do not dominate.  Percentile tails are taken over the pooled segment
MAE distribution across all patients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, EmptyEvaluation, ShapeError

METRIC_KEYS = ("mse", "mae", "mae_p90", "mae_p99")


@dataclass(frozen=True)
class SegmentScore:
    recording_id: str
    seg_index: int
    mse: float
    mae: float
    variance: float
    n_points: int
    variance_with_history: float | None = None

    def to_dict(self) -> dict:
        d = {
            "recording_id": self.recording_id,
            "seg_index": self.seg_index,
            "mse": self.mse,
            "mae": self.mae,
            "variance": self.variance,
            "n_points": self.n_points,
        }
        if self.variance_with_history is not None:
            d["variance_with_history"] = self.variance_with_history
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentScore":
        return cls(
            recording_id=d["recording_id"],
            seg_index=int(d["seg_index"]),
            mse=float(d["mse"]),
            mae=float(d["mae"]),
            variance=float(d["variance"]),
            n_points=int(d["n_points"]),
            variance_with_history=(None if d.get("variance_with_history") is None
                                   else float(d["variance_with_history"])),
        )


def score_segment(
    y: np.ndarray,
    y_hat: np.ndarray,
    x: np.ndarray | None = None,
    recording_id: str = "",
    seg_index: int = 0,
) -> SegmentScore:
    """Per-point MAE/MSE plus the population variance of the observed target.

    When the history ``x`` is supplied, the variance over history+target is
    stored as well (the alternative reading of segment variability).
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1 or y.size < 1:
        raise ShapeError(f"need equal-length vectors, got {y.shape} vs {y_hat.shape}")
    diff = y - y_hat
    var_full = None
    if x is not None:
        var_full = float(np.var(np.concatenate([np.asarray(x, dtype=np.float64), y])))
    return SegmentScore(
        recording_id=recording_id,
        seg_index=seg_index,
        mse=float(np.mean(diff * diff)),
        mae=float(np.mean(np.abs(diff))),
        variance=float(np.var(y)),
        n_points=int(y.size),
        variance_with_history=var_full,
    )


@dataclass
class MetricsReport:
    segment_scores: list[SegmentScore]
    patient_mae: dict[str, float]
    patient_mse: dict[str, float]
    patient_segments: dict[str, int]
    model_mae: float
    model_mse: float
    mae_p90: float
    mae_p99: float
    fit_slope: float | None = None
    fit_intercept: float | None = None
    patient_of: dict[str, str] = field(default_factory=dict)

    def metric(self, key: str) -> float:
        return {"mse": self.model_mse, "mae": self.model_mae,
                "mae_p90": self.mae_p90, "mae_p99": self.mae_p99}[key]

    def variance_mae_pairs(self) -> np.ndarray:
        return np.array([[s.variance, s.mae] for s in self.segment_scores])


def aggregate(scores: list[SegmentScore], patient_map: dict[str, str]) -> MetricsReport:
    """Roll segment scores up to patient and model level.

    Patient metric = mean over that patient's segments; model metric = mean
    over patients; percentile tails over the pooled segment MAEs.
    """
    if not scores:
        raise EmptyEvaluation("no segment scores to aggregate")
    # canonical order makes every mean independent of input permutation
    scores = sorted(scores, key=lambda s: (s.recording_id, s.seg_index))
    by_patient: dict[str, list[SegmentScore]] = {}
    for s in scores:
        if s.recording_id not in patient_map:
            raise ValueError(f"recording {s.recording_id!r} missing from patient map")
        by_patient.setdefault(patient_map[s.recording_id], []).append(s)

    patient_mae = {p: float(np.mean([s.mae for s in ss])) for p, ss in sorted(by_patient.items())}
    patient_mse = {p: float(np.mean([s.mse for s in ss])) for p, ss in sorted(by_patient.items())}
    patient_segments = {p: len(ss) for p, ss in sorted(by_patient.items())}
    pooled_mae = np.array([s.mae for s in scores])
    report = MetricsReport(
        segment_scores=list(scores),
        patient_mae=patient_mae,
        patient_mse=patient_mse,
        patient_segments=patient_segments,
        model_mae=float(np.mean(list(patient_mae.values()))),
        model_mse=float(np.mean(list(patient_mse.values()))),
        mae_p90=float(np.percentile(pooled_mae, 90)),
        mae_p99=float(np.percentile(pooled_mae, 99)),
        patient_of={s.recording_id: patient_map[s.recording_id] for s in scores},
    )
    try:
        report.fit_slope, report.fit_intercept = variance_mae_fit(scores)
    except DegenerateFit:
        pass
    return report


def variance_mae_fit(scores: list[SegmentScore]) -> tuple[float, float]:
    """Ordinary least-squares fit of segment MAE on segment variance."""
    if len(scores) < 2:
        raise DegenerateFit("need at least two segments")
    var = np.array([s.variance for s in scores])
    mae = np.array([s.mae for s in scores])
    if np.ptp(var) == 0.0:
        raise DegenerateFit("all segment variances identical")
    slope, intercept = np.polyfit(var, mae, deg=1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class MetricStat:
    mean: float
    sd: float

    def formatted(self, digits: int = 2) -> str:
        return f"{self.mean:.{digits}f} ({self.sd:.{digits}f})"


def cv_summary(fold_reports: list[MetricsReport]) -> dict[str, MetricStat]:
    """Mean and sample SD of each model-level metric across folds."""
    if len(fold_reports) < 2:
        raise ValueError("need at least two folds to summarize")
    out = {}
    for key in METRIC_KEYS:
        vals = np.array([r.metric(key) for r in fold_reports])
        out[key] = MetricStat(mean=float(vals.mean()), sd=float(vals.std(ddof=1)))
    return out
