"""File formats: config documents, manifests, raw/clean signal CSVs, segment
and prediction JSONL streams, checkpoints, and metric reports.

Every output is stamped with a short hash of the resolved config so stale
mixes of pipeline stages are detectable.  Outputs carry no timestamps, which
keeps reruns byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PipelineError
from .es import EsConfig
from .evaluation import MetricStat, MetricsReport, SegmentScore, METRIC_KEYS
from .lstm import LstmParams
from .train import LossCurve, TrainConfig
from .types import (
    CleanSignal,
    PreprocessConfig,
    RawRecording,
    RecordingId,
    RecordingMeta,
    ScalerStats,
    Segment,
    SegmentConfig,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """The single experiment configuration document."""

    preprocess: PreprocessConfig = PreprocessConfig()
    segment: SegmentConfig = SegmentConfig()
    train: TrainConfig = TrainConfig()
    es: EsConfig = EsConfig()
    hidden_size: int = 512
    allowed_monitor_types: tuple[str, ...] = ("intraparenchymal",)

    def to_dict(self) -> dict:
        pre = self.preprocess.to_dict()
        if math.isinf(pre["flat_run_threshold"]):
            pre["flat_run_threshold"] = None
        return {
            "preprocess": pre,
            "segment": self.segment.to_dict(),
            "train": self.train.to_dict(),
            "es": self.es.to_dict(),
            "hidden_size": self.hidden_size,
            "allowed_monitor_types": list(self.allowed_monitor_types),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            preprocess=PreprocessConfig.from_dict(d.get("preprocess", {})),
            segment=SegmentConfig.from_dict(d.get("segment", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            es=EsConfig.from_dict(d.get("es", {})),
            hidden_size=int(d.get("hidden_size", 512)),
            allowed_monitor_types=tuple(d.get("allowed_monitor_types", ("intraparenchymal",))),
        )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as f:
        return RunConfig.from_dict(json.load(f))


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# --- manifest ---------------------------------------------------------------

def write_manifest(path: str | Path, metas: list[RecordingMeta], cfg_hash: str):
    doc = {
        "format_version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "recordings": [m.to_dict() for m in metas],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> tuple[list[RecordingMeta], str | None]:
    with open(path) as f:
        doc = json.load(f)
    rows = doc if isinstance(doc, list) else doc.get("recordings", [])
    metas = [RecordingMeta.from_dict(r) for r in rows]
    stamp = None if isinstance(doc, list) else doc.get("config_hash")
    return metas, stamp


# --- signals ----------------------------------------------------------------

def _read_table(path: str | Path):
    # genfromtxt would take names from a leading comment line; skip those lines
    with open(path) as f:
        skip = 0
        for line in f:
            if not line.startswith("#"):
                break
            skip += 1
    return np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True, skip_header=skip))


def read_raw_recording(path: str | Path, rec_id: RecordingId) -> RawRecording:
    """Read a `time_s,icp_mmhg` CSV; empty value fields are missing."""
    data = _read_table(path)
    if data.size == 0:
        raise PipelineError(f"{path}: no samples")
    try:
        times = np.asarray(data["time_s"], dtype=np.float64)
        values = np.asarray(data["icp_mmhg"], dtype=np.float64)
    except (KeyError, ValueError) as e:
        raise PipelineError(f"{path}: expected columns time_s,icp_mmhg: {e}")
    return RawRecording(id=rec_id, times=times, values=values)


def write_clean_signal(path: str | Path, sig: CleanSignal, cfg_hash: str):
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash}\n")
        writer = csv.writer(f)
        writer.writerow(["minute", "icp_mmhg"])
        for i, v in enumerate(sig.values):
            writer.writerow([sig.start_minute + i, repr(float(v))])


def read_clean_signal(path: str | Path, rec_id: RecordingId) -> CleanSignal:
    data = _read_table(path)
    minutes = np.asarray(data["minute"], dtype=np.int64)
    values = np.asarray(data["icp_mmhg"], dtype=np.float64)
    return CleanSignal(id=rec_id, values=values, start_minute=int(minutes[0]) if minutes.size else 0)


# --- segments and predictions -----------------------------------------------

def _meta_line(cfg_hash: str, **extra) -> str:
    meta = {"format_version": FORMAT_VERSION, "config_hash": cfg_hash}
    meta.update(extra)
    return json.dumps({"meta": meta}, sort_keys=True)


def write_segments(path: str | Path, segments: list[Segment], cfg_hash: str):
    with open(path, "w") as f:
        f.write(_meta_line(cfg_hash) + "\n")
        for s in segments:
            record = {
                "patient_id": s.id.patient_id,
                "recording_id": s.id.recording_id,
                "seg_index": s.seg_index,
                "start_minute": s.start_minute,
                "x": [float(v) for v in s.x_padded],
                "mask": s.mask.astype(int).tolist(),
                "y": [float(v) for v in s.y],
            }
            f.write(json.dumps(record) + "\n")


def _floats(raw: list) -> np.ndarray:
    return np.array([float(v) for v in raw], dtype=np.float64)


def read_segments(path: str | Path) -> tuple[list[Segment], str | None]:
    segments: list[Segment] = []
    stamp = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "meta" in record:
                stamp = record["meta"].get("config_hash")
                continue
            mask = np.array(record["mask"], dtype=np.float64)
            x_padded = _floats(record["x"])
            segments.append(Segment(
                id=RecordingId(patient_id=record["patient_id"], recording_id=record["recording_id"]),
                seg_index=int(record["seg_index"]),
                x=x_padded[mask > 0],
                y=_floats(record["y"]),
                x_padded=x_padded,
                mask=mask,
                start_minute=int(record.get("start_minute", 0)),
            ))
    return segments, stamp


def write_predictions(path: str | Path, rows: list[dict], cfg_hash: str):
    """rows: dicts with patient_id, recording_id, seg_index, y_hat (list)."""
    with open(path, "w") as f:
        f.write(_meta_line(cfg_hash) + "\n")
        for r in rows:
            out = dict(r)
            out["y_hat"] = [float(v) for v in r["y_hat"]]
            f.write(json.dumps(out) + "\n")


def read_predictions(path: str | Path) -> tuple[list[dict], str | None]:
    rows = []
    stamp = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "meta" in record:
                stamp = record["meta"].get("config_hash")
                continue
            record["y_hat"] = _floats(record["y_hat"])
            rows.append(record)
    return rows, stamp


# --- checkpoint ---------------------------------------------------------------

def write_checkpoint(path: str | Path, params: LstmParams, scaler: ScalerStats,
                     train_cfg: TrainConfig, cfg_hash: str):
    doc = {
        "format_version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "model": "lstm",
        "hidden_size": params.hidden_size,
        "train_config": train_cfg.to_dict(),
        "scaler": scaler.to_dict(),
        "params": [float(v) for v in params.to_vector()],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_checkpoint(path: str | Path) -> tuple[LstmParams, ScalerStats, TrainConfig]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != FORMAT_VERSION:
        raise PipelineError(f"{path}: unsupported checkpoint version {doc.get('format_version')}")
    params = LstmParams.from_vector(int(doc["hidden_size"]), _floats(doc["params"]))
    return params, ScalerStats.from_dict(doc["scaler"]), TrainConfig.from_dict(doc["train_config"])


# --- reports ------------------------------------------------------------------

def report_to_dict(report: MetricsReport, model: str, role: str, cfg_hash: str,
                   fold: int | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "model": model,
        "role": role,
        "fold": fold,
        "model_mse": report.model_mse,
        "model_mae": report.model_mae,
        "mae_p90": report.mae_p90,
        "mae_p99": report.mae_p99,
        "patients": {
            p: {
                "mae": report.patient_mae[p],
                "mse": report.patient_mse[p],
                "n_segments": report.patient_segments[p],
            }
            for p in report.patient_mae
        },
        "segments": [s.to_dict() for s in report.segment_scores],
        "patient_of": report.patient_of,
        "variance_mae_fit": (
            None if report.fit_slope is None
            else {"slope": report.fit_slope, "intercept": report.fit_intercept}
        ),
    }


def write_report(path: str | Path, report: MetricsReport, model: str, role: str,
                 cfg_hash: str, fold: int | None = None):
    doc = report_to_dict(report, model, role, cfg_hash, fold)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_report(path: str | Path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    doc["_report"] = MetricsReport(
        segment_scores=[SegmentScore.from_dict(s) for s in doc["segments"]],
        patient_mae={p: v["mae"] for p, v in doc["patients"].items()},
        patient_mse={p: v["mse"] for p, v in doc["patients"].items()},
        patient_segments={p: v["n_segments"] for p, v in doc["patients"].items()},
        model_mae=doc["model_mae"],
        model_mse=doc["model_mse"],
        mae_p90=doc["mae_p90"],
        mae_p99=doc["mae_p99"],
        fit_slope=None if doc.get("variance_mae_fit") is None else doc["variance_mae_fit"]["slope"],
        fit_intercept=None if doc.get("variance_mae_fit") is None else doc["variance_mae_fit"]["intercept"],
        patient_of=doc.get("patient_of", {}),
    )
    return doc


def write_loss_curve(path: str | Path, curve: LossCurve, cfg_hash: str):
    doc = {"format_version": FORMAT_VERSION, "config_hash": cfg_hash, **curve.to_dict()}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_loss_curve(path: str | Path) -> LossCurve:
    with open(path) as f:
        doc = json.load(f)
    return LossCurve(train=doc["train"], validation=doc["validation"])


def write_summary_csv(path: str | Path, stats: dict[str, MetricStat], cfg_hash: str, model: str):
    labels = {"mse": "MSE", "mae": "MAE", "mae_p90": "90th percentile MAE",
              "mae_p99": "99th percentile MAE"}
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash} model={model}\n")
        writer = csv.writer(f)
        writer.writerow(["metric", "mean", "sd", "formatted"])
        for key in METRIC_KEYS:
            s = stats[key]
            writer.writerow([labels[key], repr(s.mean), repr(s.sd), s.formatted()])


def write_point_summary_csv(path: str | Path, report: MetricsReport, cfg_hash: str, model: str):
    labels = {"mse": "MSE", "mae": "MAE", "mae_p90": "90th percentile MAE",
              "mae_p99": "99th percentile MAE"}
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash} model={model}\n")
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        for key in METRIC_KEYS:
            writer.writerow([labels[key], repr(report.metric(key))])
