"""Shared domain types and configuration records.

Missing samples are represented as NaN throughout: it survives clipping,
resampling, and serialization (empty CSV field) without colliding with any
physiologic mm Hg value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MISSING = float("nan")


def is_missing(values: np.ndarray) -> np.ndarray:
    return np.isnan(values)


class MonitorType(Enum):
    INTRAPARENCHYMAL = "intraparenchymal"
    VENTRICULAR = "ventricular"
    SUBARACHNOID_BOLT = "subarachnoid_bolt"
    OTHER = "other"

    @classmethod
    def parse(cls, value: str) -> "MonitorType":
        try:
            return cls(value)
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True)
class RecordingId:
    """Identity of one recording; a patient may own several recordings."""

    patient_id: str
    recording_id: str
    site: str | None = None
    monitor_type: MonitorType = MonitorType.OTHER

    def to_dict(self) -> dict:
        d = {
            "patient_id": self.patient_id,
            "recording_id": self.recording_id,
            "monitor_type": self.monitor_type.value,
        }
        if self.site is not None:
            d["site"] = self.site
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RecordingId":
        return cls(
            patient_id=d["patient_id"],
            recording_id=d["recording_id"],
            site=d.get("site"),
            monitor_type=MonitorType.parse(d.get("monitor_type", "other")),
        )


def _readonly(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass
class RawRecording:
    """Irregularly sampled ICP values; times are seconds since recording start."""

    id: RecordingId
    times: np.ndarray
    values: np.ndarray
    nominal_rate: float | None = None

    def __post_init__(self):
        self.times = _readonly(self.times)
        self.values = _readonly(self.values)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass
class CleanSignal:
    """Regular one-value-per-minute ICP series produced by preprocessing."""

    id: RecordingId
    values: np.ndarray
    start_minute: int = 0

    def __post_init__(self):
        self.values = _readonly(self.values)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PreprocessConfig:
    """Resampling/cleaning parameters; defaults give one output value per minute."""

    target_rate: float = 50.0
    w: int = 60000
    st: int = 3000
    ds: int = 3000
    icp_max: float = 50.0
    icp_min: float = -5.0
    min_duration: int = 120
    flat_run_threshold: float = 60.0

    def __post_init__(self):
        if not (self.w >= self.st >= 1):
            raise ValueError("require w >= st >= 1")
        if self.ds < 1:
            raise ValueError("require ds >= 1")
        if not self.icp_min < self.icp_max:
            raise ValueError("require icp_min < icp_max")
        if self.min_duration <= 0:
            raise ValueError("require min_duration > 0")
        if self.target_rate <= 0:
            raise ValueError("require target_rate > 0")

    def to_dict(self) -> dict:
        return {
            "target_rate": self.target_rate,
            "w": self.w,
            "st": self.st,
            "ds": self.ds,
            "icp_max": self.icp_max,
            "icp_min": self.icp_min,
            "min_duration": self.min_duration,
            "flat_run_threshold": self.flat_run_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        if "flat_run_threshold" in known and known["flat_run_threshold"] is None:
            known["flat_run_threshold"] = math.inf
        return cls(**known)


@dataclass(frozen=True)
class SegmentConfig:
    """History/horizon lengths in minutes plus the fixed padded input length."""

    in_len: int = 60
    out_len: int = 30
    str_len: int = 5
    fixed_len: int = 512

    def __post_init__(self):
        if self.in_len < 1 or self.out_len < 1:
            raise ValueError("require in_len >= 1 and out_len >= 1")
        if self.str_len < 1:
            raise ValueError("require str_len >= 1")
        if self.fixed_len < self.in_len:
            raise ValueError("require fixed_len >= in_len")

    def to_dict(self) -> dict:
        return {
            "in_len": self.in_len,
            "out_len": self.out_len,
            "str_len": self.str_len,
            "fixed_len": self.fixed_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentConfig":
        return cls(**{f: d[f] for f in cls.__dataclass_fields__ if f in d})


@dataclass
class Segment:
    """One (60-min history, 30-min target) pair cut from a clean signal.

    ``x_padded`` is ``x`` followed by zeros up to ``fixed_len``; ``mask`` is 1
    at real positions and 0 at padding.  The target ``y`` immediately follows
    ``x`` in source time.
    """

    id: RecordingId
    seg_index: int
    x: np.ndarray
    y: np.ndarray
    x_padded: np.ndarray | None = None
    mask: np.ndarray | None = None
    start_minute: int = 0

    def __post_init__(self):
        self.x = _readonly(self.x)
        self.y = _readonly(self.y)
        if self.x_padded is not None:
            self.x_padded = _readonly(self.x_padded)
        if self.mask is not None:
            self.mask = _readonly(self.mask)


@dataclass(frozen=True)
class ScalerStats:
    """Pooled mean/std of all training-set signal values."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("scaler std must be positive")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerStats":
        return cls(mean=float(d["mean"]), std=float(d["std"]))


@dataclass(frozen=True)
class RecordingMeta:
    """One manifest row: identity plus an optional manual end-trim point."""

    id: RecordingId
    manual_trim_minute: int | None = None

    def to_dict(self) -> dict:
        d = self.id.to_dict()
        if self.manual_trim_minute is not None:
            d["manual_trim_minute"] = self.manual_trim_minute
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RecordingMeta":
        trim = d.get("manual_trim_minute")
        return cls(id=RecordingId.from_dict(d), manual_trim_minute=None if trim is None else int(trim))


def patient_map(metas: list[RecordingMeta]) -> dict[str, str]:
    """recording_id -> patient_id; rejects duplicate or ambiguous recordings."""
    out: dict[str, str] = {}
    for m in metas:
        rid = m.id.recording_id
        if rid in out:
            raise ValueError(f"duplicate recording_id {rid!r} in manifest")
        out[rid] = m.id.patient_id
    return out
