"""Signal cleaning: resampling, physiologic clipping, gap fill, smoothing,
downsampling, unrealistic-signal rejection, and z-scaling.

The full pipeline turns an irregular raw recording into one ICP value per
minute: resample to a fixed rate, clip values outside the physiologic band to
missing, fill gaps from the next available value, then apply a causal sliding
mean and downsample by ``ds`` samples per output value.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllMissing,
    DegenerateScale,
    EmptyRecording,
    EmptySignal,
    InvalidTrim,
    TooShort,
)
from .types import CleanSignal, PreprocessConfig, RawRecording, ScalerStats, Segment

# Bin-index slack for float rounding of time*rate products (fractions of a bin).
_BIN_EPS = 1e-6


def resample_to_rate(raw: RawRecording, target_rate: float) -> RawRecording:
    """Average samples into 1/target_rate-second bins spanning the recording.

    Bins with no present sample become missing (NaN).
    """
    if len(raw) == 0:
        raise EmptyRecording(f"recording {raw.id.recording_id!r} has no samples")
    idx = np.floor(raw.times * target_rate + _BIN_EPS).astype(np.int64)
    n_bins = int(idx[-1]) + 1
    present = np.isfinite(raw.values)
    sums = np.bincount(idx[present], weights=raw.values[present], minlength=n_bins)
    counts = np.bincount(idx[present], minlength=n_bins)
    with np.errstate(invalid="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    times = np.arange(n_bins, dtype=np.float64) / target_rate
    return RawRecording(id=raw.id, times=times, values=values, nominal_rate=target_rate)


def clip_physiologic(values: np.ndarray, icp_min: float, icp_max: float) -> np.ndarray:
    """Replace values outside the closed band [icp_min, icp_max] with missing."""
    values = np.asarray(values, dtype=np.float64)
    out = values.copy()
    with np.errstate(invalid="ignore"):
        out[(values < icp_min) | (values > icp_max)] = np.nan
    return out


def fill_missing(values: np.ndarray) -> np.ndarray:
    """Fill each missing run with the next present value; trailing runs take the
    last present value."""
    values = np.asarray(values, dtype=np.float64)
    present_idx = np.flatnonzero(np.isfinite(values))
    if present_idx.size == 0:
        raise AllMissing("signal has no present values")
    if present_idx.size == values.size:
        return values.copy()
    pos = np.searchsorted(present_idx, np.arange(values.size), side="left")
    pos = np.minimum(pos, present_idx.size - 1)  # trailing gap -> last present value
    return values[present_idx[pos]]


def smooth_downsample(values: np.ndarray, w: int, st: int, ds: int) -> np.ndarray:
    """Causal sliding mean (window w, stride st) followed by mean-downsampling
    to one value per ds input samples.

    Output index m averages the stride means whose window end falls inside
    [m*ds, (m+1)*ds); windows near the signal start shrink to the available
    history.  Output length is floor(L / ds).  With st == ds this is one
    trailing windowed mean per output value.
    """
    values = np.asarray(values, dtype=np.float64)
    L = values.size
    if L < w:
        raise TooShort(f"signal length {L} < smoothing window {w}")
    if np.isnan(values).any():
        raise ValueError("smooth_downsample requires a gap-free signal")
    if ds % st != 0:
        raise ValueError("require st to divide ds")
    n_out = L // ds
    group = ds // st
    n_windows = n_out * group
    ends = (np.arange(n_windows, dtype=np.int64) + 1) * st
    starts = np.maximum(ends - w, 0)
    csum = np.concatenate(([0.0], np.cumsum(values)))
    means = (csum[ends] - csum[starts]) / (ends - starts)
    return means.reshape(n_out, group).mean(axis=1)


@dataclass(frozen=True)
class FlatRun:
    """Location of a constant run that triggered rejection."""

    start_minute: int
    run_minutes: int

    def describe(self) -> str:
        return f"constant run of {self.run_minutes} min starting at minute {self.start_minute}"


def detect_unrealistic(clean: CleanSignal, flat_run_threshold: float) -> FlatRun | None:
    """Return the first constant run of at least flat_run_threshold minutes,
    or None when the signal looks realistic."""
    if math.isinf(flat_run_threshold):
        return None
    v = clean.values
    if v.size == 0:
        return None
    # Run boundaries: positions where the value changes.
    change = np.flatnonzero(np.diff(v) != 0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change + 1, [v.size]))
    lengths = ends - starts
    hit = np.flatnonzero(lengths >= flat_run_threshold)
    if hit.size == 0:
        return None
    k = hit[0]
    return FlatRun(start_minute=int(starts[k]) + clean.start_minute, run_minutes=int(lengths[k]))


def trim_ending(clean: CleanSignal, manual_trims: dict[str, int]) -> CleanSignal:
    """Truncate the signal at the mapped cut minute, if any; otherwise return
    it unchanged."""
    cut = manual_trims.get(clean.id.recording_id)
    if cut is None:
        return clean
    if cut <= 0:
        raise EmptySignal(f"trim at minute {cut} leaves no signal")
    if cut >= len(clean):
        raise InvalidTrim(f"trim at minute {cut} beyond signal length {len(clean)}")
    return CleanSignal(id=clean.id, values=clean.values[:cut], start_minute=clean.start_minute)


def scaler_fit_values(pooled: np.ndarray) -> ScalerStats:
    """Mean and population std of an already-pooled value array."""
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.size < 2:
        raise DegenerateScale("scaler needs at least two pooled values")
    mean = float(pooled.mean())
    std = float(pooled.std())
    if std == 0.0:
        raise DegenerateScale("pooled values have zero variance")
    return ScalerStats(mean=mean, std=std)


def scaler_fit(signals: list[CleanSignal]) -> ScalerStats:
    """Pooled mean and (population) std over all values of all signals."""
    if not signals:
        raise DegenerateScale("no signals to fit scaler on")
    return scaler_fit_values(np.concatenate([s.values for s in signals]))


def scaler_apply(values: np.ndarray, stats: ScalerStats) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def scaler_invert(values: np.ndarray, stats: ScalerStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * stats.std + stats.mean


def scale_segment(seg: Segment, stats: ScalerStats) -> Segment:
    """Segment with x/y z-scaled; padding is re-zeroed so pad values stay
    neutral in scaled space."""
    x = scaler_apply(seg.x, stats)
    y = scaler_apply(seg.y, stats)
    x_padded = None
    if seg.x_padded is not None and seg.mask is not None:
        x_padded = np.zeros_like(seg.x_padded)
        x_padded[seg.mask > 0] = x
    return dataclasses.replace(seg, x=x, y=y, x_padded=x_padded)


@dataclass(frozen=True)
class PreprocessOutcome:
    """Result of the full pipeline on one recording."""

    signal: CleanSignal | None
    rejected_reason: str | None = None
    trimmed_at: int | None = None

    @property
    def accepted(self) -> bool:
        return self.signal is not None


def preprocess_recording(
    raw: RawRecording,
    cfg: PreprocessConfig,
    manual_trim_minute: int | None = None,
) -> PreprocessOutcome:
    """Run resample -> clip -> fill -> smooth/downsample -> trim -> checks.

    Rejects recordings that are all-missing after clipping, shorter than the
    smoothing window, shorter than min_duration, or containing a flat run.
    """
    resampled = resample_to_rate(raw, cfg.target_rate)
    clipped = clip_physiologic(resampled.values, cfg.icp_min, cfg.icp_max)
    try:
        filled = fill_missing(clipped)
    except AllMissing:
        return PreprocessOutcome(None, rejected_reason="no in-range values")
    try:
        per_minute = smooth_downsample(filled, cfg.w, cfg.st, cfg.ds)
    except TooShort:
        return PreprocessOutcome(None, rejected_reason=f"shorter than smoothing window ({cfg.w} samples)")
    clean = CleanSignal(id=raw.id, values=per_minute)
    trimmed_at = None
    if manual_trim_minute is not None:
        clean = trim_ending(clean, {raw.id.recording_id: manual_trim_minute})
        trimmed_at = manual_trim_minute
    flat = detect_unrealistic(clean, cfg.flat_run_threshold)
    if flat is not None:
        return PreprocessOutcome(None, rejected_reason=flat.describe(), trimmed_at=trimmed_at)
    if len(clean) < cfg.min_duration:
        return PreprocessOutcome(
            None,
            rejected_reason=f"below min_duration {cfg.min_duration} ({len(clean)} min)",
            trimmed_at=trimmed_at,
        )
    return PreprocessOutcome(clean, trimmed_at=trimmed_at)
