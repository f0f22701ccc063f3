"""Patient-grouped splitting, k-fold cross-validation, and retrain-on-all
external validation.

All recordings of a patient stay on one side of every split.  Each fold fits
its scaler on training-patient signals only, so validation values never reach
scaler fitting or gradient computation.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adapter import AdapterEndpoint, external_finetune, external_forecast
from .errors import DatasetMismatch, TooFewPatients
from .es import EsConfig, es_forecast
from .evaluation import MetricsReport, SegmentScore, aggregate, score_segment
from .lstm import LstmParams, forward_batch, init_lstm_params
from .preprocess import scale_segment, scaler_fit, scaler_invert
from .segmentation import segment_signal
from .train import LossCurve, TrainConfig, train
from .types import CleanSignal, RecordingMeta, ScalerStats, Segment, SegmentConfig, patient_map


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_patients: frozenset[str]
    val_patients: frozenset[str]


@dataclass
class Dataset:
    """Manifest rows plus the clean signals they point at."""

    metas: list[RecordingMeta]
    signals: dict[str, CleanSignal]
    config_tag: str | None = None

    def __post_init__(self):
        known = patient_map(self.metas)
        for rid in self.signals:
            if rid not in known:
                raise ValueError(f"signal {rid!r} has no manifest row")

    def patients(self) -> list[str]:
        return sorted({m.id.patient_id for m in self.metas if m.id.recording_id in self.signals})

    def patient_map(self) -> dict[str, str]:
        return patient_map(self.metas)

    def signals_of(self, patients: set[str] | frozenset[str]) -> list[CleanSignal]:
        pmap = self.patient_map()
        rids = sorted(r for r in self.signals if pmap[r] in patients)
        return [self.signals[r] for r in rids]


@dataclass(frozen=True)
class ModelSpec:
    """Which forecaster to run and with what configuration."""

    kind: str  # es | lstm | external
    es_config: EsConfig = EsConfig()
    train_config: TrainConfig = TrainConfig()
    hidden_size: int = 512
    adapter_cmd: str | None = None
    adapter_finetune_cmd: str | None = None
    adapter_timeout: float = 600.0

    def __post_init__(self):
        if self.kind not in ("es", "lstm", "external"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "external" and not self.adapter_cmd:
            raise ValueError("external model needs an adapter command")


@dataclass
class FoldResult:
    split: FoldSplit
    scaler: ScalerStats
    val_report: MetricsReport
    train_report: MetricsReport
    curve: LossCurve | None = None
    diverged: bool = False
    trained_params: LstmParams | None = None
    adapter_comments: list[str] = field(default_factory=list)


@dataclass
class CvResult:
    folds: list[FoldResult]

    @property
    def val_reports(self) -> list[MetricsReport]:
        return [f.val_report for f in self.folds]

    @property
    def train_reports(self) -> list[MetricsReport]:
        return [f.train_report for f in self.folds]


def make_folds(patients: Sequence[str], k: int, seed: int) -> list[FoldSplit]:
    """Seeded partition of patients into k validation folds of near-equal size."""
    unique = sorted(set(patients))
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(unique) < k:
        raise TooFewPatients(f"{len(unique)} patients < {k} folds")
    rng = np.random.default_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    n, rem = divmod(len(order), k)
    folds = []
    start = 0
    for i in range(k):
        size = n + (1 if i < rem else 0)
        val = frozenset(order[start : start + size])
        folds.append(FoldSplit(i, frozenset(set(unique) - val), val))
        start += size
    return folds


def _segment_signals(signals: list[CleanSignal], cfg: SegmentConfig) -> list[Segment]:
    segs: list[Segment] = []
    for sig in signals:
        segs.extend(segment_signal(sig, cfg))
    return segs


def _score_all(segments: list[Segment], preds: list[np.ndarray]) -> list[SegmentScore]:
    return [
        score_segment(s.y, y_hat, x=s.x, recording_id=s.id.recording_id, seg_index=s.seg_index)
        for s, y_hat in zip(segments, preds)
    ]


def _lstm_predict(params: LstmParams, segments: list[Segment], scaler: ScalerStats,
                  chunk: int = 1024) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for start in range(0, len(segments), chunk):
        batch = segments[start : start + chunk]
        x = np.stack([scale_segment(s, scaler).x for s in batch])
        y_hat = forward_batch(params, x, tf_prob=0.0, out_len=batch[0].y.size)
        out.extend(scaler_invert(row, scaler) for row in y_hat)
    return out


def _external_predict(cmd: str, timeout: float, segments: list[Segment],
                      scaler: ScalerStats) -> list[np.ndarray]:
    scaled = [scale_segment(s, scaler) for s in segments]
    results = external_forecast(scaled, AdapterEndpoint(cmd, timeout))
    return [scaler_invert(r.y_hat, scaler) for r in results]


@dataclass
class _FittedModel:
    spec: ModelSpec
    scaler: ScalerStats
    params: LstmParams | None = None
    curve: LossCurve | None = None
    diverged: bool = False
    comments: list[str] = field(default_factory=list)
    predict_cmd: str | None = None

    def predict(self, segments: list[Segment]) -> list[np.ndarray]:
        if self.spec.kind == "es":
            cfg = self.spec.es_config
            return [es_forecast(s.x, s.y.size, cfg) for s in segments]
        if self.spec.kind == "lstm":
            return _lstm_predict(self.params, segments, self.scaler)
        return _external_predict(self.predict_cmd, self.spec.adapter_timeout, segments, self.scaler)


def _fit(spec: ModelSpec, train_segments: list[Segment], val_segments: list[Segment],
         scaler: ScalerStats, seed: int, weights_path: str | None = None) -> _FittedModel:
    fitted = _FittedModel(spec=spec, scaler=scaler, predict_cmd=spec.adapter_cmd)
    if spec.kind == "es":
        return fitted  # training-free: each window is fit at forecast time
    if spec.kind == "lstm":
        cfg = dataclasses.replace(spec.train_config, seed=seed)
        params = init_lstm_params(spec.hidden_size, seed)
        scaled_train = [scale_segment(s, scaler) for s in train_segments]
        scaled_val = [scale_segment(s, scaler) for s in val_segments]
        result = train(params, scaled_train, scaled_val, cfg)
        fitted.params = result.params
        fitted.curve = result.curve
        fitted.diverged = result.diverged
        return fitted
    if spec.adapter_finetune_cmd:
        cmd = spec.adapter_finetune_cmd
        if weights_path is not None:
            cmd = cmd.replace("{weights}", weights_path)
        scaled_train = [scale_segment(s, scaler) for s in train_segments]
        fitted.comments = external_finetune(scaled_train, AdapterEndpoint(cmd, spec.adapter_timeout))
        if weights_path is not None and fitted.predict_cmd:
            fitted.predict_cmd = fitted.predict_cmd.replace("{weights}", weights_path)
    return fitted


def _fold_seed(seed: int, fold_index: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(fold_index,)).generate_state(1)[0])


def run_cv(
    dataset: Dataset,
    spec: ModelSpec,
    k: int = 5,
    seed: int = 0,
    seg_cfg: SegmentConfig = SegmentConfig(),
    workdir: str | None = None,
) -> CvResult:
    """k-fold patient-grouped cross-validation.

    Per fold: fit the scaler on training patients only, fit or train the
    model, and report metrics on both validation and training segments.  A
    diverged fold is flagged and the run continues.
    """
    pmap = dataset.patient_map()
    folds = make_folds(dataset.patients(), k, seed)
    results = []
    for split in folds:
        train_signals = dataset.signals_of(split.train_patients)
        val_signals = dataset.signals_of(split.val_patients)
        scaler = scaler_fit(train_signals)
        train_segments = _segment_signals(train_signals, seg_cfg)
        val_segments = _segment_signals(val_signals, seg_cfg)
        weights = None if workdir is None else f"{workdir}/fold_{split.fold_index}_weights.pt"
        fitted = _fit(spec, train_segments, val_segments, scaler,
                      _fold_seed(seed, split.fold_index), weights)
        val_report = aggregate(_score_all(val_segments, fitted.predict(val_segments)), pmap)
        train_report = aggregate(_score_all(train_segments, fitted.predict(train_segments)), pmap)
        results.append(FoldResult(
            split=split,
            scaler=scaler,
            val_report=val_report,
            train_report=train_report,
            curve=fitted.curve,
            diverged=fitted.diverged,
            trained_params=fitted.params,
            adapter_comments=fitted.comments,
        ))
    return CvResult(folds=results)


@dataclass
class RetrainResult:
    scaler: ScalerStats
    external_report: MetricsReport
    train_report: MetricsReport
    curve: LossCurve | None = None
    diverged: bool = False
    trained_params: LstmParams | None = None


def retrain_all_and_validate(
    dataset: Dataset,
    external_dataset: Dataset,
    spec: ModelSpec,
    seed: int = 0,
    seg_cfg: SegmentConfig = SegmentConfig(),
    workdir: str | None = None,
) -> RetrainResult:
    """Train on the full internal dataset, then evaluate on the external one
    using the internal scaler and unchanged model parameters."""
    if (dataset.config_tag is not None and external_dataset.config_tag is not None
            and dataset.config_tag != external_dataset.config_tag):
        raise DatasetMismatch(
            f"datasets preprocessed under different configs: "
            f"{dataset.config_tag} vs {external_dataset.config_tag}"
        )
    internal_signals = dataset.signals_of(set(dataset.patients()))
    scaler = scaler_fit(internal_signals)
    train_segments = _segment_signals(internal_signals, seg_cfg)
    ext_segments = _segment_signals(
        external_dataset.signals_of(set(external_dataset.patients())), seg_cfg
    )
    weights = None if workdir is None else f"{workdir}/retrain_weights.pt"
    fitted = _fit(spec, train_segments, [], scaler, seed, weights)
    ext_report = aggregate(_score_all(ext_segments, fitted.predict(ext_segments)),
                           external_dataset.patient_map())
    train_report = aggregate(_score_all(train_segments, fitted.predict(train_segments)),
                             dataset.patient_map())
    return RetrainResult(
        scaler=scaler,
        external_report=ext_report,
        train_report=train_report,
        curve=fitted.curve,
        diverged=fitted.diverged,
        trained_params=fitted.params,
    )
