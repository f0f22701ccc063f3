"""Forecasting pipeline for intracranial-pressure time series."""

from .adapter import AdapterEndpoint, ForecastResult, external_forecast
from .cv import Dataset, FoldSplit, ModelSpec, make_folds, retrain_all_and_validate, run_cv
from .es import AUTO, EsConfig, es_forecast
from .evaluation import (
    MetricsReport,
    SegmentScore,
    aggregate,
    cv_summary,
    score_segment,
    variance_mae_fit,
)
from .lstm import LstmParams, backward, init_lstm_params, lstm_forward
from .preprocess import (
    clip_physiologic,
    detect_unrealistic,
    fill_missing,
    preprocess_recording,
    resample_to_rate,
    scale_segment,
    scaler_apply,
    scaler_fit,
    scaler_invert,
    smooth_downsample,
    trim_ending,
)
from .segmentation import pad_fixed, segment_count, segment_signal
from .train import LossCurve, TrainConfig, adam_step, clip_gradients, mse_loss, train
from .types import (
    CleanSignal,
    MonitorType,
    PreprocessConfig,
    RawRecording,
    RecordingId,
    RecordingMeta,
    ScalerStats,
    Segment,
    SegmentConfig,
)

__version__ = "0.1.0"
