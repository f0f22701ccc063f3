import numpy as np
import pytest

from icpforecast.cv import Dataset
from icpforecast.types import CleanSignal, MonitorType, RecordingId, RecordingMeta


def make_id(patient: str, recording: str) -> RecordingId:
    return RecordingId(patient_id=patient, recording_id=recording,
                       monitor_type=MonitorType.INTRAPARENCHYMAL)


def make_signal(patient: str, recording: str, values) -> CleanSignal:
    return CleanSignal(id=make_id(patient, recording), values=np.asarray(values, dtype=float))


def two_sine_values(minutes: int, rng: np.random.Generator, offset: float = 0.0) -> np.ndarray:
    """Smooth synthetic ICP-like series: two sines around a 12 mm Hg level."""
    t = np.arange(minutes, dtype=float)
    phase1, phase2 = rng.uniform(0, 2 * np.pi, size=2)
    return (12.0 + offset
            + 5.0 * np.sin(2 * np.pi * t / 40.0 + phase1)
            + 3.0 * np.sin(2 * np.pi * t / 70.0 + phase2)
            + rng.normal(0.0, 0.3, size=minutes))


def sine_dataset(n_patients: int, minutes: int = 390, seed: int = 0,
                 recordings_per_patient: int = 1) -> Dataset:
    rng = np.random.default_rng(seed)
    metas, signals = [], {}
    for p in range(n_patients):
        offset = rng.uniform(-1.0, 1.0)
        for r in range(recordings_per_patient):
            rid = make_id(f"p{p:03d}", f"p{p:03d}r{r}")
            metas.append(RecordingMeta(id=rid))
            signals[rid.recording_id] = CleanSignal(
                id=rid, values=two_sine_values(minutes, rng, offset))
    return Dataset(metas=metas, signals=signals)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
