"""Simple exponential smoothing with a flat multi-step forecast.

Level recursion: l_t = alpha*y_t + (1-alpha)*l_{t-1}, initialized at the first
observation.  The forecast repeats the final level over the whole horizon.
The smoothing level can be fixed or chosen per input window by minimizing the
one-step-ahead squared error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyHistory

AUTO = "auto"

# Golden-section interior ratio.
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EsConfig:
    """alpha in (0, 1] or AUTO to optimize it per input window."""

    alpha: float | str = AUTO

    def __post_init__(self):
        if self.alpha != AUTO and not (0.0 < float(self.alpha) <= 1.0):
            raise ValueError("alpha must be in (0, 1] or 'auto'")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "EsConfig":
        return cls(alpha=d.get("alpha", AUTO))


def smooth_level(history: np.ndarray, alpha: float) -> float:
    """Final level of the recursion over the history."""
    level = float(history[0])
    for y in history[1:]:
        level = alpha * float(y) + (1.0 - alpha) * level
    return level


def one_step_sse(history: np.ndarray, alpha: float) -> float:
    """Sum of squared one-step-ahead errors: forecast for y_t is l_{t-1}."""
    level = float(history[0])
    sse = 0.0
    for y in history[1:]:
        err = float(y) - level
        sse += err * err
        level = alpha * float(y) + (1.0 - alpha) * level
    return sse


def _golden_refine(history: np.ndarray, lo: float, hi: float, tol: float = 1e-4) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = one_step_sse(history, c)
    fd = one_step_sse(history, d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = one_step_sse(history, c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = one_step_sse(history, d)
    best = c if fc <= fd else d
    return best, min(fc, fd)


def select_alpha(history: np.ndarray) -> float:
    """alpha minimizing one-step SSE: coarse 0.01-grid scan, then golden-section
    refinement inside the winning bracket.

    The grid scan guarantees the selected alpha is at least as good as every
    grid point; the refinement sharpens it within the local basin.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.size < 2:
        raise EmptyHistory("auto alpha needs at least two observations")
    grid = np.arange(1, 101) / 100.0
    sses = np.array([one_step_sse(history, a) for a in grid])
    k = int(np.argmin(sses))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    best, best_sse = _golden_refine(history, lo, hi)
    if sses[k] <= best_sse:
        return float(grid[k])
    return float(best)


def es_forecast(history: np.ndarray, horizon: int, cfg: EsConfig) -> np.ndarray:
    """Flat forecast: the final smoothed level repeated over the horizon."""
    history = np.asarray(history, dtype=np.float64)
    if history.size == 0:
        raise EmptyHistory("cannot forecast from an empty history")
    if cfg.alpha == AUTO:
        alpha = select_alpha(history)
    else:
        alpha = float(cfg.alpha)
    level = smooth_level(history, alpha)
    return np.full(horizon, level)
