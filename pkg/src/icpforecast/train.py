"""Gradient training loop for the LSTM: loss, clipping, Adam, epochs, and
loss-curve capture.

Shuffling and teacher-forcing draws all derive from the config seed, so a
(seed, data, config) triple fully determines the trained parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalDivergence, ShapeError
from .lstm import LstmParams, backward, forward_batch
from .types import Segment


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 64
    epochs: int = 10
    grad_clip_value: float = 5.0
    tf_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate, batch_size, epochs must be non-negative/positive")
        if self.grad_clip_value <= 0:
            raise ValueError("grad_clip_value must be positive")
        if not 0.0 <= self.tf_prob <= 1.0:
            raise ValueError("tf_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "grad_clip_value": self.grad_clip_value,
            "tf_prob": self.tf_prob,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{f: d[f] for f in cls.__dataclass_fields__ if f in d})


@dataclass
class LossCurve:
    train: list[float] = field(default_factory=list)
    validation: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"train": self.train, "validation": self.validation}


@dataclass
class TrainResult:
    params: LstmParams
    curve: LossCurve
    diverged: bool = False


def mse_loss(y_hat: np.ndarray, y: np.ndarray) -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ShapeError(f"shape mismatch {y_hat.shape} vs {y.shape}")
    diff = y_hat - y
    return float(np.mean(diff * diff))


def clip_gradients(grads: np.ndarray, clip_value: float) -> np.ndarray:
    """Clamp each component to [-clip_value, +clip_value] (clip by value)."""
    if clip_value <= 0:
        raise ValueError("clip_value must be positive")
    return np.clip(grads, -clip_value, clip_value)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update on a flat parameter vector."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_params = params - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m=m, v=v, t=t)


def _stack(segments: Sequence[Segment]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.x for s in segments]), np.stack([s.y for s in segments])


def train(
    params: LstmParams,
    train_segments: Sequence[Segment],
    val_segments: Sequence[Segment],
    cfg: TrainConfig,
) -> TrainResult:
    """Minibatch training with shuffling, value clipping, and Adam.

    Per epoch records the segment-weighted mean of the realized training
    losses and the full-validation loss at tf_prob=0 (matching deployment).
    On numerical divergence the last finite parameters are returned with the
    diverged flag set; there is no early stopping.
    """
    if not train_segments:
        raise ValueError("train set is empty")
    x_train, y_train = _stack(train_segments)
    x_val, y_val = (_stack(val_segments) if val_segments else (None, None))
    n = x_train.shape[0]
    rng = np.random.default_rng(cfg.seed)
    theta = params.to_vector()
    state = AdamState.zeros(theta.size)
    curve = LossCurve()

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            take = order[start : start + cfg.batch_size]
            current = LstmParams.from_vector(params.hidden_size, theta)
            try:
                loss, grads = backward(current, x_train[take], y_train[take], cfg.tf_prob, rng)
            except NumericalDivergence:
                return TrainResult(current, curve, diverged=True)
            loss_sum += loss * take.size
            g = clip_gradients(grads.to_vector(), cfg.grad_clip_value)
            new_theta, state = adam_step(theta, g, state, cfg.learning_rate)
            if not np.isfinite(new_theta).all():
                return TrainResult(current, curve, diverged=True)
            theta = new_theta
        curve.train.append(loss_sum / n)
        final = LstmParams.from_vector(params.hidden_size, theta)
        if x_val is not None:
            val_hat = forward_batch(final, x_val, tf_prob=0.0, out_len=y_val.shape[1])
            curve.validation.append(mse_loss(val_hat, y_val))
        else:
            curve.validation.append(float("nan"))

    return TrainResult(LstmParams.from_vector(params.hidden_size, theta), curve)
