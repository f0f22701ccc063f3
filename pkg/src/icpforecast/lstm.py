"""Encoder-decoder LSTM forecaster with hand-written reverse-mode gradients.

The encoder consumes the scalar history step by step; its final hidden and
cell state seed the decoder, whose first input is the last history value.
Each decoder step feeds an affine head producing one scalar; during training
the next decoder input is the ground truth with probability tf_prob (one
Bernoulli draw per decoder step, shared across the batch) and the previous
prediction otherwise.

Everything runs in float64 so analytic gradients can be checked against
central finite differences at tight tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalDivergence

# Gate layout inside the stacked 4H dimension.
_I, _F, _G, _O = 0, 1, 2, 3


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmParams:
    """Weights for one encoder cell, one decoder cell, and the scalar head.

    Per cell: w_in (4H,) input weights, w_rec (H, 4H) recurrent weights,
    bias (4H,), with gates stacked [input, forget, candidate, output].
    """

    hidden_size: int
    enc_w_in: np.ndarray
    enc_w_rec: np.ndarray
    enc_bias: np.ndarray
    dec_w_in: np.ndarray
    dec_w_rec: np.ndarray
    dec_bias: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    _FIELDS = ("enc_w_in", "enc_w_rec", "enc_bias", "dec_w_in", "dec_w_rec", "dec_bias", "head_w", "head_b")

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f) for f in self._FIELDS]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def shapes(cls, hidden_size: int) -> list[tuple[int, ...]]:
        h = hidden_size
        return [(4 * h,), (h, 4 * h), (4 * h,), (4 * h,), (h, 4 * h), (4 * h,), (h,), (1,)]

    @classmethod
    def from_vector(cls, hidden_size: int, vec: np.ndarray) -> "LstmParams":
        arrays = []
        offset = 0
        for shape in cls.shapes(hidden_size):
            size = int(np.prod(shape))
            arrays.append(np.asarray(vec[offset : offset + size], dtype=np.float64).reshape(shape).copy())
            offset += size
        if offset != vec.size:
            raise ValueError(f"vector length {vec.size} does not match hidden_size {hidden_size}")
        return cls(hidden_size, *arrays)

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmParams":
        return cls(hidden_size, *[np.zeros(s) for s in cls.shapes(hidden_size)])

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_lstm_params(hidden_size: int, seed: int | np.random.Generator) -> LstmParams:
    """Uniform init in [-1/sqrt(H), 1/sqrt(H)] with forget-gate bias +1."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    h = hidden_size
    k = 1.0 / np.sqrt(h)
    arrays = [rng.uniform(-k, k, size=shape) for shape in LstmParams.shapes(h)]
    params = LstmParams(h, *arrays)
    params.enc_bias[_F * h : _G * h] += 1.0
    params.dec_bias[_F * h : _G * h] += 1.0
    return params


def _cell_forward(u, h_prev, c_prev, w_in, w_rec, bias, hidden_size):
    h = hidden_size
    z = u[:, None] * w_in[None, :] + h_prev @ w_rec + bias[None, :]
    i = _sigmoid(z[:, _I * h : _F * h])
    f = _sigmoid(z[:, _F * h : _G * h])
    g = np.tanh(z[:, _G * h : _O * h])
    o = _sigmoid(z[:, _O * h :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h_new = o * tanh_c
    cache = (u, h_prev, c_prev, i, f, g, o, tanh_c)
    return h_new, c, cache


def _cell_backward(dh, dc_in, cache, w_in, w_rec, grads_w_in, grads_w_rec, grads_bias):
    u, h_prev, c_prev, i, f, g, o, tanh_c = cache
    do = dh * tanh_c
    dc = dc_in + dh * o * (1.0 - tanh_c * tanh_c)
    da_o = do * o * (1.0 - o)
    da_f = dc * c_prev * f * (1.0 - f)
    da_i = dc * g * i * (1.0 - i)
    da_g = dc * i * (1.0 - g * g)
    da = np.concatenate([da_i, da_f, da_g, da_o], axis=1)
    grads_w_in += (da * u[:, None]).sum(axis=0)
    grads_w_rec += h_prev.T @ da
    grads_bias += da.sum(axis=0)
    dh_prev = da @ w_rec.T
    dc_prev = dc * f
    du = da @ w_in
    return dh_prev, dc_prev, du


def forward_batch(
    params: LstmParams,
    x: np.ndarray,
    y_teacher: np.ndarray | None = None,
    tf_prob: float = 0.0,
    out_len: int | None = None,
    rng: np.random.Generator | None = None,
    want_cache: bool = False,
):
    """Run the network on a batch; x is (B, in_len), output is (B, out_len).

    When tf_prob > 0 the teacher sequence is required and one forcing draw is
    made per decoder step from ``rng``; with tf_prob == 0 no randomness is
    consumed and the output is a pure function of (params, x).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    batch, in_len = x.shape
    if y_teacher is not None:
        y_teacher = np.atleast_2d(np.asarray(y_teacher, dtype=np.float64))
        out_len = y_teacher.shape[1]
    if out_len is None:
        raise ValueError("out_len required when no teacher sequence is given")
    if tf_prob > 0.0:
        if y_teacher is None:
            raise ValueError("teacher forcing requires a teacher sequence")
        if rng is None:
            raise ValueError("teacher forcing requires an rng")
        forced = rng.random(max(out_len - 1, 0)) < tf_prob
    else:
        forced = np.zeros(max(out_len - 1, 0), dtype=bool)

    hsz = params.hidden_size
    h = np.zeros((batch, hsz))
    c = np.zeros((batch, hsz))
    enc_caches = []
    for t in range(in_len):
        h, c, cache = _cell_forward(x[:, t], h, c, params.enc_w_in, params.enc_w_rec, params.enc_bias, hsz)
        if want_cache:
            enc_caches.append(cache)

    y_hat = np.empty((batch, out_len))
    dec_caches = []
    dec_h = []
    u = x[:, -1]
    for t in range(out_len):
        h, c, cache = _cell_forward(u, h, c, params.dec_w_in, params.dec_w_rec, params.dec_bias, hsz)
        y_hat[:, t] = h @ params.head_w + params.head_b[0]
        if want_cache:
            dec_caches.append(cache)
            dec_h.append(h)
        if t + 1 < out_len:
            u = y_teacher[:, t] if (forced[t] and y_teacher is not None) else y_hat[:, t]

    if not np.isfinite(y_hat).all():
        raise NumericalDivergence("non-finite activation in forward pass")
    if want_cache:
        return y_hat, (enc_caches, dec_caches, dec_h, forced)
    return y_hat


def lstm_forward(
    params: LstmParams,
    x: np.ndarray,
    y_teacher: np.ndarray | None = None,
    tf_prob: float = 0.0,
    out_len: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Single-segment forecast; see forward_batch for semantics."""
    y = forward_batch(params, np.asarray(x)[None, :], None if y_teacher is None else np.asarray(y_teacher)[None, :],
                      tf_prob=tf_prob, out_len=out_len, rng=rng)
    return y[0]


def backward(
    params: LstmParams,
    x: np.ndarray,
    y: np.ndarray,
    tf_prob: float,
    seed: int | np.random.Generator,
) -> tuple[float, LstmParams]:
    """Loss and exact gradients of batch-mean MSE for the realized forcing draw.

    The same seed reproduces the draw, so a finite-difference probe of the
    loss at perturbed parameters sees the identical stochastic path.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    y_hat, (enc_caches, dec_caches, dec_h, forced) = forward_batch(
        params, x, y, tf_prob=tf_prob, rng=rng, want_cache=True
    )
    batch, out_len = y.shape
    diff = y_hat - y
    loss = float(np.mean(diff * diff))
    d_everything = 2.0 * diff / diff.size  # d loss / d y_hat

    g = LstmParams.zeros(params.hidden_size)
    dh_carry = np.zeros((batch, params.hidden_size))
    dc_carry = np.zeros((batch, params.hidden_size))
    dy_feedback = np.zeros(batch)
    for t in range(out_len - 1, -1, -1):
        dy = d_everything[:, t].copy()
        if t + 1 < out_len and not forced[t]:
            dy += dy_feedback  # next step consumed y_hat[:, t] as its input
        g.head_w += dec_h[t].T @ dy
        g.head_b[0] += dy.sum()
        dh = dh_carry + dy[:, None] * params.head_w[None, :]
        dh_carry, dc_carry, du = _cell_backward(
            dh, dc_carry, dec_caches[t], params.dec_w_in, params.dec_w_rec,
            g.dec_w_in, g.dec_w_rec, g.dec_bias,
        )
        dy_feedback = du

    for t in range(len(enc_caches) - 1, -1, -1):
        dh_carry, dc_carry, _ = _cell_backward(
            dh_carry, dc_carry, enc_caches[t], params.enc_w_in, params.enc_w_rec,
            g.enc_w_in, g.enc_w_rec, g.enc_bias,
        )

    if not g.is_finite():
        raise NumericalDivergence("non-finite gradient in backward pass")
    return loss, g
