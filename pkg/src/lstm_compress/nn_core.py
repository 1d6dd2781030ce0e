"""LSTM regressor written directly against numpy.

Architecture: 30x7 window -> single LSTM layer -> inverted dropout on the last
hidden state -> Dense(16, ReLU) -> linear scalar output.

Each gate ``g`` in (f, i, C, o) owns ``W_g`` of shape (hidden, hidden + input_dim)
applied to the concatenation ``[h_prev, x_t]`` and a bias ``b_g``::

    f_t = sigmoid(W_f [h, x] + b_f)        i_t = sigmoid(W_i [h, x] + b_i)
    C~_t = tanh(W_C [h, x] + b_C)          o_t = sigmoid(W_o [h, x] + b_o)
    c_t = f_t * c_prev + i_t * C~_t        h_t = o_t * tanh(c_t)

Everything is float64 and batched along a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Iterator

import numpy as np

VALID_HIDDEN = (16, 32, 48, 64, 128)

# serialization order of tensors
TENSOR_ORDER = (
    "W_f", "b_f", "W_i", "b_i", "W_C", "b_C", "W_o", "b_o",
    "dense_W", "dense_b", "out_W", "out_b",
)
GATES = ("f", "i", "C", "o")


class NumericalError(FloatingPointError):
    """Non-finite values appeared in activations, losses or updates."""


@dataclass(frozen=True)
class ModelConfig:
    hidden_units: int = 64
    input_dim: int = 7
    seq_len: int = 30
    dense_units: int = 16
    output_dim: int = 1
    dropout_rate: float = 0.2

    def __post_init__(self):
        for name in ("hidden_units", "input_dim", "seq_len", "dense_units", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        h, n, d = self.hidden_units, self.input_dim, self.dense_units
        out = {}
        for g in GATES:
            out[f"W_{g}"] = (h, h + n)
            out[f"b_{g}"] = (h,)
        out["dense_W"] = (d, h)
        out["dense_b"] = (d,)
        out["out_W"] = (self.output_dim, d)
        out["out_b"] = (self.output_dim,)
        return out

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ModelWeights:
    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in TENSOR_ORDER:
            yield name, self.tensors[name]

    def param_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelWeights":
        return ModelWeights({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "ModelWeights":
        return ModelWeights({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def as_float32(self) -> "ModelWeights":
        """Weights rounded to float32 (and held as float64), i.e. as serialized."""
        return ModelWeights({k: v.astype(np.float32).astype(np.float64) for k, v in self.tensors.items()})

    def check_shapes(self, config: ModelConfig) -> None:
        expected = config.shapes()
        if set(expected) != set(self.tensors):
            raise ValueError(f"tensor names {sorted(self.tensors)} != {sorted(expected)}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class CellCache:
    z: np.ndarray  # [h_prev, x_t]
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray  # candidate C~
    o: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_forward(w: ModelWeights, x_t, h_prev, c_prev):
    """One LSTM step. Accepts single vectors or batches (leading axis)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    hidden = w["b_f"].shape[0]
    if h_prev.shape[-1] != hidden or c_prev.shape[-1] != hidden:
        raise ValueError(f"state size {h_prev.shape[-1]}/{c_prev.shape[-1]} != hidden {hidden}")
    if x_t.shape[-1] + hidden != w["W_f"].shape[1]:
        raise ValueError(f"input size {x_t.shape[-1]} does not match W_f {w['W_f'].shape}")
    z = np.concatenate([h_prev, x_t], axis=-1)
    f = sigmoid(z @ w["W_f"].T + w["b_f"])
    i = sigmoid(z @ w["W_i"].T + w["b_i"])
    g = np.tanh(z @ w["W_C"].T + w["b_C"])
    o = sigmoid(z @ w["W_o"].T + w["b_o"])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    if not np.all(np.isfinite(h)) or not np.all(np.isfinite(c)):
        raise NumericalError("non-finite LSTM state")
    return h, c, CellCache(z, f, i, g, o, c_prev, c, tanh_c)


@dataclass
class ForwardCache:
    cells: list[CellCache]
    h_last: np.ndarray
    mask: np.ndarray | None  # already includes the 1/(1-p) scale
    dropped: np.ndarray
    dense_pre: np.ndarray
    dense_act: np.ndarray
    batched: bool


def forward(config: ModelConfig, weights: ModelWeights, window, mask=None):
    """Predict from one window (seq_len, input_dim) or a batch (B, seq_len, input_dim).

    ``mask`` selects train mode: a 0/1 keep-mask over the final hidden state
    (shape (hidden,) or (B, hidden)); kept units are scaled by 1/(1-p).
    ``mask=None`` is inference mode, where dropout is the identity.
    Returns ``(prediction, cache)``; prediction is a float or shape (B,).
    """
    x = np.asarray(window, dtype=np.float64)
    batched = x.ndim == 3
    if not batched:
        x = x[None]
    if x.shape[1:] != (config.seq_len, config.input_dim):
        raise ValueError(f"window shape {x.shape[1:]}, expected {(config.seq_len, config.input_dim)}")
    B = x.shape[0]
    h = np.zeros((B, config.hidden_units))
    c = np.zeros((B, config.hidden_units))
    cells = []
    for t in range(config.seq_len):
        h, c, cache = lstm_cell_forward(weights, x[:, t, :], h, c)
        cells.append(cache)

    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)
        if m.ndim == 1:
            m = np.broadcast_to(m, h.shape)
        m = m / (1.0 - config.dropout_rate)
        dropped = h * m
    else:
        m = None
        dropped = h
    dense_pre = dropped @ weights["dense_W"].T + weights["dense_b"]
    dense_act = np.maximum(dense_pre, 0.0)
    out = dense_act @ weights["out_W"].T + weights["out_b"]
    pred = out[:, 0]
    if not np.all(np.isfinite(pred)):
        raise NumericalError("non-finite prediction")
    cache = ForwardCache(cells, h, m, dropped, dense_pre, dense_act, batched)
    return (pred if batched else float(pred[0])), cache


def predict(config: ModelConfig, weights: ModelWeights, inputs: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Inference-mode predictions for a stack of windows."""
    inputs = np.asarray(inputs, dtype=np.float64)
    out = np.empty(len(inputs))
    for s in range(0, len(inputs), batch_size):
        out[s : s + batch_size], _ = forward(config, weights, inputs[s : s + batch_size])
    return out


def loss_mae(predictions, targets) -> float:
    p = np.atleast_1d(np.asarray(predictions, dtype=np.float64))
    y = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(y - p)))


def loss_mae_grad(predictions, targets) -> np.ndarray:
    """d(MAE)/d(prediction); the subgradient at a zero residual is 0."""
    p = np.atleast_1d(np.asarray(predictions, dtype=np.float64))
    y = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    return np.sign(p - y) / p.size


def backward(config: ModelConfig, weights: ModelWeights, cache: ForwardCache, d_pred) -> ModelWeights:
    """Backpropagation through time. ``d_pred`` is dLoss/dPrediction per sample."""
    if len(cache.cells) != config.seq_len or cache.h_last.shape[1] != config.hidden_units:
        raise ValueError("cache does not match config")
    d_out = np.atleast_1d(np.asarray(d_pred, dtype=np.float64)).reshape(-1, 1)
    if d_out.shape[0] != cache.h_last.shape[0]:
        raise ValueError(f"upstream gradient has {d_out.shape[0]} rows, cache has {cache.h_last.shape[0]}")
    H = config.hidden_units
    grads = {}
    grads["out_W"] = d_out.T @ cache.dense_act
    grads["out_b"] = d_out.sum(axis=0)
    d_act = d_out @ weights["out_W"]
    d_pre = d_act * (cache.dense_pre > 0)
    grads["dense_W"] = d_pre.T @ cache.dropped
    grads["dense_b"] = d_pre.sum(axis=0)
    dh = d_pre @ weights["dense_W"]
    if cache.mask is not None:
        dh = dh * cache.mask

    for g in GATES:
        grads[f"W_{g}"] = np.zeros_like(weights[f"W_{g}"])
        grads[f"b_{g}"] = np.zeros_like(weights[f"b_{g}"])
    dc = np.zeros_like(dh)
    for cc in reversed(cache.cells):
        do = dh * cc.tanh_c
        dc = dc + dh * cc.o * (1.0 - cc.tanh_c**2)
        df = dc * cc.c_prev
        di = dc * cc.g
        dg = dc * cc.i
        da = {
            "f": df * cc.f * (1.0 - cc.f),
            "i": di * cc.i * (1.0 - cc.i),
            "C": dg * (1.0 - cc.g**2),
            "o": do * cc.o * (1.0 - cc.o),
        }
        dz = np.zeros_like(cc.z)
        for g in GATES:
            grads[f"W_{g}"] += da[g].T @ cc.z
            grads[f"b_{g}"] += da[g].sum(axis=0)
            dz += da[g] @ weights[f"W_{g}"]
        dh = dz[:, :H]
        dc = dc * cc.f
    return ModelWeights(grads)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None

    @classmethod
    def create(cls, weights: ModelWeights, lr: float = 1e-3, **kw) -> "AdamState":
        zeros = {k: np.zeros_like(v) for k, v in weights.tensors.items()}
        return cls({k: z.copy() for k, z in zeros.items()}, zeros, lr=lr, **kw)


def adam_step(state: AdamState, weights: ModelWeights, grads: ModelWeights) -> ModelWeights:
    """Adam with bias correction. Updates ``state`` in place and returns new weights."""
    if set(grads.tensors) != set(weights.tensors):
        raise ValueError("gradient/weight tensor names differ")
    scale = 1.0
    if state.clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.tensors.values()))
        if norm > state.clip_norm:
            scale = state.clip_norm / norm
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    new = {}
    for name, w in weights.tensors.items():
        g = grads.tensors[name] * scale
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != weight shape {w.shape}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        new[name] = w - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.all(np.isfinite(new[name])):
            raise NumericalError(f"non-finite Adam update in {name}")
    return ModelWeights(new)


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Glorot-uniform input blocks, orthogonal recurrent blocks, forget bias 1."""
    rng = np.random.default_rng(seed)
    H, N, D = config.hidden_units, config.input_dim, config.dense_units
    t = {}
    for g in GATES:
        W = np.empty((H, H + N))
        W[:, :H] = _orthogonal(rng, H)
        W[:, H:] = _glorot(rng, H, N)
        t[f"W_{g}"] = W
        t[f"b_{g}"] = np.ones(H) if g == "f" else np.zeros(H)
    t["dense_W"] = _glorot(rng, D, H)
    t["dense_b"] = np.zeros(D)
    t["out_W"] = _glorot(rng, config.output_dim, D)
    t["out_b"] = np.zeros(config.output_dim)
    return ModelWeights(t)


@dataclass
class GradCheckReport:
    tolerance: float
    block_errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.block_errors.values())

    @property
    def worst_block(self) -> str:
        return max(self.block_errors, key=self.block_errors.get)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def grad_check(config: ModelConfig, seed: int = 0, tolerance: float = 1e-4, batch: int = 3,
               step: float = 1e-5,
               grad_hook: Callable[[ModelWeights], ModelWeights] | None = None) -> GradCheckReport:
    """Compare BPTT gradients with central differences on every parameter.

    The loss is MAE over a small random batch in train mode with a fixed
    dropout mask. Relative error per component is ``|a - n| / max(|a| + |n|, 1e-7)``.
    ``grad_hook`` may alter the analytic gradients (fault injection).
    """
    rng = np.random.default_rng(seed)
    weights = init_weights(config, seed)
    # perturb biases away from zero so every path is exercised
    for name, v in weights:
        v += rng.normal(0.0, 0.1, size=v.shape)
    x = rng.uniform(0.0, 1.0, size=(batch, config.seq_len, config.input_dim))
    mask = (rng.uniform(size=(batch, config.hidden_units)) >= config.dropout_rate).astype(np.float64)
    y = rng.normal(0.0, 1.0, size=batch) + 3.0

    def loss(w):
        p, _ = forward(config, w, x, mask)
        return loss_mae(p, y)

    pred, cache = forward(config, weights, x, mask)
    grads = backward(config, weights, cache, loss_mae_grad(pred, y))
    if grad_hook is not None:
        grads = grad_hook(grads)

    report = GradCheckReport(tolerance)
    for name, w in weights:
        numeric = np.zeros_like(w)
        flat = w.reshape(-1)
        nflat = numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            lp = loss(weights)
            flat[k] = orig - step
            lm = loss(weights)
            flat[k] = orig
            nflat[k] = (lp - lm) / (2 * step)
        a = grads[name]
        rel = np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), 1e-7)
        report.block_errors[name] = float(rel.max())
    return report
