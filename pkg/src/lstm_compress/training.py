"""Seeded mini-batch training and the binary model file.

Model file layout (little-endian)::

    b"TLSB" | u16 format version | u32 header length | header (UTF-8 JSON)
    | float32 tensors in TENSOR_ORDER, each flattened row-major

The header carries the ModelConfig, feature order, scaler parameters and
digest, seed, prepared-data fingerprint and training metadata. It never holds
wall-clock values, so identical runs produce identical files.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn_core
from .features import FEATURE_ORDER, Scaler, WindowSet
from .nn_core import AdamState, ModelConfig, ModelWeights, NumericalError

MAGIC = b"TLSB"
FORMAT_VERSION = 1


class TrainingDiverged(NumericalError):
    def __init__(self, epoch: int, batch: int, block: str, detail: str = ""):
        self.epoch, self.batch, self.block = epoch, batch, block
        super().__init__(f"non-finite training state at epoch {epoch}, batch {batch}; worst block {block} {detail}".strip())


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    mode: str = "global"
    cv: int | None = None
    abort_on_nonfinite: bool = True
    clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in ("global", "per_series"):
            raise ValueError(f"mode must be 'global' or 'per_series', got {self.mode!r}")


@dataclass
class TrainRun:
    model_config: ModelConfig
    train_config: TrainConfig
    weights: ModelWeights
    train_loss: list[float]
    val_loss: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    n_batches: list[int] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.train_config.seed

    def log(self) -> dict:
        return {
            "model_config": self.model_config.to_dict(),
            "train_config": asdict(self.train_config),
            "seed": self.seed,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "wall_seconds": self.wall_seconds,
        }


def _worst_block(grads: ModelWeights | None) -> str:
    if grads is None:
        return "unknown"
    for name, g in grads:
        if not np.all(np.isfinite(g)):
            return name
    return max(grads.tensors, key=lambda k: float(np.max(np.abs(grads[k]))))


def train(model_config: ModelConfig, train_config: TrainConfig, windows: WindowSet,
          validation: WindowSet | None = None) -> TrainRun:
    """Train on normalized windows with MAE loss and Adam.

    Each epoch shuffles the training windows with the run's generator and
    walks them in batches of ``batch_size`` (the final partial batch is kept).
    A fresh dropout keep-mask is drawn per sample per batch.
    """
    if len(windows) == 0:
        raise ValueError("no training windows")
    if windows.inputs.shape[1:] != (model_config.seq_len, model_config.input_dim):
        raise ValueError(f"window shape {windows.inputs.shape[1:]} does not match config")
    started = time.perf_counter()
    seed = train_config.seed
    weights = nn_core.init_weights(model_config, seed)
    state = AdamState.create(weights, lr=train_config.learning_rate, clip_norm=train_config.clip_norm)
    rng = np.random.default_rng([seed, 1])
    X, y = windows.inputs, windows.targets
    n, bs, p = len(y), train_config.batch_size, model_config.dropout_rate
    run = TrainRun(model_config, train_config, weights, [])

    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for b, s in enumerate(range(0, n, bs)):
            idx = order[s : s + bs]
            mask = (rng.random((len(idx), model_config.hidden_units)) >= p).astype(np.float64)
            grads = None
            try:
                pred, cache = nn_core.forward(model_config, weights, X[idx], mask)
                loss = nn_core.loss_mae(pred, y[idx])
                if not np.isfinite(loss):
                    raise NumericalError("non-finite loss")
                grads = nn_core.backward(model_config, weights, cache, nn_core.loss_mae_grad(pred, y[idx]))
                weights = nn_core.adam_step(state, weights, grads)
            except NumericalError as exc:
                if not train_config.abort_on_nonfinite:
                    raise
                raise TrainingDiverged(epoch, b, _worst_block(grads), f"({exc})") from exc
            total += loss * len(idx)
            batches += 1
        run.train_loss.append(total / n)
        run.n_batches.append(batches)
        if validation is not None and len(validation):
            vp = nn_core.predict(model_config, weights, validation.inputs)
            run.val_loss.append(nn_core.loss_mae(vp, validation.targets))

    run.weights = weights
    run.wall_seconds = time.perf_counter() - started
    return run


@dataclass
class CVResult:
    runs: list[TrainRun]
    val_mape: list[float]

    @property
    def mean_mape(self) -> float:
        return float(np.mean(self.val_mape))

    @property
    def std_mape(self) -> float:
        return float(np.std(self.val_mape, ddof=1)) if len(self.val_mape) > 1 else 0.0


def train_cv(model_config: ModelConfig, train_config: TrainConfig, windows: WindowSet,
             folds, scaler: Scaler) -> CVResult:
    """One run per expanding-window fold, all with ``train_config.seed``.

    ``windows`` are the normalized training windows indexed by ``folds``;
    validation MAPE is reported in sales units.
    """
    from .evaluation import evaluate

    runs, mapes = [], []
    for (a, b), (c, d) in folds:
        tr, va = windows.take(slice(a, b)), windows.take(slice(c, d))
        run = train(model_config, train_config, tr, validation=va)
        runs.append(run)
        mapes.append(evaluate(model_config, run.weights, va, scaler).mape_percent)
    return CVResult(runs, mapes)


def _header_bytes(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def build_header(config: ModelConfig, scaler: Scaler | None = None, seed: int | None = None,
                 data_fingerprint: str | None = None, train_config: TrainConfig | None = None,
                 extra: dict | None = None) -> dict:
    header = {
        "model_config": config.to_dict(),
        "feature_order": list(FEATURE_ORDER),
        "tensor_order": list(nn_core.TENSOR_ORDER),
        "seed": seed,
        "data_fingerprint": data_fingerprint,
        "scaler": scaler.to_dict() if scaler is not None else None,
        "scaler_digest": scaler.digest() if scaler is not None else None,
        "train_config": asdict(train_config) if train_config is not None else None,
    }
    if extra:
        header["metadata"] = extra
    return header


def save_model(path: str | Path, weights: ModelWeights, config: ModelConfig, header: dict | None = None) -> int:
    """Write a model file; returns the tensor payload size in bytes."""
    weights.check_shapes(config)
    header = dict(header) if header is not None else build_header(config)
    header["model_config"] = config.to_dict()
    hb = _header_bytes(header)
    payload = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for _, t in weights)
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(hb)))
        fh.write(hb)
        fh.write(payload)
    return len(payload)


@dataclass
class LoadedModel:
    config: ModelConfig
    weights: ModelWeights
    header: dict
    payload_bytes: int

    @property
    def scaler(self) -> Scaler | None:
        s = self.header.get("scaler")
        return Scaler.from_dict(s) if s else None


def load_model(path: str | Path) -> LoadedModel:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ModelFileError(f"{path}: bad magic")
    if len(blob) < 10:
        raise ModelFileError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    start = 10 + hlen
    if len(blob) < start:
        raise ModelFileError(f"{path}: truncated header")
    try:
        header = json.loads(blob[10:start].decode("utf-8"))
        config = ModelConfig(**header["model_config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFileError(f"{path}: bad header ({exc})") from None
    if header.get("tensor_order", list(nn_core.TENSOR_ORDER)) != list(nn_core.TENSOR_ORDER):
        raise ModelFileError(f"{path}: tensor order disagrees with this reader")
    shapes = config.shapes()
    expected = 4 * sum(int(np.prod(shapes[n])) for n in nn_core.TENSOR_ORDER)
    payload = blob[start:]
    if len(payload) < expected:
        raise ModelFileError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise ModelFileError(f"{path}: header/tensor shape disagreement ({len(payload)} bytes, header implies {expected})")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    tensors, off = {}, 0
    for name in nn_core.TENSOR_ORDER:
        size = int(np.prod(shapes[name]))
        tensors[name] = flat[off : off + size].reshape(shapes[name]).copy()
        off += size
    return LoadedModel(config, ModelWeights(tensors), header, len(payload))
