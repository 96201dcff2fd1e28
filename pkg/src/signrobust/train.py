"""Adam, the mini-batch training loop, and the binary checkpoint format.

Checkpoint layout (all integers little-endian):

    b"GSGN"                      magic
    u32 version                  currently 1
    u32 in_channels, u32 input_side, u32 num_classes
    u32 n_layers
    n_layers x (u8 kind, u32 n_in, u32 n_out, u32 kernel, u32 padding)
    u32 n_tensors
    n_tensors x (u32 rank, rank x u32 dim, prod(dims) x f64 value)

Nothing may follow the last tensor.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import CheckpointFormatError, ConfigError, DataError, LabelError, ShapeError
from .tensor import DTYPE, Rng, derive_seed

log = logging.getLogger(__name__)

MAGIC = b"GSGN"
VERSION = 1
_KIND_CODES = {kind: i for i, kind in enumerate(nn.KINDS)}

# sub-stream tags used with derive_seed
SEED_INIT = 1
SEED_SHUFFLE = 2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    seed: int = 42

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update. Inputs are left untouched."""
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ShapeError("params, grads and optimizer state differ in length")
    t = state.t + 1
    b1, b2 = cfg.beta1, cfg.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps_hat))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    train_accuracy: float


def train(model: nn.ModelParams, dataset, cfg: TrainConfig = TrainConfig(), on_epoch=None):
    """Train on a :class:`~signrobust.data.Dataset` (normalized on the fly)."""
    return fit(model, dataset.normalized(), dataset.labels, cfg, on_epoch)


def fit(model: nn.ModelParams, images, labels, cfg: TrainConfig = TrainConfig(), on_epoch=None):
    """Fit ``model`` on normalized ``images`` ``(N, C, H, W)`` with integer ``labels``.

    Returns the trained model and one :class:`EpochLog` per epoch. Loss and
    accuracy are accumulated over the epoch's own mini-batches.
    """
    x = np.asarray(images, dtype=DTYPE)
    y = np.asarray(labels)
    if len(x) == 0:
        raise DataError("cannot train on an empty dataset")
    if len(y) != len(x):
        raise DataError(f"{len(x)} images but {len(y)} labels")
    if np.any(y < 0) or np.any(y >= model.num_classes):
        raise LabelError(f"labels must lie in [0, {model.num_classes})")

    params = list(model.params)
    state = AdamState.zeros_like(params)
    history = []
    for epoch in range(cfg.epochs):
        order = Rng(derive_seed(cfg.seed, SEED_SHUFFLE, epoch)).permutation(len(x))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            current = model.with_params(params)
            logits, trace = nn.forward(current, x[idx])
            total_loss += float(np.sum(nn.loss(logits, y[idx])))
            correct += int(np.sum(nn.argmax_logits(logits) == y[idx]))
            grads, _ = nn.backward(current, trace, y[idx])
            grads = [g / len(idx) for g in grads]
            params, state = adam_step(params, grads, state, cfg)
        entry = EpochLog(epoch + 1, total_loss / len(x), 100.0 * correct / len(x))
        history.append(entry)
        log.info("epoch %d loss %.4f train acc %.2f%%", entry.epoch, entry.loss, entry.train_accuracy)
        if on_epoch is not None:
            on_epoch(entry)
    return model.with_params(params), history


# --- checkpoints ----------------------------------------------------------


def checkpoint_bytes(model: nn.ModelParams) -> bytes:
    out = [MAGIC, struct.pack("<5I", VERSION, model.in_channels, model.input_side,
                              model.num_classes, len(model.layers))]
    for spec in model.layers:
        out.append(struct.pack("<B4I", _KIND_CODES[spec.kind], spec.n_in, spec.n_out,
                               spec.kernel, spec.padding))
    out.append(struct.pack("<I", len(model.params)))
    for p in model.params:
        out.append(struct.pack(f"<{1 + p.ndim}I", p.ndim, *p.shape))
        out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(out)


def model_digest(model: nn.ModelParams) -> str:
    return hashlib.sha256(checkpoint_bytes(model)).hexdigest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(f"truncated while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_checkpoint(data: bytes) -> nn.ModelParams:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic, not a GSGN checkpoint", 0)
    at = r.pos
    version, in_channels, input_side, num_classes, n_layers = r.unpack("<5I", "header")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", at)
    layers = []
    for _ in range(n_layers):
        at = r.pos
        code, n_in, n_out, kernel, padding = r.unpack("<B4I", "layer spec")
        if code >= len(nn.KINDS):
            raise CheckpointFormatError(f"unknown layer kind code {code}", at)
        layers.append(nn.LayerSpec(nn.KINDS[code], n_in, n_out, kernel, padding))
    expected = [s for spec in layers for s in spec.param_shapes()]
    at = r.pos
    (n_tensors,) = r.unpack("<I", "tensor count")
    if n_tensors != len(expected):
        raise CheckpointFormatError(f"expected {len(expected)} tensors, found {n_tensors}", at)
    params = []
    for want in expected:
        at = r.pos
        (rank,) = r.unpack("<I", "tensor rank")
        dims = r.unpack(f"<{rank}I", "tensor dims")
        if tuple(dims) != tuple(want):
            raise CheckpointFormatError(f"tensor shape {dims} does not match layer {want}", at)
        raw = r.take(8 * int(np.prod(dims, dtype=np.int64)), "tensor values")
        params.append(np.frombuffer(raw, dtype="<f8").astype(DTYPE).reshape(dims))
    if r.pos != len(data):
        raise CheckpointFormatError("trailing bytes after last tensor", r.pos)
    try:
        nn.check_architecture(layers, (in_channels, input_side, input_side), num_classes)
    except ConfigError as exc:
        raise CheckpointFormatError(f"inconsistent architecture: {exc}", 4) from exc
    return nn.ModelParams(tuple(layers), params, input_side, num_classes, in_channels)


def save_checkpoint(model: nn.ModelParams, path) -> str:
    """Write ``model`` to ``path`` and return the sha256 digest of the file."""
    data = checkpoint_bytes(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path) -> nn.ModelParams:
    return parse_checkpoint(Path(path).read_bytes())
