"""Convolutional classifier with hand-written forward and backward passes.

All layer functions work on batches laid out as ``(N, C, H, W)`` (images) or
``(N, D)`` (features). The public :func:`forward`, :func:`backward` and
:func:`predict` also accept a single unbatched ``(C, H, W)`` image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, LabelError, ShapeError, TraceError
from .tensor import DTYPE, Rng

CONV2D = "conv2d"
RELU = "relu"
MAXPOOL = "maxpool2x2"
FLATTEN = "flatten"
DENSE = "dense"
KINDS = (CONV2D, RELU, MAXPOOL, FLATTEN, DENSE)

DEFAULT_FILTERS = (32, 64, 128)


@dataclass(frozen=True)
class LayerSpec:
    """One layer. ``n_in``/``n_out`` are channels for conv2d, widths for dense."""

    kind: str
    n_in: int = 0
    n_out: int = 0
    kernel: int = 0
    padding: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")

    @property
    def has_params(self) -> bool:
        return self.kind in (CONV2D, DENSE)

    def param_shapes(self):
        if self.kind == CONV2D:
            return [(self.n_out, self.n_in, self.kernel, self.kernel), (self.n_out,)]
        if self.kind == DENSE:
            return [(self.n_out, self.n_in), (self.n_out,)]
        return []

    def out_shape(self, in_shape):
        """Per-example output shape, or ConfigError if ``in_shape`` does not fit."""
        if self.kind == CONV2D:
            if len(in_shape) != 3 or in_shape[0] != self.n_in:
                raise ConfigError(f"conv2d expects {self.n_in} channels, got {in_shape}")
            c, h, w = in_shape
            k, p = self.kernel, self.padding
            return (self.n_out, h + 2 * p - k + 1, w + 2 * p - k + 1)
        if self.kind == RELU:
            return tuple(in_shape)
        if self.kind == MAXPOOL:
            if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
                raise ConfigError(f"maxpool2x2 needs even spatial dims, got {in_shape}")
            c, h, w = in_shape
            return (c, h // 2, w // 2)
        if self.kind == FLATTEN:
            return (int(np.prod(in_shape)),)
        if len(in_shape) != 1 or in_shape[0] != self.n_in:
            raise ConfigError(f"dense expects width {self.n_in}, got {in_shape}")
        return (self.n_out,)


@dataclass
class ModelParams:
    layers: tuple
    params: list  # flat: weight, bias for every layer with parameters, in order
    input_side: int
    num_classes: int
    in_channels: int = 3

    @property
    def input_shape(self):
        return (self.in_channels, self.input_side, self.input_side)

    def layer_params(self):
        """Yield ``(layer_index, spec, [W, b] or [])``."""
        j = 0
        for i, spec in enumerate(self.layers):
            n = len(spec.param_shapes())
            yield i, spec, self.params[j:j + n]
            j += n

    def with_params(self, params) -> "ModelParams":
        return replace(self, params=list(params))


@dataclass
class ForwardTrace:
    layers: tuple
    caches: list = field(default_factory=list)
    logits: np.ndarray = None
    batched: bool = True


def check_architecture(layers, input_shape, num_classes):
    shape = tuple(input_shape)
    for spec in layers:
        shape = spec.out_shape(shape)
    if shape != (num_classes,):
        raise ConfigError(f"final output shape {shape} != ({num_classes},)")


def init_model(layers, input_side, num_classes, rng: Rng, in_channels=3) -> ModelParams:
    """He-normal weights (std sqrt(2/fan_in)), zero biases."""
    layers = tuple(layers)
    check_architecture(layers, (in_channels, input_side, input_side), num_classes)
    params = []
    for spec in layers:
        if not spec.has_params:
            continue
        w_shape, b_shape = spec.param_shapes()
        fan_in = int(np.prod(w_shape[1:]))
        params.append(rng.normal(w_shape, std=np.sqrt(2.0 / fan_in)))
        params.append(np.zeros(b_shape, dtype=DTYPE))
    return ModelParams(layers, params, input_side, num_classes, in_channels)


def build_model(input_side, num_classes, hidden_width=256, rng=None, filters=DEFAULT_FILTERS,
                seed=0) -> ModelParams:
    """Three conv(3x3, same)+ReLU+maxpool stages, then dense+ReLU and a linear head."""
    if input_side <= 0 or input_side % 8:
        raise ConfigError(f"input_side must be a positive multiple of 8, got {input_side}")
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if rng is None:
        rng = Rng(seed)
    layers = []
    c = 3
    for f in filters:
        layers += [LayerSpec(CONV2D, c, f, 3, 1), LayerSpec(RELU), LayerSpec(MAXPOOL)]
        c = f
    flat = c * (input_side // 8) ** 2
    layers += [
        LayerSpec(FLATTEN),
        LayerSpec(DENSE, flat, hidden_width),
        LayerSpec(RELU),
        LayerSpec(DENSE, hidden_width, num_classes),
    ]
    return init_model(layers, input_side, num_classes, rng)


def flatten_width(model: ModelParams) -> int:
    for spec in model.layers:
        if spec.kind == DENSE:
            return spec.n_in
    raise ConfigError("model has no dense layer")


# --- layers ---------------------------------------------------------------


def _conv_forward(x, w, b, pad):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.stack([xp[:, :, i:i + ho, j:j + wo] for i in range(k) for j in range(k)], axis=2)
    cols = cols.reshape(n, c * k * k, ho * wo)
    out = np.matmul(w.reshape(f, -1), cols) + b[:, None]
    return out.reshape(n, f, ho, wo), (x.shape, cols)


def _conv_backward(dout, w, cache, pad):
    x_shape, cols = cache
    n, c, h, wd = x_shape
    f, _, k, _ = w.shape
    ho, wo = dout.shape[2:]
    d = dout.reshape(n, f, ho * wo)
    dw = np.tensordot(d, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    db = d.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(f, -1).T, d).reshape(n, c, k * k, ho, wo)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=DTYPE)
    for idx in range(k * k):
        i, j = divmod(idx, k)
        dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, idx]
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return dx, dw, db


def _pool_windows(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4)


def _pool_forward(x):
    win = _pool_windows(x)
    # argmax returns the first maximum in row-major window order
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def _pool_backward(dout, cache):
    (n, c, h, w), arg = cache
    win = (arg[..., None] == np.arange(4)) * dout[..., None]
    return win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


# --- model-level passes ---------------------------------------------------


def _as_batch(model, x):
    x = np.asarray(x, dtype=DTYPE)
    shape = model.input_shape
    if x.shape == shape:
        return x[None], False
    if x.ndim == 4 and x.shape[1:] == shape:
        return x, True
    raise ShapeError(f"input shape {x.shape} does not match model input {shape}")


def forward(model: ModelParams, x):
    """Return ``(logits, trace)``. Logits are ``(K,)`` or ``(N, K)`` following ``x``."""
    h, batched = _as_batch(model, x)
    trace = ForwardTrace(model.layers, batched=batched)
    for _, spec, p in model.layer_params():
        if spec.kind == CONV2D:
            h, cache = _conv_forward(h, p[0], p[1], spec.padding)
        elif spec.kind == RELU:
            cache = h > 0
            h = h * cache
        elif spec.kind == MAXPOOL:
            h, cache = _pool_forward(h)
        elif spec.kind == FLATTEN:
            cache = h.shape
            h = h.reshape(h.shape[0], -1)
        else:
            cache = h
            h = h @ p[0].T + p[1]
        trace.caches.append(cache)
    trace.logits = h
    return (h if batched else h[0]), trace


def log_softmax(logits):
    z = np.asarray(logits, dtype=DTYPE)
    m = np.max(z, axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def _check_labels(labels, num_classes):
    y = np.asarray(labels)
    if y.dtype.kind not in "iu" or np.any(y < 0) or np.any(y >= num_classes):
        raise LabelError(f"labels must be integers in [0, {num_classes}), got {labels!r}")
    return y.astype(np.int64)


def loss(logits, label):
    """Cross-entropy of softmax(logits) against ``label``.

    A 1-D ``logits`` with an int label gives a float; ``(N, K)`` logits with
    ``N`` labels give an array of per-example losses.
    """
    z = np.asarray(logits, dtype=DTYPE)
    y = _check_labels(label, z.shape[-1])
    lp = log_softmax(z)
    if z.ndim == 1:
        return float(-lp[int(y)])
    return -lp[np.arange(len(y)), y]


def backward(model: ModelParams, trace: ForwardTrace, label):
    """Gradients of the summed cross-entropy loss.

    Returns ``(param_grads, input_grad)``: ``param_grads`` aligns with
    ``model.params``, ``input_grad`` has the shape of the forwarded input.
    """
    if trace.layers != model.layers or len(trace.caches) != len(model.layers):
        raise TraceError("trace was not produced by this model")
    logits = trace.logits
    y = _check_labels(label, model.num_classes)
    y = np.atleast_1d(y)
    if len(y) != len(logits):
        raise LabelError(f"{len(y)} labels for a batch of {len(logits)}")
    g = softmax(logits)
    g[np.arange(len(y)), y] -= 1.0

    grads = [None] * len(model.params)
    entries = list(model.layer_params())
    j = len(model.params)
    for (i, spec, p), cache in zip(reversed(entries), reversed(trace.caches)):
        if spec.kind == CONV2D:
            g, dw, db = _conv_backward(g, p[0], cache, spec.padding)
            j -= 2
            grads[j], grads[j + 1] = dw, db
        elif spec.kind == RELU:
            g = g * cache
        elif spec.kind == MAXPOOL:
            g = _pool_backward(g, cache)
        elif spec.kind == FLATTEN:
            g = g.reshape(cache)
        else:
            j -= 2
            grads[j], grads[j + 1] = g.T @ cache, g.sum(axis=0)
            g = g @ p[0]
    return grads, (g if trace.batched else g[0])


def input_gradient(model: ModelParams, x, label):
    """Loss value(s) at ``x`` and the gradient of the loss with respect to ``x``."""
    logits, trace = forward(model, x)
    value = loss(logits, label)
    _, gx = backward(model, trace, label)
    return value, gx


def predict(model: ModelParams, x):
    """Index of the largest logit; ties go to the smallest index."""
    logits, _ = forward(model, x)
    return argmax_logits(logits)


def argmax_logits(logits):
    out = np.argmax(logits, axis=-1)
    return int(out) if np.ndim(out) == 0 else out
