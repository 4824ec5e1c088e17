"""Small sequential networks with hand-written reverse-mode gradients.

Every layer caches what it needs on the forward pass and maps an upstream
gradient back to its input and parameters on the backward pass.  Parameter
gradients can be kept per example (leading batch axis) or summed, which is
what DP-SGD and ordinary SGD need respectively.

Arrays are plain ``float64`` numpy arrays; image batches are ``(B, C, H, W)``
and vector batches ``(B, D)``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Dense",
    "Conv2d",
    "ReLU",
    "MaxPool2d",
    "Flatten",
    "ParamModel",
    "TrainPlan",
    "build_model",
    "forward_eval",
    "loss_and_grads",
    "backward_grad",
    "per_example_grads",
    "input_grad",
    "predict",
    "lr_at",
    "sgd_update",
    "train_epoch",
    "eval_accuracy",
]


class Layer:
    params: list[np.ndarray]

    def __init__(self):
        self.params = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, g, cache, per_example):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        bound = np.sqrt(6.0 / n_in)
        rng = rng or np.random.default_rng(0)
        self.params = [rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out)]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"Dense expects (B, {self.n_in}), got {x.shape}")
        W, b = self.params
        return x @ W.T + b, x

    def backward(self, g, x, per_example):
        W, _ = self.params
        if per_example:
            grads = [np.einsum("bo,bi->boi", g, x), g.copy()]
        else:
            grads = [g.T @ x, g.sum(axis=0)]
        return g @ W, grads

    def output_shape(self, shape):
        return (self.n_out,)


class Conv2d(Layer):
    """Stride-1 convolution with symmetric zero padding."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, padding: int | None = None, rng=None):
        super().__init__()
        self.c_in, self.c_out, self.k = c_in, c_out, kernel
        self.pad = kernel // 2 if padding is None else padding
        fan_in = c_in * kernel * kernel
        bound = np.sqrt(6.0 / fan_in)
        rng = rng or np.random.default_rng(0)
        self.params = [rng.uniform(-bound, bound, size=(c_out, c_in, kernel, kernel)), np.zeros(c_out)]

    def _patches(self, x):
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (self.k, self.k), axis=(2, 3))  # B,C,H',W',k,k
        B, C, Ho, Wo = win.shape[:4]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(B, Ho, Wo, C * self.k * self.k)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"Conv2d expects (B, {self.c_in}, H, W), got {x.shape}")
        W, b = self.params
        patches = self._patches(x)
        out = patches @ W.reshape(self.c_out, -1).T + b
        return out.transpose(0, 3, 1, 2), (x.shape, patches)

    def backward(self, g, cache, per_example):
        x_shape, patches = cache
        W, _ = self.params
        gt = g.transpose(0, 2, 3, 1)  # B,H',W',O
        if per_example:
            dW = np.einsum("bhwo,bhwp->bop", gt, patches).reshape((g.shape[0],) + W.shape)
            db = gt.sum(axis=(1, 2))
        else:
            dW = np.einsum("bhwo,bhwp->op", gt, patches).reshape(W.shape)
            db = gt.sum(axis=(0, 1, 2))
        B, C, H, Wd = x_shape
        k, p = self.k, self.pad
        Ho, Wo = gt.shape[1], gt.shape[2]
        dpatch = (gt @ W.reshape(self.c_out, -1)).reshape(B, Ho, Wo, C, k, k)
        dxp = np.zeros((B, C, H + 2 * p, Wd + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + Ho, j:j + Wo] += dpatch[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p:p + H, p:p + Wd] if p else dxp
        return dx, [dW, db]

    def output_shape(self, shape):
        C, H, W = shape
        return (self.c_out, H + 2 * self.pad - self.k + 1, W + 2 * self.pad - self.k + 1)


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, g, mask, per_example):
        return g * mask, []


class MaxPool2d(Layer):
    """Non-overlapping 2x2 max pooling; spatial dims must be even."""

    def forward(self, x):
        B, C, H, W = x.shape
        if H % 2 or W % 2:
            raise ValueError(f"MaxPool2d needs even spatial dims, got {H}x{W}")
        win = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
        idx = win.argmax(axis=-1)[..., None]
        return np.take_along_axis(win, idx, axis=-1)[..., 0], (x.shape, idx)

    def backward(self, g, cache, per_example):
        (B, C, H, W), idx = cache
        dwin = np.zeros((B, C, H // 2, W // 2, 4))
        np.put_along_axis(dwin, idx, g[..., None], axis=-1)
        dx = dwin.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
        return dx, []

    def output_shape(self, shape):
        C, H, W = shape
        return (C, H // 2, W // 2)


class Flatten(Layer):
    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, g, shape, per_example):
        return g.reshape(shape), []

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


@dataclass
class ParamModel:
    """A feed-forward classifier: ordered layers ending in ``num_classes`` logits."""

    layers: list[Layer]
    input_shape: tuple[int, ...]
    num_classes: int
    topology: list[dict] | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        shape = tuple(self.input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (self.num_classes,):
            raise ValueError(f"layer chain ends in shape {shape}, expected ({self.num_classes},)")

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, model has {i}")

    def copy(self) -> "ParamModel":
        return copy.deepcopy(self)

    def feature_index(self) -> int:
        """Index of the last hidden layer output (input to the final dense layer)."""
        dense = [i for i, l in enumerate(self.layers) if isinstance(l, Dense)]
        if len(self.layers) < 2 or not dense or dense[-1] == 0:
            raise ValueError("model has no hidden feature layer")
        return dense[-1]


@dataclass
class TrainPlan:
    epochs: int = 20
    batch_size: int = 32
    lr_initial: float = 0.01
    lr_max: float = 0.1
    schedule_kind: str = "one-cycle"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_initial > self.lr_max:
            raise ValueError("lr_initial must not exceed lr_max")
        if self.schedule_kind not in ("one-cycle", "constant"):
            raise ValueError(f"unknown schedule_kind {self.schedule_kind!r}")


_LAYER_KINDS = {"dense", "conv", "relu", "pool", "flatten"}


def build_model(topology: Sequence[dict], input_shape, num_classes: int, seed: int = 0) -> ParamModel:
    """Instantiate a model from a list of layer descriptors.

    Descriptors are dicts with a ``kind`` of ``conv`` (``out``, ``kernel``),
    ``dense`` (``out``; omitted on the last dense layer means ``num_classes``),
    ``relu``, ``pool`` or ``flatten``.
    """
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in input_shape)
    layers: list[Layer] = []
    last_dense = max((i for i, d in enumerate(topology) if d["kind"] == "dense"), default=-1)
    for i, desc in enumerate(topology):
        kind = desc["kind"]
        if kind not in _LAYER_KINDS:
            raise ValueError(f"unknown layer kind {kind!r}")
        if kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"dense layer {i} needs a flat input, got {shape}")
            out = desc.get("out", num_classes if i == last_dense else None)
            layer = Dense(shape[0], int(out), rng)
        elif kind == "conv":
            layer = Conv2d(shape[0], int(desc["out"]), int(desc.get("kernel", 3)), desc.get("padding"), rng)
        elif kind == "relu":
            layer = ReLU()
        elif kind == "pool":
            layer = MaxPool2d()
        else:
            layer = Flatten()
        shape = layer.output_shape(shape)
        layers.append(layer)
    return ParamModel(layers, tuple(int(s) for s in input_shape), num_classes, [dict(d) for d in topology])


def _check_batch(model: ParamModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != tuple(model.input_shape):
        raise ValueError(f"batch shape {x.shape[1:]} does not match model input {tuple(model.input_shape)}")
    return x


def _forward(model: ParamModel, x: np.ndarray, upto: int | None = None):
    caches = []
    for layer in model.layers[:upto]:
        x, cache = layer.forward(x)
        caches.append(cache)
    return x, caches


def logits(model: ParamModel, x) -> np.ndarray:
    x = _check_batch(model, x)
    return _forward(model, x)[0]


def features(model: ParamModel, x) -> np.ndarray:
    """Activations feeding the final dense layer."""
    x = _check_batch(model, x)
    return _forward(model, x, model.feature_index())[0]


def features_and_vjp(model: ParamModel, x, g_feat_fn: Callable[[np.ndarray], np.ndarray]):
    """Hidden features of ``x`` and the input gradient of ``<g_feat_fn(features), features>``.

    ``g_feat_fn`` maps the feature batch to the upstream gradient, so the
    caller can form objectives that depend on the features themselves.
    """
    x = _check_batch(model, x)
    upto = model.feature_index()
    f, caches = _forward(model, x, upto)
    g = g_feat_fn(f)
    for layer, cache in zip(reversed(model.layers[:upto]), reversed(caches)):
        g, _ = layer.backward(g, cache, True)
    return f, g


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_eval(model: ParamModel, x) -> np.ndarray:
    """Class probabilities, one row per example."""
    return _softmax(logits(model, x))


def predict(model: ParamModel, x, chunk: int = 1024) -> np.ndarray:
    x = _check_batch(model, x)
    return np.concatenate([_forward(model, x[i:i + chunk])[0].argmax(axis=1) for i in range(0, len(x), chunk)])


def per_example_loss(model: ParamModel, x, y) -> np.ndarray:
    z = logits(model, x)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(z)), np.asarray(y, dtype=int)]


def _check_labels(model, y, n):
    y = np.asarray(y, dtype=int)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= model.num_classes):
        raise ValueError(f"labels must lie in [0, {model.num_classes})")
    return y


def _backprop(model: ParamModel, x, y, per_example: bool, need_input: bool = False):
    x = _check_batch(model, x)
    y = _check_labels(model, y, len(x))
    z, caches = _forward(model, x)
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1))
    losses = lse - zs[np.arange(len(x)), y]
    bad = np.flatnonzero(~np.isfinite(losses))
    if bad.size:
        raise FloatingPointError(f"non-finite loss at batch index {int(bad[0])}")
    g = np.exp(zs - lse[:, None])
    g[np.arange(len(x)), y] -= 1.0
    if not per_example:
        g /= len(x)
    grads: list[list[np.ndarray]] = []
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        g, pg = layer.backward(g, cache, per_example)
        grads.append(pg)
    flat = [p for pg in reversed(grads) for p in pg]
    return losses, flat, g if need_input else None


def loss_and_grads(model: ParamModel, x, y) -> tuple[float, list[np.ndarray]]:
    losses, grads, _ = _backprop(model, x, y, per_example=False)
    return float(losses.mean()), grads


def backward_grad(model: ParamModel, x, y) -> list[np.ndarray]:
    """Gradient of the mean cross-entropy, aligned with ``model.params``."""
    return loss_and_grads(model, x, y)[1]


def per_example_grads(model: ParamModel, x, y) -> list[np.ndarray]:
    """Per-example gradients, each array shaped ``(B, *param.shape)``.

    Example ``i``'s gradient store is ``[g[i] for g in result]``; the batch
    mean of each array equals :func:`backward_grad`.
    """
    return _backprop(model, x, y, per_example=True)[1]


def input_grad(model: ParamModel, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Per-example losses and the gradient of each example's loss w.r.t. its input."""
    losses, _, gx = _backprop(model, x, y, per_example=True, need_input=True)
    return losses, gx


def lr_at(plan: TrainPlan, step: int, total_steps: int) -> float:
    """One-cycle: linear warmup to ``lr_max`` over the first half, then decay to ``lr_initial / 10``."""
    if plan.schedule_kind == "constant" or total_steps <= 1:
        return plan.lr_initial
    half = total_steps / 2.0
    if step < half:
        return plan.lr_initial + (plan.lr_max - plan.lr_initial) * step / half
    frac = min(1.0, (step - half) / max(total_steps - 1 - half, 1.0))
    return plan.lr_max + (plan.lr_initial / 10.0 - plan.lr_max) * frac


def sgd_update(model: ParamModel, grads: Sequence[np.ndarray], lr: float) -> None:
    for p, g in zip(model.params, grads):
        p -= lr * g


def steps_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def train_epoch(model: ParamModel, data, plan: TrainPlan, epoch: int = 0,
                transform: Callable | None = None, total_steps: int | None = None,
                step_offset: int | None = None) -> tuple[ParamModel, float]:
    """One shuffled pass of minibatch SGD over ``data``; returns the model and mean batch loss.

    ``transform(model, x, y, rng, idx)`` may replace each batch's inputs before the
    update (adversarial training hooks in here).  The learning rate follows
    the plan's schedule at global step ``epoch * steps_per_epoch + i`` unless
    ``step_offset``/``total_steps`` are given explicitly.
    """
    x, y = data.arrays()
    n = len(y)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    spe = steps_per_epoch(n, plan.batch_size)
    total = total_steps if total_steps is not None else spe * plan.epochs
    offset = step_offset if step_offset is not None else epoch * spe
    rng = np.random.default_rng([plan.seed, epoch, 0x5EED])
    order = rng.permutation(n)
    losses = []
    for i in range(spe):
        idx = order[i * plan.batch_size:(i + 1) * plan.batch_size]
        xb, yb = x[idx], y[idx]
        if transform is not None:
            xb = transform(model, xb, yb, rng, idx)
        loss, grads = loss_and_grads(model, xb, yb)
        sgd_update(model, grads, lr_at(plan, offset + i, total))
        losses.append(loss)
    return model, float(np.mean(losses))


def eval_accuracy(model: ParamModel, data) -> float:
    """Fraction of records whose argmax prediction equals the label."""
    x, y = data.arrays()
    if len(y) == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(predict(model, x) == y))
