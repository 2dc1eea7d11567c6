"""Small feed-forward classifier with exact reverse-mode gradients.

Hand-rolled on numpy so the attack side gets analytic input gradients and the
defense side gets taps on intermediate activations. Batched internally;
the public API speaks Image.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Image, clamp01


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Layers. forward(x) -> (y, cache); backward(dy, cache) -> dx. Batched NHWC.
# ---------------------------------------------------------------------------


@dataclass
class Conv2D:
    weights: np.ndarray  # (kh, kw, cin, cout)
    bias: np.ndarray  # (cout,)
    kind = "conv"
    spatial = True

    def forward(self, x):
        kh, kw = self.weights.shape[:2]
        win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (n, ho, wo, c, kh, kw)
        y = np.einsum("nijcab,abcf->nijf", win, self.weights, optimize=True) + self.bias
        return y, x

    def backward(self, dy, x, grads=None):
        kh, kw, cin, _ = self.weights.shape
        n, ho, wo, _ = dy.shape
        if grads is not None:
            dw = np.empty_like(self.weights)
            for a in range(kh):
                for b in range(kw):
                    dw[a, b] = np.einsum(
                        "nijc,nijf->cf", x[:, a : a + ho, b : b + wo, :], dy, optimize=True
                    )
            grads.append((dw, dy.sum(axis=(0, 1, 2))))
        dx = np.zeros_like(x)
        for a in range(kh):
            for b in range(kw):
                dx[:, a : a + ho, b : b + wo, :] += np.einsum(
                    "nijf,cf->nijc", dy, self.weights[a, b], optimize=True
                )
        return dx

    def param_arrays(self):
        return [self.weights, self.bias]


@dataclass
class ReLU:
    kind = "relu"
    spatial = True

    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, dy, x, grads=None):
        # subgradient at 0 is 0
        return np.where(x > 0.0, dy, 0.0)

    def param_arrays(self):
        return []


@dataclass
class MaxPool2x2:
    kind = "pool"
    spatial = True

    def forward(self, x):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        win = (
            x[:, : 2 * h2, : 2 * w2, :]
            .reshape(n, h2, 2, w2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, h2, w2, 4, c)
        )
        idx = win.argmax(axis=3)  # first max wins ties: deterministic
        y = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return y, (x.shape, idx)

    def backward(self, dy, cache, grads=None):
        (n, h, w, c), idx = cache
        h2, w2 = h // 2, w // 2
        dwin = np.zeros((n, h2, w2, 4, c))
        np.put_along_axis(dwin, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        dx = np.zeros((n, h, w, c))
        dx[:, : 2 * h2, : 2 * w2, :] = (
            dwin.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, 2 * h2, 2 * w2, c)
        )
        return dx

    def param_arrays(self):
        return []


@dataclass
class Flatten:
    kind = "flatten"
    spatial = False

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, shape, grads=None):
        return dy.reshape(shape)

    def param_arrays(self):
        return []


@dataclass
class Dense:
    weights: np.ndarray  # (nin, nout)
    bias: np.ndarray
    kind = "dense"
    spatial = False

    def forward(self, x):
        return x @ self.weights + self.bias, x

    def backward(self, dy, x, grads=None):
        if grads is not None:
            grads.append((x.T @ dy, dy.sum(axis=0)))
        return dy @ self.weights.T

    def param_arrays(self):
        return [self.weights, self.bias]


@dataclass
class Softmax:
    kind = "softmax"
    spatial = False

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True), None

    def backward(self, dy, cache, grads=None):  # pragma: no cover - loss bypasses it
        raise NotImplementedError("loss gradients are taken at the logits")

    def param_arrays(self):
        return []


_LAYER_KINDS = {"conv": Conv2D, "relu": ReLU, "pool": MaxPool2x2, "flatten": Flatten,
                "dense": Dense, "softmax": Softmax}


@dataclass(frozen=True)
class Prediction:
    label: int
    confidence: float
    probabilities: np.ndarray


@dataclass
class Model:
    layers: list
    input_shape: tuple  # (h, w, c)
    num_classes: int
    rng_seed: int

    # -- forward passes -----------------------------------------------------

    def logits(self, batch: np.ndarray, caches: list | None = None) -> np.ndarray:
        x = batch
        for layer in self.layers:
            if layer.kind == "softmax":
                break
            x, cache = layer.forward(x)
            if caches is not None:
                caches.append(cache)
        return x

    def probabilities(self, batch: np.ndarray) -> np.ndarray:
        z = self.logits(batch)
        return Softmax().forward(z)[0]

    def param_arrays(self):
        return [a for layer in self.layers for a in layer.param_arrays()]


def _glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_model(input_shape=(28, 28, 1), num_classes: int = 10, seed: int = 0) -> Model:
    """Default architecture: Conv(8)-ReLU-Pool-Conv(16)-ReLU-Pool-Dense-Softmax."""
    rng = np.random.default_rng(seed)
    h, w, c = input_shape
    layers: list = []
    conv1 = Conv2D(
        _glorot_uniform(rng, (3, 3, c, 8), 9 * c, 9 * 8), np.zeros(8)
    )
    layers += [conv1, ReLU(), MaxPool2x2()]
    h1, w1 = (h - 2) // 2, (w - 2) // 2
    conv2 = Conv2D(
        _glorot_uniform(rng, (3, 3, 8, 16), 9 * 8, 9 * 16), np.zeros(16)
    )
    layers += [conv2, ReLU(), MaxPool2x2()]
    h2, w2 = (h1 - 2) // 2, (w1 - 2) // 2
    nin = h2 * w2 * 16
    layers += [
        Flatten(),
        Dense(_glorot_uniform(rng, (nin, num_classes), nin, num_classes), np.zeros(num_classes)),
        Softmax(),
    ]
    return Model(layers, tuple(input_shape), num_classes, seed)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _check_shape(model: Model, img: Image) -> None:
    if img.shape != model.input_shape:
        raise ValueError(f"image shape {img.shape} does not match model input {model.input_shape}")


def _prediction_from_probs(p: np.ndarray) -> Prediction:
    label = int(np.argmax(p))  # argmax takes the lowest index on ties
    return Prediction(label, float(p[label]), p.copy())


def predict(model: Model, img: Image) -> Prediction:
    _check_shape(model, img)
    p = model.probabilities(img.data[np.newaxis])[0]
    return _prediction_from_probs(p)


def predict_batch(model: Model, images: list[Image]) -> list[Prediction]:
    if not images:
        return []
    for img in images:
        _check_shape(model, img)
    probs = model.probabilities(np.stack([img.data for img in images]))
    return [_prediction_from_probs(p) for p in probs]


def _loss_and_grad_batch(model: Model, batch: np.ndarray, labels: np.ndarray, grads=None):
    """Per-sample cross-entropy losses and input gradients; samples are
    independent, so row i of the returned gradient is d loss_i / d input_i."""
    caches: list = []
    z = model.logits(batch, caches)
    zs = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - logsumexp
    n = batch.shape[0]
    losses = -logp[np.arange(n), labels]
    dz = np.exp(logp)
    dz[np.arange(n), labels] -= 1.0
    dx = dz
    for layer, cache in zip(reversed([l for l in model.layers if l.kind != "softmax"]),
                            reversed(caches)):
        dx = layer.backward(dx, cache, grads)
    return losses, dx


def loss_and_input_gradient(model: Model, img: Image, label: int) -> tuple[float, Image]:
    """Cross-entropy loss and its exact gradient w.r.t. every input pixel."""
    _check_shape(model, img)
    losses, dx = _loss_and_grad_batch(model, img.data[np.newaxis], np.array([label]))
    return float(losses[0]), Image(dx[0])


def loss_and_input_gradient_batch(model: Model, batch: np.ndarray, labels: np.ndarray):
    return _loss_and_grad_batch(model, batch, labels)


def forward_with_layer_smoothing(model: Model, img: Image, layer_index: int, spec) -> Prediction:
    """Forward pass with the given layer's activation smoothed channel-wise.

    Activations are min-max normalized to [0,1] per channel, smoothed, then
    denormalized; flat channels (max == min) pass through unchanged.
    """
    from .filters import apply_smoother

    _check_shape(model, img)
    if not 0 <= layer_index < len(model.layers):
        raise ValueError(f"layer_index {layer_index} out of range")
    layer = model.layers[layer_index]
    if not layer.spatial:
        raise ValueError(f"layer {layer_index} ({layer.kind}) has no spatial output to smooth")
    x = img.data[np.newaxis]
    for i, lyr in enumerate(model.layers):
        if lyr.kind == "softmax":
            break
        x, _ = lyr.forward(x)
        if i == layer_index:
            act = x[0]  # (h, w, c)
            lo = act.min(axis=(0, 1), keepdims=True)
            hi = act.max(axis=(0, 1), keepdims=True)
            span = hi - lo
            flat = span[0, 0] <= 0.0
            safe = np.where(span == 0.0, 1.0, span)
            norm = (act - lo) / safe
            smoothed_cols = []
            for c in range(act.shape[2]):
                if flat[c]:
                    smoothed_cols.append(norm[:, :, c])
                else:
                    chan_img = Image(np.ascontiguousarray(norm[:, :, c]))
                    smoothed_cols.append(apply_smoother(spec, chan_img).data[:, :, 0])
            smoothed = np.stack(smoothed_cols, axis=2)
            x = (smoothed * safe + lo)[np.newaxis]
    p = Softmax().forward(x)[0][0]
    return _prediction_from_probs(p)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.2
    batch_size: int = 32
    seed: int = 0


def train(dataset, config: TrainConfig, num_classes: int | None = None,
          log=None) -> Model:
    """Deterministic mini-batch SGD with cross-entropy loss."""
    if len(dataset.images) == 0:
        raise TrainingError("empty training dataset")
    num_classes = num_classes or int(max(dataset.labels)) + 1
    x_all = np.stack([img.data for img in dataset.images])
    y_all = np.asarray(dataset.labels, dtype=np.int64)
    model = build_model(dataset.images[0].shape, num_classes, seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)  # shuffle stream, separate from init
    n = len(y_all)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            grads: list = []
            losses, _ = _loss_and_grad_batch(model, x_all[idx], y_all[idx], grads)
            epoch_loss += float(losses.sum())
            if not np.isfinite(losses).all():
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            # grads collected innermost-first; pair them back to layers
            gi = iter(grads)
            for layer in reversed(model.layers):
                arrays = layer.param_arrays()
                if arrays:
                    for arr, g in zip(arrays, next(gi)):
                        arr -= (config.learning_rate / len(idx)) * g
        if log:
            log(f"epoch {epoch + 1}/{config.epochs} mean loss {epoch_loss / n:.4f}")
    return model


def accuracy(model: Model, dataset) -> float:
    preds = predict_batch(model, dataset.images)
    return float(np.mean([p.label == y for p, y in zip(preds, dataset.labels)]))


# ---------------------------------------------------------------------------
# Persistence: magic "SSMD1", versioned header, layer list, f64 LE params.
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"SSMD1"


def serialize_model(model: Model) -> bytes:
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<I", 1)  # version
    h, w, c = model.input_shape
    out += struct.pack("<IIIIq", h, w, c, model.num_classes, model.rng_seed)
    out += struct.pack("<I", len(model.layers))
    for layer in model.layers:
        kind = layer.kind.encode()
        out += struct.pack("<B", len(kind)) + kind
        arrays = layer.param_arrays()
        out += struct.pack("<I", len(arrays))
        for arr in arrays:
            out += struct.pack("<I", arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += arr.astype("<f8").tobytes()
    return bytes(out)


def model_fingerprint(model: Model) -> str:
    return hashlib.sha256(serialize_model(model)).hexdigest()


def save_model(model: Model, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_model(model))


def load_model(path) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise ModelFormatError(f"{path}: truncated at offset {off}")
        chunk = blob[off : off + n]
        off += n
        return chunk

    if take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic at offset 0")
    (version,) = struct.unpack("<I", take(4))
    if version != 1:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    h, w, c, num_classes, seed = struct.unpack("<IIIIq", take(24))
    (n_layers,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(n_layers):
        (klen,) = struct.unpack("<B", take(1))
        kind = take(klen).decode()
        if kind not in _LAYER_KINDS:
            raise ModelFormatError(f"{path}: unknown layer kind {kind!r} at offset {off}")
        (n_arrays,) = struct.unpack("<I", take(4))
        arrays = []
        for _ in range(n_arrays):
            (ndim,) = struct.unpack("<I", take(4))
            shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
            count = int(np.prod(shape))
            arrays.append(
                np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
            )
        if kind == "conv":
            layers.append(Conv2D(arrays[0], arrays[1]))
        elif kind == "dense":
            layers.append(Dense(arrays[0], arrays[1]))
        else:
            layers.append(_LAYER_KINDS[kind]())
    if off != len(blob):
        raise ModelFormatError(f"{path}: {len(blob) - off} trailing bytes at offset {off}")
    return Model(layers, (h, w, c), num_classes, seed)
