"""Desk-scale differentiable classifiers behind one prediction/gradient contract.

Two concrete model families — a multiclass linear model and a small
fully-connected network with hand-written backpropagation — plus a
gradient-masking defense wrapper that quantizes its input. A model's
error set is implicit: the inputs on which ``predict`` disagrees with
the reference label.

Models are immutable after construction; every operation is a pure
function of (model, input), so instances are safe to share across
threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .gaussian import std_normal_cdf

__all__ = [
    "Classifier",
    "LinearModel",
    "MlpModel",
    "BitdepthDefense",
    "DimensionMismatchError",
    "DegenerateModelError",
    "UnsupportedModelError",
    "ModelFormatError",
    "ModelVersionError",
    "softmax",
    "linear_boundary_distance",
    "linear_noise_error_rate",
    "bitdepth_defense",
    "save_model",
    "load_model",
    "model_to_bytes",
    "model_from_bytes",
]

LOSSES = ("cross_entropy", "margin")


class DimensionMismatchError(ValueError):
    """Input length does not match the model's declared input dimension."""


class DegenerateModelError(ValueError):
    """Two classes share identical weights and biases; no boundary exists."""


class UnsupportedModelError(TypeError):
    """Operation defined only for a narrower model family."""


class ModelFormatError(ValueError):
    """Malformed model file; message includes the byte offset."""


class ModelVersionError(ModelFormatError):
    """Model file written by an incompatible format version."""


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax."""
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _as_batch(x, input_dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise DimensionMismatchError(
            f"expected inputs of dimension {input_dim}, got shape {arr.shape}"
        )
    return arr, single


class Classifier:
    """Prediction/gradient contract shared by all model families.

    Subclasses implement ``logits_batch`` and ``backprop_input``;
    everything else is derived. ``predict`` breaks ties toward the
    lowest class index (as np.argmax does), making it a deterministic
    pure function.
    """

    input_dim: int
    num_classes: int

    def logits_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backprop_input(self, X: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Chain ``delta`` (gradient at the logits, shape (m, C)) back to the inputs."""
        raise NotImplementedError

    def logits(self, x) -> np.ndarray:
        X, _ = _as_batch(x, self.input_dim)
        return self.logits_batch(X)[0]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits_batch(X), axis=1)

    def predict(self, x) -> int:
        X, _ = _as_batch(x, self.input_dim)
        return int(self.predict_batch(X)[0])

    def input_gradient_batch(
        self, X: np.ndarray, labels: np.ndarray, loss: str = "cross_entropy"
    ) -> np.ndarray:
        if loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
        X, _ = _as_batch(X, self.input_dim)
        labels = np.asarray(labels, dtype=int)
        z = self.logits_batch(X)
        m = X.shape[0]
        rows = np.arange(m)
        if loss == "cross_entropy":
            delta = softmax(z)
            delta[rows, labels] -= 1.0
        else:
            # margin loss: logit of the label minus the best other logit
            masked = z.copy()
            masked[rows, labels] = -np.inf
            runner_up = np.argmax(masked, axis=1)
            delta = np.zeros_like(z)
            delta[rows, labels] = 1.0
            delta[rows, runner_up] -= 1.0
        return self.backprop_input(X, delta)

    def input_gradient(self, x, label: int, loss: str = "cross_entropy") -> np.ndarray:
        X, _ = _as_batch(x, self.input_dim)
        return self.input_gradient_batch(X, np.asarray([label]), loss)[0]


@dataclass(frozen=True, eq=False)
class LinearModel(Classifier):
    """``logits = W x + b`` with ``W`` of shape (C, n)."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        W = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        b = np.ascontiguousarray(np.asarray(self.biases, dtype=float))
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent shapes W{W.shape} b{b.shape}")
        if W.shape[0] < 2:
            raise ValueError("a classifier needs at least 2 classes")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("weights and biases must be finite")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits_batch(self, X: np.ndarray) -> np.ndarray:
        X, _ = _as_batch(X, self.input_dim)
        return X @ self.weights.T + self.biases

    def backprop_input(self, X: np.ndarray, delta: np.ndarray) -> np.ndarray:
        return delta @ self.weights


def _net_forward(Ws, bs, acts, X):
    """Forward pass over a layer list; returns (logits, per-layer post-activations incl. input)."""
    cache = [X]
    h = X
    for W, b, a in zip(Ws, bs, acts):
        z = h @ W.T + b
        h = np.maximum(z, 0.0) if a == "relu" else z
        cache.append(h)
    return h, cache


def _net_backward(Ws, acts, cache, delta):
    """Backward pass from a logit-space gradient; returns (grad_Ws, grad_bs, grad_input)."""
    gWs = [None] * len(Ws)
    gbs = [None] * len(Ws)
    g = delta
    for i in range(len(Ws) - 1, -1, -1):
        if acts[i] == "relu":
            g = g * (cache[i + 1] > 0.0)
        gWs[i] = g.T @ cache[i]
        gbs[i] = g.sum(axis=0)
        g = g @ Ws[i]
    return gWs, gbs, g


_ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True, eq=False)
class MlpModel(Classifier):
    """Fully-connected network: per layer a weight matrix, bias, and activation tag.

    Hidden activations are ReLU; the final layer is identity (raw
    logits). Forward and backward passes are written out explicitly so
    gradients are available both for the inputs (attacks) and the
    parameters (training).
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        Ws = tuple(np.ascontiguousarray(np.asarray(W, dtype=float)) for W in self.weights)
        bs = tuple(np.ascontiguousarray(np.asarray(b, dtype=float)) for b in self.biases)
        acts = tuple(self.activations)
        if not (len(Ws) == len(bs) == len(acts)) or not Ws:
            raise ValueError("weights, biases and activations must align and be non-empty")
        for i, (W, b, a) in enumerate(zip(Ws, bs, acts)):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent shapes W{W.shape} b{b.shape}")
            if a not in _ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {a!r}")
            if i > 0 and W.shape[1] != Ws[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i} expects inputs of size {W.shape[1]}, "
                    f"previous layer emits {Ws[i - 1].shape[0]}"
                )
        if acts[-1] != "identity":
            raise ValueError("final layer must be identity (raw logits)")
        if Ws[-1].shape[0] < 2:
            raise ValueError("a classifier needs at least 2 classes")
        object.__setattr__(self, "weights", Ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "activations", acts)

    @classmethod
    def random(cls, layer_sizes: list[int], rng: np.random.Generator) -> "MlpModel":
        """He-initialized network with the given [in, hidden..., out] sizes."""
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        Ws, bs, acts = [], [], []
        for i in range(len(layer_sizes) - 1):
            fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
            scale = np.sqrt(2.0 / fan_in)
            Ws.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
            acts.append("identity" if i == len(layer_sizes) - 2 else "relu")
        return cls(tuple(Ws), tuple(bs), tuple(acts))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    def logits_batch(self, X: np.ndarray) -> np.ndarray:
        X, _ = _as_batch(X, self.input_dim)
        return _net_forward(self.weights, self.biases, self.activations, X)[0]

    def backprop_input(self, X: np.ndarray, delta: np.ndarray) -> np.ndarray:
        _, cache = _net_forward(self.weights, self.biases, self.activations, X)
        return _net_backward(self.weights, self.activations, cache, delta)[2]

    def backprop_params(
        self, X: np.ndarray, delta: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Parameter gradients for a logit-space gradient ``delta`` (summed over the batch)."""
        _, cache = _net_forward(self.weights, self.biases, self.activations, X)
        gWs, gbs, _ = _net_backward(self.weights, self.activations, cache, delta)
        return gWs, gbs


def _quantize(X: np.ndarray, bits: int) -> np.ndarray:
    levels = (1 << bits) - 1
    return np.rint(np.clip(X, 0.0, 1.0) * levels) / levels


@dataclass(frozen=True, eq=False)
class BitdepthDefense(Classifier):
    """Input-quantization wrapper: snap each coordinate to ``2**bits`` levels on [0, 1].

    The forward pass is genuinely quantized. The backward pass treats
    the quantizer as identity by default (straight-through), which is
    what lets gradient attacks still run against the wrapped model; with
    ``straight_through=False`` the gradient is exactly zero everywhere,
    reproducing the fully masked-gradient behaviour.
    """

    base: Classifier
    bits: int
    straight_through: bool = True

    def __post_init__(self):
        if not isinstance(self.bits, int) or not 1 <= self.bits <= 8:
            raise ValueError(f"bits must be an integer in [1, 8], got {self.bits!r}")

    @property
    def input_dim(self) -> int:
        return self.base.input_dim

    @property
    def num_classes(self) -> int:
        return self.base.num_classes

    def quantize(self, X: np.ndarray) -> np.ndarray:
        return _quantize(np.asarray(X, dtype=float), self.bits)

    def logits_batch(self, X: np.ndarray) -> np.ndarray:
        X, _ = _as_batch(X, self.input_dim)
        return self.base.logits_batch(self.quantize(X))

    def backprop_input(self, X: np.ndarray, delta: np.ndarray) -> np.ndarray:
        if not self.straight_through:
            return np.zeros_like(np.asarray(X, dtype=float))
        return self.base.backprop_input(self.quantize(X), delta)


def bitdepth_defense(model: Classifier, bits: int, straight_through: bool = True) -> BitdepthDefense:
    """Wrap ``model`` behind a ``bits``-deep input quantizer."""
    return BitdepthDefense(model, bits, straight_through)


def linear_boundary_distance(model: LinearModel, x, label: int) -> float:
    """Exact L2 distance from ``x`` to the decision boundary of a linear model.

    0 if ``x`` is already misclassified; otherwise the minimum over
    competing classes ``j`` of ``(z_label - z_j) / ||w_label - w_j||``.
    """
    if not isinstance(model, LinearModel):
        raise UnsupportedModelError("analytic boundary distance requires a LinearModel")
    z = model.logits(x)
    label = int(label)
    if int(np.argmax(z)) != label:
        return 0.0
    best = np.inf
    for j in range(model.num_classes):
        if j == label:
            continue
        dw = model.weights[label] - model.weights[j]
        norm = float(np.linalg.norm(dw))
        if norm == 0.0:
            if model.biases[label] == model.biases[j]:
                raise DegenerateModelError(
                    f"classes {label} and {j} have identical weights and biases"
                )
            continue  # parallel logits never cross: no boundary with this class
        best = min(best, float(z[label] - z[j]) / norm)
    if not np.isfinite(best):
        raise DegenerateModelError("no reachable decision boundary from this point")
    return max(best, 0.0)


def linear_noise_error_rate(model: LinearModel, x, label: int, sigma: float) -> float:
    """Exact Gaussian-noise error rate for a binary linear model.

    The error set of a binary linear model is a half space, so the rate
    is ``Phi(-d/sigma)`` with ``d`` the signed boundary distance
    (negative when ``x`` is misclassified). Multiclass models have no
    closed form (a union of half spaces); use the Monte-Carlo estimator.
    """
    if not isinstance(model, LinearModel):
        raise UnsupportedModelError("exact noise error rate requires a LinearModel")
    if model.num_classes != 2:
        raise UnsupportedModelError(
            "exact noise error rate is defined for binary models only; "
            "use Monte-Carlo estimation for multiclass"
        )
    sigma = float(sigma)
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    label = int(label)
    other = 1 - label
    z = model.logits(x)
    dw = model.weights[label] - model.weights[other]
    norm = float(np.linalg.norm(dw))
    if norm == 0.0:
        if model.biases[label] == model.biases[other]:
            raise DegenerateModelError("identical class weights and biases")
        return 0.0 if z[label] > z[other] else 1.0
    signed = float(z[label] - z[other]) / norm
    return std_normal_cdf(-signed / sigma)


# ---------------------------------------------------------------------------
# Serialization: magic "ISRB", little-endian, version 1.
# kind: 0 = linear, 1 = mlp, 2 = bitdepth-wrapped (embeds the base model).
# ---------------------------------------------------------------------------

_MAGIC = b"ISRB"
_FORMAT_VERSION = 1
_KIND_LINEAR = 0
_KIND_MLP = 1
_KIND_BITDEPTH = 2
_ACT_CODES = {"relu": 0, "identity": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class _Reader:
    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise ModelFormatError(
                f"truncated model data: needed {n} bytes for {what} at byte offset "
                f"{self.offset}, only {len(self.data) - self.offset} available"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64_array(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8", count=count).reshape(shape).astype(float)


def _write_f64(chunks: list[bytes], arr: np.ndarray) -> None:
    chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def model_to_bytes(model: Classifier) -> bytes:
    chunks: list[bytes] = [_MAGIC, struct.pack("<I", _FORMAT_VERSION)]
    if isinstance(model, LinearModel):
        chunks.append(struct.pack("<B", _KIND_LINEAR))
        C, n = model.weights.shape
        chunks.append(struct.pack("<II", C, n))
        _write_f64(chunks, model.weights)
        _write_f64(chunks, model.biases)
    elif isinstance(model, MlpModel):
        chunks.append(struct.pack("<B", _KIND_MLP))
        chunks.append(struct.pack("<I", len(model.weights)))
        for W, b, a in zip(model.weights, model.biases, model.activations):
            out_dim, in_dim = W.shape
            chunks.append(struct.pack("<IIB", out_dim, in_dim, _ACT_CODES[a]))
            _write_f64(chunks, W)
            _write_f64(chunks, b)
    elif isinstance(model, BitdepthDefense):
        chunks.append(struct.pack("<B", _KIND_BITDEPTH))
        chunks.append(struct.pack("<BB", model.bits, int(model.straight_through)))
        chunks.append(model_to_bytes(model.base))
    else:
        raise UnsupportedModelError(f"cannot serialize {type(model).__name__}")
    return b"".join(chunks)


def _read_model(r: _Reader) -> Classifier:
    magic = r.take(4, "magic")
    if magic != _MAGIC:
        raise ModelFormatError(
            f"bad magic {magic!r} at byte offset {r.offset - 4}; expected {_MAGIC!r}"
        )
    version = r.u32("format version")
    if version != _FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format version {version} at byte offset {r.offset - 4}; "
            f"this build reads version {_FORMAT_VERSION}"
        )
    kind = r.u8("model kind")
    if kind == _KIND_LINEAR:
        C = r.u32("class count")
        n = r.u32("input dimension")
        W = r.f64_array((C, n), "weight matrix")
        b = r.f64_array((C,), "bias vector")
        return LinearModel(W, b)
    if kind == _KIND_MLP:
        n_layers = r.u32("layer count")
        Ws, bs, acts = [], [], []
        for i in range(n_layers):
            out_dim = r.u32(f"layer {i} output size")
            in_dim = r.u32(f"layer {i} input size")
            code = r.u8(f"layer {i} activation")
            if code not in _ACT_NAMES:
                raise ModelFormatError(
                    f"unknown activation code {code} at byte offset {r.offset - 1}"
                )
            Ws.append(r.f64_array((out_dim, in_dim), f"layer {i} weights"))
            bs.append(r.f64_array((out_dim,), f"layer {i} biases"))
            acts.append(_ACT_NAMES[code])
        return MlpModel(tuple(Ws), tuple(bs), tuple(acts))
    if kind == _KIND_BITDEPTH:
        bits = r.u8("bit depth")
        straight = bool(r.u8("straight-through flag"))
        base = _read_model(r)
        return BitdepthDefense(base, bits, straight)
    raise ModelFormatError(f"unknown model kind {kind} at byte offset {r.offset - 1}")


def model_from_bytes(data: bytes) -> Classifier:
    r = _Reader(data)
    model = _read_model(r)
    if r.offset != len(data):
        raise ModelFormatError(
            f"{len(data) - r.offset} trailing bytes after model at byte offset {r.offset}"
        )
    return model


def save_model(model: Classifier, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> Classifier:
    with open(path, "rb") as fh:
        data = fh.read()
    return model_from_bytes(data)
