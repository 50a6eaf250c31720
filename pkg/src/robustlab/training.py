"""Minibatch SGD with optional Gaussian data augmentation, and noisy evaluation.

Augmentation draws a fresh scale ``sigma_i ~ U(0, sigma_max)`` per
example per batch and adds ``N(0, sigma_i^2 I)`` noise. Augmented inputs
are *not* clipped to [0, 1] by default: the error-rate/distance analysis
elsewhere in this package assumes unbounded Gaussian noise, and clipping
would bias those comparisons. Pass ``clip_augmented=True`` (or the
``clip`` flag of :func:`evaluate`) when pixel-range parity with a
corruption benchmark matters.

Training is a pure function of (dataset, spec, config): every random
draw comes from a stream keyed by the config seed, so two runs with the
same arguments produce bit-identical weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .models import Classifier, LinearModel, MlpModel, _net_backward, _net_forward, softmax
from .rng import substream

__all__ = [
    "TrainConfig",
    "ModelSpec",
    "TrainingReport",
    "TrainingDivergedError",
    "gaussian_augment_batch",
    "train",
    "evaluate",
]


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    weight_decay: float = 0.0
    lr_decay_schedule: tuple[tuple[int, float], ...] = ()
    augment_sigma_max: float = 0.0
    clip_augmented: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.augment_sigma_max < 0:
            raise ValueError("augment_sigma_max must be >= 0")
        object.__setattr__(
            self,
            "lr_decay_schedule",
            tuple((int(e), float(f)) for e, f in self.lr_decay_schedule),
        )


@dataclass(frozen=True)
class ModelSpec:
    """Architecture request: ``kind`` is "linear" or "mlp" (with hidden sizes)."""

    kind: str
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "mlp" and not self.hidden:
            raise ValueError("mlp spec needs at least one hidden layer size")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass
class TrainingReport:
    epochs: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"epochs": self.epochs, "final": self.final}, indent=2, sort_keys=True)


def gaussian_augment_batch(
    batch: np.ndarray,
    sigma_max: float,
    rng: np.random.Generator,
    clip: bool = False,
    return_scales: bool = False,
):
    """Add per-example Gaussian noise with scale drawn uniformly from [0, sigma_max].

    Labels are the caller's to keep; this touches inputs only. With
    ``sigma_max = 0`` the batch is returned unchanged. Set
    ``return_scales=True`` to also get the drawn per-example scales
    (used by statistical tests on the scale distribution).
    """
    if sigma_max < 0:
        raise ValueError("sigma_max must be >= 0")
    batch = np.asarray(batch, dtype=float)
    if sigma_max == 0:
        scales = np.zeros(batch.shape[0])
        return (batch, scales) if return_scales else batch
    scales = rng.uniform(0.0, sigma_max, size=batch.shape[0])
    noisy = batch + rng.standard_normal(batch.shape) * scales[:, None]
    if clip:
        noisy = np.clip(noisy, 0.0, 1.0)
    return (noisy, scales) if return_scales else noisy


def _init_params(spec: ModelSpec, input_dim: int, num_classes: int, rng: np.random.Generator):
    if spec.kind == "linear":
        return [np.zeros((num_classes, input_dim))], [np.zeros(num_classes)], ["identity"]
    sizes = [input_dim, *spec.hidden, num_classes]
    proto = MlpModel.random(sizes, rng)
    return [W.copy() for W in proto.weights], [b.copy() for b in proto.biases], list(proto.activations)


def _build_model(spec: ModelSpec, Ws, bs, acts) -> Classifier:
    if spec.kind == "linear":
        return LinearModel(Ws[0], bs[0])
    return MlpModel(tuple(Ws), tuple(bs), tuple(acts))


def train(
    dataset: Dataset,
    spec: ModelSpec,
    config: TrainConfig,
    test_dataset: Dataset | None = None,
    test_noise_sigma: float = 0.0,
    test_noise_draws: int = 10,
) -> tuple[Classifier, TrainingReport]:
    """Minibatch SGD with weight decay, LR decay schedule, and optional augmentation.

    Returns the trained model and a report with per-epoch training loss
    and accuracy. When ``test_dataset`` is given, the report's ``final``
    section also carries clean and (if ``test_noise_sigma > 0``) noisy
    test accuracy.
    """
    X_all = dataset.inputs
    y_all = dataset.labels
    m = len(dataset)
    Ws, bs, acts = _init_params(spec, dataset.dim, dataset.num_classes, substream(config.seed, "train.init"))
    report = TrainingReport()

    lr = config.learning_rate
    schedule = dict(config.lr_decay_schedule)
    rows_template = np.arange(config.batch_size)

    for epoch in range(config.epochs):
        if epoch in schedule:
            lr *= schedule[epoch]
        perm = substream(config.seed, "train.shuffle", epoch).permutation(m)
        total_loss = 0.0
        for bi, start in enumerate(range(0, m, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            Xb = X_all[idx]
            yb = y_all[idx]
            if config.augment_sigma_max > 0:
                Xb = gaussian_augment_batch(
                    Xb,
                    config.augment_sigma_max,
                    substream(config.seed, "train.augment", epoch, bi),
                    clip=config.clip_augmented,
                )
            logits, cache = _net_forward(Ws, bs, acts, Xb)
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergedError(
                    f"non-finite logits at epoch {epoch}, batch {bi}; "
                    "reduce the learning rate or check the data"
                )
            probs = softmax(logits)
            k = len(idx)
            rows = rows_template[:k] if k <= config.batch_size else np.arange(k)
            batch_loss = -float(np.mean(np.log(np.maximum(probs[rows, yb], 1e-300))))
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {bi}; "
                    "reduce the learning rate or check the data"
                )
            total_loss += batch_loss * k
            delta = probs
            delta[rows, yb] -= 1.0
            delta /= k
            gWs, gbs, _ = _net_backward(Ws, acts, cache, delta)
            for i in range(len(Ws)):
                if config.weight_decay:
                    gWs[i] = gWs[i] + config.weight_decay * Ws[i]
                Ws[i] -= lr * gWs[i]
                bs[i] -= lr * gbs[i]
        train_logits, _ = _net_forward(Ws, bs, acts, X_all)
        train_acc = float(np.mean(np.argmax(train_logits, axis=1) == y_all))
        report.epochs.append(
            {"epoch": epoch, "loss": total_loss / m, "train_acc": train_acc}
        )

    model = _build_model(spec, Ws, bs, acts)
    if test_dataset is not None:
        report.final["clean_test_acc"] = evaluate(model, test_dataset)
        if test_noise_sigma > 0:
            report.final["noisy_test_acc"] = evaluate(
                model,
                test_dataset,
                noise_sigma=test_noise_sigma,
                n_noise_draws=test_noise_draws,
                seed=config.seed,
            )
    return model, report


def evaluate(
    model: Classifier,
    dataset: Dataset,
    noise_sigma: float = 0.0,
    n_noise_draws: int = 1,
    seed: int = 0,
    clip: bool = False,
) -> float:
    """Accuracy on the dataset, exactly (clean) or under Gaussian noise.

    With ``noise_sigma > 0`` each test point is evaluated on
    ``n_noise_draws`` independent noisy copies drawn from a per-point
    stream keyed by ``(seed, point index)``; the result is the mean
    accuracy over all copies and is independent of evaluation order.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if noise_sigma == 0:
        return float(np.mean(model.predict_batch(dataset.inputs) == dataset.labels))
    if n_noise_draws < 1:
        raise ValueError("n_noise_draws must be >= 1 when noise_sigma > 0")

    m, n = dataset.inputs.shape
    noisy = np.empty((m, n_noise_draws, n))
    for i in range(m):
        rng = substream(seed, "eval.noise", i)
        noisy[i] = dataset.inputs[i] + rng.normal(0.0, noise_sigma, size=(n_noise_draws, n))
    if clip:
        np.clip(noisy, 0.0, 1.0, out=noisy)
    preds = model.predict_batch(noisy.reshape(m * n_noise_draws, n))
    correct = preds.reshape(m, n_noise_draws) == dataset.labels[:, None]
    return float(np.mean(correct))
