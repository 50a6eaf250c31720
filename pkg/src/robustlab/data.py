"""Dataset container, synthetic generators, and file ingestion (IDX, CSV)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import substream

__all__ = [
    "Dataset",
    "IdxFormatError",
    "synth_blobs",
    "load_idx",
    "load_csv",
    "save_csv",
    "parse_dataset_spec",
]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; message names the byte offset."""


@dataclass(eq=False)
class Dataset:
    """Paired inputs/labels with a split tag.

    ``inputs`` is (m, n) float64, ``labels`` is (m,) int64 within
    [0, num_classes). ``num_classes`` defaults to ``max(labels) + 1``
    but may be declared larger (e.g. a split missing some class).
    """

    inputs: np.ndarray
    labels: np.ndarray
    split: str = "train"
    num_classes: int = field(default=0)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.inputs, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes: inputs {X.shape}, labels {y.shape}")
        if X.shape[0] == 0:
            raise ValueError("dataset must be non-empty")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset inputs must be finite")
        if np.any(y < 0):
            raise ValueError("labels must be non-negative")
        inferred = int(y.max()) + 1
        declared = int(self.num_classes) or max(inferred, 2)
        if inferred > declared:
            raise ValueError(f"label {inferred - 1} outside declared {declared} classes")
        self.inputs = X
        self.labels = y
        self.num_classes = declared

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx], self.labels[idx], self.split, self.num_classes)

    def clipped01(self) -> "Dataset":
        """Copy with inputs clipped into [0, 1] (pixel semantics)."""
        return Dataset(np.clip(self.inputs, 0.0, 1.0), self.labels, self.split, self.num_classes)


def synth_blobs(
    n_classes: int,
    n_per_class: int,
    dim: int,
    centers_scale: float,
    sigma: float,
    seed: int,
    split: str = "train",
) -> Dataset:
    """Isotropic Gaussian blobs, class ``c`` centered at ``centers_scale * e_c``.

    Requires ``dim >= n_classes`` so every class gets its own axis.
    ``sigma = 0`` collapses each class onto its center. Deterministic in
    ``seed`` (and in ``split``, so train/test draws are independent).
    """
    if n_classes < 2 or n_per_class < 1 or dim < 1:
        raise ValueError("need n_classes >= 2, n_per_class >= 1, dim >= 1")
    if dim < n_classes:
        raise ValueError(f"dim={dim} must be >= n_classes={n_classes} for axis-aligned centers")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = substream(seed, f"blobs.{split}")
    m = n_classes * n_per_class
    labels = np.repeat(np.arange(n_classes), n_per_class)
    centers = np.zeros((n_classes, dim))
    centers[np.arange(n_classes), np.arange(n_classes)] = centers_scale
    noise = rng.normal(0.0, 1.0, size=(m, dim)) * sigma if sigma > 0 else np.zeros((m, dim))
    X = centers[labels] + noise
    return Dataset(X, labels, split, n_classes)


def _read_exact(fh, n: int, what: str, offset: int) -> bytes:
    chunk = fh.read(n)
    if len(chunk) != n:
        raise IdxFormatError(
            f"truncated IDX file: needed {n} bytes for {what} at byte offset {offset}, "
            f"got {len(chunk)}"
        )
    return chunk


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair (big-endian, u8 pixels scaled to [0, 1])."""
    with open(images_path, "rb") as fh:
        offset = 0
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, "image header", offset)
        )
        offset += 16
        if magic != _IDX_IMAGES_MAGIC:
            raise IdxFormatError(
                f"bad image magic 0x{magic:08x} at byte offset 0; "
                f"expected 0x{_IDX_IMAGES_MAGIC:08x}"
            )
        n_pixels = count * rows * cols
        pixels = _read_exact(fh, n_pixels, "pixel data", offset)
        offset += n_pixels
        if fh.read(1):
            raise IdxFormatError(f"trailing bytes after pixel data at byte offset {offset}")
    with open(labels_path, "rb") as fh:
        offset = 0
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, "label header", offset))
        offset += 8
        if magic != _IDX_LABELS_MAGIC:
            raise IdxFormatError(
                f"bad label magic 0x{magic:08x} at byte offset 0; "
                f"expected 0x{_IDX_LABELS_MAGIC:08x}"
            )
        raw_labels = _read_exact(fh, label_count, "label data", offset)
        offset += label_count
        if fh.read(1):
            raise IdxFormatError(f"trailing bytes after label data at byte offset {offset}")
    if label_count != count:
        raise IdxFormatError(
            f"image/label count mismatch: {count} images but {label_count} labels"
        )
    X = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols).astype(float) / 255.0
    y = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return Dataset(X, y, "train")


def load_csv(path, split: str = "train") -> Dataset:
    """Load a dataset CSV with header ``label,x0,...`` (one row per example)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("label"):
            raise ValueError(f"{path}: expected header starting with 'label', got {header!r}")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.size == 0:
        raise ValueError(f"{path}: no data rows")
    return Dataset(rows[:, 1:], rows[:, 0].astype(np.int64), split)


def save_csv(dataset: Dataset, path) -> None:
    header = "label," + ",".join(f"x{i}" for i in range(dataset.dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for y, x in zip(dataset.labels, dataset.inputs):
            fh.write(f"{int(y)}," + ",".join(f"{v:.12g}" for v in x) + "\n")


def parse_dataset_spec(spec: str, split: str = "train") -> Dataset:
    """Build a dataset from a compact CLI spec string.

    Forms:
      ``blobs:classes=2,per=500,dim=32,scale=1.0,sigma=0.25,seed=7``
      ``csv:path/to/data.csv``
      ``idx:images_path,labels_path``
    """
    kind, _, rest = spec.partition(":")
    if kind == "csv":
        if not rest:
            raise ValueError("csv spec needs a path: csv:<path>")
        return load_csv(rest, split)
    if kind == "idx":
        parts = rest.split(",")
        if len(parts) != 2:
            raise ValueError("idx spec needs two paths: idx:<images>,<labels>")
        return load_idx(parts[0], parts[1])
    if kind == "blobs":
        params = {"classes": 2, "per": 200, "dim": 16, "scale": 1.0, "sigma": 0.25, "seed": 0}
        if rest:
            for item in rest.split(","):
                key, _, value = item.partition("=")
                if key not in params:
                    raise ValueError(f"unknown blobs parameter {key!r}")
                params[key] = float(value) if key in ("scale", "sigma") else int(value)
        return synth_blobs(
            int(params["classes"]),
            int(params["per"]),
            int(params["dim"]),
            float(params["scale"]),
            float(params["sigma"]),
            int(params["seed"]),
            split,
        )
    raise ValueError(f"unknown dataset spec kind {kind!r} (expected blobs/csv/idx)")
