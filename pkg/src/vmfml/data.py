"""Labeled datasets and the two on-disk formats we read: IDX and CSV.

IDX (the MNIST distribution format) is big-endian::

    images: uint32 magic 0x00000803, uint32 count, uint32 rows, uint32 cols, u8 pixels
    labels: uint32 magic 0x00000801, uint32 count, u8 labels

Files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    DataError,
    NonNumericField,
    RaggedRow,
    SparseLabels,
    TruncatedFile,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str] | None = None
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise CountMismatch(
                f"{self.labels.shape[0]} labels for {self.features.shape[0]} feature rows"
            )
        if self.split not in ("train", "test"):
            raise DataError(f"split must be 'train' or 'test', got {self.split!r}")
        if self.labels.size and self.labels.min() < 0:
            raise DataError("labels must be non-negative")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index, split=None) -> "LabeledDataset":
        return LabeledDataset(
            self.features[index], self.labels[index], self.class_names, split or self.split
        )


def _check_dense(labels: np.ndarray) -> None:
    if labels.size == 0:
        return
    if labels.min() < 0:
        raise SparseLabels("labels must be non-negative")
    present = np.unique(labels)
    if present.size != int(labels.max()) + 1:
        missing = sorted(set(range(int(labels.max()) + 1)) - set(present.tolist()))
        raise SparseLabels(f"labels must be dense in [0, C); missing {missing[:10]}")


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        try:
            with gzip.open(path, "rb") as f:
                return f.read()
        except EOFError:
            raise TruncatedFile(f"{path}: compressed stream ends early") from None
    return path.read_bytes()


def _parse_idx(raw: bytes, magic: int, ndims: int, path) -> tuple[tuple[int, ...], np.ndarray]:
    head = 4 * (1 + ndims)
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: header truncated")
    found = struct.unpack_from(">I", raw)[0]
    if found != magic:
        raise BadMagic(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < head:
        raise TruncatedFile(f"{path}: header truncated")
    dims = struct.unpack_from(f">{ndims}I", raw, 4)
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - head < count:
        raise TruncatedFile(f"{path}: expected {count} data bytes, found {len(raw) - head}")
    return dims, np.frombuffer(raw, dtype=np.uint8, count=count, offset=head)


def load_idx(images_path, labels_path, split: str = "train") -> LabeledDataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1] and flattened row-major."""
    (n_img, rows, cols), pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, images_path)
    (n_lab,), labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, labels_path)
    if n_img != n_lab:
        raise CountMismatch(f"{n_img} images but {n_lab} labels")
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    _check_dense(labels)
    return LabeledDataset(features, labels, split=split)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images of shape (N, rows, cols) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    opener = gzip.open if str(images_path).endswith(".gz") else open
    with opener(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    opener = gzip.open if str(labels_path).endswith(".gz") else open
    with opener(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_csv(path, split: str = "train") -> LabeledDataset:
    """Read ``label,f1,f2,...`` rows. Lines starting with '#' are skipped."""
    labels, rows = [], []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [s.strip() for s in line.split(",")]
            if width is None:
                width = len(fields)
                if width < 2:
                    raise RaggedRow(f"{path}:{lineno}: need a label and at least one feature")
            elif len(fields) != width:
                raise RaggedRow(f"{path}:{lineno}: {len(fields)} fields, expected {width}")
            try:
                label = int(fields[0])
            except ValueError:
                raise NonNumericField(f"{path}:{lineno}: label {fields[0]!r} is not an integer") from None
            try:
                values = [float(s) for s in fields[1:]]
            except ValueError as exc:
                raise NonNumericField(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise NonNumericField(f"{path}:{lineno}: non-finite feature value")
            labels.append(label)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    labels = np.array(labels, dtype=np.int64)
    _check_dense(labels)
    return LabeledDataset(np.array(rows), labels, split=split)


def write_csv(path, data: LabeledDataset) -> None:
    with open(path, "w") as f:
        f.write("# label," + ",".join(f"x{j}" for j in range(data.n_features)) + "\n")
        for label, row in zip(data.labels, data.features):
            f.write(f"{label}," + ",".join(repr(float(v)) for v in row) + "\n")
