"""Datasets (IDX files, builtin 8x8 digits) and on-disk formats.

Network and configuration files are JSON with a ``format_version`` field.
Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


@dataclass
class DatasetHandle:
    images: np.ndarray
    labels: np.ndarray
    source: str

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise ConsistencyError("images must be an n x d array")
        if len(self.images) != len(self.labels):
            raise ConsistencyError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ConsistencyError("pixel values must be normalized to [0, 1]")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    def subset(self, idx) -> DatasetHandle:
        return DatasetHandle(self.images[idx], self.labels[idx], self.source)

    def split(self, n_test: int, seed: int = 0) -> tuple[DatasetHandle, DatasetHandle]:
        """Shuffle once with ``seed`` and hold out ``n_test`` samples; returns (train, test)."""
        order = np.random.Generator(np.random.PCG64(seed)).permutation(len(self))
        return self.subset(order[n_test:]), self.subset(order[:n_test])


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4 + 4 * ndim:
        raise OSError(f"{path}: truncated IDX header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = raw[4 + 4 * ndim:]
    n = int(np.prod(dims))
    if len(body) < n:
        raise OSError(f"{path}: truncated IDX body ({len(body)} of {n} bytes)")
    return np.frombuffer(body[:n], dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> DatasetHandle:
    """Read an MNIST-style IDX image/label pair (optionally gzipped)."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise ConsistencyError(f"{len(images)} images but {len(labels)} labels")
    flat = images.reshape(len(images), -1).astype(float) / 255.0
    return DatasetHandle(flat, labels.astype(np.int64), f"idx:{images_path}")


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def load_builtin_digits() -> DatasetHandle:
    """1797 8x8 handwritten digits shipped with the package, pixels scaled to [0, 1]."""
    ref = resources.files("dnaengine") / "data" / "digits8x8.csv.gz"
    with ref.open("rb") as fh, gzip.open(fh, "rt") as text:
        arr = np.loadtxt(text, delimiter=",", comments="#", dtype=np.int64)
    return DatasetHandle(arr[:, :64] / 16.0, arr[:, 64], "builtin:digits8x8")


def load_dataset(spec: str) -> DatasetHandle:
    """``"builtin"`` or ``"<images.idx>,<labels.idx>"``."""
    if spec in ("builtin", "builtin:digits8x8"):
        return load_builtin_digits()
    parts = spec.split(",")
    if len(parts) != 2:
        raise ValueError(f"dataset must be 'builtin' or 'IMAGES,LABELS', got {spec!r}")
    return load_idx(*parts)


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
