"""Labeled datasets: file readers, synthetic tasks, trigger sets and chunk splits."""
from __future__ import annotations

import csv
import gzip
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "ROLES",
    "LabeledSet",
    "ChunkSplit",
    "ParseError",
    "read_idx",
    "read_csv_records",
    "load_dataset",
    "load_digits_task",
    "synth_dataset",
    "synth_patterns",
    "build_trigger_set",
    "split_chunks",
    "save_labeled_set",
    "load_labeled_set",
]

ROLES = ("train", "test", "trigger", "marked", "verification")


class ParseError(ValueError):
    """Malformed dataset file; ``offset`` is the byte position of the problem."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class LabeledSet:
    x: np.ndarray
    y: np.ndarray
    role: str = "train"
    source_name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if len(self.x) != len(self.y):
            raise ValueError(f"{len(self.x)} inputs but {len(self.y)} labels")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.y.size and self.y.min() < 0:
            raise ValueError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.x.shape[1:])

    @property
    def records(self) -> list[tuple[np.ndarray, int]]:
        return [(xi, int(yi)) for xi, yi in zip(self.x, self.y)]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x, self.y

    def subset(self, idx, role: str | None = None) -> "LabeledSet":
        idx = np.asarray(idx, dtype=int)
        return LabeledSet(self.x[idx], self.y[idx], role or self.role, self.source_name, dict(self.meta))

    def with_role(self, role: str) -> "LabeledSet":
        return LabeledSet(self.x, self.y, role, self.source_name, dict(self.meta))

    def concat(self, other: "LabeledSet", role: str | None = None) -> "LabeledSet":
        if len(other) == 0:
            return self.with_role(role or self.role)
        if len(self) and other.input_shape != self.input_shape:
            raise ValueError(f"input shapes differ: {self.input_shape} vs {other.input_shape}")
        return LabeledSet(np.concatenate([self.x, other.x]), np.concatenate([self.y, other.y]),
                          role or self.role, self.source_name, dict(self.meta))


@dataclass
class ChunkSplit:
    chunk_a: LabeledSet
    chunk_b: LabeledSet
    seed: int
    index_a: np.ndarray
    index_b: np.ndarray


# --- file readers -----------------------------------------------------------

_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (big-endian magic ``00 00 type ndim`` then uint32 dims)."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise ParseError("file shorter than the 4-byte magic", len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise ParseError("magic must start with two zero bytes", 0)
    dtype = _IDX_TYPES.get(raw[2])
    if dtype is None:
        raise ParseError(f"unknown IDX data type 0x{raw[2]:02x}", 2)
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"header declares {ndim} dims but file ends early", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    itemsize = np.dtype(dtype).itemsize
    need = header + int(np.prod(dims, dtype=np.int64)) * itemsize
    if len(raw) < need:
        raise ParseError(f"payload truncated: expected {need} bytes, got {len(raw)}", len(raw))
    if len(raw) > need:
        raise ParseError("trailing bytes after payload", need)
    return np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=header).reshape(dims)


def read_csv_records(path, shape=None) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``label, pixel...`` with 0-255 pixel values; a non-numeric first row is a header."""
    text = _read_bytes(path).decode("utf-8")
    labels, pixels = [], []
    offset = 0
    width = None
    for lineno, line in enumerate(io.StringIO(text, newline="")):
        start = offset
        offset += len(line.encode("utf-8"))
        if not line.strip():
            continue
        row = next(csv.reader([line]))
        try:
            vals = [float(v) for v in row]
        except ValueError:
            if lineno == 0:
                continue
            raise ParseError(f"non-numeric field on line {lineno + 1}", start) from None
        if width is None:
            width = len(vals)
        if len(vals) != width or width < 2:
            raise ParseError(f"line {lineno + 1} has {len(vals)} fields, expected {width}", start)
        label = vals[0]
        if label != int(label) or label < 0:
            raise ParseError(f"bad label {row[0]!r} on line {lineno + 1}", start)
        labels.append(int(label))
        pixels.append(vals[1:])
    x = np.asarray(pixels, dtype=np.float64) / 255.0
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ParseError("pixel values outside 0..255", 0)
    if shape is None and width:
        side = int(round(np.sqrt(width - 1)))
        shape = (1, side, side) if side * side == width - 1 else (width - 1,)
    if shape is not None:
        x = x.reshape((len(x),) + tuple(shape))
    return x, np.asarray(labels, dtype=np.int64)


_IDX_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory: Path, stem: str) -> Path:
    for cand in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        if (directory / cand).exists():
            return directory / cand
    raise FileNotFoundError(directory / stem)


def load_dataset(path, format: str = "idx", name: str | None = None, shape=None) -> tuple[LabeledSet, LabeledSet]:
    """Load a (train, test) pair from a directory.

    ``idx`` expects MNIST-style file names (optionally gzipped); ``csv``
    expects ``train.csv`` and ``test.csv``.  Pixels are scaled to [0, 1].
    """
    directory = Path(path)
    name = name or directory.name
    out = []
    for role in ("train", "test"):
        if format == "idx":
            img_stem, lab_stem = _IDX_NAMES[role]
            images = read_idx(_find(directory, img_stem))
            labels = read_idx(_find(directory, lab_stem))
            if len(images) != len(labels):
                raise ParseError(f"{role}: {len(images)} images but {len(labels)} labels", 4)
            x = images.astype(np.float64) / 255.0
            if x.ndim == 3:
                x = x[:, None]
            y = labels.astype(np.int64)
        elif format == "csv":
            x, y = read_csv_records(directory / f"{role}.csv", shape)
        else:
            raise ValueError(f"unknown dataset format {format!r}")
        out.append(LabeledSet(x, y, role, name))
    return out[0], out[1]


def load_digits_task(n_test: int = 497) -> tuple[LabeledSet, LabeledSet]:
    """The 8x8 handwritten digits bundled with scikit-learn, scaled to [0, 1].

    The file is ordered by writer, so the last ``n_test`` records form a test
    set written by people absent from the training split.
    """
    from sklearn.datasets import load_digits

    d = load_digits()
    x = (d.images / 16.0)[:, None].astype(np.float64)
    y = d.target.astype(np.int64)
    cut = len(y) - n_test
    return (LabeledSet(x[:cut], y[:cut], "train", "digits"),
            LabeledSet(x[cut:], y[cut:], "test", "digits"))


def _balanced_labels(n: int, m: int, rng) -> np.ndarray:
    return rng.permutation(np.arange(n) % m)


def synth_dataset(kind: str, n: int, classes: int, seed: int = 0, n_test: int | None = None,
                  dim: int = 2, spread: float = 0.05, background: int = 0,
                  test_spread: float | None = None) -> tuple[LabeledSet, LabeledSet]:
    """Class-balanced synthetic (train, test) sets with features in [0, 1].

    ``gaussian-blobs`` places class means on a well separated grid of random
    corners; ``two-spirals`` interleaves ``classes`` spiral arms in 2-D.
    ``background`` appends that many near-constant features (0.5 plus small
    noise), the analogue of an image's empty border.  ``test_spread`` draws
    the blob test set with a different noise scale (a shifted held-out pool).
    """
    if n < classes:
        raise ValueError("need n >= classes")
    if background < 0:
        raise ValueError("background must be >= 0")
    rng = np.random.default_rng(seed)
    n_test = n // 4 if n_test is None else n_test
    if kind == "gaussian-blobs":
        means = rng.uniform(0.2, 0.8, size=(classes, dim))
        # push means apart so classes are separable well beyond the noise scale
        for _ in range(200):
            diff = means[:, None] - means[None]
            dist = np.linalg.norm(diff, axis=-1) + np.eye(classes)
            if dist.min() > 12 * spread or classes == 1:
                break
            push = (diff / dist[..., None] ** 2).sum(axis=1)
            means = np.clip(means + 0.01 * push, 0.1, 0.9)

        def draw(k, s=spread):
            y = _balanced_labels(k, classes, rng)
            return np.clip(means[y] + s * rng.standard_normal((k, dim)), 0, 1), y
    elif kind == "two-spirals":
        def draw(k, s=spread):
            y = _balanced_labels(k, classes, rng)
            t = rng.uniform(0.15, 1.0, size=k)
            ang = 3 * np.pi * t + 2 * np.pi * y / classes
            pts = np.stack([t * np.cos(ang), t * np.sin(ang)], axis=1)
            pts += s * 0.2 * rng.standard_normal(pts.shape)
            return np.clip(0.5 + 0.45 * pts, 0, 1), y
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    xtr, ytr = draw(n)
    xte, yte = draw(n_test, spread if test_spread is None else test_spread)
    if background:
        xtr = np.concatenate([xtr, 0.5 + 0.01 * rng.standard_normal((n, background))], axis=1)
        xte = np.concatenate([xte, 0.5 + 0.01 * rng.standard_normal((n_test, background))], axis=1)
    name = f"{kind}-{classes}-{seed}"
    return LabeledSet(xtr, ytr, "train", name), LabeledSet(xte, yte, "test", name)


def synth_patterns(n: int, shape=(1, 8, 8), seed: int = 0) -> LabeledSet:
    """Random stroke-and-blob images in [0, 1]; an out-of-distribution source for digit-like tasks.

    Labels are the number of strokes drawn (0..3) and carry no task meaning.
    A flat ``shape`` gives uniform noise vectors instead (labels 0).
    """
    rng = np.random.default_rng(seed)
    if len(shape) == 1:
        return LabeledSet(rng.uniform(0, 1, (n,) + tuple(shape)), np.zeros(n, dtype=np.int64), "train",
                          f"noise-{seed}")
    c, h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h - 1, 1)
    out = np.zeros((n,) + tuple(shape))
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        img = np.zeros((h, w))
        k = rng.integers(0, 4)
        labels[i] = k
        for _ in range(k):
            a, b = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
            t = np.linspace(0, 1, 4 * max(h, w))
            py, px = a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t
            iy = np.clip(np.round(py * (h - 1)).astype(int), 0, h - 1)
            ix = np.clip(np.round(px * (w - 1)).astype(int), 0, w - 1)
            img[iy, ix] = 1.0
        for _ in range(rng.integers(1, 3)):
            cy, cx = rng.uniform(0, 1, 2)
            s = rng.uniform(0.08, 0.25)
            img += rng.uniform(0.4, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        img += 0.1 * rng.uniform(0, 1, (h, w))
        out[i] = np.clip(img, 0, 1)[None].repeat(c, axis=0)
    return LabeledSet(out, labels, "train", f"patterns-{seed}")


def build_trigger_set(ood_source: LabeledSet, size: int, m: int, seed: int = 0,
                      resize: Callable[[np.ndarray], np.ndarray] | None = None) -> LabeledSet:
    """Sample ``size`` OOD inputs without replacement and give each a uniform random label."""
    if size < 0:
        raise ValueError("trigger size must be >= 0")
    if size > len(ood_source):
        raise ValueError(f"OOD source has {len(ood_source)} records, {size} requested")
    rng = np.random.default_rng([seed, 0x7816])
    idx = rng.choice(len(ood_source), size=size, replace=False)
    x = ood_source.x[idx]
    if resize is not None and size:
        x = np.stack([resize(xi) for xi in x])
    labels = rng.integers(0, m, size=size)
    return LabeledSet(x, labels, "trigger", ood_source.source_name, {"ood_index": idx.tolist()})


def split_chunks(train: LabeledSet, seed: int = 0) -> ChunkSplit:
    """Random partition into two halves; the first gets the extra record when odd."""
    if len(train) < 2:
        raise ValueError("need at least two records to split")
    perm = np.random.default_rng([seed, 0xC4]).permutation(len(train))
    half = -(-len(train) // 2)
    ia, ib = np.sort(perm[:half]), np.sort(perm[half:])
    return ChunkSplit(train.subset(ia), train.subset(ib), seed, ia, ib)


def save_labeled_set(path, data: LabeledSet) -> None:
    np.savez(path, x=data.x, y=data.y, role=np.array(data.role), source_name=np.array(data.source_name))


def load_labeled_set(path) -> LabeledSet:
    with np.load(path, allow_pickle=False) as f:
        return LabeledSet(f["x"], f["y"], str(f["role"]), str(f["source_name"]))
