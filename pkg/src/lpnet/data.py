"""Synthetic dataset generators, IDX and piano-roll loaders, CSV persistence.

Every generator draws from the counter-based Rng, so outputs are
byte-stable across platforms and runs. CSV files carry 17 significant
digits, enough for float64 text round trips to be bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .core import Rng, FormatError, ShapeError
from .recurrent import SequenceBatch

PIANOROLL_SCHEMA = "lpnet-pianoroll/1"


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels."""

    X: np.ndarray
    y: np.ndarray
    class_count: int

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise ShapeError(f"X {self.X.shape} incompatible with y {self.y.shape}")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise ValueError(f"labels outside [0, {self.class_count})")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.X[indices], self.y[indices], self.class_count)


@dataclass(frozen=True)
class MixtureComponent:
    """One isotropic Gaussian blob: mean, spread, class label, sample count."""

    mean: tuple
    sigma: float
    label: int
    count: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")


def gen_gaussian_mixture(components, seed: int) -> LabeledDataset:
    """Sample each component with its own substream, concatenate, and
    shuffle deterministically."""
    components = list(components)
    if not components:
        raise ValueError("need at least one mixture component")
    rng = Rng(seed)
    blocks = []
    labels = []
    for k, comp in enumerate(components):
        sub = rng.substream(f"component{k}")
        d = len(comp.mean)
        z = sub.normal(comp.count * d).reshape(comp.count, d)
        blocks.append(np.asarray(comp.mean) + comp.sigma * z)
        labels.append(np.full(comp.count, comp.label, dtype=np.int64))
    X = np.vstack(blocks)
    y = np.concatenate(labels)
    order = rng.substream("shuffle").permutation(len(y))
    return LabeledDataset(X[order], y[order], int(y.max()) + 1)


def gauss2_components(n_per_class: int = 500, sigma: float = 0.5):
    """Two blobs on the x axis, one per class."""
    return [MixtureComponent((-1.5, 0.0), sigma, 0, n_per_class),
            MixtureComponent((1.5, 0.0), sigma, 1, n_per_class)]


def gauss3_components(n_per_class: int = 400, sigma: float = 0.5, radius: float = 2.0):
    """Three blobs at 90, 210 and 330 degrees on a circle, one per class."""
    comps = []
    for k, deg in enumerate((90.0, 210.0, 330.0)):
        th = np.deg2rad(deg)
        comps.append(MixtureComponent((radius * np.cos(th), radius * np.sin(th)),
                                      sigma, k, n_per_class))
    return comps


def curvature_label(x: float, y: float) -> int:
    """1 inside the half-disc joined to a straight strip, else 0.

    The region is the unit half-disc left of x=0 continued by the band
    |y| < 1 for 0 <= x <= 2, so the boundary's curvature drops from 1
    to 0 at the join.
    """
    if x < 0.0:
        return int(x * x + y * y < 1.0)
    return int(x <= 2.0 and abs(y) < 1.0)


def gen_curvature_dataset(n: int, seed: int) -> LabeledDataset:
    """n points uniform on [-2, 3] x [-2, 2], labeled by curvature_label."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = Rng(seed)
    xs = rng.substream("x").uniform(-2.0, 3.0, n)
    ys = rng.substream("y").uniform(-2.0, 2.0, n)
    inside_disc = (xs < 0.0) & (xs * xs + ys * ys < 1.0)
    inside_strip = (xs >= 0.0) & (xs <= 2.0) & (np.abs(ys) < 1.0)
    labels = (inside_disc | inside_strip).astype(np.int64)
    return LabeledDataset(np.column_stack([xs, ys]), labels, 2)


def split_holdout(dataset: LabeledDataset, frac: float = 0.2, seed: int = 0):
    """Deterministic shuffled split into (train, held-out)."""
    if not 0.0 < frac < 1.0:
        raise ValueError(f"holdout fraction must be in (0, 1), got {frac}")
    order = Rng(seed).substream("holdout").permutation(len(dataset))
    n_hold = max(1, int(round(frac * len(dataset))))
    return dataset.subset(order[n_hold:]), dataset.subset(order[:n_hold])


# -- CSV ---------------------------------------------------------------------

def save_csv(dataset: LabeledDataset, path) -> None:
    header = ",".join([f"x{i}" for i in range(dataset.dim)] + ["label"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, label in zip(dataset.X, dataset.y):
            cells = [f"{v:.17g}" for v in row]
            fh.write(",".join(cells) + f",{label}\n")


def load_csv(path, class_count: int | None = None) -> LabeledDataset:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if len(cols) < 2 or cols[-1] != "label" or \
                cols[:-1] != [f"x{i}" for i in range(len(cols) - 1)]:
            raise FormatError(f"{path}: bad header {header!r}")
        d = len(cols) - 1
        rows = []
        labels = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != d + 1:
                raise FormatError(f"{path}:{lineno}: expected {d + 1} fields, "
                                  f"got {len(cells)}")
            try:
                rows.append([float(c) for c in cells[:-1]])
                labels.append(int(cells[-1]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
    y = np.asarray(labels, dtype=np.int64)
    if class_count is None:
        class_count = int(y.max()) + 1 if len(y) else 1
    return LabeledDataset(X, y, class_count)


# -- IDX binary --------------------------------------------------------------

_IDX_LABEL_MAGIC = 0x00000801
_IDX_IMAGE_MAGIC = 0x00000803


def load_idx(path) -> np.ndarray:
    """Big-endian IDX tensor file. Image files come back as an (n, rows*cols)
    float matrix scaled to [0, 1]; label files as an int vector."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated header at byte 0")
    magic = struct.unpack_from(">I", blob, 0)[0]
    if magic == _IDX_LABEL_MAGIC:
        n_dims = 1
    elif magic == _IDX_IMAGE_MAGIC:
        n_dims = 3
    else:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at byte 0")
    header_len = 4 + 4 * n_dims
    if len(blob) < header_len:
        raise FormatError(f"{path}: truncated dimension header at byte {len(blob)}")
    dims = struct.unpack_from(f">{n_dims}I", blob, 4)
    expected = header_len + int(np.prod(dims))
    if len(blob) < expected:
        raise FormatError(f"{path}: payload truncated at byte {len(blob)}, "
                          f"expected {expected}")
    raw = np.frombuffer(blob, dtype=np.uint8, count=int(np.prod(dims)),
                        offset=header_len)
    if magic == _IDX_LABEL_MAGIC:
        return raw.astype(np.int64)
    n, rows, cols = dims
    return raw.reshape(n, rows * cols).astype(np.float64) / 255.0


# -- piano-roll JSON ---------------------------------------------------------

def save_pianoroll(batch: SequenceBatch, path) -> None:
    """Persist targets as active-note index lists; inputs are implied by
    the next-step convention and rebuilt on load."""
    sequences = []
    for y in batch.targets:
        sequences.append([[int(i) for i in np.flatnonzero(step)] for step in y])
    doc = {"schema": PIANOROLL_SCHEMA, "dim": batch.dim, "sequences": sequences}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_pianoroll(path) -> SequenceBatch:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a JSON document: {exc}") from exc
    if doc.get("schema") != PIANOROLL_SCHEMA:
        raise FormatError(f"{path}: unsupported schema {doc.get('schema')!r}")
    dim = int(doc["dim"])
    inputs = []
    targets = []
    for s, steps in enumerate(doc["sequences"]):
        y = np.zeros((len(steps), dim))
        for t, notes in enumerate(steps):
            for i in notes:
                if not 0 <= i < dim:
                    raise FormatError(f"{path}: sequence {s} step {t}: "
                                      f"note index {i} outside [0, {dim})")
                y[t, i] = 1.0
        x = np.zeros_like(y)
        x[1:] = y[:-1]
        inputs.append(x)
        targets.append(y)
    return SequenceBatch(inputs, targets, dim)


def gen_periodic_pianoroll(n_seq: int = 200, length: int = 50, dim: int = 8,
                           max_period: int = 6, n_patterns: int = 6,
                           density: float = 0.3, seed: int = 0) -> SequenceBatch:
    """Sequences that cycle through a small bank of random periodic
    patterns, each started at a random phase.

    A shared bank keeps the next-step task learnable at small scale: the
    frame-to-frame successor map is (near) deterministic, so a model
    only has to identify pattern and phase from the prefix.
    """
    if not 1 <= max_period:
        raise ValueError(f"max_period must be >= 1, got {max_period}")
    rng = Rng(seed)
    bank = []
    pat_rng = rng.substream("patterns")
    for k in range(n_patterns):
        period = int(pat_rng.integers(1, max_period + 1))
        frames = (pat_rng.random(period * dim).reshape(period, dim)
                  < density).astype(np.float64)
        bank.append(frames)
    pick = rng.substream("assign")
    inputs = []
    targets = []
    for _ in range(n_seq):
        frames = bank[int(pick.integers(0, n_patterns))]
        period = frames.shape[0]
        phase = int(pick.integers(0, period))
        idx = (phase + np.arange(length)) % period
        y = frames[idx]
        x = np.zeros_like(y)
        x[1:] = y[:-1]
        inputs.append(x)
        targets.append(y)
    return SequenceBatch(inputs, targets, dim)
