"""Feature tables, per-class statistics, and synthetic dataset generation.

Feature vectors arrive from any upstream extractor through a plain CSV
format (header ``label,f0,...,f{d-1}``, one sample per row, labels resolved
against a subclass name table). Per-class statistics feed the affinity
construction; the synthetic generator plants a known 3-level hierarchy for
desk-scale experiments.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ClassTooSmall,
    DimensionMismatch,
    InvalidSpec,
    MalformedRow,
    NonFiniteValue,
    UnknownLabel,
)
from .rng import rng_from_seed
from .serialization import format_float
from .taxonomy import LabelStructure, validate_structure


@dataclass(frozen=True)
class FeatureTable:
    """n samples of d-dimensional features with subclass-id labels.

    Immutable after construction; all arrays are float64/int64 and finite.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, order="C")
        labels = np.array(self.labels, dtype=np.int64, order="C")
        if features.ndim != 2:
            raise DimensionMismatch("features must be a 2-D (n, d) array")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DimensionMismatch("labels must be a length-n vector")
        if not np.all(np.isfinite(features)):
            raise NonFiniteValue("feature table contains NaN or infinity")
        if labels.size and labels.min() < 0:
            raise UnknownLabel("labels must be non-negative subclass ids")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClassStats:
    """Per-class mean vector and scalar variance.

    Row c of `means` is the arithmetic mean of class c's features; entry c
    of `variances` is the trace of class c's population covariance (the
    per-dimension divide-by-n variances, summed). With this convention the
    squared class distance equals the expected squared distance between
    independent samples of the two classes.
    """

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64)
        if means.ndim != 2 or variances.ndim != 1:
            raise DimensionMismatch("means must be (C, d), variances (C,)")
        if means.shape[0] != variances.shape[0]:
            raise DimensionMismatch("means and variances disagree on class count")
        if variances.size and variances.min() < 0:
            raise ValueError("variances must be non-negative")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def class_statistics(table: FeatureTable, class_count: int | None = None) -> ClassStats:
    """Mean vector and trace-of-covariance variance for every class.

    Every class in [0, class_count) needs at least 2 samples. Rows are
    reduced in a canonical (lexicographically sorted) order, so the result
    is bit-for-bit invariant to sample order in the table.
    """
    if class_count is None:
        if table.count == 0:
            raise ClassTooSmall(0, "empty table has no classes")
        class_count = int(table.labels.max()) + 1
    means = np.empty((class_count, table.dim))
    variances = np.empty(class_count)
    for c in range(class_count):
        rows = table.features[table.labels == c]
        if rows.shape[0] < 2:
            raise ClassTooSmall(c)
        order = np.lexsort(rows.T[::-1])
        rows = rows[order]
        mean = rows.mean(axis=0)
        dev = rows - mean
        variances[c] = (dev * dev).sum(axis=1).mean()
        means[c] = mean
    return ClassStats(means=means, variances=variances)


@dataclass(frozen=True)
class SyntheticSpec:
    """Geometry of a planted 3-level dataset.

    Superclass centers are mutually at least `superclass_separation` apart;
    each subclass center sits exactly `subclass_separation` from its
    superclass center in a random direction; samples are isotropic Gaussian
    noise of scale `noise_scale` around subclass centers.
    """

    superclass_count: int = 4
    subclasses_per_superclass: int = 5
    samples_per_subclass: int = 100
    dim: int = 16
    superclass_separation: float = 10.0
    subclass_separation: float = 3.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        counts = (
            self.superclass_count,
            self.subclasses_per_superclass,
            self.samples_per_subclass,
            self.dim,
        )
        if any(int(c) < 1 for c in counts):
            raise InvalidSpec("all counts must be >= 1")
        if self.superclass_separation <= 0 or self.subclass_separation <= 0:
            raise InvalidSpec("separations must be > 0")
        if self.noise_scale <= 0:
            raise InvalidSpec("noise_scale must be > 0")

    @property
    def subclass_count(self) -> int:
        return self.superclass_count * self.subclasses_per_superclass


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureTable, LabelStructure]:
    """Sample a planted hierarchical dataset; deterministic for fixed seed.

    Superclass centers are Gaussian draws rescaled so the closest pair is
    exactly `superclass_separation` apart. The returned structure is the
    planted ground truth (superclasses s0..s{K-1}, subclasses c0..c{N-1}).
    """
    rng = rng_from_seed(spec.seed)
    k, per, d = spec.superclass_count, spec.subclasses_per_superclass, spec.dim
    n_sub = spec.subclass_count

    super_centers = rng.standard_normal((k, d))
    if k > 1:
        diff = super_centers[:, None, :] - super_centers[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        min_dist = dist[np.triu_indices(k, 1)].min()
        super_centers = super_centers * (spec.superclass_separation / min_dist)

    offsets = rng.standard_normal((n_sub, d))
    offsets = offsets / np.sqrt((offsets * offsets).sum(axis=1, keepdims=True))
    sub_centers = (
        np.repeat(super_centers, per, axis=0) + spec.subclass_separation * offsets
    )

    noise = rng.standard_normal((n_sub * spec.samples_per_subclass, d))
    features = (
        np.repeat(sub_centers, spec.samples_per_subclass, axis=0)
        + spec.noise_scale * noise
    )
    labels = np.repeat(np.arange(n_sub, dtype=np.int64), spec.samples_per_subclass)

    structure = validate_structure(
        name="planted",
        superclasses=[f"s{i}" for i in range(k)],
        subclass_names=[f"c{i}" for i in range(n_sub)],
        parent_of={f"c{i}": f"s{i // per}" for i in range(n_sub)},
    )
    return FeatureTable(features=features, labels=labels), structure


def train_test_split(
    table: FeatureTable, fraction: float, seed: int
) -> tuple[FeatureTable, FeatureTable]:
    """Stratified exact split; `fraction` is the train share per class.

    Each class contributes floor(n_c * fraction) training samples and the
    remainder to test; a class that would land on 0 either side raises
    ClassTooSmall. Deterministic for a fixed seed; row order within each
    side follows the original table.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidSpec("fraction must lie strictly between 0 and 1")
    rng = rng_from_seed(seed)
    train_idx, test_idx = [], []
    for c in np.unique(table.labels):
        idx = np.flatnonzero(table.labels == c)
        n_train = int(math.floor(idx.size * fraction))
        n_test = idx.size - n_train
        if n_train == 0 or n_test == 0:
            raise ClassTooSmall(
                int(c), f"class {c}: split {n_train}/{n_test} leaves a side empty"
            )
        perm = rng.permutation(idx)
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return (
        FeatureTable(table.features[train_idx], table.labels[train_idx]),
        FeatureTable(table.features[test_idx], table.labels[test_idx]),
    )


# -- feature files ----------------------------------------------------------

def save_feature_table(table: FeatureTable, subclass_names, path) -> None:
    """Write the CSV feature format: header ``label,f0..``, one row each.

    Floats carry 17 significant digits so the file round-trips bit-exactly.
    """
    names = tuple(subclass_names)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label," + ",".join(f"f{j}" for j in range(table.dim)) + "\n")
        for row, label in zip(table.features, table.labels):
            fh.write(
                names[int(label)]
                + ","
                + ",".join(format_float(v) for v in row)
                + "\n"
            )


def load_feature_table(path, subclass_names) -> FeatureTable:
    """Parse a feature file, resolving labels against the name table."""
    name_to_id = {str(n): i for i, n in enumerate(subclass_names)}
    features, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("label,"):
            raise MalformedRow(f"{path}: missing 'label,f0,...' header")
        dim = len(header.rstrip("\n").split(",")) - 1
        if dim < 1:
            raise MalformedRow(f"{path}: header declares no feature columns")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != dim + 1:
                raise DimensionMismatch(
                    f"{path}:{lineno}: expected {dim} features, got {len(cells) - 1}"
                )
            label = cells[0]
            if label not in name_to_id:
                raise UnknownLabel(f"{path}:{lineno}: unknown label {label!r}")
            try:
                values = [float(v) for v in cells[1:]]
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in values):
                raise NonFiniteValue(f"{path}:{lineno}: non-finite feature value")
            labels.append(name_to_id[label])
            features.append(values)
    return FeatureTable(
        features=np.array(features, dtype=np.float64).reshape(len(labels), dim),
        labels=np.array(labels, dtype=np.int64),
    )
