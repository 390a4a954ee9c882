"""Visual label-structure construction from class statistics.

Pipeline: per-class statistics -> pairwise class distances -> affinity
matrix -> normalized spectral embedding -> k-means -> a 3-level structure
whose superclasses are the clusters.

The squared class distance is ||Q_i - Q_j||^2 + var_i + var_j (mean
vectors plus scalar trace variances), i.e. the expected squared distance
between independent samples of the two classes. The affinity is
exp(-dis / delta) with the distance, not its square, and a zero diagonal.

Every stage is deterministic given its seed. The eigensolver is a cyclic
Jacobi rotation scheme with a declared convergence threshold, so results
are reproducible across platforms and reimplementations.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegeneratePoints,
    DimensionMismatch,
    EigensolverFailure,
    EmptyCluster,
    IsolatedClass,
)
from .features import ClassStats, FeatureTable, class_statistics
from .rng import derive_seed, rng_from_seed
from .taxonomy import LabelStructure, validate_structure


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric class-pair similarities in [0, 1] with a zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionMismatch("affinity matrix must be square")
        if not np.all(np.isfinite(values)):
            raise ValueError("affinity matrix contains non-finite entries")
        if not np.array_equal(values, values.T):
            raise ValueError("affinity matrix must be symmetric")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("affinity entries must lie in [0, 1]")
        if np.any(np.diagonal(values) != 0.0):
            raise ValueError("affinity diagonal must be zero")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def class_count(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SpectralEmbedding:
    """Unit-norm rows of the top-k eigenvectors of the normalized affinity."""

    coords: np.ndarray
    k: int

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != self.k:
            raise DimensionMismatch("coords must be an (N, k) matrix")
        if self.k > coords.shape[0]:
            raise DimensionMismatch("k cannot exceed the class count")
        norms = np.sqrt((coords * coords).sum(axis=1))
        if norms.size and (norms.min() <= 0.0 or np.abs(norms - 1.0).max() > 1e-9):
            raise IsolatedClass("embedding rows must have unit norm")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


def class_distance(mean_i, var_i: float, mean_j, var_j: float) -> float:
    """sqrt(||Q_i - Q_j||^2 + var_i + var_j); symmetric and non-negative."""
    mean_i = np.asarray(mean_i, dtype=np.float64)
    mean_j = np.asarray(mean_j, dtype=np.float64)
    if mean_i.shape != mean_j.shape:
        raise DimensionMismatch("class means must share a dimension")
    diff = mean_i - mean_j
    return float(np.sqrt(diff @ diff + float(var_i) + float(var_j)))


def class_distance_matrix(stats: ClassStats) -> np.ndarray:
    """All pairwise class distances, exactly symmetric with zero diagonal."""
    n = stats.class_count
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = class_distance(
                stats.means[i], stats.variances[i], stats.means[j], stats.variances[j]
            )
            dist[i, j] = dist[j, i] = d
    return dist


def affinity_matrix(stats: ClassStats, delta: float = 1.0) -> AffinityMatrix:
    """exp(-dis_ij / delta) off the diagonal, 0 on it.

    `delta` is the self-tuning scale of the exponential kernel; the
    default 1 follows the construction this pipeline reproduces.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    dist = class_distance_matrix(stats)
    values = np.exp(-dist / float(delta))
    np.fill_diagonal(values, 0.0)
    return AffinityMatrix(values=values)


def symmetric_eigen(
    matrix, *, tol: float = 1e-10, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Returns (eigenvalues, eigenvectors) with eigenvalues descending
    (stable order on ties) and eigenvectors as matching columns, each
    sign-fixed so its largest-magnitude component is positive. Converges
    when the off-diagonal Frobenius norm falls below `tol` times the
    matrix scale; exceeding `max_sweeps` raises EigensolverFailure.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("matrix must be square")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    vectors = np.eye(n)
    scale = np.sqrt((a * a).sum())
    threshold = tol * max(scale, 1e-300)

    converged = False
    for _ in range(max_sweeps):
        off = a - np.diag(np.diagonal(a))
        if np.sqrt((off * off).sum()) <= threshold:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vec_p, vec_q = vectors[:, p].copy(), vectors[:, q].copy()
                vectors[:, p] = c * vec_p - s * vec_q
                vectors[:, q] = s * vec_p + c * vec_q
    if not converged:
        off = a - np.diag(np.diagonal(a))
        if np.sqrt((off * off).sum()) > threshold:
            raise EigensolverFailure(
                f"no convergence within {max_sweeps} sweeps (n={n})"
            )

    eigenvalues = np.diagonal(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    for j in range(n):
        lead = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[lead, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return eigenvalues, vectors


def spectral_embedding(affinity: AffinityMatrix, k: int) -> SpectralEmbedding:
    """Top-k eigenvectors of D^{-1/2} A D^{-1/2}, rows normalized to unit length."""
    n = affinity.class_count
    if not 1 <= k <= n:
        raise DimensionMismatch(f"k must lie in [1, {n}], got {k}")
    degrees = affinity.values.sum(axis=1)
    if degrees.min() <= 0.0:
        isolated = np.flatnonzero(degrees <= 0.0)
        raise IsolatedClass(f"classes with zero affinity degree: {isolated.tolist()}")
    inv_sqrt = 1.0 / np.sqrt(degrees)
    normalized = affinity.values * inv_sqrt[:, None] * inv_sqrt[None, :]
    _, vectors = symmetric_eigen(normalized)
    coords = vectors[:, :k]
    norms = np.sqrt((coords * coords).sum(axis=1))
    if norms.min() <= 0.0:
        raise IsolatedClass("a class has a zero-norm embedding row")
    return SpectralEmbedding(coords=coords / norms[:, None], k=k)


def kmeans(
    points,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    restarts: int = 10,
) -> np.ndarray:
    """Lloyd's algorithm, best of `restarts` seeded greedy initializations.

    Each restart picks a random first center, then greedily adds the point
    farthest from the chosen centers. Iteration stops when assignments
    stabilize; empty clusters steal the point farthest from its center.
    Ties (distances, restarts) resolve toward the lower index. Returns the
    assignment with the lowest inertia; every cluster is non-empty.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if k < 1 or k > n:
        raise DegeneratePoints(f"need 1 <= k <= {n} points, got k={k}")
    if np.unique(pts, axis=0).shape[0] < k:
        raise DegeneratePoints(f"fewer than k={k} distinct points")

    best_assign, best_inertia = None, np.inf
    for restart in range(restarts):
        rng = rng_from_seed(derive_seed(seed, restart))
        first = int(rng.integers(n))
        center_ids = [first]
        nearest = ((pts - pts[first]) ** 2).sum(axis=1)
        while len(center_ids) < k:
            far = int(np.argmax(nearest))
            center_ids.append(far)
            nearest = np.minimum(nearest, ((pts - pts[far]) ** 2).sum(axis=1))
        centers = pts[center_ids].copy()

        assign = None
        for _ in range(max_iter):
            dist2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_assign = dist2.argmin(axis=1)
            new_assign = _repair_empty(new_assign, dist2, k)
            if assign is not None and np.array_equal(new_assign, assign):
                break
            assign = new_assign
            for j in range(k):
                centers[j] = pts[assign == j].mean(axis=0)
        diff = pts - centers[assign]
        inertia = float((diff * diff).sum())
        if inertia < best_inertia:
            best_inertia, best_assign = inertia, assign
    return best_assign


def _repair_empty(assign: np.ndarray, dist2: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the point farthest from its current center."""
    assign = assign.copy()
    for j in range(k):
        if np.any(assign == j):
            continue
        counts = np.bincount(assign, minlength=k)
        own = dist2[np.arange(assign.size), assign]
        movable = counts[assign] > 1
        if not movable.any():
            raise EmptyCluster(f"cannot repair empty cluster {j}")
        candidate = int(np.argmax(np.where(movable, own, -np.inf)))
        assign[candidate] = j
    return assign


def build_visual_structure(
    table: FeatureTable,
    k: int,
    delta: float = 1.0,
    seed: int = 0,
    *,
    subclass_names=None,
    name: str | None = None,
    class_count: int | None = None,
) -> LabelStructure:
    """Cluster classes by feature affinity into a 3-level structure.

    Composes class_statistics -> affinity_matrix -> spectral_embedding ->
    kmeans; superclass m (named "s{m}") holds exactly the classes of
    cluster m. Subclass names default to "c{id}"; the structure name
    defaults to "H_A_k{k}".
    """
    stats = class_statistics(table, class_count)
    affinity = affinity_matrix(stats, delta)
    embedding = spectral_embedding(affinity, k)
    assign = kmeans(embedding.coords, k, seed=seed)
    for j in range(k):
        if not np.any(assign == j):
            raise EmptyCluster(f"cluster {j} received no classes")
    if subclass_names is None:
        subclass_names = [f"c{i}" for i in range(stats.class_count)]
    subclass_names = tuple(subclass_names)
    if len(subclass_names) != stats.class_count:
        raise DimensionMismatch(
            f"{len(subclass_names)} names for {stats.class_count} classes"
        )
    return validate_structure(
        name=name if name is not None else f"H_A_k{k}",
        superclasses=[f"s{j}" for j in range(k)],
        subclass_names=subclass_names,
        parent_of={
            subclass_names[i]: f"s{int(assign[i])}" for i in range(stats.class_count)
        },
    )


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected partition agreement; 1.0 iff identical partitions."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape or a.size == 0:
        raise DimensionMismatch("label vectors must be non-empty and equal length")
    if a.size == 1:
        return 1.0
    _, a_ids = np.unique(a, return_inverse=True)
    _, b_ids = np.unique(b, return_inverse=True)
    contingency = np.zeros((a_ids.max() + 1, b_ids.max() + 1), dtype=np.int64)
    np.add.at(contingency, (a_ids, b_ids), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency.astype(np.float64)).sum()
    sum_rows = comb2(contingency.sum(axis=1).astype(np.float64)).sum()
    sum_cols = comb2(contingency.sum(axis=0).astype(np.float64)).sum()
    total = comb2(float(a.size))
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
