"""Points, distances, delta-covers, nearest-neighbour search and weighted coresets.

Every distance in the package goes through :func:`row_distances` so that the
linear scan, the k-d tree and the cover predicates agree bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Sample",
    "CoresetEntry",
    "WeightedCoreset",
    "RepKind",
    "Coverage",
    "CoverageAssignment",
    "KDTree",
    "PointIndex",
    "ZScore",
    "row_distances",
    "distance",
    "is_delta_cover",
    "nearest_neighbor",
    "weight_norm",
    "satisfies_weight_bound",
]


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    return arr


def row_distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Euclidean distance from ``query`` to every row of ``points``."""
    diff = points - query
    return np.sqrt((diff * diff).sum(axis=1))


def distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite coordinates")
    return float(row_distances(a.reshape(1, -1), b)[0])


def nearest_neighbor(query, points) -> tuple[int, float]:
    """Linear-scan nearest neighbour. Ties go to the smallest index."""
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise ValueError("nearest_neighbor on an empty point set")
    q = np.asarray(query, dtype=float)
    if q.shape != (pts.shape[1],):
        raise ValueError(f"dimension mismatch: query {q.shape}, points {pts.shape}")
    dists = row_distances(pts, q)
    idx = int(np.argmin(dists))
    return idx, float(dists[idx])


def is_delta_cover(A, B, delta: float) -> bool:
    """True iff every point of ``A`` lies within ``delta`` (inclusive) of some point of ``B``."""
    a = _as_points(A)
    if a.shape[0] == 0:
        return True
    b = _as_points(B)
    if b.shape[0] == 0:
        return False
    for q in a:
        if row_distances(b, q).min() > delta:
            return False
    return True


class KDTree:
    """Exact nearest-neighbour k-d tree over a fixed point array.

    Splits on the axis of largest spread at the median. Query results match
    :func:`nearest_neighbor` exactly, including the smallest-index tie rule.
    """

    leaf_size = 16

    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(points, dtype=float)
        n = self.points.shape[0]
        # node arrays: axis (-1 for leaf), split value, children, leaf index slices
        self._axis: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._idx: list[np.ndarray | None] = []
        if n:
            self._build(np.arange(n))

    def _new_node(self) -> int:
        self._axis.append(-1)
        self._split.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._idx.append(None)
        return len(self._axis) - 1

    def _build(self, idx: np.ndarray) -> int:
        node = self._new_node()
        pts = self.points[idx]
        if len(idx) <= self.leaf_size:
            self._idx[node] = np.sort(idx)
            return node
        spread = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] == 0.0:
            self._idx[node] = np.sort(idx)
            return node
        order = np.argsort(pts[:, axis], kind="stable")
        mid = len(idx) // 2
        split = float(pts[order[mid], axis])
        left = idx[order[:mid]]
        right = idx[order[mid:]]
        self._axis[node] = axis
        self._split[node] = split
        left_node = self._build(left)
        right_node = self._build(right)
        self._left[node] = left_node
        self._right[node] = right_node
        return node

    def query(self, q: np.ndarray) -> tuple[int, float]:
        if self.points.shape[0] == 0:
            raise ValueError("query on an empty tree")
        q = np.asarray(q, dtype=float)
        best = [math.inf, -1]
        self._query(0, q, best)
        return best[1], best[0]

    def _query(self, node: int, q: np.ndarray, best: list) -> None:
        leaf = self._idx[node]
        if leaf is not None:
            dists = row_distances(self.points[leaf], q)
            k = int(np.argmin(dists))
            d = float(dists[k])
            i = int(leaf[k])
            if d < best[0] or (d == best[0] and i < best[1]):
                best[0], best[1] = d, i
            return
        axis = self._axis[node]
        diff = float(q[axis]) - self._split[node]
        # left holds coords <= split, right holds coords >= split
        near, far = (self._left[node], self._right[node]) if diff < 0 else (self._right[node], self._left[node])
        self._query(near, q, best)
        # prune only on a strict gap so equal-distance smaller indices are still reached
        if abs(diff) <= best[0] * (1.0 + 1e-12):
            self._query(far, q, best)


class PointIndex:
    """Growable point set with nearest-neighbour queries.

    A k-d tree covers the first ``tree_size`` points; later insertions sit in a
    linear tail until the set doubles, at which point the tree is rebuilt.
    """

    def __init__(self, dim: int, use_tree: bool = True):
        self.dim = dim
        self.use_tree = use_tree
        self._buf = np.empty((16, dim), dtype=float)
        self._n = 0
        self._tree: KDTree | None = None
        self._tree_size = 0

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._buf[: self._n]

    def add(self, point) -> int:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got {p.shape}")
        if self._n == self._buf.shape[0]:
            grown = np.empty((2 * self._buf.shape[0], self.dim), dtype=float)
            grown[: self._n] = self._buf[: self._n]
            self._buf = grown
        self._buf[self._n] = p
        self._n += 1
        if self.use_tree and self._n >= 2 * max(self._tree_size, 32):
            self._tree = KDTree(self._buf[: self._n].copy())
            self._tree_size = self._n
        return self._n - 1

    def nearest(self, query) -> tuple[int, float]:
        if self._n == 0:
            raise ValueError("nearest on an empty index")
        q = np.asarray(query, dtype=float)
        if self._tree is None:
            return nearest_neighbor(q, self.points)
        best_i, best_d = self._tree.query(q)
        if self._n > self._tree_size:
            k, d = nearest_neighbor(q, self._buf[self._tree_size : self._n])
            if d < best_d:
                best_i, best_d = self._tree_size + k, d
        return best_i, best_d


@dataclass
class ZScore:
    """Per-feature standardisation fitted on a history prefix."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "ZScore":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.where(std > 0, std, 1.0)
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, d: int) -> "ZScore":
        return cls(mean=np.zeros(d), scale=np.ones(d))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


@dataclass(eq=False)
class Sample:
    epoch: int
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 1:
            raise ValueError("features must be a 1-d vector")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"epoch {self.epoch}: non-finite features")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")


@dataclass(eq=False)
class CoresetEntry:
    sample: Sample
    weight: int
    window: int | None = None  # None marks an initial sample

    @property
    def epoch(self) -> int:
        return self.sample.epoch

    @property
    def origin(self) -> str:
        return "initial" if self.window is None else f"window:{self.window}"


@dataclass(eq=False)
class WeightedCoreset:
    """Collected samples with multiplicity weights.

    Entries are identified by the epoch of their sample.
    """

    entries: list[CoresetEntry]
    total_candidates: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.entries], dtype=np.int64)

    @property
    def epochs(self) -> list[int]:
        return [e.epoch for e in self.entries]

    def check(self, kappa: float = math.inf) -> None:
        w = self.weights
        if np.any(w < 1):
            raise ValueError("every weight must be >= 1")
        if int(w.sum()) > self.total_candidates:
            raise ValueError("weights exceed the candidate count")
        if math.isfinite(kappa) and np.any(w > kappa):
            raise ValueError(f"weight above capacity {kappa}")


def weight_norm(coreset: WeightedCoreset) -> float:
    """Norm of the normalised weight vector ``u_j / total_candidates``."""
    w = coreset.weights.astype(float) / coreset.total_candidates
    return float(math.sqrt(float((w * w).sum())))


def satisfies_weight_bound(coreset: WeightedCoreset, kappa: float) -> bool:
    """Exact integer check of ``weight_norm <= kappa / sqrt(|S|)``."""
    if not math.isfinite(kappa):
        return True
    sq = sum(int(e.weight) ** 2 for e in coreset.entries)
    return sq * len(coreset) <= int(kappa) ** 2 * coreset.total_candidates ** 2


class RepKind(str, enum.Enum):
    EXISTING = "existing"
    NEW = "new"


@dataclass(frozen=True)
class Coverage:
    candidate: int  # epoch
    representative: int  # epoch of the representing coreset entry
    kind: RepKind
    distance: float  # in prediction space


@dataclass
class CoverageAssignment:
    pairs: list[Coverage] = field(default_factory=list)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def check(self, delta0: float, delta1: float, epochs: Iterable[int] | None = None) -> None:
        seen = [p.candidate for p in self.pairs]
        if len(set(seen)) != len(seen):
            raise ValueError("candidate assigned more than once")
        if epochs is not None and sorted(seen) != sorted(epochs):
            raise ValueError("assignment does not cover the window exactly")
        for p in self.pairs:
            bound = delta0 if p.kind is RepKind.EXISTING else delta1
            if p.distance > bound:
                raise ValueError(f"epoch {p.candidate}: distance {p.distance} beyond {bound}")

    def to_rows(self) -> list[dict]:
        return [
            {"candidate": p.candidate, "representative": p.representative, "kind": p.kind.value, "distance": p.distance}
            for p in self.pairs
        ]


def coreset_from_weights(points: Sequence, weights: Sequence[int], total: int | None = None) -> WeightedCoreset:
    """Convenience constructor used in tests and diagnostics."""
    entries = [CoresetEntry(Sample(i, np.atleast_1d(p)), int(w)) for i, (p, w) in enumerate(zip(points, weights))]
    return WeightedCoreset(entries, int(total if total is not None else sum(weights)))
