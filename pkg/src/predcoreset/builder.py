"""Online predictive coreset construction, one prediction window at a time.

Per window: each predicted point (ascending epoch) is first matched to the
nearest collected sample within ``delta0`` whose weight is still below
``kappa``; the leftovers are covered among the predicted points themselves at
radius ``delta1`` by the capacitated cover solver. The caller then collects
the selected epochs and hands the actual samples back via
:meth:`CoresetBuilder.ingest_collected`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .calibration import CalibrationConfig
from .cover import DEFAULT_EXACT_LIMIT, CoverInstance, solve
from .geometry import (
    CoresetEntry,
    Coverage,
    CoverageAssignment,
    PointIndex,
    RepKind,
    Sample,
    WeightedCoreset,
    row_distances,
)

__all__ = ["WindowDecision", "CoresetBuilder", "ProtocolError"]


class ProtocolError(RuntimeError):
    """Collection protocol violated (wrong epochs, window still in flight...)."""


@dataclass
class WindowDecision:
    window: int
    epochs: list[int]
    collect_epochs: list[int]
    assignment: CoverageAssignment
    residual: list[int]  # epochs left for the cover solver
    loads: dict[int, int]  # collect epoch -> number of candidates it represents


class CoresetBuilder:
    """Mutable state of one stream: collected samples, weights and radii."""

    def __init__(
        self,
        n: int,
        d: int,
        delta0: float,
        delta1: float,
        kappa: float = math.inf,
        initial: Iterable[Sample] = (),
        exact_limit: int = DEFAULT_EXACT_LIMIT,
        use_tree: bool = True,
    ):
        if n < 1 or d < 1:
            raise ValueError("n and d must be positive")
        if not (delta0 >= 0 and delta1 >= 0):
            raise ValueError(f"radii must be >= 0, got delta0={delta0}, delta1={delta1}")
        if not (kappa == math.inf or (float(kappa).is_integer() and kappa >= 1)):
            raise ValueError("kappa must be a positive integer or inf")
        self.n, self.d = int(n), int(d)
        self.delta0, self.delta1 = float(delta0), float(delta1)
        self.kappa = kappa
        self.exact_limit = exact_limit
        self.entries: list[CoresetEntry] = []
        self._weights = np.zeros(16, dtype=np.int64)
        self._index = PointIndex(self.d, use_tree=use_tree)
        self._epochs: set[int] = set()
        self.total_candidates = 0
        self.window_index = 0
        self.pending: WindowDecision | None = None
        self._next_epoch = 0
        for s in initial:
            self._append(s, 1, None)
            self.total_candidates += 1

    @classmethod
    def from_config(cls, config: CalibrationConfig, initial: Iterable[Sample] = (), **kw) -> "CoresetBuilder":
        return cls(config.n, config.d, config.delta0, config.delta1, config.kappa, initial, **kw)

    @property
    def s0(self) -> int:
        return sum(1 for e in self.entries if e.window is None)

    def _append(self, sample: Sample, weight: int, window: int | None) -> None:
        if sample.features.shape != (self.d,):
            raise ValueError(f"epoch {sample.epoch}: expected dimension {self.d}")
        if sample.epoch in self._epochs:
            raise ProtocolError(f"epoch {sample.epoch} collected twice")
        if len(self.entries) == len(self._weights):
            self._weights = np.concatenate([self._weights, np.zeros_like(self._weights)])
        self._weights[len(self.entries)] = weight
        self.entries.append(CoresetEntry(sample, weight, window))
        self._index.add(sample.features)
        self._epochs.add(sample.epoch)
        self._next_epoch = max(self._next_epoch, sample.epoch + 1)

    def _bump(self, k: int) -> None:
        self._weights[k] += 1
        self.entries[k].weight += 1

    def _nearest_eligible(self, x: np.ndarray) -> tuple[int, float]:
        m = len(self.entries)
        if m == 0:
            return -1, math.inf
        if math.isinf(self.kappa):
            return self._index.nearest(x)
        eligible = np.flatnonzero(self._weights[:m] < self.kappa)
        if eligible.size == 0:
            return -1, math.inf
        dists = row_distances(self._index.points[eligible], x)
        k = int(np.argmin(dists))
        return int(eligible[k]), float(dists[k])

    def _check_window(self, predictions, epochs) -> tuple[np.ndarray, list[int]]:
        if self.pending is not None:
            raise ProtocolError("previous window has not been ingested")
        P = np.asarray(predictions, dtype=float)
        if P.shape != (self.n, self.d):
            raise ValueError(f"expected predictions of shape {(self.n, self.d)}, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError("non-finite prediction")
        if epochs is None:
            epochs = list(range(self._next_epoch, self._next_epoch + self.n))
        epochs = [int(e) for e in epochs]
        if len(epochs) != self.n or len(set(epochs)) != self.n:
            raise ValueError("need n distinct epochs")
        if self._epochs.intersection(epochs):
            raise ProtocolError("window epoch already collected")
        return P, epochs

    def process_window(self, predictions, epochs: Sequence[int] | None = None) -> WindowDecision:
        P, epochs = self._check_window(predictions, epochs)
        order = sorted(range(self.n), key=lambda i: epochs[i])
        pairs: list[Coverage] = []
        residual: list[int] = []
        for i in order:
            k, dist = self._nearest_eligible(P[i])
            if k >= 0 and dist <= self.delta0:
                self._bump(k)
                pairs.append(Coverage(epochs[i], self.entries[k].epoch, RepKind.EXISTING, dist))
            else:
                residual.append(i)
        sol = solve(CoverInstance(P, residual, self.delta1, self.kappa), self.exact_limit)
        for i in residual:
            j = sol.assignment[i]
            dist = float(row_distances(P[j : j + 1], P[i])[0])
            pairs.append(Coverage(epochs[i], epochs[j], RepKind.NEW, dist))
        pairs.sort(key=lambda c: c.candidate)
        self.window_index += 1
        self._next_epoch = max(self._next_epoch, max(epochs) + 1)
        self.pending = WindowDecision(
            window=self.window_index,
            epochs=sorted(epochs),
            collect_epochs=sorted(epochs[j] for j in sol.selected),
            assignment=CoverageAssignment(pairs),
            residual=sorted(epochs[i] for i in residual),
            loads={epochs[j]: sol.loads[j] for j in sol.selected},
        )
        return self.pending

    def ingest_collected(self, actual: Iterable) -> None:
        """Merge the collected samples; ``actual`` holds ``Sample`` or ``(epoch, features)`` items."""
        if self.pending is None:
            raise ProtocolError("no window awaiting collection")
        samples = [a if isinstance(a, Sample) else Sample(int(a[0]), a[1]) for a in actual]
        got = sorted(s.epoch for s in samples)
        if got != self.pending.collect_epochs:
            raise ProtocolError(f"collected epochs {got} != requested {self.pending.collect_epochs}")
        for s in sorted(samples, key=lambda s: s.epoch):
            self._append(s, self.pending.loads[s.epoch], self.pending.window)
        self.total_candidates += self.n
        self.pending = None

    def threshold_decide(self, prediction) -> bool:
        """One-step, unbounded-capacity rule: collect iff nothing collected lies within ``delta0``."""
        if self.n != 1 or not math.isinf(self.kappa):
            raise ValueError("threshold policy requires n = 1 and kappa = inf")
        x = np.asarray(prediction, dtype=float).reshape(-1)
        if not self.entries:
            return True
        return self._index.nearest(x)[1] > self.delta0

    def threshold_step(self, prediction, epoch: int | None = None) -> WindowDecision:
        """Threshold-policy counterpart of :meth:`process_window` for ``n = 1``."""
        P, epochs = self._check_window(np.asarray(prediction, dtype=float).reshape(1, -1), None if epoch is None else [epoch])
        e = epochs[0]
        self.window_index += 1
        self._next_epoch = max(self._next_epoch, e + 1)
        if self.threshold_decide(P[0]):
            decision = WindowDecision(self.window_index, [e], [e], CoverageAssignment([Coverage(e, e, RepKind.NEW, 0.0)]),
                                      [e], {e: 1})
        else:
            k, dist = self._index.nearest(P[0])
            self._bump(k)
            decision = WindowDecision(self.window_index, [e], [],
                                      CoverageAssignment([Coverage(e, self.entries[k].epoch, RepKind.EXISTING, dist)]), [], {})
        self.pending = decision
        return decision

    def finalize(self) -> WeightedCoreset:
        if self.pending is not None:
            raise ProtocolError("cannot finalize with a window in flight")
        entries = [CoresetEntry(e.sample, e.weight, e.window) for e in self.entries]
        return WeightedCoreset(entries, self.total_candidates)

    def max_weight(self) -> int:
        return int(self._weights[: len(self.entries)].max()) if self.entries else 0
