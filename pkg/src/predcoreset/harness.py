"""End-to-end sampling simulation over a recorded stream.

The selection range is cut into windows of ``n`` epochs (a trailing partial
window is dropped). The first ``initial_windows`` windows are collected in full
to seed the coreset; every later window goes through forecaster -> builder ->
collection. Epochs that were not collected are fed back to the forecaster as
their predicted values.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .bounds import BoundParams, bound_terms, coreset_objective, nu
from .builder import CoresetBuilder
from .calibration import CalibrationConfig, aggregate_sigma2, min_feasible_delta
from .cover import DEFAULT_EXACT_LIMIT
from .forecasting import Forecaster, make_forecaster
from .geometry import CoverageAssignment, Sample, WeightedCoreset, ZScore, distance, weight_norm

__all__ = [
    "StreamDataset",
    "PipelineConfig",
    "RunReport",
    "CoverageStats",
    "run_pipeline",
    "coverage_check",
    "random_baseline",
    "kcenter_window_baseline",
    "greedy_kcenter",
    "class_distribution",
    "run_sweep",
    "validate_coverage",
    "binomial_floor",
    "to_json",
]


@dataclass
class StreamDataset:
    epochs: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    fit_end: int = 0  # rows [0, fit_end) are forecaster history; the rest is the selection range
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.int64)
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        if self.features.shape[0] != len(self.epochs):
            raise ValueError("one feature row per epoch required")
        if len(self.epochs) and (np.any(np.diff(self.epochs) <= 0) or self.epochs[0] < 0):
            raise ValueError("epochs must be non-negative and strictly increasing")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != self.epochs.shape:
                raise ValueError("one label per epoch required")
            if self.labels.size and self.labels.min() < 1:
                raise ValueError("labels must be class numbers 1..C")
        if not (0 <= self.fit_end <= len(self.epochs)):
            raise ValueError("fit_end out of range")

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def selection_rows(self) -> range:
        return range(self.fit_end, len(self.epochs))

    def label_map(self) -> dict[int, int]:
        if self.labels is None:
            raise ValueError("dataset has no labels")
        return dict(zip(self.epochs.tolist(), self.labels.tolist()))


@dataclass
class PipelineConfig:
    n: int = 5
    delta: float = 1.0
    epsilon: float = 0.05
    kappa: float = math.inf
    sigma2: float | None = None  # None: use the forecaster's estimate after the history prefix
    sigma2_mode: str = "max"
    delta0: float | None = None  # explicit radii bypass calibration
    delta1: float | None = None
    normalize: bool = True
    initial_windows: int = 1
    exact_limit: int = DEFAULT_EXACT_LIMIT
    forecaster: str = "persistence"
    ar_order: int = 2
    seed: int = 0
    threshold_fast_path: bool = True
    bound: BoundParams | None = None

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if isinstance(v, BoundParams) else v
        return out


@dataclass
class CoverageStats:
    per_window: list[bool]
    fraction: float

    def to_dict(self) -> dict:
        return {"windows": len(self.per_window), "all_covered": sum(self.per_window), "fraction": self.fraction,
                "per_window": self.per_window}


@dataclass
class RunReport:
    config: dict
    forecaster: dict
    calibration: dict
    normalization: dict
    coreset: WeightedCoreset
    windows: int
    dropped_epochs: list[int]
    coverage: CoverageStats
    assignments: list[CoverageAssignment] = field(repr=False, default_factory=list)
    class_histogram: dict | None = None
    bound: dict | None = None

    @property
    def collected(self) -> int:
        return len(self.coreset)

    @property
    def candidates(self) -> int:
        return self.coreset.total_candidates

    @property
    def sampling_ratio(self) -> float:
        return self.collected / self.candidates

    @property
    def weight_norm(self) -> float:
        return weight_norm(self.coreset)

    @property
    def selected_epochs(self) -> list[int]:
        return sorted(self.coreset.epochs)

    def to_dict(self) -> dict:
        kappa = self.calibration["kappa"]
        return {
            "provenance": {"config": self.config, "forecaster": self.forecaster, "seed": self.config.get("seed"),
                           "normalization": self.normalization},
            "calibration": self.calibration,
            "candidates": self.candidates,
            "collected": self.collected,
            "sampling_ratio": self.sampling_ratio,
            "windows": self.windows,
            "dropped_epochs": self.dropped_epochs,
            "coreset": {
                "size": self.collected,
                "weight_sum": int(self.coreset.weights.sum()),
                "weight_norm": self.weight_norm,
                "weight_norm_bound": kappa / math.sqrt(self.collected) if math.isfinite(kappa) else None,
                "entries": [[e.epoch, e.weight, e.origin] for e in self.coreset.entries],
            },
            "coverage": self.coverage.to_dict(),
            "class_histogram": self.class_histogram,
            "bound": self.bound,
        }


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return float(f"{obj:.12g}")
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_json(obj) -> str:
    """Stable JSON text: insertion-ordered keys, floats at 12 significant digits."""
    return json.dumps(_clean(obj), indent=2) + "\n"


def coverage_check(assignments: Sequence[CoverageAssignment], truth: Mapping[int, Any], delta: float,
                   collected: Mapping[int, Any] | None = None) -> CoverageStats:
    """Mark a window covered iff every candidate's true value is within ``delta`` of its representative's.

    Representatives are looked up in ``collected`` when given (so a
    representative that was never collected is an error), else in ``truth``.
    """
    reps = truth if collected is None else collected
    per_window = []
    for asg in assignments:
        ok = True
        for pair in asg:
            if pair.candidate not in truth:
                raise ValueError(f"unresolvable candidate epoch {pair.candidate}")
            if pair.representative not in reps:
                raise ValueError(f"representative epoch {pair.representative} was not collected")
            x = truth[pair.candidate]
            r = reps[pair.representative]
            if distance(x, r) > delta:
                ok = False
                break
        per_window.append(ok)
    frac = sum(per_window) / len(per_window) if per_window else 1.0
    return CoverageStats(per_window, frac)


def binomial_floor(epsilon: float, windows: int) -> float:
    """Lowest all-covered fraction consistent with a 1 - epsilon target at 3 sigma."""
    return (1.0 - epsilon) - 3.0 * math.sqrt(epsilon * (1.0 - epsilon) / windows)


def _window_rows(dataset: StreamDataset, n: int) -> tuple[list[range], list[int]]:
    rows = dataset.selection_rows
    full = len(rows) // n
    windows = [range(rows.start + w * n, rows.start + (w + 1) * n) for w in range(full)]
    dropped = [int(dataset.epochs[r]) for r in range(rows.start + full * n, rows.stop)]
    return windows, dropped


def _normalizer(dataset: StreamDataset, history_end: int, enabled: bool) -> ZScore:
    if enabled and history_end >= 2:
        return ZScore.fit(dataset.features[:history_end])
    return ZScore.identity(dataset.d)


def run_pipeline(dataset: StreamDataset, config: PipelineConfig, forecaster: Forecaster | None = None) -> RunReport:
    """Stream ``dataset`` through forecaster and builder.

    All distances (radii, coverage) are in the normalised feature space when
    ``config.normalize`` is set; the z-score is fitted on the history prefix
    (forecaster-fit rows plus the fully collected seed windows). A supplied
    ``forecaster`` is fed normalised vectors.
    """
    n = config.n
    windows, dropped = _window_rows(dataset, n)
    if len(windows) < max(1, config.initial_windows):
        raise ValueError(f"dataset too short: {len(windows)} whole windows of n={n} in the selection range")
    seed_rows = [r for w in windows[: config.initial_windows] for r in w]
    online = windows[config.initial_windows :]
    history_end = dataset.fit_end + len(seed_rows)
    norm = _normalizer(dataset, history_end, config.normalize)
    Z = norm.transform(dataset.features)
    d = dataset.d

    if forecaster is None:
        sig = config.sigma2 if config.sigma2 is not None else 0.0
        forecaster = make_forecaster(config.forecaster, n, d, truth=Z, sigma2=sig, seed=config.seed,
                                     order=config.ar_order)
    need = getattr(forecaster, "min_history", 0)
    if history_end < need:
        raise ValueError(f"forecaster {forecaster.name!r} needs {need} history rows before the first online "
                         f"window, have {history_end}; raise fit_rows or initial_windows")
    for r in range(history_end):
        forecaster.observe(Z[r])
    if config.sigma2 is not None:
        sigma2 = float(config.sigma2)
    else:
        sigma2 = aggregate_sigma2(forecaster.mse_estimate(), config.sigma2_mode)

    if config.delta0 is not None or config.delta1 is not None:
        delta0 = config.delta0 if config.delta0 is not None else config.delta1
        delta1 = config.delta1 if config.delta1 is not None else config.delta0
        if not (delta0 >= 0 and delta1 >= 0):
            raise ValueError("explicit radii must be >= 0")
        min_delta = min_feasible_delta(config.epsilon, n, d, sigma2)
    else:
        cal = CalibrationConfig(config.delta, config.epsilon, n, d, sigma2, config.kappa)
        delta0, delta1, min_delta = cal.delta0, cal.delta1, cal.min_delta

    initial = [Sample(int(dataset.epochs[r]), Z[r]) for r in seed_rows]
    builder = CoresetBuilder(n, d, delta0, delta1, config.kappa, initial, exact_limit=config.exact_limit)
    fast = config.threshold_fast_path and n == 1 and math.isinf(config.kappa)

    assignments: list[CoverageAssignment] = []
    for rows in online:
        epochs = [int(dataset.epochs[r]) for r in rows]
        preds = forecaster.predict_window()
        if fast:
            decision = builder.threshold_step(preds[0], epochs[0])
        else:
            decision = builder.process_window(preds, epochs)
        collect = set(decision.collect_epochs)
        builder.ingest_collected([(e, Z[r]) for e, r in zip(epochs, rows) if e in collect])
        for pos, (e, r) in enumerate(zip(epochs, rows)):
            forecaster.observe(Z[r] if e in collect else preds[pos])
        assignments.append(decision.assignment)

    coreset = builder.finalize()
    truth = {int(dataset.epochs[r]): Z[r] for w in online for r in w}
    collected = {e.epoch: e.sample.features for e in coreset.entries}
    coverage = coverage_check(assignments, truth, config.delta, collected)

    histogram = None
    if dataset.labels is not None:
        histogram = class_distribution(coreset.epochs, dataset)
    bound = None
    if config.bound is not None:
        terms = bound_terms(coreset, config.delta, config.bound)
        bound = {**terms.to_dict(), "nu": nu(config.bound),
                 "objective": coreset_objective(config.delta, coreset, nu(config.bound))}

    calibration = {"delta": config.delta, "epsilon": config.epsilon, "n": n, "d": d, "sigma2": sigma2,
                   "kappa": config.kappa, "delta0": delta0, "delta1": delta1, "min_feasible_delta": min_delta,
                   "explicit_radii": config.delta0 is not None or config.delta1 is not None}
    return RunReport(
        config=config.to_dict(),
        forecaster=forecaster.describe(),
        calibration=calibration,
        normalization={"enabled": bool(config.normalize and history_end >= 2), "mean": norm.mean.tolist(),
                       "scale": norm.scale.tolist()},
        coreset=coreset,
        windows=len(online),
        dropped_epochs=dropped,
        coverage=coverage,
        assignments=assignments,
        class_histogram=histogram,
        bound=bound,
    )


def random_baseline(dataset: StreamDataset | Sequence[int], ratio: float, seed: int = 0) -> list[int]:
    """Uniform sample without replacement of floor(ratio * N) candidate epochs."""
    if not (0.0 <= ratio <= 1.0):
        raise ValueError("ratio must lie in [0, 1]")
    if isinstance(dataset, StreamDataset):
        pool = dataset.epochs[dataset.fit_end :]
    else:
        pool = np.asarray(list(dataset), dtype=np.int64)
    k = min(len(pool), int(math.floor(ratio * len(pool) + 1e-9)))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=k, replace=False) if k else np.array([], dtype=int)
    return sorted(int(pool[i]) for i in picked)


def greedy_kcenter(points, k: int) -> list[int]:
    """Farthest-point traversal from index 0; ties go to the smallest index."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if k > len(P):
        raise ValueError(f"k={k} exceeds the number of points {len(P)}")
    if k <= 0:
        return []
    picks = [0]
    mind = np.sqrt(((P - P[0]) ** 2).sum(axis=1))
    while len(picks) < k:
        mind_masked = mind.copy()
        mind_masked[picks] = -1.0
        j = int(np.argmax(mind_masked))
        picks.append(j)
        mind = np.minimum(mind, np.sqrt(((P - P[j]) ** 2).sum(axis=1)))
    return picks


def kcenter_window_baseline(dataset: StreamDataset, k: int, n: int, normalize: bool = True,
                            initial_windows: int = 1) -> list[int]:
    """Per-window greedy k-center on the true samples (needs every sample, so it is cost-unaware).

    Distances use the same z-score as :func:`run_pipeline` with matching
    ``initial_windows``.
    """
    if k > n:
        raise ValueError(f"k={k} exceeds window length n={n}")
    windows, _ = _window_rows(dataset, n)
    norm = _normalizer(dataset, dataset.fit_end + n * initial_windows, normalize)
    Z = norm.transform(dataset.features)
    out: list[int] = []
    for rows in windows:
        rows = list(rows)
        out.extend(int(dataset.epochs[rows[i]]) for i in greedy_kcenter(Z[rows], k))
    return sorted(out)


def class_distribution(selection: Sequence[int], labels) -> dict:
    """Per-class counts of a selection and the max/min class-share ratio.

    ``labels`` is a dataset or an epoch -> label mapping; every class present
    in it gets a bin, even if nothing was selected from it.
    """
    if isinstance(labels, StreamDataset):
        labels = labels.label_map()
    if not labels:
        raise ValueError("labels are required")
    classes = sorted(set(labels.values()))
    counts = {c: 0 for c in classes}
    for e in selection:
        if e not in labels:
            raise ValueError(f"epoch {e} has no label")
        counts[labels[e]] += 1
    total = sum(counts.values())
    shares = {c: (counts[c] / total if total else 0.0) for c in classes}
    lo, hi = min(shares.values()), max(shares.values())
    skew = (hi / lo) if lo > 0 else math.inf
    return {"counts": {str(c): counts[c] for c in classes}, "shares": {str(c): shares[c] for c in classes},
            "total": total, "max_min_ratio": skew}


def _sweep_cell(args) -> dict:
    dataset, base, overrides = args
    cfg = dataclasses.replace(base, **overrides)
    row: dict = {k: overrides.get(k) for k in ("delta0", "delta1", "kappa")}
    try:
        rep = run_pipeline(dataset, cfg)
    except ValueError as exc:
        return {**row, "skipped": str(exc)}
    bp = cfg.bound or BoundParams()
    radius = cfg.delta if cfg.delta0 is None and cfg.delta1 is None else max(rep.calibration["delta0"],
                                                                           rep.calibration["delta1"])
    skew = rep.class_histogram["max_min_ratio"] if rep.class_histogram else None
    return {**row, "delta0": rep.calibration["delta0"], "delta1": rep.calibration["delta1"],
            "kappa": cfg.kappa, "collected": rep.collected, "candidates": rep.candidates,
            "sampling_ratio": rep.sampling_ratio, "weight_norm": rep.weight_norm,
            "objective": coreset_objective(radius, rep.coreset, nu(bp)), "skew": skew,
            "coverage_fraction": rep.coverage.fraction, "skipped": None}


def run_sweep(dataset: StreamDataset, base: PipelineConfig, grid: Mapping[str, Sequence], jobs: int = 1) -> list[dict]:
    """One pipeline run per cell of the (delta0, delta1, kappa) grid.

    A grid without ``delta1`` reuses each cell's ``delta0`` for it. Cells that
    fail validation are kept as rows with a ``skipped`` reason. Two sanity
    flags are attached: sampling ratio nondecreasing as delta0 shrinks, and
    collected count nonincreasing as kappa grows, each within groups holding
    the other parameters fixed.
    """
    unknown = set(grid) - {"delta0", "delta1", "kappa"}
    if unknown:
        raise ValueError(f"unknown grid axes {sorted(unknown)}")
    d0s = list(grid.get("delta0", [None]))
    d1s = list(grid.get("delta1", [None]))
    ks = list(grid.get("kappa", [base.kappa]))
    if not (d0s and d1s and ks):
        raise ValueError("empty grid")
    cells = []
    for d0 in d0s:
        for d1 in d1s:
            for k in ks:
                ov: dict = {"kappa": k}
                if d0 is not None or d1 is not None:
                    ov["delta0"] = d0 if d0 is not None else base.delta0
                    ov["delta1"] = d1 if d1 is not None else (d0 if d0 is not None else base.delta1)
                cells.append((dataset, base, ov))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    _flag_monotone(rows)
    return rows


def _flag_monotone(rows: list[dict]) -> None:
    live = [r for r in rows if not r.get("skipped")]
    for r in rows:
        r["monotone_delta0"] = None
        r["monotone_kappa"] = None
    groups: dict = {}
    for r in live:
        groups.setdefault((r["delta1"], r["kappa"]), []).append(r)
    for g in groups.values():
        g.sort(key=lambda r: -r["delta0"])
        prev = None
        for r in g:
            r["monotone_delta0"] = prev is None or r["sampling_ratio"] >= prev["sampling_ratio"]
            prev = r
    groups = {}
    for r in live:
        groups.setdefault((r["delta0"], r["delta1"]), []).append(r)
    for g in groups.values():
        g.sort(key=lambda r: r["kappa"])
        prev = None
        for r in g:
            r["monotone_kappa"] = prev is None or r["collected"] <= prev["collected"]
            prev = r


def validate_coverage(config: PipelineConfig, trials: int, dataset: StreamDataset | None = None, d: int = 2,
                      stream_seed: int = 0) -> dict:
    """Monte Carlo check of the all-covered-window fraction under the Gaussian oracle."""
    if config.forecaster != "oracle":
        raise ValueError("coverage validation needs the Gaussian oracle forecaster")
    if config.sigma2 is None:
        raise ValueError("coverage validation needs a fixed sigma2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if dataset is None:
        from .synthetic import random_walk_stream
        dataset = random_walk_stream((config.initial_windows + trials) * config.n, d=d, seed=stream_seed)
    rep = run_pipeline(dataset, config)
    w = rep.windows
    floor = binomial_floor(config.epsilon, w) if w else 1.0 - config.epsilon
    return {
        "windows": w,
        "fraction": rep.coverage.fraction,
        "target": 1.0 - config.epsilon,
        "floor_3sigma": floor,
        "passed": rep.coverage.fraction >= floor,
        "delta0": rep.calibration["delta0"],
        "delta1": rep.calibration["delta1"],
        "sampling_ratio": rep.sampling_ratio,
        "report": rep,
    }
