import math
from collections import Counter

import numpy as np
import pytest

from oracles import kcenter_radius, optimal_kcenter_radius
from predcoreset.forecasting import Forecaster
from predcoreset.geometry import Coverage, CoverageAssignment, RepKind
from predcoreset.harness import (
    PipelineConfig,
    StreamDataset,
    binomial_floor,
    class_distribution,
    coverage_check,
    greedy_kcenter,
    kcenter_window_baseline,
    random_baseline,
    run_pipeline,
    run_sweep,
    to_json,
    validate_coverage,
)
from predcoreset.synthetic import random_walk_stream, regime_stream


def oracle_cfg(**kw):
    base = dict(n=3, delta=0.5, epsilon=0.05, sigma2=0.0, forecaster="oracle", normalize=False, seed=0)
    base.update(kw)
    return PipelineConfig(**base)


def test_dataset_validation():
    with pytest.raises(ValueError):
        StreamDataset(np.array([0, 2, 1]), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        StreamDataset(np.array([0, 1]), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        StreamDataset(np.arange(3), np.zeros((3, 1)), labels=np.array([1, 0, 2]))
    with pytest.raises(ValueError):
        StreamDataset(np.arange(3), np.array([[0.0], [np.nan], [1.0]]))
    with pytest.raises(ValueError):
        StreamDataset(np.arange(3), np.zeros((3, 1)), fit_end=4)


def test_huge_delta_collects_only_the_first_selection():
    ds = random_walk_stream(60, seed=1)
    rep = run_pipeline(ds, oracle_cfg(delta=1e6, initial_windows=0))
    assert rep.collected == 1
    assert rep.sampling_ratio == 1 / 60
    rep = run_pipeline(ds, oracle_cfg(delta=1e6, initial_windows=1))
    assert rep.collected == 3 and rep.candidates == 60


def test_tiny_delta_collects_all_distinct_values():
    rng = np.random.default_rng(2)
    X = rng.integers(0, 4, size=(90, 2)).astype(float)
    ds = StreamDataset(np.arange(90), X)
    rep = run_pipeline(ds, oracle_cfg(delta=1e-9, initial_windows=0))
    distinct = len({tuple(r) for r in X})
    dup_fraction = 1 - distinct / 90
    assert rep.sampling_ratio == pytest.approx(1 - dup_fraction, abs=1e-15)


def test_zero_error_every_window_covered():
    ds = random_walk_stream(300, seed=3)
    for kappa in (math.inf, 2):
        rep = run_pipeline(ds, oracle_cfg(kappa=kappa))
        assert all(rep.coverage.per_window) and rep.coverage.fraction == 1.0


def test_coverage_check_adversarial_window():
    truth = {0: np.array([0.0]), 1: np.array([0.4]), 2: np.array([5.0]), 3: np.array([0.1])}
    good = CoverageAssignment([Coverage(0, 0, RepKind.NEW, 0.0), Coverage(1, 0, RepKind.NEW, 0.3)])
    bad = CoverageAssignment([Coverage(2, 0, RepKind.NEW, 0.3), Coverage(3, 0, RepKind.EXISTING, 0.1)])
    stats = coverage_check([good, bad], truth, 0.5)
    assert stats.per_window == [True, False] and stats.fraction == 0.5
    with pytest.raises(ValueError):
        coverage_check([good], truth, 0.5, collected={1: truth[1]})
    with pytest.raises(ValueError):
        coverage_check([CoverageAssignment([Coverage(9, 0, RepKind.NEW, 0.0)])], truth, 0.5)


def test_binomial_floor_value():
    assert binomial_floor(0.1, 2000) == pytest.approx(0.9 - 3 * math.sqrt(0.09 / 2000), rel=1e-15)
    assert round(binomial_floor(0.1, 2000), 4) == 0.8799


def test_calibrated_oracle_coverage_small():
    cfg = oracle_cfg(n=5, delta=1.0, epsilon=0.1, sigma2=0.02, seed=5)
    res = validate_coverage(cfg, 300)
    assert res["windows"] == 300 and res["passed"]
    assert res["fraction"] >= res["floor_3sigma"]


def test_validate_rejects_non_oracle():
    with pytest.raises(ValueError):
        validate_coverage(PipelineConfig(forecaster="persistence", sigma2=0.1), 10)
    with pytest.raises(ValueError):
        validate_coverage(PipelineConfig(forecaster="oracle", sigma2=None), 10)


def test_validate_flags_uncalibrated_radii():
    # radii not shrunk for prediction error: predicted-space cover does not carry over to true values
    cfg = oracle_cfg(n=5, delta=1.0, epsilon=0.1, sigma2=0.1, delta0=1.0, delta1=1.0, seed=3)
    res = validate_coverage(cfg, 2000)
    assert not res["passed"]


def test_halved_delta0_stays_conservative():
    cfg = oracle_cfg(n=5, delta=1.0, epsilon=0.1, sigma2=0.02, seed=3)
    full = validate_coverage(cfg, 500)
    half = validate_coverage(oracle_cfg(n=5, delta=1.0, epsilon=0.1, sigma2=0.02, seed=3,
                                        delta0=full["delta0"] / 2, delta1=full["delta1"]), 500)
    assert half["passed"] and half["sampling_ratio"] >= full["sampling_ratio"]


def test_candidate_accounting_and_histogram():
    ds = regime_stream(1003, seed=4)
    rep = run_pipeline(ds, oracle_cfg(n=5, delta=0.4, sigma2=0.001, kappa=4))
    assert rep.dropped_epochs == [1000, 1001, 1002]
    assert rep.candidates == 5 + 5 * rep.windows == 1000
    assert rep.collected == len(rep.coreset)
    assert rep.sampling_ratio * rep.candidates == pytest.approx(rep.collected, abs=1e-9)
    assert int(rep.coreset.weights.sum()) == rep.candidates
    assert rep.class_histogram["total"] == rep.collected
    assert rep.weight_norm * math.sqrt(rep.collected) <= 4 + 1e-12


def test_pipeline_is_deterministic():
    ds = regime_stream(600, seed=1)
    for cfg in (oracle_cfg(n=4, delta=0.6, sigma2=0.01, seed=9),
                PipelineConfig(n=4, delta=10.0, forecaster="persistence", seed=9),
                PipelineConfig(n=4, delta=10.0, forecaster="ar", ar_order=1, seed=9, initial_windows=6)):
        a, b = run_pipeline(ds, cfg), run_pipeline(ds, cfg)
        assert to_json(a.to_dict()) == to_json(b.to_dict())


def test_fast_path_matches_general_path():
    ds = random_walk_stream(400, seed=6)
    a = run_pipeline(ds, oracle_cfg(n=1, delta=0.5, sigma2=0.01, seed=2))
    b = run_pipeline(ds, oracle_cfg(n=1, delta=0.5, sigma2=0.01, seed=2, threshold_fast_path=False))
    assert a.selected_epochs == b.selected_epochs


class Recorder(Forecaster):
    name = "recorder"

    def __init__(self, n, d):
        super().__init__(n, d)
        self.seen = []
        self.k = 0

    def observe(self, x):
        self.seen.append(np.array(x, dtype=float))

    def predict_window(self):
        self.k += 1
        return np.full((self.n, self.d), 100.0 * self.k)

    def mse_estimate(self):
        return np.zeros(self.d)


def test_unselected_epochs_feed_predictions_back():
    X = np.arange(12, dtype=float).reshape(12, 1)
    ds = StreamDataset(np.arange(12), X)
    f = Recorder(3, 1)
    rep = run_pipeline(ds, PipelineConfig(n=3, delta=1.0, sigma2=0.0, normalize=False), forecaster=f)
    seen = np.array(f.seen)[:, 0]
    # seed window observed as truth; each online window: one collected value, then two predictions
    assert list(seen[:3]) == [0, 1, 2]
    collected = set(rep.selected_epochs)
    for e in range(3, 12):
        expect = X[e, 0] if e in collected else 100.0 * ((e - 3) // 3 + 1)
        assert seen[e] == expect


def test_random_baseline():
    ds = StreamDataset(np.arange(200), np.zeros((200, 1)), fit_end=50)
    assert random_baseline(ds, 1.0) == list(range(50, 200))
    assert random_baseline(ds, 0.0) == []
    sel = random_baseline(ds, 0.33, seed=4)
    assert len(sel) == math.floor(0.33 * 150) and sel == random_baseline(ds, 0.33, seed=4)
    assert len(set(sel)) == len(sel) and min(sel) >= 50
    with pytest.raises(ValueError):
        random_baseline(ds, 1.2)


def test_random_baseline_inherits_label_mix():
    ds = regime_stream(20000, seed=0)
    sel = random_baseline(ds, 0.1, seed=1)
    counts = Counter(int(ds.labels[e]) for e in sel)
    k = len(sel)
    for c, p in ((1, 0.75), (2, 0.22), (3, 0.02), (4, 0.01)):
        assert abs(counts[c] - k * p) <= 3 * math.sqrt(k * p * (1 - p))


def test_greedy_kcenter_examples():
    assert greedy_kcenter([[0.0], [1.0], [10.0]], 2) == [0, 2]
    assert sorted(greedy_kcenter(np.eye(4), 4)) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        greedy_kcenter([[0.0]], 2)


def test_greedy_kcenter_two_approximation():
    rng = np.random.default_rng(7)
    for _ in range(150):
        n = int(rng.integers(2, 9))
        P = rng.uniform(0, 1, size=(n, 2))
        k = int(rng.integers(1, n + 1))
        assert kcenter_radius(P, greedy_kcenter(P, k)) <= 2 * optimal_kcenter_radius(P, k) + 1e-12


def test_kcenter_window_baseline():
    ds = StreamDataset(np.arange(7), np.array([[0.0], [1.0], [10.0], [3.0], [3.0], [9.0], [4.0]]))
    assert kcenter_window_baseline(ds, 3, 3, normalize=False) == [0, 1, 2, 3, 4, 5]
    assert kcenter_window_baseline(ds, 2, 3, normalize=False) == [0, 2, 3, 5]
    with pytest.raises(ValueError):
        kcenter_window_baseline(ds, 4, 3)


def test_class_distribution():
    single = {e: 2 for e in range(5)}
    out = class_distribution([0, 1, 2], single)
    assert out["counts"] == {"2": 3} and out["shares"] == {"2": 1.0} and out["max_min_ratio"] == 1.0
    ds = regime_stream(500, seed=3)
    full = class_distribution(list(ds.epochs), ds)
    assert full["counts"] == {str(c): int(v) for c, v in sorted(Counter(ds.labels.tolist()).items())}
    assert class_distribution([0], ds)["max_min_ratio"] == math.inf
    with pytest.raises(ValueError):
        class_distribution([0], {})
    with pytest.raises(ValueError):
        class_distribution([99], single)


def toy_dataset():
    X = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.3], [0.1, 0.1], [3.0, 3.0], [3.2, 3.0]])
    return StreamDataset(np.arange(6), X, np.array([1, 1, 1, 1, 2, 2]))


def test_sweep_kappa_monotone_on_toy():
    rows = run_sweep(toy_dataset(), oracle_cfg(delta=0.5), {"delta0": [0.5], "kappa": [1, 2, 3, math.inf]})
    collected = [r["collected"] for r in rows]
    assert collected == sorted(collected, reverse=True)
    assert all(r["monotone_kappa"] for r in rows)


def test_sweep_single_cell_equals_run():
    ds = regime_stream(400, seed=2)
    base = oracle_cfg(n=4, delta=0.6, sigma2=0.01)
    rep = run_pipeline(ds, base)
    (row,) = run_sweep(ds, base, {"kappa": [math.inf]})
    assert row["collected"] == rep.collected and row["weight_norm"] == rep.weight_norm
    assert row["delta0"] == rep.calibration["delta0"] and row["skipped"] is None


def test_sweep_skips_bad_cells():
    rows = run_sweep(toy_dataset(), oracle_cfg(), {"delta0": [-1.0, 0.5]})
    assert rows[0]["skipped"] and rows[1]["skipped"] is None
    with pytest.raises(ValueError):
        run_sweep(toy_dataset(), oracle_cfg(), {"delta2": [1.0]})


def test_sweep_delta0_monotone_under_zero_error():
    ds = random_walk_stream(500, seed=8)
    rows = run_sweep(ds, oracle_cfg(n=1), {"delta0": [1.0, 0.5, 0.25, 0.1]})
    ratios = [r["sampling_ratio"] for r in rows]
    assert ratios == sorted(ratios) and all(r["monotone_delta0"] for r in rows)


def test_infinite_radius_with_capacity_is_periodic():
    ds = random_walk_stream(100, seed=0)
    rep = run_pipeline(ds, oracle_cfg(n=1, kappa=4, delta0=math.inf, delta1=math.inf))
    assert rep.selected_epochs == list(range(0, 100, 4))


def test_radius_control_less_skewed_than_capacity_control():
    # n = 1: vary delta0 with unbounded capacity vs vary capacity with unbounded radius
    wins = 0
    for seed in range(5):
        ds = regime_stream(4000, seed=seed)
        rep = run_pipeline(ds, oracle_cfg(n=1, delta0=0.3, delta1=0.3, seed=seed))
        k = max(1, round(1 / rep.sampling_ratio))
        per = run_pipeline(ds, oracle_cfg(n=1, kappa=k, delta0=math.inf, delta1=math.inf, seed=seed))
        assert per.sampling_ratio >= rep.sampling_ratio * 0.5
        wins += rep.class_histogram["max_min_ratio"] < per.class_histogram["max_min_ratio"]
    assert wins >= 4


def test_report_json_is_stable_text():
    rep = run_pipeline(toy_dataset(), oracle_cfg())
    text = to_json(rep.to_dict())
    assert text.endswith("}\n") and '"kappa": "inf"' in text
    assert list(rep.to_dict())[:3] == ["provenance", "calibration", "candidates"]


def test_short_history_is_a_config_error():
    ds = regime_stream(300, seed=2)
    cfg = PipelineConfig(n=5, delta=1.0, epsilon=0.05, sigma2=0.01, forecaster="ar", normalize=False)
    with pytest.raises(ValueError, match="needs 22 history rows"):
        run_pipeline(ds, cfg)
    # the oracle reads the stream itself and needs no warm-up
    run_pipeline(ds, oracle_cfg(initial_windows=0))
