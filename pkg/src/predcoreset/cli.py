"""Command-line front end.

Settings are merged in increasing priority: built-in defaults, the JSON file
given by ``--config``, ``PREDCORESET_*`` environment variables (flag name in
upper case with dashes as underscores, e.g. ``PREDCORESET_WINDOW_N``), and
finally command-line flags.

Exit codes: 0 success, 2 infeasible or invalid configuration, 3 data error,
4 validation failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

from .bounds import BoundParams
from .calibration import InfeasibleConfigError, derive_radii, min_feasible_delta
from .dataio import DataError, read_stream_csv, write_selection_csv
from .harness import (
    PipelineConfig,
    class_distribution,
    kcenter_window_baseline,
    random_baseline,
    run_pipeline,
    run_sweep,
    to_json,
    validate_coverage,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VALIDATION = 0, 2, 3, 4
ENV_PREFIX = "PREDCORESET_"

DEFAULTS = {
    "dataset": None,
    "features": None,
    "label": None,
    "epoch_column": "epoch",
    "fit_rows": 0,
    "window_n": 5,
    "dimension": None,
    "delta": 1.0,
    "epsilon": 0.05,
    "kappa": "inf",
    "sigma2": None,
    "sigma2_mode": "max",
    "delta0": None,
    "delta1": None,
    "normalize": True,
    "initial_windows": 1,
    "exact_limit": 20,
    "forecaster": "persistence",
    "ar_order": 2,
    "seed": 0,
    "trials": 2000,
    "baseline": None,
    "ratio": None,
    "out": None,
    "bound": None,
    "grid": None,
    "jobs": 1,
}

# flag name -> (config key, parser)
FLAGS = {
    "dataset": ("dataset", str),
    "features": ("features", lambda s: [c.strip() for c in s.split(",") if c.strip()]),
    "label": ("label", str),
    "epoch-column": ("epoch_column", str),
    "fit-rows": ("fit_rows", int),
    "window-n": ("window_n", int),
    "dimension": ("dimension", int),
    "delta": ("delta", float),
    "epsilon": ("epsilon", float),
    "kappa": ("kappa", str),
    "sigma2": ("sigma2", str),
    "sigma2-mode": ("sigma2_mode", str),
    "delta0": ("delta0", float),
    "delta1": ("delta1", float),
    "normalize": ("normalize", lambda s: s.lower() in ("1", "true", "yes", "on")),
    "initial-windows": ("initial_windows", int),
    "exact-limit": ("exact_limit", int),
    "forecaster": ("forecaster", str),
    "ar-order": ("ar_order", int),
    "seed": ("seed", int),
    "trials": ("trials", int),
    "baseline": ("baseline", str),
    "ratio": ("ratio", float),
    "out": ("out", str),
    "jobs": ("jobs", int),
}


class ConfigError(ValueError):
    pass


def parse_kappa(value) -> float:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("inf", "infinite", "infinity", "none")):
        return math.inf
    k = float(value)
    if math.isinf(k):
        return math.inf
    if not k.is_integer() or k < 1:
        raise ConfigError(f"kappa must be a positive integer or 'inf', got {value!r}")
    return int(k)


def _parse_sigma2(value) -> float | None:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("estimate", "forecaster", "")):
        return None
    return float(value)


def _grid_list(text: str, kappa: bool = False) -> list:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    return [parse_kappa(v) if kappa else float(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    for flag in FLAGS:
        common.add_argument(f"--{flag}", default=None)
    ap = argparse.ArgumentParser(prog="predcoreset", description="Predictive coreset sampling for sensor streams")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="print shrunken radii and the feasibility bound")
    sub.add_parser("run", parents=[common], help="run the sampling pipeline on a CSV stream")
    sub.add_parser("validate", parents=[common], help="Monte Carlo coverage check under the Gaussian oracle")
    sw = sub.add_parser("sweep", parents=[common], help="grid over delta0, delta1 and kappa")
    sw.add_argument("--grid-delta0")
    sw.add_argument("--grid-delta1")
    sw.add_argument("--grid-kappa")
    return ap


def load_settings(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        ds = loaded.get("dataset")
        if ds and not Path(ds).is_absolute():
            loaded["dataset"] = str(Path(args.config).parent / ds)
        cfg.update(loaded)
    for flag, (key, conv) in FLAGS.items():
        env = environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
        raw = getattr(args, flag.replace("-", "_"))
        for value in (env, raw):
            if value is not None:
                try:
                    cfg[key] = conv(value)
                except ValueError as exc:
                    raise ConfigError(f"--{flag}: {exc}") from None
    grid = dict(cfg.get("grid") or {})
    for axis in ("delta0", "delta1", "kappa"):
        raw = getattr(args, f"grid_{axis}", None)
        if raw is not None:
            grid[axis] = _grid_list(raw, kappa=axis == "kappa")
        elif axis == "kappa" and "kappa" in grid:
            grid["kappa"] = [parse_kappa(k) for k in grid["kappa"]]
    cfg["grid"] = grid or None
    cfg["kappa"] = parse_kappa(cfg["kappa"])
    try:
        cfg["sigma2"] = _parse_sigma2(cfg["sigma2"])
    except ValueError as exc:
        raise ConfigError(f"sigma2: {exc}") from None
    return cfg


def pipeline_config(cfg: dict) -> PipelineConfig:
    bound = BoundParams(**cfg["bound"]) if cfg.get("bound") else None
    if cfg["forecaster"] not in ("persistence", "ar", "oracle"):
        raise ConfigError(f"unknown forecaster {cfg['forecaster']!r}")
    return PipelineConfig(
        n=int(cfg["window_n"]), delta=float(cfg["delta"]), epsilon=float(cfg["epsilon"]), kappa=cfg["kappa"],
        sigma2=cfg["sigma2"], sigma2_mode=cfg["sigma2_mode"], delta0=cfg["delta0"], delta1=cfg["delta1"],
        normalize=bool(cfg["normalize"]), initial_windows=int(cfg["initial_windows"]),
        exact_limit=int(cfg["exact_limit"]), forecaster=cfg["forecaster"], ar_order=int(cfg["ar_order"]),
        seed=int(cfg["seed"]), bound=bound,
    )


def _load_dataset(cfg: dict):
    if not cfg["dataset"]:
        raise ConfigError("--dataset is required")
    try:
        return read_stream_csv(cfg["dataset"], cfg["features"], cfg["label"], cfg["epoch_column"],
                               int(cfg["fit_rows"]))
    except OSError as exc:
        raise DataError(str(exc)) from None


def _out_dir(cfg: dict) -> Path | None:
    if not cfg["out"]:
        return None
    p = Path(cfg["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_calibrate(cfg: dict) -> int:
    d = cfg["dimension"]
    if d is None and cfg["dataset"]:
        d = _load_dataset(cfg).d
    if d is None:
        raise ConfigError("calibrate needs --dimension or --dataset")
    if cfg["sigma2"] is None:
        raise ConfigError("calibrate needs a numeric --sigma2")
    eps, n, s2, delta = float(cfg["epsilon"]), int(cfg["window_n"]), float(cfg["sigma2"]), float(cfg["delta"])
    bound = min_feasible_delta(eps, n, int(d), s2)
    try:
        d0, d1 = derive_radii(delta, eps, n, int(d), s2)
    except InfeasibleConfigError as exc:
        print(f"infeasible: {exc}")
        print(f"delta={delta:.7g} min_feasible_delta={bound:.7g} margin={delta - bound:.7g}")
        return EXIT_CONFIG
    print(f"delta0={d0:.7f}")
    print(f"delta1={d1:.7f}")
    print(f"min_feasible_delta={bound:.7f}")
    print(f"margin={delta - bound:.7f}")
    return EXIT_OK


def cmd_run(cfg: dict) -> int:
    ds = _load_dataset(cfg)
    pc = pipeline_config(cfg)
    out = _out_dir(cfg)
    baseline, ratio = cfg["baseline"], cfg["ratio"]
    if baseline is not None and baseline not in ("random", "kcenter"):
        raise ConfigError(f"unknown baseline {baseline!r}")

    if baseline is not None and ratio is not None:
        selection = _baseline_selection(ds, baseline, float(ratio), pc)
        report = _baseline_report(ds, baseline, float(ratio), selection, pc)
        if out:
            (out / "report.json").write_text(to_json(report))
            write_selection_csv(out / "selection.csv", ds, selection)
        print(f"baseline={baseline} ratio={float(ratio):.6g} selected={len(selection)}")
        return EXIT_OK

    rep = run_pipeline(ds, pc)
    report = rep.to_dict()
    if baseline is not None:
        selection = _baseline_selection(ds, baseline, rep.sampling_ratio, pc)
        report["baselines"] = {baseline: _baseline_report(ds, baseline, rep.sampling_ratio, selection, pc)}
    if out:
        (out / "report.json").write_text(to_json(report))
        weights = {e.epoch: e.weight for e in rep.coreset.entries}
        origins = {e.epoch: e.origin for e in rep.coreset.entries}
        write_selection_csv(out / "selection.csv", ds, rep.selected_epochs, weights, origins)
    print(f"sampling_ratio={rep.sampling_ratio:.6f} weight_norm={rep.weight_norm:.6f} "
          f"collected={rep.collected} candidates={rep.candidates} coverage={rep.coverage.fraction:.4f}")
    return EXIT_OK


def _baseline_selection(ds, baseline: str, ratio: float, pc: PipelineConfig) -> list[int]:
    if baseline == "random":
        return random_baseline(ds, ratio, pc.seed)
    k = int(round(ratio * pc.n))
    return kcenter_window_baseline(ds, k, pc.n, pc.normalize, pc.initial_windows)


def _baseline_report(ds, baseline: str, ratio: float, selection: list[int], pc: PipelineConfig) -> dict:
    rep = {"baseline": baseline, "ratio": ratio, "candidates": len(ds) - ds.fit_end, "selected": len(selection),
           "cost_aware": False}
    if baseline == "kcenter":
        k = int(round(ratio * pc.n))
        rep["per_window_k"] = k
        rep["rounding_note"] = f"k = round({ratio:.6g} * {pc.n}); trailing partial window skipped"
    if ds.labels is not None:
        rep["class_histogram"] = class_distribution(selection, ds)
    rep["selection"] = selection
    return rep


def cmd_validate(cfg: dict) -> int:
    pc = pipeline_config(cfg)
    if pc.forecaster != "oracle":
        raise ConfigError("validate requires --forecaster oracle: the guarantee assumes Gaussian prediction errors")
    if pc.sigma2 is None:
        raise ConfigError("validate requires a numeric --sigma2")
    ds = _load_dataset(cfg) if cfg["dataset"] else None
    res = validate_coverage(pc, int(cfg["trials"]), ds, d=int(cfg["dimension"] or 2), stream_seed=pc.seed)
    summary = {k: v for k, v in res.items() if k != "report"}
    summary["config"] = pc.to_dict()
    out = _out_dir(cfg)
    if out:
        (out / "validation.json").write_text(to_json(summary))
    flag = "PASS" if res["passed"] else "FAIL"
    print(f"{flag} fraction={res['fraction']:.4f} target={res['target']:.4f} floor={res['floor_3sigma']:.4f} "
          f"windows={res['windows']} delta0={res['delta0']:.6g} delta1={res['delta1']:.6g}")
    return EXIT_OK if res["passed"] else EXIT_VALIDATION


SWEEP_COLUMNS = ["delta0", "delta1", "kappa", "collected", "candidates", "sampling_ratio", "weight_norm", "objective",
                 "skew", "coverage_fraction", "monotone_delta0", "monotone_kappa", "skipped"]


def cmd_sweep(cfg: dict) -> int:
    if not cfg["grid"]:
        raise ConfigError("sweep needs a non-empty grid (--grid-delta0/--grid-delta1/--grid-kappa or 'grid')")
    ds = _load_dataset(cfg)
    pc = pipeline_config(cfg)
    rows = run_sweep(ds, pc, cfg["grid"], jobs=int(cfg["jobs"]))
    out = _out_dir(cfg)
    if out:
        (out / "sweep.json").write_text(to_json({"config": pc.to_dict(), "grid": cfg["grid"], "rows": rows}))
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in rows:
                w.writerow(["" if r.get(c) is None else r.get(c) for c in SWEEP_COLUMNS])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (f"{r[c]:.6g}" if isinstance(r[c], float) else r[c])
                    for c in SWEEP_COLUMNS])
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "run": cmd_run, "validate": cmd_validate, "sweep": cmd_sweep}


def main(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_settings(args, environ)
        return COMMANDS[args.command](cfg)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleConfigError as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
