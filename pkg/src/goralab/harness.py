"""Experiment harness: configured studies with flat CSV + JSON-manifest output.

Commands (exposed by the ``goralab`` CLI):

* ``run``          -- active-learning runs over seeds; writes
                      ``learning_curve.csv`` (seed, iter, n_labeled,
                      test_accuracy), ``goal_curve.csv`` (seed, iter,
                      goal_value), optional per-iteration
                      ``util_distrib_<t>.csv`` snapshots, and ``history.json``.
* ``approx-check`` -- exact-vs-approximate utility study; writes
                      ``scatter.csv`` (mode, resolver, id_or_window_start,
                      exact, approx) with serial rows for every pool sample
                      and batch rows for every sliding window, plus rank/linear
                      correlations in ``summary.json``.
* ``util-hist``    -- exact-utility distributions per resolver and batch size;
                      writes ``histograms.csv`` (goal, resolver, b, value).
* ``synth2``       -- the adversarial 2-D study; ``run`` outputs plus
                      ``queries_<seed>.csv`` (seed, iter, id, x1, x2, cluster,
                      in_dev) for querying-pattern audits.

Every command writes a ``manifest.json`` echoing the config and code version.
Numbers in CSV files carry 17 significant digits, so re-reading them loses
nothing and identical runs produce identical bytes.

Config files are JSON objects mirroring :class:`ExperimentConfig` field names.
Seed derivation: dataset generation / splitting uses the run seed directly,
dev-set sampling uses ``seed + 7919``, and the random-strategy stream uses the
run seed.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as _stats

from . import __version__
from .datasets import (ALInstance, Dataset, LabeledSample, generate_class_blobs,
                       generate_synth2, load_dataset, sample_dev_set,
                       split_al_instance, synth2_cluster_tag)
from .goals import make_goal
from .influence import (ExactOracle, build_engine, resolve_taudiff_table,
                        resolve_taudiffs)
from .model import (TrainConfig, lambda_from_C, predict_proba_matrix,
                    stack_features)
from .operators import parse_resolver
from .strategies import parse_strategy, run_al_loop

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "cmd_run",
    "cmd_approx_check",
    "cmd_util_hist",
    "cmd_synth2",
    "make_instance",
    "fmt",
    "write_csv",
]

_DEV_SEED_OFFSET = 7919

DEFAULT_RESOLVERS = ("oracle", "expectation:model", "expectation:uniform", "min", "max")


class ConfigError(ValueError):
    """Raised for malformed or incomplete experiment configs."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for all harness commands; unused fields are ignored per command.

    ``dataset`` is ``"synth2"``, ``{"libsvm": path}``, ``{"csv": path}`` or
    ``{"blobs": {"n":..., "d":..., "K":..., ...}}`` (a synthetic stand-in
    source for benchmark-shaped data).
    """

    dataset: object = "synth2"
    strategy: str = "random"
    b: int = 10
    budget: int = 10
    C: float = 0.1
    seeds: tuple = (0,)
    n_init: int = 10
    n_test: int = 60
    dev_fraction: float | None = None
    record_goal: str | None = None
    pool_cap: int | None = None
    snapshot_utilities: bool = False
    workers: int = 1
    out: str = "results"
    # approx-check / util-hist specifics
    train_size: int = 50
    pool_size: int = 200
    goal: str = "ent"
    window_b: int = 10
    resolvers: tuple = DEFAULT_RESOLVERS
    hist_serial_count: int = 100
    hist_batch_count: int = 40
    hist_batch_sizes: tuple = (1, 5, 10)
    grad_tol: float = 1e-8
    max_iter: int = 200

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return ExperimentConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cleaned = dict(raw)
        for key in ("seeds", "resolvers", "hist_batch_sizes"):
            if key in cleaned and isinstance(cleaned[key], list):
                cleaned[key] = tuple(cleaned[key])
        cfg = ExperimentConfig(**cleaned)
        if cfg.b < 1 or cfg.budget < 0 or cfg.C <= 0 or not cfg.seeds:
            raise ConfigError("need b >= 1, budget >= 0, C > 0 and at least one seed")
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("seeds", "resolvers", "hist_batch_sizes"):
            d[key] = list(d[key])
        return d


# ---------------------------------------------------------------------------
# formatting / file output
# ---------------------------------------------------------------------------


def fmt(value) -> str:
    """Render a cell: floats with 17 significant digits, everything else as str."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path, header, rows) -> None:
    """Write a CSV with deterministic formatting (LF newlines, 17-digit floats)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(out_dir, command: str, config: ExperimentConfig) -> None:
    _write_json(os.path.join(out_dir, "manifest.json"),
                {"command": command, "version": __version__,
                 "config": config.to_dict()})


# ---------------------------------------------------------------------------
# dataset preparation
# ---------------------------------------------------------------------------

_FILE_CACHE: dict = {}


def _load_source(config: ExperimentConfig):
    """Return 'synth2' or a labeled Dataset for the config's dataset spec."""
    ds = config.dataset
    if ds == "synth2":
        return "synth2"
    if isinstance(ds, dict) and len(ds) == 1:
        kind, arg = next(iter(ds.items()))
        if kind in ("libsvm", "csv"):
            key = (kind, arg)
            if key not in _FILE_CACHE:
                _FILE_CACHE[key] = load_dataset(arg, fmt=kind)
            return _FILE_CACHE[key]
        if kind == "blobs":
            params = dict(arg)
            params.setdefault("seed", 0)
            return generate_class_blobs(**params)
    raise ConfigError(f"unrecognized dataset spec: {ds!r}")


def _cap_pool(instance: ALInstance, cap: int | None, seed: int) -> ALInstance:
    if cap is None or len(instance.pool) <= cap:
        return instance
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(instance.pool), size=cap, replace=False))
    return replace(instance,
                   pool=tuple(instance.pool[i] for i in keep),
                   hidden_pool_labels=tuple(instance.hidden_pool_labels[i] for i in keep),
                   dev=None)


def make_instance(config: ExperimentConfig, seed: int) -> ALInstance:
    """Build the per-seed ALInstance a run command operates on."""
    source = _load_source(config)
    if source == "synth2":
        instance = generate_synth2(seed)
    else:
        instance = split_al_instance(source, n_init=config.n_init,
                                     n_test=config.n_test, seed=seed)
    instance = _cap_pool(instance, config.pool_cap, seed)
    needs_dev = ("dev" in config.strategy.split(":")
                 or config.record_goal == "dev" or config.dev_fraction is not None)
    if needs_dev:
        frac = config.dev_fraction if config.dev_fraction is not None else 0.1
        instance = sample_dev_set(instance, frac, seed=seed + _DEV_SEED_OFFSET)
    return instance


def _record_goal_for(config: ExperimentConfig, instance: ALInstance):
    if config.record_goal is None:
        return None
    if config.record_goal == "dev":
        return make_goal("dev", dev=instance.dev)
    lam0 = lambda_from_C(config.C, len(instance.init))
    return make_goal(config.record_goal, U=instance.pool, lam=lam0)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _one_run(config: ExperimentConfig, seed: int):
    instance = make_instance(config, seed)
    strategy = parse_strategy(config.strategy, seed=seed)
    cfg = TrainConfig(lam=1.0, grad_tol=config.grad_tol, max_iter=config.max_iter)
    return instance, run_al_loop(
        instance, strategy, b=config.b, budget=config.budget, C=config.C, cfg=cfg,
        record_goal=_record_goal_for(config, instance),
        snapshot_utilities=config.snapshot_utilities)


def _run_all(config: ExperimentConfig):
    seeds = list(config.seeds)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(lambda s: _one_run(config, s), seeds))
    return [_one_run(config, s) for s in seeds]


def _write_run_outputs(results, config: ExperimentConfig, out_dir: str) -> dict:
    curve_rows, goal_rows, snapshots = [], [], {}
    history_payload = []
    for _, hist in results:
        for rec in hist.records:
            curve_rows.append((hist.seed, rec.iteration, rec.n_labeled,
                               rec.test_accuracy))
            if rec.goal_value is not None:
                goal_rows.append((hist.seed, rec.iteration, rec.goal_value))
            if rec.pool_utilities is not None:
                snapshots.setdefault(rec.iteration, []).append(
                    (hist.seed, rec.pool_utilities))
        history_payload.append({
            "seed": hist.seed, "strategy": hist.strategy, "b": hist.b, "C": hist.C,
            "records": [{
                "iteration": r.iteration, "queried_ids": list(r.queried_ids),
                "n_labeled": r.n_labeled, "test_accuracy": r.test_accuracy,
                "goal_value": r.goal_value, "lam": r.lam,
            } for r in hist.records],
        })

    paths = {"learning_curve": os.path.join(out_dir, "learning_curve.csv")}
    write_csv(paths["learning_curve"],
              ["seed", "iter", "n_labeled", "test_accuracy"], curve_rows)
    if goal_rows:
        paths["goal_curve"] = os.path.join(out_dir, "goal_curve.csv")
        write_csv(paths["goal_curve"], ["seed", "iter", "goal_value"], goal_rows)
    for t, entries in sorted(snapshots.items()):
        p = os.path.join(out_dir, f"util_distrib_{t}.csv")
        rows = [(seed, sid, u) for seed, snap in entries for sid, u in snap.items()]
        write_csv(p, ["seed", "id", "utility"], rows)
        paths[f"util_distrib_{t}"] = p
    paths["history"] = os.path.join(out_dir, "history.json")
    _write_json(paths["history"], {"version": __version__,
                                   "config": config.to_dict(),
                                   "runs": history_payload})
    return paths


def cmd_run(config: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Active-learning runs over the configured seeds; returns output paths."""
    out_dir = out_dir or config.out
    os.makedirs(out_dir, exist_ok=True)
    results = _run_all(config)
    paths = _write_run_outputs(results, config, out_dir)
    _write_manifest(out_dir, "run", config)
    return paths


# ---------------------------------------------------------------------------
# approx-check
# ---------------------------------------------------------------------------


def _study_parts(config: ExperimentConfig, seed: int):
    """Labeled train set, candidate pool (+hidden labels) and goal for a study."""
    source = _load_source(config)
    if source == "synth2":
        raise ConfigError("approx-check/util-hist need a labeled dataset source "
                          "(blobs/libsvm/csv), not 'synth2'")
    n_total = config.train_size + config.pool_size
    if n_total > len(source):
        raise ConfigError(f"train_size + pool_size = {n_total} exceeds dataset "
                          f"size {len(source)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(source))
    train_set = [source[i] for i in perm[:config.train_size]]
    pool = [source[i].sample for i in perm[config.train_size:n_total]]
    hidden = [source[i].label for i in perm[config.train_size:n_total]]
    lam = lambda_from_C(config.C, len(train_set))
    K = max(z.label for z in source) + 1
    if config.goal == "dev":
        dev_count = max(1, int(round((config.dev_fraction or 0.1) * len(pool))))
        dev_rng = np.random.default_rng(seed + _DEV_SEED_OFFSET)
        dev_idx = sorted(dev_rng.choice(len(pool), size=dev_count, replace=False))
        goal = make_goal("dev", dev=[LabeledSample(pool[i], hidden[i])
                                     for i in dev_idx])
    else:
        goal = make_goal(config.goal, U=pool, lam=lam)
    return train_set, pool, hidden, goal, lam, K


def cmd_approx_check(config: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Exact-vs-approximate utility comparison, serial and sliding-window batch."""
    out_dir = out_dir or config.out
    os.makedirs(out_dir, exist_ok=True)
    seed = config.seeds[0]
    train_set, pool, hidden, goal, lam, K = _study_parts(config, seed)
    cfg = TrainConfig(lam=lam, grad_tol=config.grad_tol, max_iter=config.max_iter,
                      n_classes=K)
    resolvers = [(spec, parse_resolver(spec)) for spec in config.resolvers]
    oracle = ExactOracle(train_set, cfg, goal)
    engine = build_engine(oracle.model, train_set, lam, goal)
    X_pool = stack_features(pool)
    P_pool = predict_proba_matrix(oracle.model, X_pool)

    # serial: one per-label goal-change table per pool sample, all resolvers
    exact_serial = {spec: np.empty(len(pool)) for spec, _ in resolvers}
    for i, x in enumerate(pool):
        diffs = oracle.serial_taudiffs(x)
        for spec, res in resolvers:
            exact_serial[spec][i] = resolve_taudiffs(
                diffs, res, p_model=P_pool[i], hidden_label=hidden[i], sample_id=x.id)
    approx_serial = {spec: engine.approx_utilities(pool, res, hidden)
                     for spec, res in resolvers}

    # batch: sliding windows, one joint-labeling table per window
    b = config.window_b
    n_windows = len(pool) - b + 1
    exact_batch = {spec: np.empty(n_windows) for spec, _ in resolvers}
    approx_batch = {spec: np.empty(n_windows) for spec, _ in resolvers}
    for start in range(n_windows):
        labelings, diffs = oracle.batch_table(X_pool[start:start + b])
        for spec, res in resolvers:
            exact_batch[spec][start] = resolve_taudiff_table(
                labelings, diffs, res, P_rows=P_pool[start:start + b],
                hidden_labels=hidden[start:start + b])
            approx_batch[spec][start] = float(
                np.sum(approx_serial[spec][start:start + b]))

    rows = []
    for spec, _ in resolvers:
        for i, x in enumerate(pool):
            rows.append(("serial", spec, x.id, exact_serial[spec][i],
                         approx_serial[spec][i]))
    for spec, _ in resolvers:
        for start in range(n_windows):
            rows.append(("batch", spec, start, exact_batch[spec][start],
                         approx_batch[spec][start]))
    scatter_path = os.path.join(out_dir, "scatter.csv")
    write_csv(scatter_path,
              ["mode", "resolver", "id_or_window_start", "exact", "approx"], rows)

    summary = {"remark1_constant": engine.remark1_constant(), "correlations": {}}

    def _varies(arr):
        # Constant-to-roundoff columns (e.g. the model-expectation utility,
        # which is the same number for every candidate) carry no ranking
        # information, so correlating them is meaningless.
        return np.ptp(arr) > 1e-12 * max(1.0, float(np.abs(arr).max()))

    for spec, _ in resolvers:
        ser_e, ser_a = exact_serial[spec], approx_serial[spec]
        bat_e, bat_a = exact_batch[spec], approx_batch[spec]
        entry = {"serial_spearman": None, "batch_pearson": None,
                 "approx_serial_spread": float(np.ptp(ser_a))}
        if _varies(ser_a) and _varies(ser_e):
            entry["serial_spearman"] = float(_stats.spearmanr(ser_e, ser_a).statistic)
        if _varies(bat_a) and _varies(bat_e):
            entry["batch_pearson"] = float(_stats.pearsonr(bat_e, bat_a).statistic)
        summary["correlations"][spec] = entry
    summary_path = os.path.join(out_dir, "summary.json")
    _write_json(summary_path, summary)
    _write_manifest(out_dir, "approx-check", config)
    return {"scatter": scatter_path, "summary": summary_path, "summary_data": summary}


# ---------------------------------------------------------------------------
# util-hist
# ---------------------------------------------------------------------------


def cmd_util_hist(config: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Exact-utility distributions per resolver at several batch sizes."""
    out_dir = out_dir or config.out
    os.makedirs(out_dir, exist_ok=True)
    seed = config.seeds[0]
    resolvers = [(spec, parse_resolver(spec)) for spec in config.resolvers]
    rows = []
    plans = [("ent", tuple(config.hist_batch_sizes)),
             ("fir", (max(config.hist_batch_sizes),))]
    for goal_kind, b_values in plans:
        train_set, pool, hidden, goal, lam, K = _study_parts(
            replace(config, goal=goal_kind), seed)
        cfg = TrainConfig(lam=lam, grad_tol=config.grad_tol,
                          max_iter=config.max_iter, n_classes=K)
        oracle = ExactOracle(train_set, cfg, goal)
        X_pool = stack_features(pool)
        P_pool = predict_proba_matrix(oracle.model, X_pool)
        rng = np.random.default_rng(seed)
        for b in b_values:
            if b == 1:
                count = min(config.hist_serial_count, len(pool))
                for i in np.sort(rng.choice(len(pool), size=count, replace=False)):
                    diffs = oracle.serial_taudiffs(pool[i])
                    for spec, res in resolvers:
                        rows.append((goal_kind, spec, 1, resolve_taudiffs(
                            diffs, res, p_model=P_pool[i], hidden_label=hidden[i])))
            else:
                count = min(config.hist_batch_count, len(pool) // b)
                perm = rng.permutation(len(pool))
                for w in range(count):
                    idx = perm[w * b:(w + 1) * b]
                    labelings, diffs = oracle.batch_table(X_pool[idx])
                    for spec, res in resolvers:
                        rows.append((goal_kind, spec, b, resolve_taudiff_table(
                            labelings, diffs, res, P_rows=P_pool[idx],
                            hidden_labels=[hidden[i] for i in idx])))
    path = os.path.join(out_dir, "histograms.csv")
    write_csv(path, ["goal", "resolver", "b", "value"], rows)
    _write_manifest(out_dir, "util-hist", config)
    return {"histograms": path}


# ---------------------------------------------------------------------------
# synth2
# ---------------------------------------------------------------------------


def cmd_synth2(config: ExperimentConfig, out_dir: str | None = None) -> dict:
    """The adversarial study: run curves plus a queried-point audit trail."""
    out_dir = out_dir or config.out
    os.makedirs(out_dir, exist_ok=True)
    config = replace(config, dataset="synth2",
                     dev_fraction=config.dev_fraction
                     if config.dev_fraction is not None else 0.1)
    results = _run_all(config)
    paths = _write_run_outputs(results, config, out_dir)
    for instance, hist in results:
        by_id = {s.id: s for s in instance.pool}
        dev_ids = {z.sample.id for z in instance.dev} if instance.dev else set()
        rows = []
        for rec in hist.records:
            for sid in rec.queried_ids:
                xy = by_id[sid].features
                rows.append((hist.seed, rec.iteration, sid, xy[0], xy[1],
                             synth2_cluster_tag(xy), sid in dev_ids))
        p = os.path.join(out_dir, f"queries_{hist.seed}.csv")
        write_csv(p, ["seed", "iter", "id", "x1", "x2", "cluster", "in_dev"], rows)
        paths[f"queries_{hist.seed}"] = p
    _write_manifest(out_dir, "synth2", config)
    return paths
