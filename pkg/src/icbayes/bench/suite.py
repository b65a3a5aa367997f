"""Benchmark orchestration: datasets x methods fanned out as pure cells.

Each cell draws posterior samples for one (dataset, method) pair and writes
them to its own file, so cells can run in parallel processes.  Evaluation
compares every method against the suite's reference method per dataset
(the reference itself is scored against an independent second draw, which
estimates the metric's null level), then aggregates across datasets.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.stats

from ..errors import ConfigurationError, DataError
from ..flowmatch import load_training_checkpoint
from ..metrics import (
    REPORT_COLUMNS,
    c2st_auc,
    config_hash,
    mmd2,
    summarize,
    two_se_separated,
    wasserstein2,
)
from ..nncore import save_checkpoint
from ..odesolve import SampleSet, load_samples, sample_posterior, save_samples
from ..probmodels import (
    ContextDataset,
    ScenarioConfig,
    analytic_posterior_nig,
    get_scenario,
    make_log_joint,
    sample_dataset,
)
from ..probmodels.scenarios import GMM
from ..refinfer import (
    AdviConfig,
    HmcConfig,
    advi_posterior,
    find_map,
    hmc_posterior,
    laplace_posterior,
)
from ..rngs import derive_rng

WORKERS_ENV = "ICBAYES_WORKERS"
SUITE_METRICS = ("c2st", "mmd", "w2")
METHODS = ("analytic", "hmc", "laplace", "advi-diag", "advi-full", "map", "icl")


def worker_count(explicit=None) -> int:
    """Resolve the worker-pool size: explicit flag, else env var, else 1."""
    if explicit is not None:
        return max(1, int(explicit))
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV}={raw!r} is not an integer") from None


# ---------------------------------------------------------------------------
# suite configuration


@dataclass(frozen=True)
class SuiteConfig:
    scenario: str
    n_datasets: int = 5
    n_draws: int = 500
    seed: int = 0
    reference: str = "analytic"
    methods: tuple = ("analytic", "hmc")
    metrics: tuple = ("c2st", "w2")
    classifier: str = "rf"
    checkpoint: str = ""  # required when "icl" appears in methods
    kde_points: int = 64  # 0 disables the marginal density grids
    rtol: float = 1e-7
    atol: float = 1e-7
    hmc: dict = field(default_factory=dict)
    advi: dict = field(default_factory=dict)
    laplace: dict = field(default_factory=dict)

    def validate(self) -> None:
        problems = []
        try:
            get_scenario(self.scenario)
        except ConfigurationError as exc:
            problems.append(str(exc))
        if self.n_datasets < 1:
            problems.append("n_datasets must be >= 1")
        if self.n_draws < 2:
            problems.append("n_draws must be >= 2")
        if not self.methods:
            problems.append("methods must not be empty")
        for m in self.metrics:
            if m not in SUITE_METRICS:
                problems.append(f"unknown metric {m!r}; known: {', '.join(SUITE_METRICS)}")
        if self.classifier not in ("rf", "mlp"):
            problems.append(f"unknown classifier {self.classifier!r}")
        if self.kde_points < 0:
            problems.append("kde_points must be >= 0")
        if self.rtol <= 0 or self.atol <= 0:
            problems.append("rtol and atol must be positive")
        if "icl" in self.methods and not self.checkpoint:
            problems.append('method "icl" requires a checkpoint path')
        if problems:
            raise ConfigurationError("; ".join(problems))

    def to_json(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["metrics"] = list(self.metrics)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "SuiteConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigurationError(f"unknown suite keys: {', '.join(unknown)}")
        d = dict(obj)
        for key in ("methods", "metrics"):
            if key in d:
                d[key] = tuple(d[key])
        cfg = cls(**d)
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# method dispatch (shared with the infer CLI)


def _trim(samples: SampleSet, n: int) -> SampleSet:
    if samples.n_draws <= n:
        return samples
    return SampleSet(
        scenario_id=samples.scenario_id,
        method=samples.method,
        constrained=samples.constrained[:n],
        constrained_names=samples.constrained_names,
        unconstrained=None
        if samples.unconstrained is None
        else samples.unconstrained[:n],
        info=dict(samples.info),
    )


def default_hmc_chains(scenario: ScenarioConfig) -> int:
    # three chains per potential mode on mixture scenarios
    return 3 * scenario.M if scenario.family == GMM else 4


def draw_posterior_samples(
    method: str,
    scenario: ScenarioConfig,
    rows: np.ndarray,
    n_draws: int,
    *,
    seed: int = 0,
    checkpoint: str = "",
    rtol: float = 1e-7,
    atol: float = 1e-7,
    hmc_overrides=None,
    advi_overrides=None,
    laplace_overrides=None,
) -> SampleSet:
    """Run one posterior-inference method on one context dataset."""
    dataset = ContextDataset(
        rows=np.asarray(rows, dtype=np.float64),
        family=scenario.family,
        scenario_id=scenario.scenario_id,
    )
    if method == "analytic":
        post = analytic_posterior_nig(scenario, dataset)
        draws = post.sample(derive_rng(seed, "analytic-draws"), n_draws)
        layout = scenario.inference_layout()
        return SampleSet(
            scenario_id=scenario.scenario_id,
            method="analytic",
            constrained=draws,
            constrained_names=layout.constrained_names(),
            unconstrained=None,
            info={"a": post.a, "b": post.b, "seed": seed},
        )
    if method == "hmc":
        over = dict(hmc_overrides or {})
        chains = int(over.pop("n_chains", default_hmc_chains(scenario)))
        per_chain = int(over.pop("n_samples", math.ceil(n_draws / chains)))
        cfg = HmcConfig(n_samples=per_chain, n_chains=chains, seed=seed, **over)
        samples, _ = hmc_posterior(scenario, dataset, cfg)
        return _trim(samples, n_draws)
    if method == "laplace":
        over = dict(laplace_overrides or {})
        restarts = int(over.pop("n_restarts", 1))
        if over:
            raise ConfigurationError(f"unknown laplace options: {sorted(over)}")
        samples, _ = laplace_posterior(
            scenario, dataset, n_draws, seed=seed, n_restarts=restarts
        )
        return samples
    if method in ("advi-diag", "advi-full"):
        family = "diag" if method == "advi-diag" else "full-rank"
        cfg = AdviConfig(family=family, seed=seed, **dict(advi_overrides or {}))
        samples, _ = advi_posterior(scenario, dataset, n_draws, cfg=cfg)
        return samples
    if method == "map":
        layout = scenario.inference_layout()
        f = make_log_joint(scenario, dataset)
        rng = derive_rng(seed, "map-init")
        result = find_map(f, rng.uniform(-2.0, 2.0, layout.dim))
        # a point estimate repeated n times, so sample-based metrics apply
        stacked = np.repeat(result.z[None, :], n_draws, axis=0)
        return SampleSet(
            scenario_id=scenario.scenario_id,
            method="map",
            constrained=layout.constrain(stacked),
            constrained_names=layout.constrained_names(),
            unconstrained=stacked,
            info={
                "logp": result.logp,
                "converged": result.converged,
                "n_iters": result.n_iters,
            },
        )
    if method == "icl":
        if not checkpoint:
            raise ConfigurationError('method "icl" requires a checkpoint path')
        params, _, model_cfg, metadata, _ = load_training_checkpoint(checkpoint)
        ckpt_scenario = metadata.get("scenario_id")
        if ckpt_scenario and ckpt_scenario != scenario.scenario_id:
            raise DataError(
                f"checkpoint was trained on {ckpt_scenario!r}, "
                f"not {scenario.scenario_id!r}"
            )
        return sample_posterior(
            params,
            model_cfg,
            scenario,
            rows,
            n_draws,
            objective=metadata.get("objective", "ot-fm"),
            seed=seed,
            rtol=rtol,
            atol=atol,
        )
    raise ConfigurationError(f"unknown method {method!r}; known: {', '.join(METHODS)}")


def metric_value(metric: str, a: np.ndarray, b: np.ndarray, *, classifier="rf", seed=0) -> float:
    if metric == "c2st":
        return float(c2st_auc(a, b, classifier=classifier, seed=seed))
    if metric == "mmd":
        return float(mmd2(a, b))
    if metric == "w2":
        return float(wasserstein2(a, b, seed=seed))
    raise ConfigurationError(f"unknown metric {metric!r}")


def project_to_common(a: SampleSet, b: SampleSet):
    """Restrict two sample sets to their shared constrained coordinates.

    Methods operating in the inference parameterization may carry extra
    coordinates (e.g. mixture weights) that an in-context model does not
    predict; comparisons run on the intersection, ordered as in ``a``.
    """
    b_names = set(b.constrained_names)
    common = [n for n in a.constrained_names if n in b_names]
    if not common:
        raise DataError(
            f"no shared coordinates between {a.method} ({a.constrained_names}) "
            f"and {b.method} ({b.constrained_names})"
        )
    ia = [a.constrained_names.index(n) for n in common]
    ib = [b.constrained_names.index(n) for n in common]
    return a.constrained[:, ia], b.constrained[:, ib], common


# ---------------------------------------------------------------------------
# cells


def _sample_file(out_dir: str, dataset_index: int, method: str, role: str) -> str:
    suffix = "-null" if role == "null" else ""
    return os.path.join(out_dir, "samples", f"ds{dataset_index:03d}-{method}{suffix}.csv")


def _run_cell(spec: dict) -> dict:
    """Execute one sampling cell; never raises, reports status instead."""
    t0 = time.perf_counter()
    base = {
        "phase": "sample",
        "dataset": spec["dataset_index"],
        "method": spec["method"],
        "role": spec["role"],
    }
    try:
        scenario = get_scenario(spec["scenario"])
        seed_tag = "bench-null" if spec["role"] == "null" else "bench-cell"
        seed_rng = derive_rng(spec["seed"], seed_tag, spec["dataset_index"], spec["method"])
        cell_seed = int(seed_rng.integers(2**63))
        samples = draw_posterior_samples(
            spec["method"],
            scenario,
            np.asarray(spec["rows"]),
            spec["n_draws"],
            seed=cell_seed,
            checkpoint=spec["checkpoint"],
            rtol=spec["rtol"],
            atol=spec["atol"],
            hmc_overrides=spec["hmc"],
            advi_overrides=spec["advi"],
            laplace_overrides=spec["laplace"],
        )
        save_samples(spec["out_path"], samples)
        return {**base, "status": "OK", "seconds": time.perf_counter() - t0, "error": ""}
    except Exception as exc:  # cell isolation: one bad method must not sink the run
        return {
            **base,
            "status": "FAILED",
            "seconds": time.perf_counter() - t0,
            "error": f"{type(exc).__name__}: {exc}",
        }


def _write_status(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "dataset", "method", "role", "status", "seconds", "error"])
        for r in rows:
            writer.writerow(
                [
                    r["phase"],
                    r["dataset"],
                    r["method"],
                    r["role"],
                    r["status"],
                    f"{r['seconds']:.3f}",
                    r["error"],
                ]
            )


# ---------------------------------------------------------------------------
# KDE grids (marginal density curves per method, one file per dataset)


def _kde_grid(sample_sets: dict, names, n_points: int):
    """Rows of (coordinate, x, density-per-method) for one dataset."""
    methods = sorted(sample_sets)
    rows = []
    for name in names:
        cols = {}
        for m in methods:
            ss = sample_sets[m]
            if name in ss.constrained_names:
                cols[m] = ss.constrained[:, ss.constrained_names.index(name)]
        if not cols:
            continue
        pooled = np.concatenate(list(cols.values()))
        lo, hi = float(pooled.min()), float(pooled.max())
        pad = 0.1 * max(hi - lo, 1e-6)
        grid = np.linspace(lo - pad, hi + pad, n_points)
        dens = {}
        for m in methods:
            if m not in cols:
                dens[m] = np.full(n_points, np.nan)
                continue
            try:
                dens[m] = scipy.stats.gaussian_kde(cols[m])(grid)
            except Exception:  # degenerate draws (e.g. a point mass) have no KDE
                dens[m] = np.full(n_points, np.nan)
        for j in range(n_points):
            rows.append([name, grid[j]] + [dens[m][j] for m in methods])
    return ["coordinate", "x"] + methods, rows


# ---------------------------------------------------------------------------
# the full run


def run_suite(suite: SuiteConfig, out_dir, *, workers=None, argv=()) -> int:
    """Execute a benchmark suite; returns the process exit code (0 or 4)."""
    from .manifest import build_manifest  # local import to avoid a cycle

    suite.validate()
    scenario = get_scenario(suite.scenario)
    out_dir = str(out_dir)
    os.makedirs(os.path.join(out_dir, "samples"), exist_ok=True)
    wall = {}
    artifacts = []

    suite_path = os.path.join(out_dir, "suite.json")
    with open(suite_path, "w") as fh:
        json.dump(suite.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts.append(suite_path)

    # -- phase 1: generate the evaluation datasets
    t0 = time.perf_counter()
    datasets = []
    latents = []
    for i in range(suite.n_datasets):
        rng = derive_rng(suite.seed, "bench-data", i)
        ds, latent = sample_dataset(scenario, rng)
        datasets.append(ds.rows)
        latents.append(latent.values)
    data_path = os.path.join(out_dir, "datasets.bin")
    save_checkpoint(
        data_path,
        {"rows": np.stack(datasets), "latents": np.stack(latents)},
        metadata={
            "kind": "dataset-park",
            "scenario_id": suite.scenario,
            "seed": suite.seed,
            "n": suite.n_datasets,
        },
    )
    artifacts.append(data_path)
    wall["generate"] = time.perf_counter() - t0

    # -- phase 2: sampling cells (reference always runs; null pair when scored)
    t0 = time.perf_counter()
    cell_methods = list(dict.fromkeys([suite.reference, *suite.methods]))
    specs = []
    for i in range(suite.n_datasets):
        for m in cell_methods:
            specs.append(
                {
                    "dataset_index": i,
                    "method": m,
                    "role": "method",
                    "rows": datasets[i],
                    "scenario": suite.scenario,
                    "seed": suite.seed,
                    "n_draws": suite.n_draws,
                    "checkpoint": suite.checkpoint,
                    "rtol": suite.rtol,
                    "atol": suite.atol,
                    "hmc": dict(suite.hmc),
                    "advi": dict(suite.advi),
                    "laplace": dict(suite.laplace),
                    "out_path": _sample_file(out_dir, i, m, "method"),
                }
            )
        if suite.reference in suite.methods:
            null_spec = dict(specs[-len(cell_methods)])  # copy any; rewrite below
            null_spec.update(
                method=suite.reference,
                role="null",
                out_path=_sample_file(out_dir, i, suite.reference, "null"),
            )
            specs.append(null_spec)

    n_workers = worker_count(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            statuses = list(pool.map(_run_cell, specs))
    else:
        statuses = [_run_cell(spec) for spec in specs]
    for spec, status in zip(specs, statuses):
        if status["status"] == "OK":
            artifacts.append(spec["out_path"])
            artifacts.append(spec["out_path"] + ".json")
    wall["sample"] = time.perf_counter() - t0

    # -- phase 3: evaluation against the reference
    t0 = time.perf_counter()
    values = []  # (dataset, method, metric, value)
    for i in range(suite.n_datasets):
        ref_path = _sample_file(out_dir, i, suite.reference, "method")
        if not os.path.exists(ref_path):
            statuses.append(
                {
                    "phase": "evaluate",
                    "dataset": i,
                    "method": "*",
                    "role": "method",
                    "status": "FAILED",
                    "seconds": 0.0,
                    "error": f"reference samples missing for dataset {i}",
                }
            )
            continue
        reference = load_samples(ref_path)
        for m in suite.methods:
            role = "null" if m == suite.reference else "method"
            path = _sample_file(out_dir, i, m, role)
            t_cell = time.perf_counter()
            try:
                if not os.path.exists(path):
                    raise DataError("sampling cell produced no output")
                candidate = load_samples(path)
                a, b, _ = project_to_common(candidate, reference)
                for metric in suite.metrics:
                    eval_rng = derive_rng(suite.seed, "bench-eval", i, m, metric)
                    val = metric_value(
                        metric,
                        a,
                        b,
                        classifier=suite.classifier,
                        seed=int(eval_rng.integers(2**63)),
                    )
                    values.append((i, m, metric, val))
                statuses.append(
                    {
                        "phase": "evaluate",
                        "dataset": i,
                        "method": m,
                        "role": role,
                        "status": "OK",
                        "seconds": time.perf_counter() - t_cell,
                        "error": "",
                    }
                )
            except Exception as exc:
                statuses.append(
                    {
                        "phase": "evaluate",
                        "dataset": i,
                        "method": m,
                        "role": role,
                        "status": "FAILED",
                        "seconds": time.perf_counter() - t_cell,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
    wall["evaluate"] = time.perf_counter() - t0

    values_path = os.path.join(out_dir, "values.csv")
    with open(values_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "method", "metric", "value"])
        for i, m, metric, val in values:
            writer.writerow([i, m, metric, repr(float(val))])
    artifacts.append(values_path)

    # -- phase 4: summary with two-SE bolding against the per-metric best
    t0 = time.perf_counter()
    suite_hash = config_hash(suite.to_json())
    summary_rows = []
    for metric in suite.metrics:
        per_method = {}
        for m in suite.methods:
            vals = [v for (_, vm, vmetric, v) in values if vm == m and vmetric == metric]
            if vals:
                per_method[m] = summarize(metric, vals)
        if not per_method:
            continue
        best = min(per_method.values(), key=lambda s: s.mean)
        for m in suite.methods:
            if m not in per_method:
                continue
            s = per_method[m]
            bold = (s is best) or (not two_se_separated(best, s))
            summary_rows.append(
                [
                    suite.scenario,
                    m,
                    metric,
                    repr(float(s.mean)),
                    repr(float(s.se)),
                    s.n,
                    suite_hash,
                    bold,
                ]
            )
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(REPORT_COLUMNS) + ["bold"])
        writer.writerows(summary_rows)
    artifacts.append(summary_path)

    # -- phase 5: marginal density grids, one file per dataset
    if suite.kde_points > 0:
        kde_dir = os.path.join(out_dir, "kde")
        os.makedirs(kde_dir, exist_ok=True)
        for i in range(suite.n_datasets):
            loaded = {}
            for m in cell_methods:
                path = _sample_file(out_dir, i, m, "method")
                if os.path.exists(path):
                    loaded[m] = load_samples(path)
            if not loaded:
                continue
            ref = loaded.get(suite.reference, next(iter(loaded.values())))
            header, grid_rows = _kde_grid(loaded, ref.constrained_names, suite.kde_points)
            kde_path = os.path.join(kde_dir, f"ds{i:03d}.csv")
            with open(kde_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for row in grid_rows:
                    writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
            artifacts.append(kde_path)
    wall["summarize"] = time.perf_counter() - t0

    cells_path = os.path.join(out_dir, "cells.csv")
    _write_status(cells_path, statuses)
    artifacts.append(cells_path)

    inputs = [suite.checkpoint] if suite.checkpoint else []
    manifest = build_manifest(
        "benchmark",
        argv,
        suite.to_json(),
        inputs=inputs,
        seeds={"seed": suite.seed},
        wall_times=wall,
        artifacts=artifacts,
        base_dir=out_dir,
    )
    manifest.save(os.path.join(out_dir, "manifest.json"))

    n_failed = sum(1 for s in statuses if s["status"] == "FAILED")
    n_ok = sum(1 for s in statuses if s["status"] == "OK")
    print(f"benchmark: {n_ok} cells ok, {n_failed} failed; summary at {summary_path}")
    return 4 if n_failed else 0
