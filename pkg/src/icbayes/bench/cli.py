"""Command-line entry point: gen-data, train, sample, infer, evaluate, benchmark.

Exit codes: 0 success, 2 configuration error, 3 runtime numerical error,
4 partial benchmark failure.  Configuration problems are collected and
reported together rather than one at a time.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from ..dataprep import load_csv
from ..errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    DomainError,
    IcbError,
)
from ..flowmatch import OBJECTIVES, TrainConfig, load_training_checkpoint, train
from ..metrics import ReportRow, config_hash, write_report
from ..nncore import ModelConfig, gaussian_head_out_dim, load_checkpoint, save_checkpoint
from ..odesolve import load_samples, sample_posterior, save_samples
from ..probmodels import get_scenario, sample_dataset
from ..rngs import derive_rng
from .manifest import build_manifest
from .suite import (
    SUITE_METRICS,
    SuiteConfig,
    draw_posterior_samples,
    metric_value,
    project_to_common,
    run_suite,
)

_CONFIG_ERRORS = (ConfigurationError, DataError, DomainError, CheckpointError)


def _json_arg(value: str, what: str) -> dict:
    """Accept either inline JSON or a path to a JSON file."""
    text = value
    if not value.lstrip().startswith("{"):
        if not os.path.exists(value):
            raise ConfigurationError(f"{what}: no such file {value!r}")
        with open(value) as fh:
            text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{what}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{what}: expected a JSON object")
    return obj


def _normalize_objective(name: str) -> str:
    # the short CLI spelling for the forward-KL Gaussian baseline
    return "gaussian-head" if name == "gaussian" else name


def _load_rows(path: str, index: int, expect_scenario=None) -> np.ndarray:
    """One context dataset's rows, from a CSV or a generated container."""
    if str(path).endswith(".csv"):
        table = load_csv(path)
        if table.n_rows == 0:
            raise DataError(f"{path}: no data rows")
        return table.matrix
    ckpt = load_checkpoint(path)
    if "rows" not in ckpt.tensors:
        raise DataError(f"{path}: container has no 'rows' tensor")
    rows = ckpt.tensors["rows"]
    if rows.ndim != 3:
        raise DataError(f"{path}: expected stacked datasets, got shape {rows.shape}")
    if not 0 <= index < rows.shape[0]:
        raise DataError(f"{path}: dataset index {index} out of range [0, {rows.shape[0]})")
    stored = ckpt.metadata.get("scenario_id")
    if expect_scenario and stored and stored != expect_scenario:
        raise DataError(
            f"{path} holds {stored!r} datasets, expected {expect_scenario!r}"
        )
    return rows[index]


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    scenario = get_scenario(args.scenario)
    if args.n < 1:
        raise ConfigurationError("--n must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    rows = []
    latents = []
    for i in range(args.n):
        rng = derive_rng(args.seed, "gen-data", i)
        dataset, latent = sample_dataset(scenario, rng)
        rows.append(dataset.rows)
        latents.append(latent.values)
    data_path = os.path.join(args.out, "data.bin")
    save_checkpoint(
        data_path,
        {"rows": np.stack(rows), "latents": np.stack(latents)},
        metadata={
            "kind": "dataset-park",
            "scenario_id": args.scenario,
            "seed": args.seed,
            "n": args.n,
        },
    )
    manifest = build_manifest(
        "gen-data",
        sys.argv[1:],
        {"scenario": args.scenario, "n": args.n, "seed": args.seed},
        seeds={"seed": args.seed},
        wall_times={"generate": time.perf_counter() - t0},
        artifacts=[data_path],
        base_dir=args.out,
    )
    manifest.save(os.path.join(args.out, "manifest.json"))
    print(
        f"gen-data: {args.n} datasets for {args.scenario} "
        f"(rows {rows[0].shape}, latent dim {latents[0].shape[0]}) -> {data_path}"
    )
    return 0


def cmd_train(args) -> int:
    problems = []
    scenario = None
    try:
        scenario = get_scenario(args.scenario)
    except ConfigurationError as exc:
        problems.append(str(exc))

    model_over = {}
    trainer_over = {}
    try:
        if args.model_cfg:
            model_over = _json_arg(args.model_cfg, "--model-cfg")
    except ConfigurationError as exc:
        problems.append(str(exc))
    try:
        if args.trainer_cfg:
            trainer_over = _json_arg(args.trainer_cfg, "--trainer-cfg")
    except ConfigurationError as exc:
        problems.append(str(exc))

    unknown = sorted(set(model_over) - set(ModelConfig.__dataclass_fields__))
    if unknown:
        problems.append(f"--model-cfg has unknown keys: {', '.join(unknown)}")
    unknown = sorted(set(trainer_over) - set(TrainConfig.__dataclass_fields__))
    if unknown:
        problems.append(f"--trainer-cfg has unknown keys: {', '.join(unknown)}")

    objective = _normalize_objective(
        args.objective or trainer_over.get("objective", "ot-fm")
    )
    if objective not in OBJECTIVES:
        problems.append(
            f"unknown objective {objective!r}; known: {', '.join(OBJECTIVES)} (or 'gaussian')"
        )
    trainer_over["objective"] = objective
    if args.steps is not None:
        trainer_over["steps"] = args.steps
    if args.seed is not None:
        trainer_over["seed"] = args.seed

    tc = None
    try:
        tc = TrainConfig.from_json(trainer_over)
    except ConfigurationError as exc:
        problems.append(str(exc))

    mc = None
    if scenario is not None and objective in OBJECTIVES:
        latent_dim = scenario.latent_layout().dim
        expected_out = (
            gaussian_head_out_dim(latent_dim)
            if objective == "gaussian-head"
            else latent_dim
        )
        merged = {
            "row_dim": scenario.row_dim,
            "latent_dim": latent_dim,
            "out_dim": expected_out,
        }
        merged.update(model_over)
        try:
            mc = ModelConfig.from_json(merged)
            if mc.out_dim != expected_out:
                problems.append(
                    f"out_dim {mc.out_dim} does not fit objective {objective!r} "
                    f"(expected {expected_out})"
                )
        except ConfigurationError as exc:
            problems.append(str(exc))

    if problems:
        raise ConfigurationError("\n".join(problems))

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    t0 = time.perf_counter()
    result = train(
        mc, scenario, tc, checkpoint_path=ckpt_path, resume_from=args.resume
    )
    wall = time.perf_counter() - t0
    log_path = os.path.join(args.out, "trainlog.csv")
    result.log.to_csv(log_path)

    inputs = [p for p in (args.resume,) if p]
    for raw in (args.model_cfg, args.trainer_cfg):
        if raw and not raw.lstrip().startswith("{") and os.path.exists(raw):
            inputs.append(raw)
    manifest = build_manifest(
        "train",
        sys.argv[1:],
        {
            "scenario": args.scenario,
            "model": mc.to_json(),
            "trainer": tc.to_json(),
        },
        inputs=inputs,
        seeds={"seed": tc.seed},
        wall_times={"train": wall},
        artifacts=[ckpt_path, log_path],
        base_dir=args.out,
    )
    manifest.save(os.path.join(args.out, "manifest.json"))
    val = "" if result.final_val_loss is None else f", val loss {result.final_val_loss:.4f}"
    print(
        f"train: {tc.steps} steps of {objective} on {args.scenario} in {wall:.1f}s; "
        f"final loss {result.final_train_loss:.4f}{val} -> {ckpt_path}"
    )
    return 0


def cmd_sample(args) -> int:
    params, _, model_cfg, metadata, _ = load_training_checkpoint(args.checkpoint)
    scenario_id = metadata.get("scenario_id")
    if not scenario_id:
        raise CheckpointError(f"{args.checkpoint}: no scenario recorded")
    scenario = get_scenario(scenario_id)
    rows = _load_rows(args.data, args.index, expect_scenario=scenario_id)
    objective = _normalize_objective(args.objective or metadata.get("objective", "ot-fm"))
    t0 = time.perf_counter()
    samples = sample_posterior(
        params,
        model_cfg,
        scenario,
        rows,
        args.n,
        objective=objective,
        seed=args.seed,
        rtol=args.rtol,
        atol=args.atol,
    )
    wall = time.perf_counter() - t0
    save_samples(args.out, samples)
    manifest = build_manifest(
        "sample",
        sys.argv[1:],
        {
            "checkpoint": str(args.checkpoint),
            "n": args.n,
            "objective": objective,
            "rtol": args.rtol,
            "atol": args.atol,
            "index": args.index,
        },
        inputs=[args.checkpoint, args.data],
        seeds={"seed": args.seed},
        wall_times={"sample": wall},
        artifacts=[args.out, f"{args.out}.json"],
        base_dir=os.path.dirname(args.out) or ".",
    )
    manifest.save(f"{args.out}.manifest.json")
    feval = samples.info.get("n_feval", "?")
    print(
        f"sample: {args.n} draws from {samples.method} on {scenario_id} "
        f"in {wall:.1f}s ({feval} field evals) -> {args.out}"
    )
    return 0


def cmd_infer(args) -> int:
    scenario = get_scenario(args.scenario)
    rows = _load_rows(args.data, args.index, expect_scenario=args.scenario)
    hmc_overrides = {}
    if args.chains is not None:
        hmc_overrides["n_chains"] = args.chains
    if args.burn is not None:
        hmc_overrides["n_burn"] = args.burn
    t0 = time.perf_counter()
    samples = draw_posterior_samples(
        args.method,
        scenario,
        rows,
        args.n,
        seed=args.seed,
        hmc_overrides=hmc_overrides,
    )
    wall = time.perf_counter() - t0
    save_samples(args.out, samples)
    manifest = build_manifest(
        "infer",
        sys.argv[1:],
        {
            "method": args.method,
            "scenario": args.scenario,
            "n": args.n,
            "index": args.index,
            "hmc": hmc_overrides,
        },
        inputs=[args.data],
        seeds={"seed": args.seed},
        wall_times={"infer": wall},
        artifacts=[args.out, f"{args.out}.json"],
        base_dir=os.path.dirname(args.out) or ".",
    )
    manifest.save(f"{args.out}.manifest.json")
    print(
        f"infer: {samples.n_draws} draws from {samples.method} on {args.scenario} "
        f"in {wall:.1f}s -> {args.out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = sorted(set(metrics) - set(SUITE_METRICS))
    if unknown or not metrics:
        raise ConfigurationError(
            f"unknown metrics: {', '.join(unknown) or '(none given)'}; "
            f"known: {', '.join(SUITE_METRICS)}"
        )
    set_a = load_samples(args.a)
    set_b = load_samples(args.b)
    a, b, common = project_to_common(set_a, set_b)
    eval_cfg = {"metrics": metrics, "classifier": args.classifier, "seed": args.seed}
    h = config_hash(eval_cfg)
    rows = []
    t0 = time.perf_counter()
    for metric in metrics:
        rng = derive_rng(args.seed, "evaluate", metric)
        val = metric_value(
            metric, a, b, classifier=args.classifier, seed=int(rng.integers(2**63))
        )
        rows.append(
            ReportRow(
                scenario=set_a.scenario_id,
                method=set_a.method,
                metric=metric,
                value=val,
                se=math.nan,
                n=1,
                config_hash=h,
            )
        )
    wall = time.perf_counter() - t0
    write_report(args.out, rows, append=True)
    manifest = build_manifest(
        "evaluate",
        sys.argv[1:],
        eval_cfg,
        inputs=[args.a, args.b],
        seeds={"seed": args.seed},
        wall_times={"evaluate": wall},
        artifacts=[args.out],
        base_dir=os.path.dirname(args.out) or ".",
    )
    manifest.save(f"{args.out}.manifest.json")
    for row in rows:
        print(f"{row.method} vs {set_b.method} on {len(common)} coords: {row.metric} = {row.value:.4f}")
    return 0


def cmd_benchmark(args) -> int:
    obj = _json_arg(args.suite, "--suite")
    if args.seed is not None:
        obj["seed"] = args.seed
    suite = SuiteConfig.from_json(obj)
    os.makedirs(args.out, exist_ok=True)
    return run_suite(suite, args.out, workers=args.workers, argv=sys.argv[1:])


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icbayes",
        description="Amortized in-context posterior sampling: data, training, "
        "inference, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="draw (dataset, latent) pairs from a scenario")
    g.add_argument("--scenario", required=True)
    g.add_argument("--n", type=int, required=True, help="number of datasets")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train an in-context posterior model")
    t.add_argument("--scenario", required=True)
    t.add_argument("--model-cfg", default=None, help="JSON file or inline JSON")
    t.add_argument("--trainer-cfg", default=None, help="JSON file or inline JSON")
    t.add_argument(
        "--objective",
        default=None,
        help="ot-fm | vp-fm | vp-sm | gaussian (default ot-fm)",
    )
    t.add_argument("--steps", type=int, default=None, help="override trainer steps")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--resume", default=None, help="checkpoint to resume from")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw posterior samples from a trained model")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True, help="rows CSV or gen-data container")
    s.add_argument("--index", type=int, default=0, help="dataset index in a container")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--rtol", type=float, default=1e-7)
    s.add_argument("--atol", type=float, default=1e-7)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--objective", default=None, help="override the stored objective")
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=cmd_sample)

    i = sub.add_parser("infer", help="run a reference inference method")
    i.add_argument(
        "--method",
        required=True,
        choices=["hmc", "laplace", "advi-diag", "advi-full", "map", "analytic"],
    )
    i.add_argument("--scenario", required=True)
    i.add_argument("--data", required=True, help="rows CSV or gen-data container")
    i.add_argument("--index", type=int, default=0)
    i.add_argument("--n", type=int, default=1000)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--chains", type=int, default=None, help="HMC chains (default 4, 3M on mixtures)")
    i.add_argument("--burn", type=int, default=None, help="HMC burn-in (default 500)")
    i.add_argument("--out", required=True, help="output CSV path")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("evaluate", help="compare two sample files")
    e.add_argument("--a", required=True, help="candidate samples CSV")
    e.add_argument("--b", required=True, help="reference samples CSV")
    e.add_argument("--metrics", default="c2st,mmd,w2")
    e.add_argument("--classifier", default="rf", choices=["rf", "mlp"])
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="report CSV (appended)")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="run a full suite from a JSON description")
    b.add_argument("--suite", required=True, help="JSON file or inline JSON")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--workers", type=int, default=None, help=f"cell workers (or ${'{'}ICBAYES_WORKERS{'}'})")
    b.add_argument("--seed", type=int, default=None, help="override the suite seed")
    b.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IcbError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
