"""CLI, manifests, and the benchmark harness."""

import json
import os

import numpy as np
import pytest

from icbayes.bench import (
    RunManifest,
    SuiteConfig,
    build_manifest,
    draw_posterior_samples,
    file_sha256,
    main,
    project_to_common,
    run_suite,
    worker_count,
)
from icbayes.errors import ConfigurationError, DataError
from icbayes.flowmatch import AdamState, TrainConfig, save_training_checkpoint
from icbayes.metrics import read_report
from icbayes.nncore import ModelConfig, init_parameters, load_checkpoint
from icbayes.odesolve import SampleSet, load_samples, save_samples
from icbayes.probmodels import get_scenario, sample_dataset
from icbayes.rngs import derive_rng

TINY_MODEL = {
    "d_model": 32,
    "d_ff": 48,
    "n_heads": 2,
    "n_encoder_blocks": 1,
    "n_decoder_blocks": 1,
    "n_head_layers": 1,
    "n_time_layers": 2,
}


# ---------------------------------------------------------------------------
# manifests


def test_manifest_round_trip_and_verify(tmp_path):
    art = tmp_path / "out.csv"
    art.write_text("a,b\n1,2\n")
    manifest = build_manifest(
        "evaluate",
        ["--a", "x"],
        {"metrics": ["w2"]},
        seeds={"seed": 3},
        wall_times={"evaluate": 0.1},
        artifacts=[art],
        base_dir=tmp_path,
    )
    path = tmp_path / "manifest.json"
    manifest.save(path)
    back = RunManifest.load(path)
    assert back == manifest
    assert back.verify(tmp_path) == []
    art.write_text("tampered")
    assert back.verify(tmp_path) == ["out.csv: hash mismatch"]
    art.unlink()
    assert back.verify(tmp_path) == ["out.csv: missing"]


def test_manifest_run_id_is_input_determined(tmp_path):
    a = build_manifest("gen-data", [], {"n": 3}, seeds={"seed": 0}, base_dir=tmp_path)
    b = build_manifest("gen-data", [], {"n": 3}, seeds={"seed": 0}, base_dir=tmp_path)
    c = build_manifest("gen-data", [], {"n": 3}, seeds={"seed": 1}, base_dir=tmp_path)
    assert a.run_id == b.run_id
    assert a.run_id != c.run_id


def test_manifest_missing_input_errors(tmp_path):
    with pytest.raises(DataError):
        build_manifest("sample", [], {}, inputs=[tmp_path / "ghost.bin"])


def test_worker_count_sources(monkeypatch):
    assert worker_count(4) == 4
    monkeypatch.setenv("ICBAYES_WORKERS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("ICBAYES_WORKERS", "soup")
    with pytest.raises(ConfigurationError):
        worker_count()
    monkeypatch.delenv("ICBAYES_WORKERS")
    assert worker_count() == 1


# ---------------------------------------------------------------------------
# suite config


def test_suite_config_round_trip():
    cfg = SuiteConfig.from_json(
        {"scenario": "glm-1-mini", "methods": ["analytic"], "metrics": ["w2"]}
    )
    assert cfg.reference == "analytic"
    again = SuiteConfig.from_json(cfg.to_json())
    assert again == cfg


def test_suite_config_collects_problems():
    with pytest.raises(ConfigurationError) as err:
        SuiteConfig.from_json(
            {
                "scenario": "nope",
                "n_datasets": 0,
                "metrics": ["w2", "banana"],
                "methods": ["icl"],
            }
        )
    msg = str(err.value)
    assert "unknown scenario" in msg
    assert "n_datasets" in msg
    assert "banana" in msg
    assert "checkpoint" in msg
    with pytest.raises(ConfigurationError, match="unknown suite keys"):
        SuiteConfig.from_json({"scenario": "glm-1", "tpyo": 1})


# ---------------------------------------------------------------------------
# sample-set projection


def test_project_to_common_restricts_to_shared_names():
    rng = np.random.default_rng(0)
    a = SampleSet("s", "m1", rng.standard_normal((10, 3)), ["x", "y", "z"])
    b = SampleSet("s", "m2", rng.standard_normal((12, 4)), ["w", "z", "y", "v"])
    pa, pb, common = project_to_common(a, b)
    assert common == ["y", "z"]
    assert pa.shape == (10, 2)
    np.testing.assert_array_equal(pb[:, 0], b.constrained[:, 2])
    c = SampleSet("s", "m3", rng.standard_normal((5, 1)), ["q"])
    with pytest.raises(DataError):
        project_to_common(a, c)


# ---------------------------------------------------------------------------
# CLI: gen-data


def test_cli_gen_data_writes_verified_container(tmp_path):
    out = tmp_path / "gen"
    code = main(
        ["gen-data", "--scenario", "glm-1", "--n", "10", "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    ck = load_checkpoint(out / "data.bin")
    assert ck.tensors["rows"].shape == (10, 50, 6)
    assert ck.tensors["latents"].shape == (10, 6)
    manifest = RunManifest.load(out / "manifest.json")
    assert manifest.verify(out) == []
    # identical seeds give identical bytes
    out2 = tmp_path / "gen2"
    main(["gen-data", "--scenario", "glm-1", "--n", "10", "--seed", "3", "--out", str(out2)])
    assert file_sha256(out / "data.bin") == file_sha256(out2 / "data.bin")


def test_cli_gen_data_unknown_scenario_exits_2(tmp_path, capsys):
    code = main(["gen-data", "--scenario", "nope", "--n", "2", "--out", str(tmp_path)])
    assert code == 2
    assert "unknown scenario" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# CLI: train / sample


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = main(
        [
            "train",
            "--scenario",
            "glm-1-mini",
            "--model-cfg",
            json.dumps(TINY_MODEL),
            "--trainer-cfg",
            '{"steps": 30, "batch_size": 16, "max_lr": 2e-3, "log_every": 10}',
            "--seed",
            "3",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out


def test_cli_train_outputs(trained_dir):
    assert (trained_dir / "model.ckpt").exists()
    log = (trained_dir / "trainlog.csv").read_text().splitlines()
    assert log[0] == "step,lr,train_loss,val_loss,grad_norm,wall_ms"
    assert len(log) > 1
    manifest = RunManifest.load(trained_dir / "manifest.json")
    assert manifest.verify(trained_dir) == []
    assert manifest.seeds == {"seed": 3}


def test_cli_train_lists_all_config_problems(tmp_path, capsys):
    code = main(
        [
            "train",
            "--scenario",
            "nope",
            "--objective",
            "warp",
            "--trainer-cfg",
            '{"steps": -5, "typo_key": 1}',
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert "unknown scenario" in err
    assert "typo_key" in err
    assert "warp" in err
    assert "steps" in err


def test_cli_train_gaussian_alias_sets_head_dim(tmp_path):
    out = tmp_path / "g"
    code = main(
        [
            "train",
            "--scenario",
            "glm-1-mini",
            "--model-cfg",
            json.dumps(TINY_MODEL),
            "--trainer-cfg",
            '{"steps": 4, "batch_size": 8}',
            "--objective",
            "gaussian",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    ck = load_checkpoint(out / "model.ckpt")
    assert ck.metadata["objective"] == "gaussian-head"
    # mean (3) + log-diag (3) + strict lower triangle (3)
    assert ck.model_config["out_dim"] == 9


def test_cli_sample_zero_field_checkpoint_returns_base_draws(tmp_path):
    scenario = get_scenario("glm-1-mini")
    layout = scenario.latent_layout()
    mc = ModelConfig(row_dim=scenario.row_dim, latent_dim=layout.dim,
                     out_dim=layout.dim, **TINY_MODEL)
    # fresh init zero-gates every block, so the learned field is identically 0
    params = init_parameters(mc, derive_rng(0, "init"))
    ckpt = tmp_path / "zero.ckpt"
    save_training_checkpoint(
        ckpt, params, AdamState.fresh(params), mc, "glm-1-mini",
        TrainConfig(steps=1, objective="ot-fm"), 0,
    )
    rows_csv = tmp_path / "rows.csv"
    dataset, _ = sample_dataset(scenario, derive_rng(5, "ds"))
    np.savetxt(rows_csv, dataset.rows, delimiter=",", header="u0,u1,y", comments="")
    out = tmp_path / "draws.csv"
    code = main(
        ["sample", "--checkpoint", str(ckpt), "--data", str(rows_csv),
         "--n", "50", "--seed", "9", "--out", str(out)]
    )
    assert code == 0
    samples = load_samples(out)
    base = derive_rng(9, "posterior-draws").standard_normal((50, layout.dim))
    np.testing.assert_array_equal(samples.constrained, layout.constrain(base))
    manifest = RunManifest.load(f"{out}.manifest.json")
    assert manifest.verify(tmp_path) == []


def test_cli_sample_from_container(trained_dir, tmp_path):
    gen = tmp_path / "gen"
    main(["gen-data", "--scenario", "glm-1-mini", "--n", "3", "--seed", "1", "--out", str(gen)])
    out = tmp_path / "s.csv"
    code = main(
        ["sample", "--checkpoint", str(trained_dir / "model.ckpt"), "--data",
         str(gen / "data.bin"), "--index", "2", "--n", "40", "--out", str(out)]
    )
    assert code == 0
    samples = load_samples(out)
    assert samples.n_draws == 40
    assert samples.method == "icl-ot-fm"
    assert np.all(np.isfinite(samples.constrained))
    # out-of-range dataset index is a config error
    code = main(
        ["sample", "--checkpoint", str(trained_dir / "model.ckpt"), "--data",
         str(gen / "data.bin"), "--index", "7", "--n", "10", "--out", str(out)]
    )
    assert code == 2


def test_cli_sample_scenario_mismatch(trained_dir, tmp_path):
    gen = tmp_path / "other"
    main(["gen-data", "--scenario", "glm-1", "--n", "1", "--seed", "0", "--out", str(gen)])
    code = main(
        ["sample", "--checkpoint", str(trained_dir / "model.ckpt"), "--data",
         str(gen / "data.bin"), "--n", "10", "--out", str(tmp_path / "x.csv")]
    )
    assert code == 2


# ---------------------------------------------------------------------------
# CLI: infer / evaluate


@pytest.fixture(scope="module")
def mini_rows(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--scenario", "glm-1-mini", "--n", "1", "--seed", "4",
                 "--out", str(out)]) == 0
    return out / "data.bin"


def test_cli_infer_analytic_and_hmc(mini_rows, tmp_path):
    nig = tmp_path / "nig.csv"
    code = main(["infer", "--method", "analytic", "--scenario", "glm-1-mini",
                 "--data", str(mini_rows), "--n", "120", "--out", str(nig)])
    assert code == 0
    a = load_samples(nig)
    assert a.method == "analytic"
    assert a.n_draws == 120
    assert a.constrained_names == ["beta_0", "beta_1", "sigma2"]
    assert np.all(a.constrained[:, 2] > 0)

    hmc = tmp_path / "hmc.csv"
    code = main(["infer", "--method", "hmc", "--scenario", "glm-1-mini",
                 "--data", str(mini_rows), "--n", "120", "--chains", "2",
                 "--burn", "100", "--out", str(hmc)])
    assert code == 0
    h = load_samples(hmc)
    assert h.n_draws == 120
    assert h.info["max_r_hat"] > 0


def test_cli_infer_map_emits_repeated_point(mini_rows, tmp_path):
    out = tmp_path / "map.csv"
    code = main(["infer", "--method", "map", "--scenario", "glm-1-mini",
                 "--data", str(mini_rows), "--n", "30", "--out", str(out)])
    assert code == 0
    m = load_samples(out)
    assert m.n_draws == 30
    assert np.all(m.constrained == m.constrained[0])
    assert m.info["converged"] is True


def test_cli_infer_analytic_rejects_nonconjugate(tmp_path):
    gen = tmp_path / "gmm"
    main(["gen-data", "--scenario", "gmm-mini", "--n", "1", "--seed", "0", "--out", str(gen)])
    code = main(["infer", "--method", "analytic", "--scenario", "gmm-mini",
                 "--data", str(gen / "data.bin"), "--out", str(tmp_path / "x.csv")])
    assert code == 2


def test_cli_evaluate_identical_files_give_zero_w2(mini_rows, tmp_path):
    draws = tmp_path / "d.csv"
    main(["infer", "--method", "analytic", "--scenario", "glm-1-mini",
          "--data", str(mini_rows), "--n", "100", "--out", str(draws)])
    report = tmp_path / "report.csv"
    code = main(["evaluate", "--a", str(draws), "--b", str(draws),
                 "--metrics", "w2,mmd", "--out", str(report)])
    assert code == 0
    rows = read_report(report)
    w2 = next(r for r in rows if r.metric == "w2")
    assert w2.value == 0.0
    assert w2.method == "analytic"
    # appending keeps earlier rows
    code = main(["evaluate", "--a", str(draws), "--b", str(draws),
                 "--metrics", "w2", "--out", str(report)])
    assert code == 0
    assert len(read_report(report)) == 3


def test_cli_evaluate_unknown_metric_exits_2(tmp_path, capsys):
    code = main(["evaluate", "--a", "x.csv", "--b", "y.csv",
                 "--metrics", "w2,blah", "--out", str(tmp_path / "r.csv")])
    assert code == 2
    assert "blah" in capsys.readouterr().err


def test_cli_evaluate_too_few_points_is_runtime_error(tmp_path, capsys):
    tiny = SampleSet("s", "m", np.arange(6.0).reshape(3, 2), ["a", "b"])
    pa = tmp_path / "a.csv"
    save_samples(pa, tiny)
    code = main(["evaluate", "--a", str(pa), "--b", str(pa),
                 "--metrics", "c2st", "--out", str(tmp_path / "r.csv")])
    assert code == 3


# ---------------------------------------------------------------------------
# benchmark harness


def test_run_suite_counts_outputs_and_is_repeatable(tmp_path):
    suite = SuiteConfig(
        scenario="glm-1-mini",
        n_datasets=2,
        n_draws=80,
        seed=0,
        reference="analytic",
        methods=("analytic", "laplace"),
        metrics=("w2",),
        kde_points=8,
    )
    out_a = tmp_path / "a"
    out_a.mkdir()
    assert run_suite(suite, out_a) == 0
    # 2 datasets x (2 methods + 1 null reference) sample files
    files = sorted(os.listdir(out_a / "samples"))
    assert len([f for f in files if f.endswith(".csv")]) == 6
    summary = (out_a / "summary.csv").read_text().splitlines()
    assert summary[0] == "scenario,method,metric,value,se,n,config_hash,bold"
    assert len(summary) == 3  # one line per method
    assert (out_a / "kde" / "ds000.csv").exists()
    manifest = RunManifest.load(out_a / "manifest.json")
    assert manifest.verify(out_a) == []

    out_b = tmp_path / "b"
    out_b.mkdir()
    assert run_suite(suite, out_b) == 0
    assert (out_a / "summary.csv").read_text() == (out_b / "summary.csv").read_text()
    assert (out_a / "values.csv").read_text() == (out_b / "values.csv").read_text()


def test_run_suite_marks_failed_cells_and_continues(tmp_path):
    suite = SuiteConfig(
        scenario="glm-1-mini",
        n_datasets=2,
        n_draws=60,
        seed=1,
        reference="analytic",
        methods=("analytic", "nope"),
        metrics=("w2",),
        kde_points=0,
    )
    out = tmp_path / "f"
    out.mkdir()
    assert run_suite(suite, out) == 4
    cells = (out / "cells.csv").read_text()
    assert "FAILED" in cells
    assert "unknown method" in cells
    summary = (out / "summary.csv").read_text()
    assert "analytic" in summary  # the healthy method still gets summarized


def test_run_suite_parallel_matches_serial(tmp_path):
    suite = SuiteConfig(
        scenario="glm-1-mini",
        n_datasets=2,
        n_draws=60,
        seed=2,
        reference="analytic",
        methods=("analytic", "map"),
        metrics=("w2",),
        kde_points=0,
    )
    serial = tmp_path / "serial"
    serial.mkdir()
    parallel = tmp_path / "par"
    parallel.mkdir()
    assert run_suite(suite, serial, workers=1) == 0
    assert run_suite(suite, parallel, workers=2) == 0
    assert (serial / "values.csv").read_text() == (parallel / "values.csv").read_text()


def test_draw_posterior_samples_icl_requires_checkpoint():
    scenario = get_scenario("glm-1-mini")
    rows = np.zeros((20, 3))
    with pytest.raises(ConfigurationError, match="checkpoint"):
        draw_posterior_samples("icl", scenario, rows, 10)
