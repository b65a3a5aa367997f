"""Training objectives, the example stream, and the trainer loop."""

import math
import os
import shutil

import numpy as np
import pytest

from icbayes.errors import ConfigurationError, TrainingError
from icbayes.flowmatch import (
    OMEGA,
    SIGMA_MIN,
    VP_T_MIN,
    TrainConfig,
    TrainLog,
    cfm_target,
    clip_gradients_,
    conditional_path,
    gaussian_head_nll,
    global_grad_norm,
    loss_fn,
    lr_at,
    make_batch,
    make_example,
    train,
    vp_alpha,
    vp_alpha_prime,
    vp_beta,
    vp_fm_target,
    vp_sigma,
    vp_sigma_prime,
)
from icbayes.flowmatch.trainer import AdamState, adamw_step_, load_training_checkpoint
from icbayes.nncore.autodiff import parameter
from icbayes.nncore.model import (
    ModelConfig,
    gaussian_head_out_dim,
    init_parameters,
)
from icbayes.probmodels import get_scenario
from icbayes.rngs import derive_rng

SCEN = get_scenario("glm-1-mini")
LAT = SCEN.latent_layout().dim


def tiny_model(out_dim=None):
    return ModelConfig(
        row_dim=SCEN.row_dim,
        latent_dim=LAT,
        out_dim=LAT if out_dim is None else out_dim,
        d_model=16,
        d_ff=32,
        n_heads=2,
        n_encoder_blocks=1,
        n_decoder_blocks=1,
        n_head_layers=1,
        n_time_layers=2,
    )


# ---------------------------------------------------------------------------
# probability paths


def test_conditional_path_endpoints():
    rng = np.random.default_rng(0)
    z0 = rng.standard_normal((7, 4))
    z1 = rng.standard_normal((7, 4))
    np.testing.assert_array_equal(conditional_path(z0, z1, 0.0), z0)
    end = conditional_path(z0, z1, 1.0)
    np.testing.assert_allclose(end, z1 + SIGMA_MIN * z0, rtol=0, atol=1e-15)


def test_cfm_target_is_the_path_velocity():
    rng = np.random.default_rng(1)
    z0 = rng.standard_normal((5, 3))
    z1 = rng.standard_normal((5, 3))
    h = 1e-6
    for t in (0.1, 0.5, 0.93):
        fd = (conditional_path(z0, z1, t + h) - conditional_path(z0, z1, t - h)) / (2 * h)
        np.testing.assert_allclose(fd, cfm_target(z0, z1), rtol=1e-8)


def test_vp_schedule_unit_variance():
    t = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(vp_alpha(t) ** 2 + vp_sigma(t) ** 2, 1.0, rtol=1e-12)


def test_vp_schedule_endpoints():
    assert vp_alpha(0.0) == 1.0
    assert vp_sigma(0.0) == 0.0
    assert vp_alpha(1.0) < 0.01
    assert vp_sigma(1.0) > 0.999


def test_vp_derivatives_match_finite_differences():
    h = 1e-6
    t = np.linspace(VP_T_MIN, 0.999, 37)
    fd_alpha = (vp_alpha(t + h) - vp_alpha(t - h)) / (2 * h)
    fd_sigma = (vp_sigma(t + h) - vp_sigma(t - h)) / (2 * h)
    np.testing.assert_allclose(vp_alpha_prime(t), fd_alpha, rtol=1e-7)
    np.testing.assert_allclose(vp_sigma_prime(t), fd_sigma, rtol=1e-6)


def test_vp_fm_target_matches_generic_form():
    # the generic conditional velocity (sigma'/sigma)(z_t - alpha z1) + alpha' z1
    # must collapse to sigma' eps + alpha' z1 when z_t sits on the path
    rng = np.random.default_rng(2)
    z1 = rng.standard_normal((6, 3))
    eps = rng.standard_normal((6, 3))
    for t in (0.05, 0.4, 0.95):
        zt = vp_alpha(t) * z1 + vp_sigma(t) * eps
        generic = (vp_sigma_prime(t) / vp_sigma(t)) * (zt - vp_alpha(t) * z1) \
            + vp_alpha_prime(t) * z1
        np.testing.assert_allclose(vp_fm_target(z1, eps, t), generic, rtol=1e-10)


def test_vp_fm_target_is_path_velocity():
    rng = np.random.default_rng(3)
    z1 = rng.standard_normal((4, 2))
    eps = rng.standard_normal((4, 2))
    h = 1e-6
    for t in (0.1, 0.6, 0.9):
        zp = vp_alpha(t + h) * z1 + vp_sigma(t + h) * eps
        zm = vp_alpha(t - h) * z1 + vp_sigma(t - h) * eps
        np.testing.assert_allclose((zp - zm) / (2 * h), vp_fm_target(z1, eps, t),
                                   rtol=1e-6)


def test_vp_beta_is_linear():
    np.testing.assert_allclose(vp_beta(0.0), 0.1)
    np.testing.assert_allclose(vp_beta(1.0), 20.0)
    np.testing.assert_allclose(vp_beta(0.5), 0.5 * (0.1 + 20.0))


def test_omega_matches_sigma_min():
    assert OMEGA == 1.0 - SIGMA_MIN


# ---------------------------------------------------------------------------
# objectives on the tape


def test_gaussian_head_nll_at_init_is_standard_normal():
    # zero-init output layer => predicted mean 0, covariance identity, so the
    # loss is exactly mean(0.5 ||z1||^2) + d/2 log 2pi
    cfg = tiny_model(out_dim=gaussian_head_out_dim(LAT))
    params = init_parameters(cfg, np.random.default_rng(0))
    pvars = {k: parameter(v) for k, v in params.items()}
    rows, z1 = make_batch(SCEN, 0, "train", 0, 9)
    nll = gaussian_head_nll(pvars, cfg, rows, z1)
    expected = 0.5 * np.mean(np.sum(z1 * z1, axis=1)) + 0.5 * LAT * np.log(2 * np.pi)
    np.testing.assert_allclose(nll.value, expected, rtol=1e-12)


def test_gaussian_head_rejects_wrong_out_dim():
    cfg = tiny_model(out_dim=LAT)
    params = init_parameters(cfg, np.random.default_rng(0))
    pvars = {k: parameter(v) for k, v in params.items()}
    rows, z1 = make_batch(SCEN, 0, "train", 0, 2)
    with pytest.raises(ConfigurationError):
        gaussian_head_nll(pvars, cfg, rows, z1)


def test_loss_fn_registry():
    assert loss_fn("ot-fm").__name__ == "ot_fm_loss"
    assert loss_fn("gaussian-head").__name__ == "gaussian_head_nll"
    with pytest.raises(ConfigurationError):
        loss_fn("score-matching-deluxe")


@pytest.mark.parametrize("objective", ["ot-fm", "vp-fm", "vp-sm"])
def test_velocity_losses_are_pure_target_norm_at_init(objective):
    # v == 0 at init, so the loss equals the mean squared target norm; with a
    # fixed rng the two computations consume identical draws
    cfg = tiny_model()
    params = init_parameters(cfg, np.random.default_rng(0))
    pvars = {k: parameter(v) for k, v in params.items()}
    rows, z1 = make_batch(SCEN, 1, "train", 0, 8)
    loss = loss_fn(objective)(pvars, cfg, rows, z1, np.random.default_rng(42))

    rng = np.random.default_rng(42)
    b, d = z1.shape
    if objective == "ot-fm":
        z0 = rng.standard_normal((b, d))
        rng.random((b, 1))
        target = cfm_target(z0, z1)
    else:
        eps = rng.standard_normal((b, d))
        t = VP_T_MIN + (1.0 - VP_T_MIN) * rng.random((b, 1))
        target = vp_fm_target(z1, eps, t) if objective == "vp-fm" else eps
    np.testing.assert_allclose(loss.value, np.mean(np.sum(target**2, axis=1)),
                               rtol=1e-12)


# ---------------------------------------------------------------------------
# example stream


def test_stream_is_a_pure_function_of_coordinates():
    rows_a, lat_a = make_example(SCEN, 5, "train", 7)
    rows_b, lat_b = make_example(SCEN, 5, "train", 7)
    np.testing.assert_array_equal(rows_a, rows_b)
    np.testing.assert_array_equal(lat_a, lat_b)
    assert rows_a.shape == (SCEN.K, SCEN.row_dim)
    assert lat_a.shape == (LAT,)


def test_stream_coordinates_decorrelate():
    base = make_example(SCEN, 5, "train", 7)[1]
    assert not np.array_equal(base, make_example(SCEN, 5, "train", 8)[1])
    assert not np.array_equal(base, make_example(SCEN, 5, "val", 7)[1])
    assert not np.array_equal(base, make_example(SCEN, 6, "train", 7)[1])


def test_batch_stacks_consecutive_examples():
    rows, lats = make_batch(SCEN, 3, "val", 10, 4)
    assert rows.shape == (4, SCEN.K, SCEN.row_dim)
    for i in range(4):
        r, l = make_example(SCEN, 3, "val", 10 + i)
        np.testing.assert_array_equal(rows[i], r)
        np.testing.assert_array_equal(lats[i], l)


def test_stream_rejects_unknown_split():
    with pytest.raises(ConfigurationError):
        make_example(SCEN, 0, "holdout", 0)


# ---------------------------------------------------------------------------
# schedule and optimizer


def test_lr_schedule_shape():
    tc = TrainConfig(steps=100, max_lr=1e-3, warmup_frac=0.1, final_lr_factor=1e-4)
    warmup = 10
    ramp = [lr_at(tc, s) for s in range(warmup)]
    np.testing.assert_allclose(ramp, 1e-3 * (np.arange(warmup) + 1) / warmup)
    assert lr_at(tc, warmup) == pytest.approx(1e-3)
    assert lr_at(tc, 99) == pytest.approx(1e-7)
    decay = [lr_at(tc, s) for s in range(warmup, 100)]
    assert all(a >= b for a, b in zip(decay, decay[1:]))


def test_lr_schedule_without_warmup():
    tc = TrainConfig(steps=50, max_lr=2e-3, warmup_frac=0.0)
    assert lr_at(tc, 0) == pytest.approx(2e-3)
    assert lr_at(tc, 49) == pytest.approx(2e-7)


def test_global_grad_norm_is_order_independent():
    rng = np.random.default_rng(0)
    grads = {f"t{i}": rng.standard_normal((3, 5)) for i in range(6)}
    flat = np.concatenate([g.ravel() for g in grads.values()])
    expected = math.sqrt(math.fsum(float(x) * float(x) for x in flat))
    assert global_grad_norm(grads) == pytest.approx(expected, rel=1e-15)
    reordered = dict(sorted(grads.items(), reverse=True))
    assert global_grad_norm(reordered) == global_grad_norm(grads)


def test_clip_scales_to_the_requested_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([0.0, 4.0])}
    raw = clip_gradients_(grads, 1.0)
    assert raw == pytest.approx(5.0)
    assert global_grad_norm(grads) == pytest.approx(1.0)
    grads2 = {"a": np.array([0.3, 0.4])}
    raw2 = clip_gradients_(grads2, 1.0)
    assert raw2 == pytest.approx(0.5)
    np.testing.assert_array_equal(grads2["a"], [0.3, 0.4])


def _reference_adamw(params, grads, m, v, step, lr, tc):
    # independent transcription of decoupled-weight-decay Adam
    out = {}
    for k in params:
        m[k] = tc.beta1 * m[k] + (1 - tc.beta1) * grads[k]
        v[k] = tc.beta2 * v[k] + (1 - tc.beta2) * grads[k] ** 2
        mhat = m[k] / (1 - tc.beta1**step)
        vhat = v[k] / (1 - tc.beta2**step)
        p = params[k] * (1 - lr * tc.weight_decay)
        out[k] = p - lr * mhat / (np.sqrt(vhat) + tc.eps)
    return out


def test_adamw_matches_independent_reference():
    tc = TrainConfig(steps=10, weight_decay=0.01)
    rng = np.random.default_rng(4)
    params = {"w": rng.standard_normal((4, 3)), "b": rng.standard_normal(3)}
    ref_params = {k: p.copy() for k, p in params.items()}
    ref_m = {k: np.zeros_like(p) for k, p in params.items()}
    ref_v = {k: np.zeros_like(p) for k, p in params.items()}
    state = AdamState.fresh(params)
    for step in range(1, 6):
        grads = {k: rng.standard_normal(p.shape) for k, p in params.items()}
        adamw_step_(params, grads, state, 1e-3, tc)
        ref_params = _reference_adamw(ref_params, grads, ref_m, ref_v, step, 1e-3, tc)
        for k in params:
            np.testing.assert_allclose(params[k], ref_params[k], rtol=1e-12)
    assert state.step == 5


# ---------------------------------------------------------------------------
# the training loop


def test_training_reduces_loss():
    tc = TrainConfig(steps=80, batch_size=16, max_lr=2e-3, seed=3, log_every=1)
    res = train(tiny_model(), SCEN, tc)
    losses = [r["train_loss"] for r in res.log.rows]
    assert len(losses) == 80
    assert np.mean(losses[-10:]) < np.mean(losses[:10])
    assert res.scenario_id == "glm-1-mini"
    assert all(np.isfinite(r["grad_norm"]) for r in res.log.rows)


def test_resume_is_bitwise(tmp_path):
    mc = tiny_model()
    tc = TrainConfig(steps=12, batch_size=8, max_lr=1e-3, seed=7,
                     val_every=6, val_batches=2, checkpoint_every=5, log_every=3)
    full_ck = tmp_path / "full.icb"
    mid_ck = tmp_path / "mid.icb"

    def grab(step, loss):
        # the step-5 checkpoint exists once step 5 starts reporting
        if step == 5 and os.path.exists(full_ck):
            shutil.copy(full_ck, mid_ck)

    res_full = train(mc, SCEN, tc, checkpoint_path=full_ck, progress=grab)
    resumed_ck = tmp_path / "resumed.icb"
    res_resumed = train(mc, SCEN, tc, resume_from=mid_ck, checkpoint_path=resumed_ck)
    for k in res_full.params:
        np.testing.assert_array_equal(res_full.params[k], res_resumed.params[k])
    assert full_ck.read_bytes() == resumed_ck.read_bytes()

    params, state, cfg, meta, completed = load_training_checkpoint(mid_ck)
    assert completed == 5
    assert state.step == 5
    assert cfg == mc
    assert meta["objective"] == "ot-fm"
    assert meta["scenario_id"] == "glm-1-mini"


def test_resume_rejects_objective_and_config_mismatch(tmp_path):
    mc = tiny_model()
    tc = TrainConfig(steps=3, batch_size=4, seed=1)
    ck = tmp_path / "ck.icb"
    train(mc, SCEN, tc, checkpoint_path=ck)
    with pytest.raises(TrainingError):
        train(mc, SCEN, TrainConfig(steps=3, batch_size=4, objective="vp-fm"),
              resume_from=ck)
    other = ModelConfig(row_dim=SCEN.row_dim, latent_dim=LAT, out_dim=LAT,
                        d_model=8, d_ff=16, n_heads=2, n_encoder_blocks=1,
                        n_decoder_blocks=1, n_head_layers=1, n_time_layers=2)
    with pytest.raises(TrainingError):
        train(other, SCEN, tc, resume_from=ck)


def test_train_rejects_dimension_mismatch():
    bad_rows = ModelConfig(row_dim=SCEN.row_dim + 1, latent_dim=LAT, out_dim=LAT,
                           d_model=8, d_ff=16, n_heads=2, n_encoder_blocks=1,
                           n_decoder_blocks=1, n_head_layers=1, n_time_layers=2)
    with pytest.raises(ConfigurationError, match="row_dim"):
        train(bad_rows, SCEN, TrainConfig(steps=1))
    bad_latent = ModelConfig(row_dim=SCEN.row_dim, latent_dim=LAT + 2,
                             out_dim=LAT + 2, d_model=8, d_ff=16, n_heads=2,
                             n_encoder_blocks=1, n_decoder_blocks=1,
                             n_head_layers=1, n_time_layers=2)
    with pytest.raises(ConfigurationError, match="latent"):
        train(bad_latent, SCEN, TrainConfig(steps=1))


def test_val_loss_uses_fixed_batches():
    tc = TrainConfig(steps=4, batch_size=4, seed=9, val_every=2, val_batches=2)
    res = train(tiny_model(), SCEN, tc)
    vals = [r["val_loss"] for r in res.log.rows if r["val_loss"] is not None]
    assert len(vals) == 2
    assert res.final_val_loss == vals[-1]


def test_train_config_validation_collects_all_problems():
    bad = TrainConfig(steps=0, batch_size=0, max_lr=-1.0, objective="nope")
    with pytest.raises(ConfigurationError) as err:
        bad.validate()
    msg = str(err.value)
    for frag in ("steps", "batch_size", "max_lr", "objective"):
        assert frag in msg


def test_train_config_json_round_trip():
    tc = TrainConfig(steps=17, batch_size=5, objective="vp-sm", seed=11,
                     val_every=4, checkpoint_every=8)
    assert TrainConfig.from_json(tc.to_json()) == tc


def test_train_log_csv(tmp_path):
    log = TrainLog()
    log.append(0, 1e-4, 2.5, None, 0.7, 12.0)
    log.append(1, 2e-4, 2.4, 2.45, 0.6, 11.0)
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,lr,train_loss,val_loss,grad_norm,wall_ms"
    assert lines[1].split(",")[3] == ""
    assert float(lines[2].split(",")[3]) == 2.45
