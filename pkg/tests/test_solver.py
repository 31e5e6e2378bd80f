from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import FROZEN_LOSS, FROZEN_MASK, grid_argmin, grid_brute, pixel_value, seeded_pairs
from rgi import autodiff as ad
from rgi.corruption import CorruptionSpec, corrupt, sample_clean
from rgi.generator import ManifoldSpec, forward, generate, make_affine_generator, make_mlp_generator
from rgi.solver import (AdamState, SolverConfig, adam_step, binarize_mask, invert_baseline, optimal_mask,
                        optimal_mask_pixel, rgi_objective, robust_loss_pixel, solve_rgi, solve_rrgi,
                        sweep_lambda)

AFFINE = make_affine_generator(ManifoldSpec(2, (16, 16), 0))
MLP = make_mlp_generator(ManifoldSpec(4, (8, 8), 0), hidden=(8,))
residuals = st.floats(-10, 10, allow_nan=False)
lams = st.floats(0, 5, allow_nan=False)


@pytest.mark.parametrize("key,value", FROZEN_MASK.items())
def test_mask_frozen_values(key, value):
    assert optimal_mask_pixel(*key) == value


@pytest.mark.parametrize("key,value", FROZEN_LOSS.items())
def test_loss_frozen_values(key, value):
    assert abs(robust_loss_pixel(*key) - value) < 1e-15


def test_mask_against_grid_oracle():
    r, lam = seeded_pairs(2000, seed=7)
    M = np.array([optimal_mask_pixel(a, b) for a, b in zip(r, lam)])
    Mg, fg = grid_argmin(r, lam)
    assert np.all(pixel_value(r, M, lam) - fg <= 1e-12)
    assert np.all(np.abs(M - Mg) <= 2e-6)


def test_grid_bisection_agrees_with_full_scan():
    for r, lam in [(1.0, 0.5), (0.3, 1.0), (-2.2, 0.01), (0.7, 0.98)]:
        Mb, fb = grid_brute(r, lam)
        Mg, fg = grid_argmin(np.array([r]), np.array([lam]))
        assert abs(Mb - Mg[0]) < 1e-12 and abs(fb - fg[0]) < 1e-15


@settings(max_examples=200)
@given(residuals, lams)
def test_robust_loss_is_profiled_objective(r, lam):
    M = optimal_mask_pixel(r, lam)
    assert abs(robust_loss_pixel(r, lam) - pixel_value(r, M, lam)) <= 1e-12 * max(1.0, lam)
    assert 0.0 <= M <= 1.0


@settings(max_examples=200)
@given(residuals, st.floats(1e-6, 5))
def test_bounded_influence(r, lam):
    assert 0.0 <= robust_loss_pixel(r, lam) < lam or robust_loss_pixel(r, lam) == pytest.approx(lam, rel=1e-12)
    assert robust_loss_pixel(r, lam) <= r * r + 1e-15


def test_loss_tends_to_lambda():
    assert robust_loss_pixel(1e8, 0.5) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=100)
@given(residuals, lams, lams)
def test_monotone_in_lambda(r, a, b):
    lo, hi = min(a, b), max(a, b)
    assert optimal_mask_pixel(r, hi) <= optimal_mask_pixel(r, lo)
    assert robust_loss_pixel(r, hi) >= robust_loss_pixel(r, lo) - 1e-15


def test_zero_residual_and_negative_lambda():
    assert optimal_mask_pixel(0.0, 0.3) == 0.0
    with pytest.raises(ValueError):
        optimal_mask_pixel(1.0, -0.1)
    with pytest.raises(ValueError):
        robust_loss_pixel(1.0, -0.1)


def test_l1_mask_minimises_linear_objective():
    r, lam = seeded_pairs(500, seed=3)
    M = np.array([optimal_mask(np.array(a), b, "l1") for a, b in zip(r, lam)])
    grid = np.linspace(0, 1, 101)
    vals = np.abs(r[:, None]) * (1 - grid[None, :]) + lam[:, None] * grid[None, :]
    ours = np.abs(r) * (1 - M) + lam * M
    assert np.all(ours <= vals.min(axis=1) + 1e-12)


def test_binarize():
    assert not binarize_mask(np.zeros((3, 3))).any()
    M = np.array([optimal_mask_pixel(0.0, 0.5), optimal_mask_pixel(1.0, 0.5)])
    assert binarize_mask(M, 0.5).tolist() == [0.0, 1.0]
    soft = np.random.default_rng(0).uniform(size=50)
    assert np.all(binarize_mask(soft, 0.7) <= binarize_mask(soft, 0.3))
    with pytest.raises(ValueError):
        binarize_mask(soft, 1.0)


def test_adam_zero_gradient_keeps_param():
    s = AdamState.like(np.ones(3))
    p = np.array([1.0, -2.0, 3.0])
    for _ in range(10):
        p2 = adam_step(s, p, np.zeros(3), 0.1)
    assert np.array_equal(p2, p)


def test_adam_quadratic_converges():
    w, s = np.array(1.0), AdamState.like(np.array(1.0))
    for _ in range(200):
        w = adam_step(s, w, 2 * w, 0.1)
    assert abs(w) < 1e-3


def test_adam_first_step_is_lr_sign():
    s = AdamState.like(np.zeros(2))
    out = adam_step(s, np.zeros(2), np.array([3.0, -0.5]), 0.01)
    assert np.allclose(out, [-0.01, 0.01], rtol=1e-6)


def test_rgi_objective_gradient_matches_fd():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(8, 8))
    M = rng.uniform(size=(8, 8))
    z0 = rng.normal(size=4)
    for loss in ("l2", "l1"):
        z = ad.variable(z0)
        ad.backward(rgi_objective(forward(MLP, z), x, M, 0.3, loss))
        f = lambda v: rgi_objective(forward(MLP, ad.constant(v)), x, M, 0.3, loss).value
        assert np.all(ad.relative_error(z.grad, ad.finite_difference_gradient(f, z0)) < 1e-4)


def test_baseline_recovers_affine_latent():
    z0 = np.array([0.7, -1.2])
    x = generate(AFFINE, z0)
    cfg = SolverConfig(iterations=1500, init_z="seeded_normal", lr_z=0.05)
    res = invert_baseline(AFFINE, x, cfg)
    assert res.objective < 1e-8
    assert not res.M_hat.any()


def test_zero_iterations_returns_init():
    res = solve_rgi(AFFINE, np.zeros((16, 16)), SolverConfig(iterations=0))
    assert np.array_equal(res.z_hat, np.zeros(2))


def test_clean_affine_gives_empty_mask():
    z, clean = sample_clean(AFFINE, 3)
    res = solve_rgi(AFFINE, clean, SolverConfig(lam=0.1, iterations=2000))
    assert res.M_hat.max() < 1e-3
    assert np.max(np.abs(res.z_hat - z)) < 1e-3


def test_block_corruption_masked():
    z, clean = sample_clean(MLP, 2)
    s = corrupt(clean, z, CorruptionSpec(block=4, level=3.0, seed=0))
    res = solve_rgi(MLP, s.image, SolverConfig(lam=0.1, iterations=1500, restarts=3))
    assert np.array_equal(res.binary_mask, s.true_mask)


def test_huge_lambda_matches_baseline_bitwise():
    z, clean = sample_clean(MLP, 1)
    s = corrupt(clean, z, CorruptionSpec(block=4, seed=1))
    cfg = SolverConfig(lam=1e9, iterations=300)
    a, b = solve_rgi(MLP, s.image, cfg), invert_baseline(MLP, s.image, cfg)
    assert not a.M_hat.any()
    assert np.array_equal(a.z_hat, b.z_hat) and np.array_equal(a.restored, b.restored)


def test_mask_update_never_raises_objective():
    z, clean = sample_clean(MLP, 4)
    s = corrupt(clean, z, CorruptionSpec(block=4, seed=2))
    res = solve_rgi(MLP, s.image, SolverConfig(lam=0.2, iterations=200))
    before = res.diagnostics["objective_before_mask"]
    after = [v for _, v in res.loss_trace]
    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(before, after))


def test_rrgi_without_finetune_equals_rgi():
    z, clean = sample_clean(MLP, 5)
    x = corrupt(clean, z, CorruptionSpec(block=4, seed=3)).image
    cfg = SolverConfig(iterations=200, finetune_start_iter=200, lr_theta=1e-2)
    a, b = solve_rgi(MLP, x, cfg), solve_rrgi(MLP, x, cfg)
    assert np.array_equal(a.z_hat, b.z_hat) and np.array_equal(a.M_hat, b.M_hat)
    assert all(np.array_equal(t, u) for t, u in zip(b.theta_final, MLP.theta))


def test_rrgi_zero_lr_keeps_theta_and_input_model():
    before = [t.copy() for t in MLP.theta]
    z, clean = sample_clean(MLP, 6)
    res = solve_rrgi(MLP, clean, SolverConfig(iterations=100, finetune_start_iter=0, lr_theta=0.0))
    assert all(np.array_equal(t, u) for t, u in zip(res.theta_final, before))
    tuned = solve_rrgi(MLP, clean, SolverConfig(iterations=100, finetune_start_iter=0, lr_theta=1e-3))
    assert any(not np.array_equal(t, u) for t, u in zip(tuned.theta_final, before))
    assert all(np.array_equal(t, u) for t, u in zip(MLP.theta, before))


def test_gradient_mask_strategy_stays_in_box():
    z, clean = sample_clean(MLP, 7)
    s = corrupt(clean, z, CorruptionSpec(block=4, seed=4))
    res = solve_rgi(MLP, s.image, SolverConfig(iterations=300, mask_strategy="gradient", lr_M=0.05))
    assert res.M_hat.min() >= 0.0 and res.M_hat.max() <= 1.0
    assert res.M_hat[s.true_mask > 0].mean() > res.M_hat[s.true_mask == 0].mean()


def test_latent_bound_clamps():
    x = generate(AFFINE, np.array([5.0, -5.0]))
    res = solve_rgi(AFFINE, x, SolverConfig(iterations=300, latent_bound=1.0))
    assert np.max(np.abs(res.z_hat)) <= 1.0


def test_restarts_keep_best_and_are_deterministic():
    z, clean = sample_clean(MLP, 8)
    x = corrupt(clean, z, CorruptionSpec(block=4, seed=5)).image
    one = solve_rgi(MLP, x, SolverConfig(iterations=200))
    many = solve_rgi(MLP, x, SolverConfig(iterations=200, restarts=4))
    again = solve_rgi(MLP, x, SolverConfig(iterations=200, restarts=4))
    assert many.objective <= one.objective
    assert np.array_equal(many.z_hat, again.z_hat)


def test_sweep_single_lambda_equals_solve():
    model = make_mlp_generator(ManifoldSpec(4, (16, 16), 1), hidden=(8,))
    z, clean = sample_clean(model, 9)
    s = corrupt(clean, z, CorruptionSpec(block=4, seed=6))
    cfg = SolverConfig(iterations=150)
    ((lam, res, row),) = sweep_lambda(model, s.image, [0.3], cfg, truth=s)
    direct = solve_rgi(model, s.image, replace(cfg, lam=0.3))
    assert lam == 0.3 and np.array_equal(res.z_hat, direct.z_hat)
    assert set(row) == {"dice", "rmse", "psnr", "ssim"}
    with pytest.raises(ValueError):
        sweep_lambda(model, s.image, [0.1, 0.2], cfg, theorem_mode=True)


def test_config_validation():
    for bad in (dict(lam=-1), dict(loss="l3"), dict(finetune_start_iter=10, iterations=5),
                dict(lr_z=0), dict(mask_strategy="x"), dict(threshold=0), dict(restarts=0),
                dict(latent_bound=0.0), dict(init_z="ones")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig(iterations=2000).finetune_start_iter == 1500
    assert SolverConfig(iterations=100).finetune_start_iter == 0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        solve_rgi(AFFINE, np.zeros((8, 8)), SolverConfig(iterations=1))
