"""Desk-scale experiment presets shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corruption import CorruptionSpec, corrupt, irregular_mask, sample_clean, synthesize_defect
from .generator import ManifoldSpec, generate, make_mlp_generator, train_decoder
from .metrics import psnr, rmse
from .solver import SolverConfig, invert_baseline, solve_rgi, solve_rrgi, sweep_lambda

LEVELS = (-1.0, -0.5, 0.0, 0.5, 1.0)
PLATEAU_LAMBDAS = (1.0, 0.6, 0.4, 0.25, 0.15, 0.1, 0.06, 0.04, 0.025, 0.015, 0.01, 0.006)


def default_generator(seed: int = 0, latent_dim: int = 8, shape=(16, 16), hidden=(32, 64)):
    return make_mlp_generator(ManifoldSpec(latent_dim, tuple(shape), seed), hidden=hidden)


@dataclass(frozen=True)
class SimulationSetup:
    samples: int = 20
    levels: tuple = LEVELS
    block: int = 8
    lam: float = 0.1
    iterations: int = 1000
    restarts: int = 3
    seed: int = 0


def simulate(model, setup: SimulationSetup = SimulationSetup()) -> list[tuple[float, str, float]]:
    """RMSE of the restored background for l2 / l1 inversion and RGI at each corruption level."""
    rows = []
    for e in setup.levels:
        samples = []
        for i in range(setup.samples):
            base = 1000 * (i + setup.samples * setup.seed)
            z, clean = sample_clean(model, base + 7)
            spec = CorruptionSpec("central_block", block=setup.block, fill="normal", level=e, seed=base + 8)
            samples.append(corrupt(clean, z, spec))
        methods = {
            "l2": lambda s, c: invert_baseline(model, s.image, replace(c, loss="l2")),
            "l1": lambda s, c: invert_baseline(model, s.image, replace(c, loss="l1")),
            "rgi": lambda s, c: solve_rgi(model, s.image, replace(c, loss="l2")),
        }
        for name, run in methods.items():
            restored = []
            for i, s in enumerate(samples):
                cfg = SolverConfig(lam=setup.lam, iterations=setup.iterations, restarts=setup.restarts,
                                   seed=i + setup.samples * setup.seed)
                restored.append(run(s, cfg).restored)
            rows.append((float(e), name, rmse(restored, [s.clean for s in samples])))
    return rows


@dataclass(frozen=True)
class GapSetup:
    samples: int = 20
    train_pairs: int = 512
    student_hidden: tuple = (8,)
    epochs: int = 1500
    train_lr: float = 1e-2
    lam: float = 0.1
    iterations: int = 2000
    finetune_last: int = 500
    lr_theta: float = 1e-4
    block: int = 8
    level: float = 1.0
    seed: int = 0


def trained_gap_decoder(setup: GapSetup = GapSetup()):
    """Teacher = default random decoder; student = narrower decoder fitted to teacher samples."""
    teacher = default_generator(setup.seed)
    rng = np.random.default_rng(setup.seed + 1)
    pairs = [(z, generate(teacher, z)) for z in rng.standard_normal((setup.train_pairs, teacher.latent_dim))]
    student0 = make_mlp_generator(ManifoldSpec(teacher.latent_dim, teacher.image_shape, setup.seed + 2),
                                  hidden=setup.student_hidden)
    trained = train_decoder(pairs, student0, epochs=setup.epochs, lr=setup.train_lr, seed=0)
    return teacher, trained


def gap_closure(setup: GapSetup = GapSetup()) -> dict:
    """Per-sample PSNRs of RGI vs R-RGI on the uncorrupted region (plus whole image)."""
    teacher, trained = trained_gap_decoder(setup)
    student = trained.model
    out = {"bg_rgi": [], "bg_rrgi": [], "all_rgi": [], "all_rrgi": [], "train_mse": trained.loss_trace[-1]}
    for i in range(setup.samples):
        z, clean = sample_clean(teacher, 5000 + i)
        s = corrupt(clean, z, CorruptionSpec("central_block", block=setup.block, level=setup.level, seed=6000 + i))
        cfg = SolverConfig(lam=setup.lam, iterations=setup.iterations, lr_theta=setup.lr_theta,
                           finetune_start_iter=setup.iterations - setup.finetune_last, seed=i)
        r1, r2 = solve_rgi(student, s.image, cfg), solve_rrgi(student, s.image, cfg)
        bg = 1.0 - s.true_mask
        out["bg_rgi"].append(psnr(r1.restored, clean, region=bg))
        out["bg_rrgi"].append(psnr(r2.restored, clean, region=bg))
        out["all_rgi"].append(psnr(r1.restored, clean))
        out["all_rrgi"].append(psnr(r2.restored, clean))
    return out


def defect_fixture(seed: int = 0, area: float = 0.12, model=None):
    """Mean-filled irregular defect on a clean sample of the default decoder."""
    model = model or default_generator(0)
    z, clean = sample_clean(model, 100 + seed)
    mask = irregular_mask(model.image_shape, area, np.random.default_rng(200 + seed))
    sample = synthesize_defect(clean, mask)
    return model, replace(sample, true_latent=z)


def plateau_sweep(seed: int = 0, lambdas=PLATEAU_LAMBDAS, iterations: int = 1000, restarts: int = 5):
    model, sample = defect_fixture(seed)
    cfg = SolverConfig(iterations=iterations, restarts=restarts, seed=seed)
    return sweep_lambda(model, sample.image, lambdas, cfg, truth=sample, theorem_mode=True)


def longest_plateau(values, tol: float = 0.05) -> int:
    """Longest run of consecutive entries within ``tol`` of the maximum."""
    best = run = 0
    top = max(values)
    for v in values:
        run = run + 1 if v >= top - tol else 0
        best = max(best, run)
    return best
