"""Robust inversion solvers: baseline, RGI (latent + mask) and R-RGI (plus theta).

All objectives use the summed (not averaged) reconstruction loss, so the mask
penalty ``lam`` is on the per-pixel scale:

    f(z, M) = sum (1 - M)^2 (x - G(z))^2 + lam * sum |M|        (loss="l2")
    f(z, M) = sum |(1 - M)(x - G(z))|    + lam * sum |M|        (loss="l1")
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .generator import GeneratorModel, forward, generate

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.1
    loss: str = "l2"
    iterations: int = 2000
    lr_z: float = 0.1
    lr_M: float = 0.1
    lr_theta: float = 1e-5
    finetune_start_iter: int | None = None
    mask_strategy: str = "closed_form"
    latent_bound: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    init_z: str = "zero"
    init_M: str = "zero"
    threshold: float = 0.5
    restarts: int = 1

    def __post_init__(self):
        if self.lam < 0 or math.isnan(self.lam):
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.loss not in ("l2", "l1"):
            raise ValueError(f"loss must be l2 or l1, got {self.loss!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.finetune_start_iter is None:
            # default: tune theta over the final 500 iterations
            object.__setattr__(self, "finetune_start_iter", max(0, self.iterations - 500))
        if not 0 <= self.finetune_start_iter <= self.iterations:
            raise ValueError("need 0 <= finetune_start_iter <= iterations")
        if self.lr_z <= 0 or self.lr_M <= 0 or self.lr_theta < 0:
            raise ValueError("learning rates must be positive (lr_theta may be 0)")
        if self.mask_strategy not in ("closed_form", "gradient"):
            raise ValueError(f"unknown mask_strategy {self.mask_strategy!r}")
        if self.init_z not in ("zero", "seeded_normal"):
            raise ValueError(f"unknown init_z {self.init_z!r}")
        if self.init_M != "zero":
            raise ValueError("init_M must be 'zero'")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.latent_bound is not None and self.latent_bound <= 0:
            raise ValueError("latent_bound must be positive")


@dataclass
class InversionResult:
    z_hat: np.ndarray
    M_hat: np.ndarray
    restored: np.ndarray
    binary_mask: np.ndarray
    loss_trace: list
    config: SolverConfig
    theta_final: tuple | None = None
    objective: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        meta = {k: v for k, v in asdict(self.config).items()}
        meta["final_objective"] = self.objective
        return meta


# ADAM ----------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def like(cls, param) -> "AdamState":
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64))


def adam_step(state: AdamState, param, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8) -> np.ndarray:
    """One bias-corrected ADAM update; mutates ``state`` and returns the new param."""
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ValueError(f"adam_step: shapes param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps)


# closed-form mask ------------------------------------------------------------

def optimal_mask(residual, lam: float, loss: str = "l2") -> np.ndarray:
    """Per-pixel minimiser of the mask objective for fixed residuals.

    l2: (1 - lam / (2 r^2))_+ ; pixels with 2 r^2 <= lam get exactly 0.
    l1: the objective is linear in M on [0, 1], so M = 1 where |r| > lam else 0.
    """
    r = np.asarray(residual, dtype=np.float64)
    if loss == "l1":
        return (np.abs(r) > lam).astype(np.float64)
    r2 = 2.0 * r * r
    out = np.zeros_like(r)
    big = r2 > lam
    out[big] = 1.0 - lam / r2[big]
    return out


def optimal_mask_pixel(r: float, lam: float) -> float:
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return float(optimal_mask(np.array(r), lam))


def robust_loss(residual, lam: float) -> np.ndarray:
    """Mask-profiled l2 loss: r^2 if 2r^2 < lam, else lam - lam^2 / (4 r^2)."""
    r2 = np.square(np.asarray(residual, dtype=np.float64))
    big = 2.0 * r2 >= lam
    safe = np.where(big & (r2 > 0), r2, 1.0)
    return np.where(big, lam - lam * lam / (4.0 * safe), r2)


def robust_loss_pixel(r: float, lam: float) -> float:
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if lam == 0:
        return 0.0
    return float(robust_loss(np.array(r), lam))


def pixel_objective(r, M, lam):
    """(1 - M)^2 r^2 + lam |M|, the l2 objective restricted to one pixel."""
    return (1.0 - M) ** 2 * r * r + lam * np.abs(M)


def binarize_mask(M_hat, threshold: float = 0.5) -> np.ndarray:
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(M_hat) > threshold).astype(np.float64)


# objectives ------------------------------------------------------------------

def reconstruction(residual: ad.Node, loss: str) -> ad.Node:
    return ad.sum_squares(residual) if loss == "l2" else ad.abs_sum(residual)


def rgi_objective(image: ad.Node, x, M, lam: float, loss: str = "l2") -> ad.Node:
    """Graph for L_rec((1-M) * x, (1-M) * G) + lam * ||M||_1 given the image node G."""
    M = M if isinstance(M, ad.Node) else ad.constant(M)
    keep = ad.sub(1.0, M)
    resid = ad.mul_elementwise(keep, ad.sub(ad.constant(x), image))
    return ad.add(reconstruction(resid, loss), ad.scalar_mul(lam, ad.abs_sum(M)))


def objective_value(residual, M, lam: float, loss: str = "l2") -> float:
    keep = (1.0 - M) * residual
    rec = np.sum(keep * keep) if loss == "l2" else np.sum(np.abs(keep))
    return float(rec + lam * np.sum(np.abs(M)))


# solvers ---------------------------------------------------------------------

def _init_latent(model: GeneratorModel, config: SolverConfig, restart: int) -> np.ndarray:
    if config.init_z == "zero" and restart == 0:
        return np.zeros(model.latent_dim)
    rng = np.random.default_rng([config.seed, restart])
    return rng.standard_normal(model.latent_dim)


def _check_x(model: GeneratorModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != tuple(model.image_shape):
        raise ValueError(f"image shape {x.shape} != generator output {model.image_shape}")
    return x


def _run(model: GeneratorModel, x: np.ndarray, config: SolverConfig, z0: np.ndarray,
         use_mask: bool, finetune: bool) -> InversionResult:
    lam, loss = config.lam, config.loss
    betas = (config.beta1, config.beta2, config.eps)
    z = z0.copy()
    M = np.zeros(x.shape)
    theta = [t.copy() for t in model.theta]
    z_state = AdamState.like(z)
    M_state = AdamState.like(M)
    th_states = [AdamState.like(t) for t in theta]
    closed = config.mask_strategy == "closed_form"
    trace, before = [], []
    bound = config.latent_bound

    def current_model():
        return model.with_theta(theta) if finetune else model

    for it in range(config.iterations):
        tune = finetune and it >= config.finetune_start_iter
        params = [ad.leaf(t, requires_grad=tune) for t in theta]
        z_node = ad.variable(z)
        image = forward(model, z_node, params)
        if use_mask and closed:
            resid = x - image.value
            before.append(objective_value(resid, M, lam, loss))
            M = optimal_mask(resid, lam, loss)
        M_node = ad.leaf(M, requires_grad=use_mask and not closed)
        obj = rgi_objective(image, x, M_node, lam, loss) if use_mask else \
            reconstruction(ad.sub(ad.constant(x), image), loss)
        value = float(obj.value)
        if not math.isfinite(value):
            raise SolverError(f"non-finite objective {value} at iteration {it}")
        trace.append((it, value))
        ad.backward(obj)
        z = adam_step(z_state, z, z_node.grad, config.lr_z, *betas)
        if bound is not None:
            z = np.clip(z, -bound, bound)
        if use_mask and not closed:
            M = np.clip(adam_step(M_state, M, M_node.grad, config.lr_M, *betas), 0.0, 1.0)
        if tune:
            theta = [adam_step(s, t, p.grad, config.lr_theta, *betas)
                     for s, t, p in zip(th_states, theta, params)]

    final_model = current_model()
    restored = generate(final_model, z)
    resid = x - restored
    if use_mask and closed:
        M = optimal_mask(resid, lam, loss)
    final = objective_value(resid, M, lam, loss) if use_mask else \
        objective_value(resid, np.zeros_like(M), 0.0, loss)
    return InversionResult(
        z_hat=z, M_hat=M, restored=restored, binary_mask=binarize_mask(M, config.threshold),
        loss_trace=trace, config=config,
        theta_final=tuple(theta) if finetune else None,
        objective=final,
        diagnostics={"objective_before_mask": before} if before else {},
    )


def _best_of(model, x, config, use_mask, finetune) -> InversionResult:
    x = _check_x(model, x)
    best = None
    for k in range(config.restarts):
        res = _run(model, x, config, _init_latent(model, config, k), use_mask, finetune)
        if best is None or res.objective < best.objective:
            best = res
    best.diagnostics["restarts"] = config.restarts
    return best


def invert_baseline(model: GeneratorModel, x, config: SolverConfig) -> InversionResult:
    """Plain inversion: argmin_z L_rec(x, G(z)); the mask stays zero."""
    return _best_of(model, x, config, use_mask=False, finetune=False)


def solve_rgi(model: GeneratorModel, x, config: SolverConfig) -> InversionResult:
    """Joint latent/mask inversion with the generator frozen."""
    return _best_of(model, x, config, use_mask=True, finetune=False)


def solve_rrgi(model: GeneratorModel, x, config: SolverConfig) -> InversionResult:
    """RGI with theta unfrozen from ``finetune_start_iter`` on.

    Works on a private copy of theta; the input model is left untouched and
    the tuned parameters come back in ``theta_final``.
    """
    return _best_of(model, x, config, use_mask=True, finetune=True)


def sweep_lambda(model: GeneratorModel, x, lambdas, config: SolverConfig, truth=None,
                 theorem_mode: bool = False, solver=solve_rgi) -> list:
    """Solve once per lambda with a shared seed.

    ``truth`` (a CorruptedSample) enables Dice against the true mask and RMSE,
    PSNR and SSIM against the clean image.
    """
    from . import metrics

    lambdas = [float(v) for v in lambdas]
    if theorem_mode and any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("theorem mode needs a strictly decreasing lambda list")
    out = []
    for lam in lambdas:
        try:
            res = solver(model, x, replace(config, lam=lam))
        except SolverError as exc:
            raise SolverError(f"lambda={lam}: {exc}") from exc
        row = {}
        if truth is not None:
            row["dice"] = metrics.dice(res.binary_mask, truth.true_mask)
            row["rmse"] = metrics.rmse([res.restored], [truth.clean])
            row["psnr"] = metrics.psnr(res.restored, truth.clean)
            row["ssim"] = metrics.ssim(res.restored, truth.clean)
        log.debug("lambda=%g objective=%g %s", lam, res.objective, row)
        out.append((lam, res, row))
    return out
