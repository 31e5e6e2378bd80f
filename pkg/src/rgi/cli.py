"""Command-line runner: fixtures, solves, sweeps, theorem checks, simulation, metrics.

Every command reads an optional key=value config, writes into ``--out`` and
echoes the resolved config there as ``config.txt``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import experiments, metrics
from .corruption import CorruptedSample, CorruptionSpec, corrupt, load_irregular_masks, sample_clean
from .fileio import format_float, load_tensor, read_kv, save_tensor, write_csv, write_kv, write_pnm
from .generator import ManifoldSpec, generate, load_model, make_affine_generator, make_mlp_generator, save_model
from .oracle import STANDARD_LAMBDAS, LatticeSpec, standard_affine_fixture, verify_theorem1, verify_theorem2
from .solver import SolverConfig, invert_baseline, solve_rgi, solve_rrgi, sweep_lambda

log = logging.getLogger("rgi")


class ConfigError(ValueError):
    pass


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _words(s: str) -> tuple:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _opt(conv):
    return lambda s: None if s.strip().lower() in ("", "none") else conv(s)


@dataclass
class ExperimentConfig:
    # generator
    generator: str = ""
    fixture: str = "mlp"
    latent_dim: int = 8
    height: int = 16
    width: int = 16
    hidden: tuple = (32, 64)
    model_seed: int = 0
    # corruption
    mechanism: str = "central_block"
    block: int = 8
    fraction: float = 0.25
    area: float = 0.1
    fill: str = "normal"
    level: float = 1.0
    mask_file: str = ""
    # inputs for solve / sweep / metrics
    input: str = ""
    result: str = ""
    # solver
    lam: float = 0.1
    lambdas: tuple = ()
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
    init_z: str = "zero"
    threshold: float = 0.5
    restarts: int = 1
    # experiments
    metrics: tuple = ("rmse", "psnr", "ssim", "dice", "auroc")
    samples: int = 20
    levels: tuple = experiments.LEVELS
    train_pairs: int = 512
    train_hidden: tuple = (8,)
    epochs: int = 1500
    train_lr: float = 1e-2
    batch_size: int | None = None
    lattice_points: int = 401
    lattice_radius: float = 4.0
    eps_final: float = 1e-2
    seed: int = 0
    explicit: frozenset = field(default=frozenset(), repr=False)

    def pick(self, name: str, fallback):
        """Config value if the user set it, else a command-specific default."""
        return getattr(self, name) if name in self.explicit else fallback

    def items(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "explicit":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(format_float(x) if isinstance(x, float) else str(x) for x in v)
            elif v is None:
                v = "none"
            out[KEY_OF.get(f.name, f.name)] = v
        return out

    def solver_config(self, **overrides) -> SolverConfig:
        kw = dict(lam=self.lam, loss=self.loss, iterations=self.iterations, lr_z=self.lr_z, lr_M=self.lr_M,
                  lr_theta=self.lr_theta, finetune_start_iter=self.finetune_start_iter,
                  mask_strategy=self.mask_strategy, latent_bound=self.latent_bound, beta1=self.beta1,
                  beta2=self.beta2, eps=self.eps, seed=self.seed, init_z=self.init_z,
                  threshold=self.threshold, restarts=self.restarts)
        kw.update(overrides)
        return SolverConfig(**kw)

    def corruption_spec(self) -> CorruptionSpec:
        mask = None
        if self.mask_file:
            masks = load_irregular_masks(self.mask_file, (self.height, self.width))
            mask = masks[self.seed % len(masks)]
        return CorruptionSpec(self.mechanism, block=self.block, fraction=self.fraction, area=self.area,
                              fill=self.fill, level=self.level, seed=self.seed, mask=mask)


_PARSERS = {int: int, float: float, str: str}
_SPECIAL = {
    "hidden": _ints, "train_hidden": _ints, "lambdas": _floats, "levels": _floats, "metrics": _words,
    "finetune_start_iter": _opt(int), "latent_bound": _opt(float), "batch_size": _opt(int),
}
KEY_OF = {"lam": "lambda", "lr_M": "lr_m"}
FIELD_OF = {v: k for k, v in KEY_OF.items()}


def config_keys() -> list[str]:
    return [KEY_OF.get(f.name, f.name) for f in fields(ExperimentConfig) if f.name != "explicit"]


def build_config(pairs: dict) -> ExperimentConfig:
    """Typed config from raw key=value strings; unknown keys are rejected."""
    known = {f.name: f for f in fields(ExperimentConfig) if f.name != "explicit"}
    kw = {}
    for key, raw in pairs.items():
        name = FIELD_OF.get(key, key)
        if name not in known or key in KEY_OF:
            raise ConfigError(f"unknown config key {key!r}")
        conv = _SPECIAL.get(name) or _PARSERS[type(known[name].default)]
        try:
            kw[name] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    return ExperimentConfig(**kw, explicit=frozenset(kw))


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model(cfg: ExperimentConfig):
    if cfg.generator:
        if not Path(cfg.generator).is_file():
            raise FileNotFoundError(f"generator file not found: {cfg.generator}")
        return load_model(cfg.generator)
    spec = ManifoldSpec(cfg.latent_dim, (cfg.height, cfg.width), cfg.model_seed)
    if cfg.fixture == "affine":
        return make_affine_generator(spec)
    if cfg.fixture == "mlp":
        return make_mlp_generator(spec, hidden=cfg.hidden)
    raise ConfigError(f"unknown fixture {cfg.fixture!r} (affine|mlp)")


def _mask_image(mask) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3:
        m = m.max(axis=2)
    return 2.0 * m - 1.0


def _load_fixture(cfg: ExperimentConfig):
    if not cfg.input:
        raise ConfigError("this command needs input=<fixture directory>")
    d = Path(cfg.input)
    gen = cfg.generator or str(d / "generator.rgm")
    if not Path(gen).is_file():
        raise FileNotFoundError(f"generator file not found: {gen}")
    model = load_model(gen)
    x = load_tensor(d / "corrupted.rgt")
    truth = None
    if (d / "clean.rgt").is_file() and (d / "mask.rgt").is_file():
        z = load_tensor(d / "latent.rgt") if (d / "latent.rgt").is_file() else None
        mask = load_tensor(d / "mask.rgt")
        truth = CorruptedSample(x, load_tensor(d / "clean.rgt"), mask, z, int(mask.sum()))
    return model, x, truth


def _write_result(out: Path, res, method: str, truth=None, model=None):
    save_tensor(res.z_hat, out / "z_hat.rgt")
    save_tensor(res.M_hat, out / "mask_soft.rgt")
    save_tensor(res.binary_mask, out / "mask_binary.rgt")
    save_tensor(res.restored, out / "restored.rgt")
    write_pnm(out / "restored.pgm" if res.restored.ndim == 2 else out / "restored.ppm", res.restored)
    write_pnm(out / "mask_binary.pgm", _mask_image(res.binary_mask))
    write_csv(out / "trace.csv", ["iter", "objective"], ((i, float(v)) for i, v in res.loss_trace))
    write_kv(out / "result.txt", {"method": method, **res.metadata()})
    if res.theta_final is not None and model is not None:
        save_model(model.with_theta(res.theta_final), out / "generator_tuned.rgm")
    if truth is not None:
        _fixture_metrics(res, truth).to_csv(out / "metrics.csv")


def _fixture_metrics(res, truth, names=("rmse", "psnr", "ssim", "dice", "auroc")) -> metrics.MetricReport:
    rep = metrics.MetricReport(list(names))
    rep.add("0", _metric_values(res.restored, res.binary_mask, truth.image, truth, names))
    return rep


def _metric_values(restored, binary_mask, x, truth, names) -> dict:
    score = np.abs(np.asarray(x) - np.asarray(restored))
    out = {}
    for name in names:
        if name == "rmse":
            out[name] = metrics.rmse([restored], [truth.clean])
        elif name == "psnr":
            out[name] = metrics.psnr(restored, truth.clean)
        elif name == "psnr_background":
            out[name] = metrics.psnr(restored, truth.clean, region=1.0 - truth.true_mask)
        elif name == "ssim":
            out[name] = metrics.ssim(restored, truth.clean)
        elif name == "dice":
            out[name] = metrics.dice(binary_mask, truth.true_mask)
        elif name in ("auroc", "best_dice"):
            try:
                out[name] = (metrics.pixel_auroc(score, truth.true_mask) if name == "auroc"
                             else metrics.best_threshold_dice(score, truth.true_mask)[1])
            except ValueError:
                out[name] = float("nan")  # single-class truth mask
        else:
            raise ConfigError(f"unknown metric {name!r}")
    return out


# commands --------------------------------------------------------------------

def cmd_make_fixture(cfg: ExperimentConfig, out: Path) -> int:
    model = _model(cfg)
    z, clean = sample_clean(model, cfg.seed)
    sample = corrupt(clean, z, cfg.corruption_spec())
    save_model(model, out / "generator.rgm")
    save_tensor(z, out / "latent.rgt")
    for name, img in (("clean", sample.clean), ("corrupted", sample.image)):
        save_tensor(img, out / f"{name}.rgt")
        write_pnm(out / (f"{name}.pgm" if img.ndim == 2 else f"{name}.ppm"), img)
    save_tensor(sample.true_mask, out / "mask.rgt")
    write_pnm(out / "mask.pgm", _mask_image(sample.true_mask))
    write_kv(out / "metadata.txt", {"generator_kind": model.kind, "latent_dim": model.latent_dim,
                                    "image_shape": "x".join(map(str, model.image_shape)),
                                    "mechanism": cfg.mechanism, "fill": cfg.fill, "level": float(cfg.level),
                                    "seed": cfg.seed, "n0": sample.n0})
    return 0


def cmd_train_decoder(cfg: ExperimentConfig, out: Path) -> int:
    from .generator import train_decoder

    teacher = _model(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    Z = rng.standard_normal((cfg.train_pairs, teacher.latent_dim))
    pairs = [(z, generate(teacher, z)) for z in Z]
    student = make_mlp_generator(ManifoldSpec(teacher.latent_dim, teacher.image_shape, cfg.seed + 2),
                                 hidden=cfg.train_hidden)
    tr = train_decoder(pairs, student, epochs=cfg.epochs, lr=cfg.train_lr, seed=cfg.seed,
                       batch_size=cfg.batch_size)
    save_model(teacher, out / "teacher.rgm")
    save_model(tr.model, out / "decoder.rgm")
    write_csv(out / "train_trace.csv", ["epoch", "mse"], ((i, v) for i, v in enumerate(tr.loss_trace)))
    return 0


SOLVERS = {"baseline": invert_baseline, "rgi": solve_rgi, "rrgi": solve_rrgi}


def cmd_solve(cfg: ExperimentConfig, out: Path, method: str) -> int:
    model, x, truth = _load_fixture(cfg)
    res = SOLVERS[method](model, x, cfg.solver_config())
    _write_result(out, res, method, truth, model)
    return 0


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.lambdas:
        raise ConfigError("sweep needs lambdas=<comma separated list>")
    model, x, truth = _load_fixture(cfg)
    results = sweep_lambda(model, x, cfg.lambdas, cfg.solver_config(), truth=truth)
    rows = []
    for i, (lam, res, row) in enumerate(results):
        sub = _out_dir(out / f"lambda_{i:02d}")
        _write_result(sub, res, "rgi", truth, model)
        rows.append([lam] + [row.get(k, float("nan")) for k in ("rmse", "dice", "psnr", "ssim")])
    write_csv(out / "summary.csv", ["lambda", "rmse", "dice", "psnr", "ssim"], rows)
    return 0


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    lattice = LatticeSpec(2, cfg.lattice_radius, cfg.lattice_points)
    if cfg.generator:
        model = _model(cfg)  # raises before any solve when the file is missing
        lattice = replace(lattice, dim=model.latent_dim)
        rng = np.random.default_rng([cfg.seed, 1])
        z = lattice.snap(np.clip(rng.standard_normal(model.latent_dim), -lattice.radius, lattice.radius))
        sample = corrupt(generate(model, z), z, cfg.corruption_spec())
    else:
        model, sample, lattice = standard_affine_fixture(cfg.seed, cfg.level, cfg.block, lattice)
    lambdas = cfg.lambdas or STANDARD_LAMBDAS
    scfg = cfg.solver_config(iterations=cfg.pick("iterations", 2000), restarts=cfg.pick("restarts", 5))
    rep1 = verify_theorem1(model, sample, lambdas, lattice, scfg, eps_final=cfg.eps_final)
    rep2 = verify_theorem2(model, sample, lambdas, cfg.threshold, scfg)
    for rep in (rep1, rep2):
        (out / f"{rep.theorem}.txt").write_text(rep.to_text())
        rep.to_csv(out / f"{rep.theorem}.csv")
    ok = rep1.passed and rep2.passed
    (out / "verdict.txt").write_text(f"theorem1={'PASS' if rep1.passed else 'FAIL'}\n"
                                     f"theorem2={'PASS' if rep2.passed else 'FAIL'}\n")
    sys.stdout.write(rep1.to_text() + rep2.to_text())
    return 0 if ok else 1


def cmd_simulate(cfg: ExperimentConfig, out: Path, full: bool = False) -> int:
    model = _model(cfg)
    setup = experiments.SimulationSetup(
        samples=100 if full else cfg.samples, levels=cfg.levels, block=cfg.block, lam=cfg.lam,
        iterations=cfg.pick("iterations", 1000), restarts=cfg.pick("restarts", 3), seed=cfg.seed)
    rows = experiments.simulate(model, setup)
    write_csv(out / "simulation.csv", ["e", "method", "rmse"], rows)
    return 0


def cmd_metrics(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.result:
        raise ConfigError("metrics needs result=<solve output directory>")
    _, x, truth = _load_fixture(cfg)
    if truth is None:
        raise ConfigError(f"{cfg.input} has no ground truth (clean.rgt, mask.rgt)")
    r = Path(cfg.result)
    vals = _metric_values(load_tensor(r / "restored.rgt"), load_tensor(r / "mask_binary.rgt"), x, truth,
                          cfg.metrics)
    rep = metrics.MetricReport(list(cfg.metrics))
    rep.add(r.name or "0", vals)
    rep.to_csv(out / "metrics.csv")
    return 0


# entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="extra config entries (repeatable)")
    p = argparse.ArgumentParser(prog="rgi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("make-fixture", "train-decoder", "sweep", "verify", "metrics"):
        sub.add_parser(name, parents=[common])
    solve = sub.add_parser("solve", parents=[common])
    solve.add_argument("method", choices=sorted(SOLVERS))
    sim = sub.add_parser("simulate", parents=[common])
    sim.add_argument("--full", action="store_true", help="100 samples per level instead of the config value")
    return p


def load_config(args) -> ExperimentConfig:
    pairs = read_kv(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    return build_config(pairs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = _out_dir(args.out)
        write_kv(out / "config.txt", cfg.items())
        if args.command == "make-fixture":
            return cmd_make_fixture(cfg, out)
        if args.command == "train-decoder":
            return cmd_train_decoder(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.method)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.full)
        return cmd_metrics(cfg, out)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"rgi {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
