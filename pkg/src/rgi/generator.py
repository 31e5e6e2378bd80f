"""Differentiable dense generators G(z; theta) mapping latents to images."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .fileio import FormatError, decode_tensor, encode_tensor

ACTIVATION_CODES = {"tanh": 0, "leaky_relu": 1, "identity": 2}
ACTIVATION_NAMES = {v: k for k, v in ACTIVATION_CODES.items()}
KIND_CODES = {"affine": 0, "mlp": 1}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
MODEL_MAGIC = b"RGM1"


@dataclass(frozen=True)
class ManifoldSpec:
    latent_dim: int = 8
    image_shape: tuple = (16, 16)
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if len(self.image_shape) < 2 or min(self.image_shape[:2]) < 2:
            raise ValueError(f"image dims must be >= 2, got {self.image_shape}")

    def sample_latent(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.latent_dim)


@dataclass(frozen=True)
class GeneratorModel:
    """Dense decoder. ``theta`` alternates weight (in, out) and bias (out,)."""

    kind: str
    layer_dims: tuple
    activations: tuple
    theta: tuple
    image_shape: tuple
    leaky_slope: float = 0.2
    latent_dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "latent_dim", int(self.layer_dims[0]))
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ValueError("need one activation per layer")
        if int(self.layer_dims[-1]) != int(np.prod(self.image_shape)):
            raise ValueError(f"last layer width {self.layer_dims[-1]} != prod{self.image_shape}")
        if len(self.theta) != 2 * len(self.activations):
            raise ValueError("theta must hold a weight and bias per layer")
        for i, (din, dout) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            w, b = self.theta[2 * i], self.theta[2 * i + 1]
            if w.shape != (din, dout) or b.shape != (dout,):
                raise ValueError(f"layer {i}: expected W{(din, dout)}, b{(dout,)}; got {w.shape}, {b.shape}")
        for a in self.activations:
            if a not in ACTIVATION_CODES:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def n_pixels(self) -> int:
        return int(self.layer_dims[-1])

    def param_nodes(self, trainable: bool = False) -> list[ad.Node]:
        return [ad.leaf(t, requires_grad=trainable) for t in self.theta]

    def with_theta(self, theta) -> "GeneratorModel":
        return replace(self, theta=tuple(np.array(t, dtype=np.float64) for t in theta))


def _activate(node: ad.Node, tag: str, slope: float) -> ad.Node:
    if tag == "tanh":
        return ad.tanh(node)
    if tag == "leaky_relu":
        return ad.leaky_relu(node, slope)
    return node


def forward(model: GeneratorModel, z, params=None) -> ad.Node:
    """Image node G(z). Pass ``params`` from ``model.param_nodes(True)`` to get theta gradients."""
    z = z if isinstance(z, ad.Node) else ad.constant(z)
    if z.shape != (model.latent_dim,):
        raise ValueError(f"latent shape {z.shape} != ({model.latent_dim},)")
    params = params if params is not None else model.param_nodes(False)
    h = z
    for i, tag in enumerate(model.activations):
        h = ad.add(ad.matmul(h, params[2 * i]), params[2 * i + 1])
        h = _activate(h, tag, model.leaky_slope)
    return ad.reshape(h, model.image_shape)


def forward_batch(model: GeneratorModel, Z, params=None) -> ad.Node:
    """Flattened outputs (N, n_pixels) for a latent batch (N, d)."""
    Z = Z if isinstance(Z, ad.Node) else ad.constant(Z)
    params = params if params is not None else model.param_nodes(False)
    ones = ad.constant(np.ones((Z.shape[0], 1)))
    h = Z
    for i, tag in enumerate(model.activations):
        b = params[2 * i + 1]
        # explicit row broadcast of the bias: ones(N,1) @ b(1,out)
        h = ad.add(ad.matmul(h, params[2 * i]), ad.matmul(ones, ad.reshape(b, (1, b.shape[0]))))
        h = _activate(h, tag, model.leaky_slope)
    return h


def _numeric(model: GeneratorModel, h: np.ndarray) -> np.ndarray:
    for i, tag in enumerate(model.activations):
        h = h @ model.theta[2 * i] + model.theta[2 * i + 1]
        if tag == "tanh":
            h = np.tanh(h)
        elif tag == "leaky_relu":
            h = np.where(h > 0, h, model.leaky_slope * h)
    return h


def generate(model: GeneratorModel, z) -> np.ndarray:
    """Numeric forward pass without building a graph (same arithmetic as ``forward``)."""
    return _numeric(model, np.asarray(z, dtype=np.float64)).reshape(model.image_shape)


def generate_batch(model: GeneratorModel, Z) -> np.ndarray:
    """Numeric forward pass for a latent batch (N, d); returns (N, n_pixels)."""
    return _numeric(model, np.asarray(Z, dtype=np.float64))


def make_affine_generator(spec: ManifoldSpec, seed: int | None = None) -> GeneratorModel:
    """G(z) = reshape(A z + b) with unit-norm columns of A."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n = int(np.prod(spec.image_shape))
    A = rng.standard_normal((n, spec.latent_dim))
    b = rng.standard_normal(n)
    A /= np.linalg.norm(A, axis=0, keepdims=True)
    return GeneratorModel("affine", (spec.latent_dim, n), ("identity",), (A.T.copy(), b),
                          tuple(spec.image_shape))


def make_mlp_generator(spec: ManifoldSpec, hidden=(32, 64), seed: int | None = None,
                       hidden_activation: str = "leaky_relu", output_activation: str = "tanh",
                       leaky_slope: float = 0.2, gain: float = 1.0) -> GeneratorModel:
    """Random dense decoder with He-style scaling (weights ~ N(0, gain^2 * 2/fan_in))."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    dims = (spec.latent_dim, *hidden, int(np.prod(spec.image_shape)))
    theta = []
    for din, dout in zip(dims[:-1], dims[1:]):
        theta.append(rng.standard_normal((din, dout)) * gain * np.sqrt(2.0 / din))
        theta.append(rng.standard_normal(dout) * 0.1)
    acts = (hidden_activation,) * len(hidden) + (output_activation,)
    return GeneratorModel("mlp", dims, acts, tuple(theta), tuple(spec.image_shape), leaky_slope)


@dataclass
class TrainResult:
    model: GeneratorModel
    loss_trace: list = field(default_factory=list)


def reconstruction_loss(model: GeneratorModel, Z, X, params) -> ad.Node:
    """Mean squared reconstruction error over a batch; X is (N, n_pixels)."""
    out = forward_batch(model, Z, params)
    return ad.scalar_mul(1.0 / X.size, ad.sum_squares(ad.sub(out, ad.constant(X))))


def train_decoder(pairs, model: GeneratorModel, epochs: int = 500, lr: float = 1e-2, seed: int = 0,
                  batch_size: int | None = None, betas=(0.9, 0.999), eps: float = 1e-8) -> TrainResult:
    """Fit theta by ADAM on mean squared reconstruction of ``(z_i, x_i)`` pairs.

    Full-batch by default; with ``batch_size`` the pairs are reshuffled each
    epoch from ``seed``. The loss trace holds one entry per epoch (the mean of
    its minibatch losses, taken before each update).
    """
    from .solver import AdamState, adam_step

    if len(pairs) == 0:
        raise ValueError("train_decoder: empty pair list")
    Z = np.stack([np.asarray(z, dtype=np.float64) for z, _ in pairs])
    X = np.stack([np.asarray(x, dtype=np.float64).reshape(-1) for _, x in pairs])
    if Z.shape[1] != model.latent_dim:
        raise ValueError(f"latent dim {Z.shape[1]} != {model.latent_dim}")
    if X.shape[1] != model.n_pixels:
        raise ValueError(f"image size {X.shape[1]} != {model.n_pixels}")
    rng = np.random.default_rng(seed)
    theta = [t.copy() for t in model.theta]
    states = [AdamState.like(t) for t in theta]
    n = len(pairs)
    bs = n if batch_size is None else max(1, min(batch_size, n))
    trace = []
    for _ in range(epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        losses = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            params = [ad.variable(t) for t in theta]
            loss = reconstruction_loss(model, Z[idx], X[idx], params)
            ad.backward(loss)
            losses.append(float(loss.value))
            theta = [adam_step(s, t, p.grad, lr, betas[0], betas[1], eps)
                     for s, t, p in zip(states, theta, params)]
        trace.append(float(np.mean(losses)))
    return TrainResult(model.with_theta(theta) if epochs else model, trace)


# container format -----------------------------------------------------------

def encode_model(model: GeneratorModel) -> bytes:
    head = MODEL_MAGIC + struct.pack("<Bd", KIND_CODES[model.kind], model.leaky_slope)
    head += struct.pack("<B", len(model.image_shape)) + struct.pack(f"<{len(model.image_shape)}Q", *model.image_shape)
    n_layers = len(model.activations)
    head += struct.pack("<B", n_layers) + struct.pack(f"<{n_layers + 1}Q", *model.layer_dims)
    head += bytes(ACTIVATION_CODES[a] for a in model.activations)
    return head + b"".join(encode_tensor(t) for t in model.theta)


def decode_model(buf: bytes) -> GeneratorModel:
    try:
        if buf[:4] != MODEL_MAGIC:
            raise FormatError(f"bad model magic {buf[:4]!r}")
        kind, slope = struct.unpack_from("<Bd", buf, 4)
        pos = 13
        (rank,) = struct.unpack_from("<B", buf, pos)
        shape = struct.unpack_from(f"<{rank}Q", buf, pos + 1)
        pos += 1 + 8 * rank
        (n_layers,) = struct.unpack_from("<B", buf, pos)
        dims = struct.unpack_from(f"<{n_layers + 1}Q", buf, pos + 1)
        pos += 1 + 8 * (n_layers + 1)
        codes = buf[pos:pos + n_layers]
        if len(codes) != n_layers:
            raise FormatError("truncated activation codes")
        pos += n_layers
    except struct.error as exc:
        raise FormatError(f"truncated model header: {exc}") from None
    if kind not in KIND_NAMES or any(c not in ACTIVATION_NAMES for c in codes):
        raise FormatError("unknown kind or activation code")
    theta = []
    for _ in range(2 * n_layers):
        t, pos = decode_tensor(buf, pos)
        theta.append(t)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after model")
    try:
        return GeneratorModel(KIND_NAMES[kind], tuple(int(d) for d in dims),
                              tuple(ACTIVATION_NAMES[c] for c in codes), tuple(theta),
                              tuple(int(s) for s in shape), slope)
    except ValueError as exc:
        raise FormatError(f"inconsistent model: {exc}") from None


def save_model(model: GeneratorModel, path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> GeneratorModel:
    return decode_model(Path(path).read_bytes())
