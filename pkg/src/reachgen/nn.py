"""MLP with relu/dropout/layer-norm, Adam with linear lr decay, Gaussian
reparameterization and closed-form KL. 64-bit floats throughout so
finite-difference gradient checks have headroom.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ag
from .autodiff import Tape, Tensor
from .errors import DimensionMismatchError, NumericFault

LOG_STD_MIN = -8.0
LOG_STD_MAX = 4.0
LAYER_NORM_EPS = 1e-5


class ParameterStore:
    """Named float64 leaf tensors with deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Zero arrays stand in for parameters untouched by the tape."""
        return {
            name: (np.zeros_like(t.data) if t.grad is None else t.grad)
            for name, t in self._params.items()
        }

    def copy(self) -> "ParameterStore":
        fresh = ParameterStore()
        for name, t in self._params.items():
            fresh.add(name, t.data.copy())
        return fresh

    def assign(self, arrays: dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            if self._params[name].data.shape != arr.shape:
                raise DimensionMismatchError(f"shape mismatch for {name!r}")
            self._params[name].data = np.asarray(arr, dtype=np.float64)

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())


@dataclass(frozen=True)
class MlpConfig:
    in_dim: int
    out_dim: int
    hidden_dim: int = 64
    n_layers: int = 4            # number of affine layers
    dropout: float = 0.1
    layer_norm: bool = True

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.in_dim] + [self.hidden_dim] * (self.n_layers - 1) + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


def init_mlp_params(cfg: MlpConfig, store: ParameterStore, prefix: str,
                    rng: np.random.Generator) -> None:
    """He init for hidden layers; the output layer starts 10x smaller so
    initial predictions sit near zero (regression targets are small)."""
    dims = cfg.layer_dims()
    for i, (d_in, d_out) in enumerate(dims):
        last = i == len(dims) - 1
        scale = 0.1 * np.sqrt(1.0 / d_in) if last else np.sqrt(2.0 / d_in)
        store.add(f"{prefix}.w{i}", rng.normal(scale=scale, size=(d_in, d_out)))
        store.add(f"{prefix}.b{i}", np.zeros(d_out))
        if cfg.layer_norm and not last:
            store.add(f"{prefix}.ln_g{i}", np.ones(d_out))
            store.add(f"{prefix}.ln_b{i}", np.zeros(d_out))


def _layer_norm(x, gain, offset):
    mu = ag.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ag.mean(centered * centered, axis=-1, keepdims=True)
    return centered / ag.sqrt(var + LAYER_NORM_EPS) * gain + offset


def mlp_forward(cfg: MlpConfig, store: ParameterStore, x, prefix: str = "mlp",
                train: bool = False, dropout_seed: int | None = None):
    """Forward pass: per layer affine -> layer-norm -> relu -> dropout
    (train only, inverted scaling); final layer affine only.

    x is (..., in_dim), plain array or Tensor. Raises NumericFault with the
    offending layer index when activations go non-finite.
    """
    xd = ag.value(x)
    if xd.shape[-1] != cfg.in_dim:
        raise DimensionMismatchError(
            f"input dim {xd.shape[-1]}, config expects {cfg.in_dim}")
    dropout_rng = None
    if train and cfg.dropout > 0.0:
        dropout_rng = np.random.default_rng(dropout_seed)
    h = x
    n = cfg.n_layers
    for i in range(n):
        w = store[f"{prefix}.w{i}"]
        b = store[f"{prefix}.b{i}"]
        h = _affine(h, w, b)
        if i < n - 1:
            if cfg.layer_norm:
                h = _layer_norm(h, store[f"{prefix}.ln_g{i}"], store[f"{prefix}.ln_b{i}"])
            h = ag.relu(h)
            if dropout_rng is not None:
                keep = 1.0 - cfg.dropout
                mask = (dropout_rng.random(ag.value(h).shape) < keep) / keep
                h = h * mask
        if not np.all(np.isfinite(ag.value(h))):
            raise NumericFault("non-finite activation", where=f"{prefix} layer {i}")
    return h


def _affine(h, w, b):
    hd = ag.value(h)
    if hd.ndim == 1:
        out = ag.matmul(ag.reshape(h, (1, hd.shape[0])), w)
        return ag.reshape(out, (ag.value(out).shape[-1],)) + b
    return ag.matmul(h, w) + b


def backward(tape: Tape, output, output_gradient, store: ParameterStore):
    """Walk the tape from `output` and return ParameterStore-shaped grads."""
    tape.backward(output, output_gradient)
    return store.gradients()


@dataclass
class GaussianParams:
    """mean and log-std vectors; log-std clamped to [-8, 4] at creation."""

    mean: object
    log_std: object

    @classmethod
    def from_stacked(cls, out):
        """Split an encoder output of length 2K into mean and clamped log-std."""
        k = ag.value(out).shape[-1] // 2
        return cls(out[..., :k], ag.clip(out[..., k:], LOG_STD_MIN, LOG_STD_MAX))


def reparameterize(g: GaussianParams, noise):
    """z = mean + exp(log_std) * noise, differentiable in both parameters."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1] != ag.value(g.mean).shape[-1]:
        raise DimensionMismatchError("noise length does not match Gaussian dim")
    return g.mean + ag.exp(g.log_std) * noise


def kl_divergence(g: GaussianParams, direction: str = "standard"):
    """KL between the encoded Gaussian and the unit normal, summed over dims.

    standard:  KL(N(mu, sigma) || N(0, I)) = sum 0.5(mu^2 + sigma^2 - 1) - log sigma
    as_written: KL(N(0, I) || N(mu, sigma)) = sum log sigma + (1 + mu^2)/(2 sigma^2) - 0.5
    """
    mu, ls = g.mean, g.log_std
    if direction == "standard":
        sig2 = ag.exp(ls * 2.0)
        per = 0.5 * (mu * mu + sig2 - 1.0) - ls
    elif direction == "as_written":
        inv_sig2 = ag.exp(ls * -2.0)
        per = ls + (1.0 + mu * mu) * inv_sig2 * 0.5 - 0.5
    else:
        raise ValueError(f"unknown KL direction {direction!r}")
    return ag.sum(per, axis=-1)


@dataclass
class AdamState:
    """Adam moments plus a linear lr schedule from lr_base to lr_final."""

    lr_base: float
    lr_final: float
    total_steps: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr_at(self, step: int) -> float:
        if self.total_steps <= 0:
            return self.lr_base
        if step >= self.total_steps:
            return self.lr_final
        frac = step / self.total_steps
        return self.lr_base * (1.0 - frac) + self.lr_final * frac


def adam_step(state: AdamState, store: ParameterStore,
              grads: dict[str, np.ndarray]) -> None:
    """One bias-corrected Adam update over every parameter in the store."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise NumericFault("non-finite gradient", where="adam_step")
    lr = state.lr_at(state.step)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, param in store.items():
        g = grads[name]
        if g.shape != param.data.shape:
            raise DimensionMismatchError(f"gradient shape mismatch for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
