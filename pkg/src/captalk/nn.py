"""Small neural-net building blocks on top of the autodiff engine.

Parameters are Tensor attributes of Module instances; anything constant is
kept as a plain numpy array so it stays out of checkpoints and optimizers.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


class Module:
    """Parameter container. Attribute order (insertion order) fixes the
    parameter order, which keeps init and checkpoints deterministic."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ConfigError(f"state dict mismatch: missing={missing} extra={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.values.shape:
                raise ConfigError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model {p.values.shape}"
                )
            p.values = arr.copy()
            p.grad = None


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)))


class Linear(Module):
    def __init__(self, rng, in_dim: int, out_dim: int, bias: bool = True):
        self.weight = xavier(rng, in_dim, out_dim)
        self.bias = Tensor(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.weight)
        if self.bias is not None:
            y = ad.add(y, self.bias)
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim))
        self.beta = Tensor(np.zeros(dim))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta, self._eps)


class Embedding(Module):
    def __init__(self, rng, count: int, dim: int):
        self.table = Tensor(rng.normal(0.0, 0.02, size=(count, dim)))

    def __call__(self, indices) -> Tensor:
        return ad.gather_rows(self.table, np.asarray(indices, dtype=np.intp))


class FeedForward(Module):
    def __init__(self, rng, dim: int, mult: int = 4):
        self.up = Linear(rng, dim, mult * dim)
        self.down = Linear(rng, mult * dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ad.gelu(self.up(x)))


def rope_freqs(head_dim: int, base: float = 10000.0) -> np.ndarray:
    """Rotation frequency bank shared by queries and keys (radians/frame)."""
    half = head_dim // 2
    return base ** (-np.arange(half) / half)


class MultiHeadAttention(Module):
    """Softmax attention with optional rotary time alignment.

    q_times/k_times are positions in video-frame units; when given, queries
    and keys are rotated per head with the same frequency bank so logits
    depend only on time differences.
    """

    def __init__(self, rng, dim: int, heads: int, kv_dim: int | None = None,
                 rope_base: float = 10000.0):
        if dim % heads != 0:
            raise ConfigError(f"model width {dim} not divisible by {heads} heads")
        if (dim // heads) % 2 != 0:
            raise ConfigError(f"head dim {dim // heads} must be even for rotary use")
        kv_dim = dim if kv_dim is None else kv_dim
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, kv_dim, dim)
        self.wv = Linear(rng, kv_dim, dim)
        self.wo = Linear(rng, dim, dim)
        self._heads = heads
        self._head_dim = dim // heads
        self._freqs = rope_freqs(self._head_dim, rope_base)
        self._scale = 1.0 / np.sqrt(self._head_dim)

    def _split(self, x: Tensor, t: int) -> Tensor:
        x = ad.reshape(x, (t, self._heads, self._head_dim))
        return ad.transpose(x, (1, 0, 2))

    def __call__(self, x: Tensor, kv: Tensor, mask: np.ndarray | None = None,
                 q_times: np.ndarray | None = None,
                 k_times: np.ndarray | None = None) -> Tensor:
        tq, tk = x.shape[0], kv.shape[0]
        q = self._split(self.wq(x), tq)
        k = self._split(self.wk(kv), tk)
        v = self._split(self.wv(kv), tk)
        if q_times is not None:
            q = ad.rope_rotate(q, q_times, self._freqs)
        if k_times is not None:
            k = ad.rope_rotate(k, k_times, self._freqs)
        logits = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))), ad.as_tensor(self._scale))
        if mask is not None:
            logits = ad.add(logits, Tensor(mask))
        att = ad.softmax(logits)
        mixed = ad.matmul(att, v)
        mixed = ad.reshape(ad.transpose(mixed, (1, 0, 2)), (tq, self._heads * self._head_dim))
        return self.wo(mixed)
