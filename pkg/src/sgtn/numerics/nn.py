"""Parameters, a minimal module tree, and the standard layers built from them."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np
from scipy import stats

from . import functional as F
from . import ops
from .tensor import Tensor, default_dtype

__all__ = [
    "Parameter", "Module", "ModuleList", "Linear", "LayerNorm", "BatchNorm",
    "Conv2d", "ConvBNReLU", "trunc_normal", "seeded_rng",
]


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated at +-2 std."""
    return stats.truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)


class Parameter(Tensor):
    """A named leaf tensor owned by a :class:`Module`.

    ``trainable=False`` freezes it: the optimiser skips it and no gradient is
    recorded.
    """

    __slots__ = ("name", "trainable")

    def __init__(self, value, name: str = "", trainable: bool = True):
        super().__init__(value, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def freeze(self, value=None) -> None:
        if value is not None:
            self.data[...] = value
        self.trainable = False
        self.requires_grad = False
        self.grad = None

    @property
    def value(self) -> np.ndarray:
        return self.data


class Module:
    training = True

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")

    def named_buffers(self, prefix: str = ""):
        """Non-trainable state arrays (e.g. batch-norm running statistics)."""
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Module):
                yield from val.named_buffers(name + ".")
        for key in getattr(self, "_buffers", ()):
            yield f"{prefix}{key}", getattr(self, key)

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def name_parameters(self) -> None:
        """Stamp each parameter with its dotted attribute path."""
        for name, p in self.named_parameters():
            p.name = name

    def astype(self, dtype):
        """Cast every parameter and buffer in place (used by 64-bit gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            for key in getattr(m, "_buffers", ()):
                setattr(m, key, getattr(m, key).astype(dtype))
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((n, p.data) for n, p in self.named_parameters())
        state.update((n, b) for n, b in self.named_buffers())
        return state

    def load_state_dict(self, state) -> None:
        own = self.state_dict()
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src


class ModuleList(Module):
    def __init__(self, items=()):
        for i, m in enumerate(items):
            setattr(self, str(i), m)

    def __iter__(self):
        return iter(v for v in vars(self).values() if isinstance(v, Module))

    def __len__(self):
        return sum(1 for _ in self)

    def __getitem__(self, i):
        return getattr(self, str(i))


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True, std: float = 0.02):
        self.weight = Parameter(trunc_normal(rng, (d_in, d_out), std))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.running_mean = np.zeros(dim, dtype=default_dtype())
        self.running_var = np.ones(dim, dtype=default_dtype())
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class Conv2d(Module):
    """Bias-carrying convolution; He-normal weights."""

    def __init__(self, rng, c_in: int, c_out: int, k: int = 3, stride: int = 1,
                 dilation: int = 1, bias: bool = True):
        std = np.sqrt(2.0 / (c_in * k * k))
        self.weight = Parameter(rng.normal(0.0, std, size=(c_out, c_in, k, k)))
        self.bias = Parameter(np.zeros(c_out)) if bias else None
        self.stride = stride
        self.dilation = dilation

    def __call__(self, x):
        y = F.conv2d(x, self.weight, stride=self.stride, dilation=self.dilation)
        return y if self.bias is None else y + self.bias


class ConvBNReLU(Module):
    """The 'convolution layer' used throughout: 3x3 conv, batch norm, ReLU."""

    def __init__(self, rng, c_in: int, c_out: int, k: int = 3, dilation: int = 1):
        self.conv = Conv2d(rng, c_in, c_out, k, dilation=dilation, bias=False)
        self.bn = BatchNorm(c_out)

    def __call__(self, x):
        return ops.relu(self.bn(self.conv(x)))
