"""Small layer toolkit on top of the primitives."""
import numpy as np

from . import ops
from .tensor import Parameter, Tensor, as_tensor


class Module:
    """Container with parameter discovery and train/eval switching.

    Parameters are found by walking attributes: Parameters, Modules, and
    lists/tuples of Modules. Buffers are numpy arrays named in ``_buffers``.
    """

    _buffers = ()

    def __init__(self):
        self.training = True

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                out[prefix + name] = value
        for name, child in self.children():
            out.update(child.named_parameters(f"{prefix}{name}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def named_buffers(self, prefix=""):
        out = {prefix + name: getattr(self, name) for name in self._buffers}
        for name, child in self.children():
            out.update(child.named_buffers(f"{prefix}{name}."))
        return out

    def load_buffers(self, buffers, prefix=""):
        for name in self._buffers:
            key = prefix + name
            if key in buffers:
                setattr(self, name, np.array(buffers[key], dtype=getattr(self, name).dtype))
        for name, child in self.children():
            child.load_buffers(buffers, f"{prefix}{name}.")

    def state_dict(self):
        state = {k: p.data for k, p in self.named_parameters().items()}
        state.update({"buffer:" + k: v for k, v in self.named_buffers().items()})
        return state

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = [k for k in params if k not in state]
        if missing:
            raise KeyError(f"missing parameters in state: {missing[:5]}")
        for k, p in params.items():
            value = np.asarray(state[k])
            if value.shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {value.shape} vs {p.shape}")
            p.data = value.astype(p.dtype)
        self.load_buffers({k[len("buffer:"):]: v for k, v in state.items() if k.startswith("buffer:")})

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        args = [as_tensor(a) if isinstance(a, np.ndarray) else a for a in args]
        return self.forward(*args, **kwargs)


def kaiming(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=shape)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (n_in, n_out)))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def forward(self, x):
        y = ops.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, groups=1, bias=True):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if padding is None:
            padding = ((kh - 1) // 2, (kw - 1) // 2)
        self.stride, self.padding, self.groups = stride, padding, groups
        fan_in = (c_in // groups) * kh * kw
        self.weight = Parameter(kaiming(rng, (c_out, c_in // groups, kh, kw), fan_in))
        self.bias = Parameter(np.zeros(c_out)) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class BatchNorm(Module):
    """Per-channel normalization over every axis except ``channel_axis``.

    Batch statistics in training (running averages updated), running
    statistics in eval.
    """

    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, channel_axis=1, momentum=0.1, eps=1e-5):
        super().__init__()
        self.channels, self.channel_axis = channels, channel_axis
        self.momentum, self.eps = momentum, eps
        self.scale = Parameter(np.ones(channels))
        self.offset = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def _bshape(self, ndim):
        shape = [1] * ndim
        shape[self.channel_axis] = self.channels
        return shape

    def forward(self, x):
        shape = self._bshape(x.ndim)
        if self.training:
            axes = [a for a in range(x.ndim) if a != self.channel_axis]
            y, mu, var = ops.standardize(x, axes, self.eps)
            count = x.data.size // self.channels
            unbiased = var.reshape(-1) * count / max(count - 1, 1)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu.reshape(-1)
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            mu = self.running_mean.reshape(shape)
            inv = 1.0 / np.sqrt(self.running_var.reshape(shape) + self.eps)
            y = (x - mu.astype(x.dtype)) * inv.astype(x.dtype)
        return y * ops.reshape(self.scale, shape) + ops.reshape(self.offset, shape)


class LayerNorm(Module):
    """Normalize over the trailing axis with learned scale and offset."""

    def __init__(self, width, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.scale = Parameter(np.ones(width))
        self.offset = Parameter(np.zeros(width))

    def forward(self, x):
        y, _, _ = ops.standardize(x, -1, self.eps)
        return y * self.scale + self.offset


class Dropout(Module):
    def __init__(self, rate, rng):
        super().__init__()
        self.rate, self.rng = rate, rng

    def forward(self, x):
        if not self.training or self.rate <= 0:
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep) / keep
        return x * Tensor(mask.astype(x.dtype))


def param_count(module):
    return int(sum(p.data.size for p in module.parameters()))
