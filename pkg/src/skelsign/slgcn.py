"""Sign-language GCN: decoupled spatial graph convolution with STC attention,
temporal convolution and residual units, plus multi-stream score fusion."""
from dataclasses import dataclass, field

import numpy as np

from .core import ops
from .core.nn import BatchNorm, Conv2d, Linear, Module
from .core.tensor import Parameter, Tensor, as_tensor
from .errors import ConfigError, FusionError
from .skeleton import build_adjacency, graph_adjacency, reduced_graph
from .streams import StreamTensor


@dataclass
class SLGCNConfig:
    num_classes: int = 226
    in_channels: int = 3
    num_nodes: int = 27
    units: int = 10
    channels: list = field(default_factory=lambda: [64, 64, 64, 64, 128, 128, 128, 256, 256, 256])
    strides: list = field(default_factory=lambda: [1, 1, 1, 1, 2, 1, 1, 2, 1, 1])
    groups: int = 8
    kernel_t: int = 9
    dropgraph_keep_prob: float = 0.9
    partition: str = "spatial"
    attention: bool = True
    attention_reduction: int = 4
    activation: str = "swish"
    residual: str = "auto"

    def __post_init__(self):
        self.channels = [int(c) for c in self.channels]
        self.strides = [int(s) for s in self.strides]
        if not self.units == len(self.channels) == len(self.strides):
            raise ConfigError(
                f"units={self.units} but {len(self.channels)} channel widths and {len(self.strides)} strides")
        if self.kernel_t % 2 == 0:
            raise ConfigError(f"temporal kernel must be odd, got {self.kernel_t}")
        bad = [c for c in self.channels if c % self.groups]
        if bad:
            raise ConfigError(f"groups={self.groups} does not divide channel widths {bad}")
        if any(s not in (1, 2) for s in self.strides):
            raise ConfigError(f"strides must be 1 or 2, got {self.strides}")
        if not 0.0 < self.dropgraph_keep_prob <= 1.0:
            raise ConfigError("dropgraph_keep_prob must be in (0, 1]")
        if self.activation not in ("swish", "identity"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.residual not in ("auto", "none"):
            raise ConfigError(f"unknown residual mode {self.residual!r}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")


def _activate(x, kind):
    return ops.swish(x) if kind == "swish" else x


class DecoupledGCN(Module):
    """Spatial graph convolution with one trainable adjacency per channel group.

    For partition k: mix channels with W_k, split the result into G groups
    and multiply each group along the node axis by A_k[g]; sum over k.
    """

    def __init__(self, c_in, c_out, partitions, groups, rng):
        super().__init__()
        if c_out % groups:
            raise ConfigError(f"{c_out} output channels not divisible into {groups} groups")
        k, v, _ = partitions.shape
        self.c_in, self.c_out, self.groups, self.num_partitions = c_in, c_out, groups, k
        std = np.sqrt(2.0 / (c_in * k))
        self.weight = Parameter(rng.normal(0, std, (c_in, k * c_out)))
        self.bias = Parameter(np.zeros(c_out))
        self.adjacency = Parameter(np.repeat(partitions[:, None], groups, axis=1))

    def forward(self, x):
        n, c, t, v = x.shape
        if c != self.c_in:
            raise ConfigError(f"expected {self.c_in} input channels, got {c}")
        k, g = self.num_partitions, self.groups
        cg = self.c_out // g
        y = ops.matmul(ops.transpose(x, (0, 2, 3, 1)), self.weight)  # N,T,V,K*C'
        y = ops.reshape(y, (n, t, v, k, g, cg))
        # batch is folded into the row axis so each (k, g) is one large matmul
        y = ops.transpose(y, (3, 4, 0, 5, 1, 2))  # K,G,N,Cg,T,V
        y = ops.reshape(y, (k, g, n * cg * t, v))
        # out[..., v] = sum_u A[v, u] y[..., u]
        y = ops.matmul(y, ops.transpose(self.adjacency, (0, 1, 3, 2)))
        y = ops.sum(y, axis=0)
        y = ops.transpose(ops.reshape(y, (g, n, cg, t, v)), (1, 0, 2, 3, 4))
        y = ops.reshape(y, (n, self.c_out, t, v))
        return y + ops.reshape(self.bias, (1, self.c_out, 1, 1))


class STCAttention(Module):
    """Cascaded spatial, temporal and channel gates, each applied as x + x*gate."""

    def __init__(self, channels, num_nodes, rng, reduction=4, temporal_kernel=9, bias_init=0.0):
        super().__init__()
        ks = num_nodes if num_nodes % 2 else num_nodes - 1
        ks = max(ks, 1)
        self.spatial = Conv2d(channels, 1, (1, ks), rng)
        self.temporal = Conv2d(channels, 1, (temporal_kernel, 1), rng)
        hidden = max(channels // reduction, 1)
        self.squeeze = Linear(channels, hidden, rng)
        self.excite = Linear(hidden, channels, rng)
        for conv in (self.spatial, self.temporal):
            conv.weight.data[:] = 0
            conv.bias.data[:] = bias_init
        self.excite.weight.data[:] = 0
        self.excite.bias.data[:] = bias_init

    def forward(self, x):
        n, c, t, v = x.shape
        pooled = ops.mean(x, axis=2, keepdims=True)  # N,C,1,V
        gate = ops.sigmoid(self.spatial(pooled))  # N,1,1,V
        x = x + x * gate
        pooled = ops.mean(x, axis=3, keepdims=True)  # N,C,T,1
        gate = ops.sigmoid(self.temporal(pooled))  # N,1,T,1
        x = x + x * gate
        pooled = ops.mean(x, axis=(2, 3))  # N,C
        gate = ops.sigmoid(self.excite(ops.swish(self.squeeze(pooled))))
        x = x + x * ops.reshape(gate, (n, c, 1, 1))
        return x


class DropGraph(Module):
    """Drop random nodes together with their 1-hop neighborhoods (training only)."""

    def __init__(self, adjacency, keep_prob, rng):
        super().__init__()
        self.keep_prob, self.rng = keep_prob, rng
        self.reach = (np.asarray(adjacency) + np.eye(len(adjacency))) > 0
        self.block = float(self.reach.sum(axis=1).mean())

    def forward(self, x):
        if not self.training or self.keep_prob >= 1.0:
            return x
        n, v = x.shape[0], x.shape[-1]
        gamma = (1.0 - self.keep_prob) / self.block
        seeds = self.rng.random((n, v)) < gamma
        dropped = (seeds.astype(float) @ self.reach.astype(float)) > 0
        mask = (~dropped).astype(float)
        mask *= mask.size / max(mask.sum(), 1.0)
        return x * Tensor(mask[:, None, None, :].astype(x.dtype))


class SLGCNUnit(Module):
    def __init__(self, c_in, c_out, stride, partitions, adjacency, cfg, rng):
        super().__init__()
        self.activation = cfg.activation
        self.gcn = DecoupledGCN(c_in, c_out, partitions, cfg.groups, rng)
        self.attention = STCAttention(c_out, cfg.num_nodes, rng, cfg.attention_reduction) if cfg.attention else None
        self.tcn = Conv2d(c_out, c_out, (cfg.kernel_t, 1), rng, stride=(stride, 1))
        self.bn = BatchNorm(c_out)
        if cfg.residual == "none":
            self.res_mode = "none"
        elif c_in == c_out and stride == 1:
            self.res_mode = "identity"
        else:
            self.res_mode = "project"
            self.res_conv = Conv2d(c_in, c_out, 1, rng, stride=(stride, 1))
            self.res_bn = BatchNorm(c_out)
        self.dropgraph = DropGraph(adjacency, cfg.dropgraph_keep_prob, rng)

    def forward(self, x):
        y = self.gcn(x)
        if self.attention is not None:
            y = self.attention(y)
        y = _activate(self.bn(self.tcn(y)), self.activation)
        if self.res_mode == "identity":
            y = y + x
        elif self.res_mode == "project":
            y = y + self.res_bn(self.res_conv(x))
        return self.dropgraph(y)


class SLGCN(Module):
    """Input normalization -> N units -> temporal average pooling -> FC."""

    def __init__(self, cfg, rng, adjacency=None):
        super().__init__()
        self.cfg = cfg
        if adjacency is None:
            if cfg.num_nodes != 27:
                raise ConfigError("custom node counts need an explicit adjacency")
            adjacency = graph_adjacency(cfg.partition)
        binary = (adjacency.full > 0).astype(float) - np.eye(cfg.num_nodes)
        self.data_bn = BatchNorm(cfg.in_channels * cfg.num_nodes)
        units = []
        c_in = cfg.in_channels
        for c_out, stride in zip(cfg.channels, cfg.strides):
            units.append(SLGCNUnit(c_in, c_out, stride, adjacency.partitions, binary, cfg, rng))
            c_in = c_out
        self.units = units
        self.fc = Linear(c_in * cfg.num_nodes, cfg.num_classes, rng)

    def _batch(self, x):
        if isinstance(x, StreamTensor):
            x = x.data
        x = as_tensor(x)
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        n, c, t, v = x.shape
        if c != self.cfg.in_channels or v != self.cfg.num_nodes:
            raise ConfigError(
                f"model expects {self.cfg.in_channels} channels x {self.cfg.num_nodes} nodes, got input {x.shape}")
        return x

    def forward(self, x):
        x = self._batch(x)
        n, c, t, v = x.shape
        # permute so every (node, channel) pair is normalized on its own
        y = ops.reshape(ops.transpose(x, (0, 3, 1, 2)), (n, v * c, t))
        y = self.data_bn(y)
        y = ops.transpose(ops.reshape(y, (n, v, c, t)), (0, 2, 3, 1))
        for unit in self.units:
            y = unit(y)
        y = ops.pool_avg_temporal(y)  # N,C,V
        y = ops.reshape(y, (n, -1))
        return self.fc(y)


def slgcn_forward(stream, model):
    """Eval-style convenience: logits for one stream sample (C,) or a batch."""
    single = (isinstance(stream, StreamTensor) or np.ndim(getattr(stream, "data", stream)) == 3)
    out = model(stream).data
    if out.shape[-1] != model.cfg.num_classes:
        raise ConfigError("class count mismatch")
    return out[0] if single else out


def multi_stream_fuse(logits, weights=(1.0, 1.0, 1.0, 1.0)):
    """Weighted sum of per-stream logit matrices."""
    logits = [np.asarray(l, dtype=np.float64) for l in logits]
    if len(logits) != len(weights):
        raise FusionError(f"{len(logits)} streams but {len(weights)} weights")
    shapes = {l.shape for l in logits}
    if len(shapes) != 1:
        raise FusionError(f"stream logits have inconsistent shapes {sorted(shapes)}")
    out = np.zeros_like(logits[0])
    for w, l in zip(weights, logits):
        out += w * l
    return out


def identity_unit_config(channels, num_nodes=27):
    """Config under which a unit can be set to the identity map (see
    ``make_identity_unit``)."""
    return SLGCNConfig(num_classes=2, in_channels=channels, num_nodes=num_nodes, units=1,
                       channels=[channels], strides=[1], groups=1, kernel_t=1,
                       dropgraph_keep_prob=1.0, partition="uniform", activation="identity",
                       residual="none")


def make_identity_unit(channels, num_nodes, rng):
    cfg = identity_unit_config(channels, num_nodes)
    partitions = np.eye(num_nodes)[None]
    g = reduced_graph() if num_nodes == 27 else None
    binary = build_adjacency(g) if g is not None else np.zeros((num_nodes, num_nodes))
    unit = SLGCNUnit(channels, channels, 1, partitions, binary, cfg, rng)
    unit.gcn.weight.data[:] = np.eye(channels)
    unit.gcn.bias.data[:] = 0
    att = unit.attention
    for conv in (att.spatial, att.temporal):
        conv.bias.data[:] = -40.0
    att.excite.bias.data[:] = -40.0
    unit.tcn.weight.data[:] = np.eye(channels)[:, :, None, None]
    unit.tcn.bias.data[:] = 0
    # running variance 1 - eps makes the eval-mode batch norm exactly 1/1
    unit.bn.running_var = np.full(channels, 1.0 - unit.bn.eps)
    return unit.eval()
