"""Late fusion of per-modality logits: fixed weights, the learned ensemble
model (GEM) and a one-at-a-time weight sensitivity sweep."""
import copy
import logging
from dataclasses import dataclass

import numpy as np

from .core import ops
from .core.nn import LayerNorm, Linear, Module
from .core.tensor import Parameter, Tape, Tensor, no_grad
from .errors import ConfigError, DataError, FusionError, InputError
from .metrics import evaluate
from .training import SGD, cosine_lr, smoothed_ce

log = logging.getLogger(__name__)

RGB_WEIGHTS = (1.0, 0.9, 0.4, 0.4)
RGBD_WEIGHTS = (1.0, 0.9, 0.4, 0.4, 0.4, 0.1)


@dataclass
class LogitMatrix:
    """Pre-softmax scores of one modality; rows follow ``ids``."""

    modality: str
    scores: np.ndarray
    ids: tuple = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores)
        if self.scores.ndim != 2:
            raise InputError(f"{self.modality}: logits must be (samples, classes), got {self.scores.shape}")
        if self.ids is not None:
            self.ids = tuple(str(i) for i in self.ids)
            if len(self.ids) != len(self.scores):
                raise InputError(f"{self.modality}: {len(self.ids)} ids for {len(self.scores)} rows")
            if len(set(self.ids)) != len(self.ids):
                raise InputError(f"{self.modality}: duplicate sample ids")

    @property
    def shape(self):
        return self.scores.shape


def _scores(m):
    return m.scores if isinstance(m, LogitMatrix) else np.asarray(m)


def check_aligned(mods):
    """Raise FusionError naming every modality whose shape or manifest
    disagrees with the first one."""
    if not mods:
        raise FusionError("nothing to fuse")
    ref = mods[0]
    bad = []
    for i, m in enumerate(mods[1:], 1):
        name = m.modality if isinstance(m, LogitMatrix) else f"modality {i}"
        if _scores(m).shape != _scores(ref).shape:
            bad.append(f"{name} shape {_scores(m).shape}")
        elif (isinstance(m, LogitMatrix) and isinstance(ref, LogitMatrix)
              and m.ids is not None and ref.ids is not None and m.ids != ref.ids):
            bad.append(f"{name} manifest")
    if bad:
        first = ref.modality if isinstance(ref, LogitMatrix) else "modality 0"
        raise FusionError(f"not aligned with {first}: " + ", ".join(bad))


def fuse_fixed(mods, weights):
    """sum_i weights[i] * mods[i], elementwise in float64."""
    check_aligned(mods)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(mods),):
        raise FusionError(f"{len(mods)} modalities but {weights.size} weights")
    if not np.all(np.isfinite(weights)) or not np.any(weights):
        raise FusionError("fusion weights must be finite with at least one non-zero")
    out = np.zeros(_scores(mods[0]).shape)
    for w, m in zip(weights, mods):
        out += w * _scores(m).astype(np.float64)
    return out


@dataclass
class GEMConfig:
    modalities: int = 2
    classes: int = 10
    filters: int = 64      # N: conv filters and hidden width
    depth: int = 2         # hidden FC -> LN -> swish blocks
    weight_mode: str = "sample"  # or "global": weights averaged on a calibration set

    def __post_init__(self):
        if self.modalities < 2:
            raise ConfigError("GEM needs at least two modalities")
        if self.weight_mode not in ("sample", "global"):
            raise ConfigError(f"unknown weight_mode {self.weight_mode!r}")
        if min(self.classes, self.filters, self.depth) < 1:
            raise ConfigError("GEM sizes must be positive")


class GEM(Module):
    """Maps each sample's C x M block of logits to M fusion weights.

    A C x 1 convolution with N filters collapses the class axis of every
    modality column, the (N, M) result is flattened, passed through
    ``depth`` blocks of FC -> LayerNorm -> swish, and a last FC emits M raw
    weights.
    """

    _buffers = ("global_weights",)

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        c, m, n = cfg.classes, cfg.modalities, cfg.filters
        self.conv_weight = Parameter(rng.normal(0, 1.0 / np.sqrt(c), (c, n)))
        self.conv_bias = Parameter(np.zeros(n))
        widths = [n * m] + [n] * cfg.depth
        self.hidden = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        self.norms = [LayerNorm(n) for _ in range(cfg.depth)]
        self.out = Linear(n, m, rng)
        # start from equal weights so an untrained model is the plain sum
        self.out.weight.data[:] = 0
        self.out.bias.data[:] = 1
        self.global_weights = np.zeros(0)

    def stack(self, mods):
        """(S, M, C) tensor of the aligned logits; checks M and C."""
        check_aligned(mods)
        if len(mods) != self.cfg.modalities:
            raise ConfigError(f"GEM built for {self.cfg.modalities} modalities, got {len(mods)}")
        q = np.stack([_scores(m) for m in mods], axis=1)
        if q.shape[-1] != self.cfg.classes:
            raise ConfigError(f"GEM built for {self.cfg.classes} classes, got {q.shape[-1]}")
        return q

    def weights(self, q):
        """(S, M) raw fusion weights for an (S, M, C) block."""
        q = Tensor(q) if not isinstance(q, Tensor) else q
        s, m, c = q.shape
        h = ops.matmul(q, self.conv_weight) + self.conv_bias  # S, M, N
        h = ops.reshape(h, (s, -1))
        for fc, norm in zip(self.hidden, self.norms):
            h = ops.swish(norm(fc(h)))
        return self.out(h)

    def forward(self, q):
        q = Tensor(np.asarray(q, dtype=self.conv_weight.dtype)) if not isinstance(q, Tensor) else q
        s, m, c = q.shape
        if self.cfg.weight_mode == "global" and self.global_weights.size and not self.training:
            w = Tensor(np.broadcast_to(self.global_weights, (s, m)).astype(q.dtype))
        else:
            w = self.weights(q)
        fused = ops.sum(q * ops.reshape(w, (s, m, 1)), axis=1)
        return w, fused

    def calibrate(self, mods):
        """Store the mean per-sample weights of ``mods`` for global mode."""
        with no_grad():
            self.global_weights = self.weights(self.stack(mods).astype(self.conv_weight.dtype)).data.mean(axis=0)
        return self.global_weights


def gem_forward(mods, model):
    """Eval-mode (weights (S, M), fused logits (S, C))."""
    was = model.training
    model.eval()
    with no_grad():
        w, fused = model(model.stack(mods))
    model.train(was)
    return w.data.astype(np.float64), fused.data.astype(np.float64)


@dataclass
class GEMTrainConfig:
    epochs: int = 100
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    label_smoothing: float = 0.1
    seed: int = 0


def gem_train(mods, labels, cfg, model=None, val=None, rng=None, gem_cfg=None):
    """Fit a GEM on frozen modality logits; keeps the best held-out top-1.

    ``val`` is an optional (mods, labels) pair; without it the training set
    is used for model selection. Returns (model, history).
    """
    labels = np.asarray(labels, dtype=int)
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        raise DataError(f"classes {classes[counts < 2].tolist()} have fewer than 2 samples")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if model is None:
        c = _scores(mods[0]).shape[1]
        gem_cfg = gem_cfg or GEMConfig(modalities=len(mods), classes=c)
        model = GEM(gem_cfg, rng)
    q = model.stack(mods).astype(model.conv_weight.dtype)
    if len(q) != len(labels):
        raise InputError(f"{len(q)} samples but {len(labels)} labels")
    vq, vy = (model.stack(val[0]), np.asarray(val[1])) if val is not None else (q, labels)
    params = model.parameters()
    opt = SGD(params, cfg.lr, cfg.momentum, cfg.weight_decay)
    per_epoch = max(1, -(-len(q) // cfg.batch_size))
    total = cfg.epochs * per_epoch
    history = []
    best, best_state = -1.0, copy.deepcopy(model.state_dict())
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(q))
        losses = []
        for i in range(0, len(q), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            opt.zero_grad()
            with Tape(params) as tape:
                _, fused = model(Tensor(q[idx]))
                loss = smoothed_ce(fused, labels[idx], cfg.label_smoothing)
            tape.backward(loss)
            opt.step(cosine_lr(cfg.lr, step, total))
            step += 1
            losses.append(float(loss.data))
        top1 = evaluate(gem_forward_stacked(model, vq), vy).top1
        history.append({"epoch": epoch + 1, "loss": float(np.mean(losses)), "val_top1": top1})
        log.info("gem epoch %d loss %.4f held-out top-1 %.3f", epoch + 1, np.mean(losses), top1)
        if top1 > best:
            best, best_state = top1, copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    return model.eval(), history


def gem_forward_stacked(model, q):
    was = model.training
    model.eval()
    with no_grad():
        _, fused = model(q)
    model.train(was)
    return fused.data.astype(np.float64)


def parse_grid(spec):
    """"start:stop:step" (inclusive stop) or comma-separated values."""
    try:
        if ":" in spec:
            start, stop, step = (float(v) for v in spec.split(":"))
            if step <= 0 or stop < start:
                raise ConfigError(f"bad grid {spec!r}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return np.round(start + step * np.arange(count), 10)
        values = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError as e:
        raise ConfigError(f"bad grid {spec!r}: {e}") from e
    if values.size == 0:
        raise ConfigError("empty grid")
    return values


@dataclass
class SweepResult:
    rows: list   # (modality index, weight, top-1)
    best: dict   # modality index -> weight with the highest top-1 (first on ties)

    def to_text(self, sep="\t"):
        lines = [sep.join(["modality", "weight", "top1"])]
        lines += [sep.join([str(i), f"{w:g}", f"{a:.6f}"]) for i, w, a in self.rows]
        return "\n".join(lines) + "\n"


def sensitivity_sweep(mods, labels, base, grid):
    """Vary one weight at a time over ``grid`` with the rest held at ``base``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ConfigError("empty grid")
    base = np.asarray(base, dtype=np.float64)
    check_aligned(mods)
    if base.shape != (len(mods),):
        raise FusionError(f"{len(mods)} modalities but {base.size} base weights")
    rows, best = [], {}
    for i in range(len(mods)):
        top = None
        for g in grid:
            w = base.copy()
            w[i] = g
            if np.any(w):
                acc = evaluate(fuse_fixed(mods, w), labels).top1
            else:
                acc = evaluate(np.zeros(_scores(mods[0]).shape), labels).top1
            rows.append((i, float(g), acc))
            if top is None or acc > top[1]:
                top = (float(g), acc)
        best[i] = top[0]
    return SweepResult(rows, best)


def complementary_benchmark(samples_per_class=20, classes=10, split=None, margin=4.0, noise=1.0, rng=None):
    """Two modalities with complementary competence.

    Modality A ranks the true class first when it is below ``split`` and
    otherwise puts a confident peak on a wrong class of the same half;
    modality B does the reverse. Returns ([A, B], labels).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    split = classes // 2 if split is None else split
    labels = np.repeat(np.arange(classes), samples_per_class)
    rng.shuffle(labels)
    s = len(labels)
    a = rng.normal(0, noise, (s, classes))
    b = rng.normal(0, noise, (s, classes))
    for r, y in enumerate(labels):
        lo, hi = (0, split) if y < split else (split, classes)
        wrong = rng.choice([k for k in range(lo, hi) if k != y])
        good, bad = (a, b) if y < split else (b, a)
        good[r, y] += margin + rng.uniform(0, 1)
        bad[r, wrong] += margin + rng.uniform(0, 1)
    return [LogitMatrix("A", a), LogitMatrix("B", b)], labels


def noise_benchmark(samples_per_class=20, classes=10, margin=3.0, noise=1.0, rng=None):
    """One informative modality plus one of pure noise."""
    rng = rng if rng is not None else np.random.default_rng(0)
    labels = np.repeat(np.arange(classes), samples_per_class)
    good = rng.normal(0, noise, (len(labels), classes))
    good[np.arange(len(labels)), labels] += margin
    junk = rng.normal(0, noise * margin, (len(labels), classes))
    return [LogitMatrix("signal", good), LogitMatrix("noise", junk)], labels
