"""Differentiable primitives.

Every function takes Tensors (or array-likes, treated as constants) and
returns a Tensor. Reductions accumulate in float64 and cast back.
"""
import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, make_op


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)), dtype=np.float64).astype(g.dtype)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True, dtype=np.float64).astype(g.dtype)
    return g.reshape(shape)


def _binary(op, a, b, fwd, vjp_a, vjp_b):
    ad, bd = _data(a), _data(b)
    if ad.dtype.kind != "f":
        ad = ad.astype(bd.dtype if bd.dtype.kind == "f" else np.float32)
    if bd.dtype.kind != "f":
        bd = bd.astype(ad.dtype)
    out = fwd(ad, bd)

    def vjp(g):
        return (_unbroadcast(vjp_a(g, ad, bd, out), ad.shape),
                _unbroadcast(vjp_b(g, ad, bd, out), bd.shape))

    return make_op(op, out, (a, b), vjp)


# -- elementwise -----------------------------------------------------------

def add(a, b):
    return _binary("add", a, b, np.add, lambda g, *_: g, lambda g, *_: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, *_: g, lambda g, *_: -g)


def mul(a, b):
    return _binary("mul", a, b, np.multiply,
                   lambda g, a, b, o: g * b, lambda g, a, b, o: g * a)


def div(a, b):
    return _binary("div", a, b, np.divide,
                   lambda g, a, b, o: g / b, lambda g, a, b, o: -g * o / b)


def neg(x):
    x = as_tensor(x)
    return make_op("neg", -x.data, (x,), lambda g: (-g,))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_op("exp", out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    xd = x.data
    return make_op("log", np.log(xd), (x,), lambda g: (g / xd,))


def _sigmoid(z):
    # tanh form is stable for large |z| in both directions
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return make_op("sigmoid", s, (x,), lambda g: (g * s * (1 - s),))


def swish(x):
    """x * sigmoid(x)."""
    x = as_tensor(x)
    xd = x.data
    s = _sigmoid(xd)

    def vjp(g):
        return (g * (s + xd * s * (1 - s)),)

    return make_op("swish", xd * s, (x,), vjp)


def relu(x):
    x = as_tensor(x)
    xd = x.data
    return make_op("relu", np.maximum(xd, 0), (x,), lambda g: (g * (xd > 0),))


# -- shape ----------------------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return make_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_op("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (g.transpose(inv),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=axis))

    return make_op("concat", np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), vjp)


def index(x, key):
    """Basic (non-fancy) indexing."""
    x = as_tensor(x)
    shape, dtype = x.shape, x.dtype

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        full[key] = g
        return (full,)

    return make_op("index", np.array(x.data[key]), (x,), vjp)


# -- reductions -----------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    shape, dtype = x.shape, x.dtype
    out = x.data.sum(axis=axes, keepdims=keepdims, dtype=np.float64).astype(dtype)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).astype(dtype),)

    return make_op("sum", np.asarray(out), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    shape, dtype = x.shape, x.dtype
    out = x.data.mean(axis=axes, keepdims=keepdims, dtype=np.float64).astype(dtype)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).astype(dtype),)

    return make_op("mean", np.asarray(out), (x,), vjp)


def pool_avg_temporal(x):
    """Mean over the frame axis of a (..., C, T, V) array -> (..., C, V)."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError(f"pool_avg_temporal expects (..., C, T, V), got {x.shape}")
    return mean(x, axis=x.ndim - 2)


# -- linear algebra -------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ np.ascontiguousarray(np.swapaxes(bd, -1, -2))
        extra = ad.ndim - bd.ndim
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        elif extra > 0 and ad.shape[extra:-2] == bd.shape[:-2]:
            # b is shared across a's leading axes: fold them into the row axis
            nb = bd.ndim - 2
            batch = tuple(range(extra, extra + nb))
            lead = tuple(range(extra))
            a_t = ad.transpose(batch + (ad.ndim - 1,) + lead + (ad.ndim - 2,))
            a_t = a_t.reshape(bd.shape[:-2] + (ad.shape[-1], -1))
            g_r = g.transpose(batch + lead + (g.ndim - 2, g.ndim - 1))
            g_r = g_r.reshape(bd.shape[:-2] + (-1, g.shape[-1]))
            gb = a_t @ g_r
        else:
            gb = np.ascontiguousarray(np.swapaxes(ad, -1, -2)) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return make_op("matmul", ad @ bd, (a, b), vjp)


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv2d(x, w, bias=None, stride=1, padding=0, groups=1):
    """Grouped 2D cross-correlation with zero padding.

    x: (N, C, H, W); w: (C_out, C/groups, kh, kw). Implemented as a loop over
    kernel taps, each a batched matmul.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    co, cg, kh, kw = w.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if c % groups or co % groups or c // groups != cg:
        raise DimensionError(
            f"conv2d channel mismatch: input {x.shape}, kernel {w.shape}, groups={groups}")
    cog = co // groups
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d kernel {w.shape} larger than padded input {x.shape}")
    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xd
    xg = xp.reshape(n, groups, cg, xp.shape[2], xp.shape[3])
    wg = w.data.reshape(groups, cog, cg, kh, kw)
    # contiguous per-tap matrices keep matmul on the BLAS path
    taps = np.ascontiguousarray(wg.transpose(3, 4, 0, 1, 2))
    depthwise = cg == 1

    def patch(i, j):
        p = xg[:, :, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw]
        return p.reshape(n, groups, cg, ho * wo)

    out = np.zeros((n, groups, cog, ho * wo), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            if depthwise:
                out += taps[i, j, None, :, :, 0, None] * patch(i, j)
            else:
                out += taps[i, j] @ patch(i, j)
    out = out.reshape(n, co, ho, wo)
    if bias is not None:
        out = out + _data(bias).reshape(1, co, 1, 1)

    def vjp(g):
        gg = g.reshape(n, groups, cog, ho * wo)
        gxp = np.zeros((n, groups, cg) + xp.shape[2:], dtype=xd.dtype)
        gw = np.zeros_like(wg)
        for i in range(kh):
            for j in range(kw):
                p = patch(i, j)
                if depthwise:
                    gw[:, :, 0, i, j] = (gg * p).sum(axis=(0, 3))
                    gp = (gg * taps[i, j, None, :, :, 0, None]).sum(axis=2, keepdims=True)
                else:
                    gw[:, :, :, i, j] = (gg @ np.ascontiguousarray(np.swapaxes(p, -1, -2))).sum(axis=0)
                    gp = np.ascontiguousarray(np.swapaxes(taps[i, j], -1, -2)) @ gg
                gxp[:, :, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += \
                    gp.reshape(n, groups, cg, ho, wo)
        gxp = gxp.reshape(n, c, xp.shape[2], xp.shape[3])
        gx = gxp[:, :, ph:ph + h, pw:pw + wd]
        grads = [gx, gw.reshape(w.shape)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype).reshape(_data(bias).shape))
        return tuple(grads)

    inputs = (x, w) if bias is None else (x, w, bias)
    return make_op("conv2d", out, inputs, vjp)


def conv_temporal(x, kernel, stride=1, bias=None, groups=1):
    """Convolution along the frame axis of (C, T, V) or (N, C, T, V).

    kernel: (C_out, C/groups, k_t) with odd k_t; zero padding (k_t-1)/2 so
    T_out = ceil(T / stride). Each node is filtered independently.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    k = kernel.shape[-1]
    if k % 2 == 0:
        raise ConfigError(f"temporal kernel size must be odd, got {k}")
    unbatched = x.ndim == 3
    if unbatched:
        x = reshape(x, (1,) + x.shape)
    w = reshape(kernel, kernel.shape + (1,))
    out = conv2d(x, w, bias=bias, stride=(stride, 1), padding=((k - 1) // 2, 0), groups=groups)
    if unbatched:
        out = reshape(out, out.shape[1:])
    return out


# -- normalization / softmax ---------------------------------------------

def standardize(x, axes, eps=1e-5):
    """(x - mean) / sqrt(var + eps) over ``axes``. Returns (y, mean, var) with
    the statistics as plain float64 arrays (keepdims)."""
    x = as_tensor(x)
    axes = _norm_axis(axes, x.ndim)
    xd = x.data
    count = int(np.prod([x.shape[a] for a in axes]))
    mu = xd.mean(axis=axes, keepdims=True, dtype=np.float64)
    var = ((xd - mu) ** 2).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = ((xd - mu) * inv).astype(xd.dtype)

    def vjp(g):
        g64 = g.astype(np.float64)
        gm = g64.sum(axis=axes, keepdims=True) / count
        gym = (g64 * y).sum(axis=axes, keepdims=True) / count
        return ((inv * (g64 - gm - y * gym)).astype(xd.dtype),)

    return make_op("standardize", y, (x,), vjp), mu, var


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    xd = x.data.astype(np.float64)
    shifted = xd - xd.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def vjp(g):
        g64 = g.astype(np.float64)
        return ((g64 - soft * g64.sum(axis=axis, keepdims=True)).astype(x.dtype),)

    return make_op("log_softmax", out.astype(x.dtype), (x,), vjp)


def softmax(x, axis=-1):
    return exp(log_softmax(x, axis))
