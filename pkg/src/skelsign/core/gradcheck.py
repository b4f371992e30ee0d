import numpy as np

from ..errors import NumericError
from .tensor import Tape, no_grad, precision


def _scalar(loss):
    value = float(np.asarray(loss.data).reshape(()))
    if not np.isfinite(value):
        raise NumericError(f"loss is not finite: {value}")
    return value


def grad_check(f, params, eps=1e-4, max_coords=None, rng=None, details=False):
    """Compare tape gradients with central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor computed from
    the current values of ``params`` (a dict or sequence of tensors that
    require grad). Everything runs in float64; parameter values are restored
    afterwards. When ``max_coords`` is set, at most that many coordinates per
    tensor are probed, chosen by ``rng``.

    Returns max |analytic - numeric| / max(1, |numeric|) over probed
    coordinates (and the per-coordinate records when ``details``).
    """
    if isinstance(params, dict):
        params = list(params.values())
    else:
        params = list(params)
    rng = rng if rng is not None else np.random.default_rng(0)
    saved = [(p.data, p.grad) for p in params]
    records = []
    try:
        with precision(np.float64):
            for p in params:
                p.data = p.data.astype(np.float64)
                p.grad = np.zeros_like(p.data)
            with Tape(params) as tape:
                loss = f()
            _scalar(loss)
            tape.backward(loss)
            analytic = [p.grad.copy() for p in params]
            with no_grad():
                for k, (p, g) in enumerate(zip(params, analytic)):
                    size = p.data.size
                    if max_coords is None or size <= max_coords:
                        coords = range(size)
                    else:
                        coords = rng.choice(size, max_coords, replace=False)
                    flat = p.data.reshape(-1)
                    for idx in coords:
                        orig = flat[idx]
                        flat[idx] = orig + eps
                        fp = _scalar(f())
                        flat[idx] = orig - eps
                        fm = _scalar(f())
                        flat[idx] = orig
                        num = (fp - fm) / (2 * eps)
                        ana = float(g.reshape(-1)[idx])
                        err = abs(ana - num) / max(1.0, abs(num))
                        records.append((k, int(idx), ana, num, err))
    finally:
        for p, (data, grad) in zip(params, saved):
            p.data = data
            p.grad = np.zeros_like(data) if grad is not None else None
    worst = max((r[-1] for r in records), default=0.0)
    return (worst, records) if details else worst
