"""Central finite differences, independent of the analytic backward passes."""

import numpy as np

EPS = 1e-5
REL_TOL = 1e-4
# entries whose magnitudes are both below FLOOR are held to an absolute
# tolerance of REL_TOL * FLOOR: central differences at EPS carry ~1e-10 of
# cancellation noise for losses of order 10-100
FLOOR = 1e-5


def numeric_grad(arr, loss_fn, eps=EPS):
    g = np.zeros_like(arr, dtype=float)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        up = loss_fn()
        arr[idx] = old - eps
        down = loss_fn()
        arr[idx] = old
        g[idx] = (up - down) / (2 * eps)
        it.iternext()
    return g


def max_rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)))


def check_params(params, grads, loss_fn):
    """Worst relative error over every entry of every parameter."""
    worst = 0.0
    for name, arr in params.items():
        num = numeric_grad(arr, loss_fn)
        worst = max(worst, max_rel_error(grads[name], num))
    return worst
