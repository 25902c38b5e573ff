"""Central finite-difference check of the analytic backward pass."""
from __future__ import annotations

import numpy as np

from .nn import NetworkParams, backward, forward, init_network

FD_STEP = 1e-6
# Denominator floor for the relative error. Central differences at step 1e-6
# carry ~eps*|f|/step ~ 1e-9 of round-off, so gradients smaller than this
# floor are effectively compared on absolute error.
REL_FLOOR = 1e-3


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)


def _objective(params: NetworkParams, x, w) -> float:
    out, _ = forward(params, x)
    return float(np.sum(out * w))


def numeric_grads(params: NetworkParams, x, w, step=FD_STEP):
    """Central differences of sum(forward(x) * w) w.r.t. every parameter and the input."""
    param_grads = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            plus = _objective(params, x, w)
            flat[i] = old - step
            minus = _objective(params, x, w)
            flat[i] = old
            gflat[i] = (plus - minus) / (2 * step)
        param_grads.append(g)
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        plus = _objective(params, x, w)
        x[idx] = old - step
        minus = _objective(params, x, w)
        x[idx] = old
        gx[idx] = (plus - minus) / (2 * step)
    return param_grads, gx


def check_network(params: NetworkParams, x, w) -> float:
    out, cache = forward(params, x)
    grads, gx = backward(params, cache, w)
    analytic = [g for pair in grads for g in pair] + [gx]
    fd_params, fd_x = numeric_grads(params, x, w)
    numeric = fd_params + [fd_x]
    return max(float(np.max(relative_error(a, n))) for a, n in zip(analytic, numeric))


def random_gradcheck(num_nets=100, seed=0, max_width=8, max_depth=3, batch=3) -> float:
    """Max relative error over ``num_nets`` random nets (depth = number of weight layers)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_nets):
        depth = int(rng.integers(1, max_depth + 1))
        sizes = [int(s) for s in rng.integers(1, max_width + 1, size=depth + 1)]
        params = init_network(sizes, rng)
        for b in params.biases:
            b[...] = rng.uniform(-0.5, 0.5, size=b.shape)
        x = rng.normal(size=(batch, sizes[0]))
        w = rng.normal(size=(batch, sizes[-1]))
        worst = max(worst, check_network(params, x, w))
    return worst
