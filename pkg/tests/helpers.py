"""Shared test utilities."""

import numpy as np


def central_difference_check(params, grads, loss_fn, h=1e-6):
    """Worst relative error between analytic ``grads`` and central differences of ``loss_fn``.

    Errors are measured as ``|g - fd| / max(|g|, |fd|, 1e-6)`` per coordinate.
    """
    worst = 0.0
    for p, g in zip(params, grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = loss_fn()
            p[idx] = old - h
            down = loss_fn()
            p[idx] = old
            fd = (up - down) / (2 * h)
            scale = max(abs(g[idx]), abs(fd), 1e-6)
            worst = max(worst, abs(g[idx] - fd) / scale)
    return worst
