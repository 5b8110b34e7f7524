import numpy as np
import pytest


def finite_difference(f, params, eps=1e-5):
    """Central differences of the scalar ``f()`` w.r.t. every entry of ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + eps
            up = f()
            p[i] = orig - eps
            down = f()
            p[i] = orig
            g[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
