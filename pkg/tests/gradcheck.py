"""Central finite-difference oracle shared by the unit and acceptance suites."""
import numpy as np

from hdcos.nn.model import forward_plain, is_trainable, loss_and_grads, loss_softmax_ce


def numeric_grads(spec, params, X, y, h=1e-6):
    out = {}
    for name, val in params.items():
        if not is_trainable(name):
            continue
        g = np.zeros_like(val)
        for idx in np.ndindex(val.shape):
            orig = val[idx]
            val[idx] = orig + h
            up = loss_softmax_ce(forward_plain(spec, params, X), y)
            val[idx] = orig - h
            down = loss_softmax_ce(forward_plain(spec, params, X), y)
            val[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def max_relative_error(spec, params, X, y):
    """max over tensors of ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)."""
    _, analytic = loss_and_grads(spec, params, X, y)
    numeric = numeric_grads(spec, params, X, y)
    assert set(numeric) <= set(analytic), f"missing gradients for {set(numeric) - set(analytic)}"
    worst = 0.0
    for name, g in numeric.items():
        a = analytic[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(g), 1e-8)
        worst = max(worst, float(np.linalg.norm(a - g) / denom))
    return worst
