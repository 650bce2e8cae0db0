"""Independent numerical oracles used by the tests.

Everything here is deliberately written from scratch (no calls into the
package's derivative code paths) so the comparisons stay meaningful.
"""

import numpy as np


def fd_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_directional(grad_fn, x, v, h=1e-5):
    """Central finite differences of a vector field along direction v."""
    return (grad_fn(x + h * v) - grad_fn(x - h * v)) / (2 * h)


def rel_err(approx, exact):
    denom = max(np.linalg.norm(exact), 1e-12)
    return np.linalg.norm(np.asarray(approx) - np.asarray(exact)) / denom


def reference_loss(weights, biases, activation, input_shift, x, y, kind):
    """Straightforward reimplementation of the model loss for oracle checks."""
    a = np.asarray(x, dtype=np.float64) - input_shift
    for w, b in zip(weights[:-1], biases[:-1]):
        z = w @ a + b
        if activation == "tanh":
            a = np.tanh(z)
        else:
            a = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)  # stable softplus
    logits = weights[-1] @ a + biases[-1]
    if kind == "cross-entropy":
        m = logits.max()
        return float(m + np.log(np.sum(np.exp(logits - m))) - logits[y])
    return float(-logits[y])
