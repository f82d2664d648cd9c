"""Shared numeric test utilities (finite differences, small builders)."""

import numpy as np
import torch

from facetzsl.encoder import ComponentEmbeddingTable


def finite_difference_grads(loss_fn, params, step=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. each parameter.

    ``loss_fn`` must be a pure function of the current parameter values.
    Returns one numpy array per parameter, shaped like it.
    """
    grads = []
    for p in params:
        flat = p.detach().numpy().reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            with torch.no_grad():
                hi = float(loss_fn())
            flat[i] = orig - step
            with torch.no_grad():
                lo = float(loss_fn())
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * step)
        grads.append(g.reshape(p.shape))
    return grads


def max_relative_error(analytic, numeric):
    """max_i |a_i - n_i| / max(1, |a_i|, |n_i|) over all parameter blocks."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        n = np.asarray(n, dtype=np.float64).reshape(-1)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def analytic_grads(loss_fn, params):
    """Autograd gradients as numpy arrays (zeros for unused parameters)."""
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return [
        np.zeros(p.shape) if g is None else g.detach().numpy().copy()
        for p, g in zip(params, grads)
    ]


def make_table(components, concept_ids=None, aspect_ids=None):
    components = np.asarray(components, dtype=np.float64)
    n, k, _ = components.shape
    return ComponentEmbeddingTable(
        concept_ids=concept_ids or [f"c{i}" for i in range(n)],
        aspect_ids=aspect_ids or [f"p{j}" for j in range(k)],
        components=components,
    )
