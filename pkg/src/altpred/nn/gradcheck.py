"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad

# gradients smaller than this are compared on an absolute scale
DENOM_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DENOM_FLOOR) -> np.ndarray:
    """Entrywise relative error."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def norm_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DENOM_FLOOR) -> float:
    """``|a - n| / (|a| + |n|)`` in the Euclidean norm over the whole tensor.

    Unlike the entrywise form this is not dominated by entries whose true
    gradient is near the rounding noise of the loss itself.
    """
    a, n = np.ravel(analytic), np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between backprop and central differences.

    ``loss_fn`` must rebuild the scalar output from the current contents of
    ``tensors`` (and be deterministic, e.g. reseed any dropout). With
    ``max_entries`` only that many randomly chosen entries per tensor are
    probed. The result is the worst per-tensor :func:`norm_relative_error`.
    """
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    out = loss_fn()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        with no_grad():
            for n, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + eps
                plus = float(loss_fn().data)
                flat[i] = orig - eps
                minus = float(loss_fn().data)
                flat[i] = orig
                numeric[n] = (plus - minus) / (2 * eps)
        worst = max(worst, norm_relative_error(grad.reshape(-1)[idx], numeric))
    return worst
