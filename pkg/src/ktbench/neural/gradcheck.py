"""Finite-difference verification of analytic gradients.

Relative error is measured per tensor as ||analytic - numeric||_2 divided by
(||analytic||_2 + ||numeric||_2); the check returns the worst tensor. Models
must be small (<= 5000 parameters) since every element costs two forward
passes.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ModelError

LossAndGrads = Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]]

MAX_CHECKED_PARAMS = 5000


def central_difference(f: Callable[[np.ndarray], float], w: np.ndarray, h: float) -> np.ndarray:
    """Numeric gradient of a scalar function of a flat vector."""
    grad = np.zeros_like(w, dtype=np.float64)
    for i in range(w.shape[0]):
        orig = w[i]
        w[i] = orig + h
        up = f(w)
        w[i] = orig - h
        down = f(w)
        w[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = float(np.linalg.norm(a) + np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def grad_check(
    loss_and_grads: LossAndGrads,
    params: dict[str, np.ndarray],
    h: float = 1e-4,
) -> float:
    """Max per-tensor relative error between analytic and numeric gradients."""
    n_params = sum(int(np.asarray(v).size) for v in params.values())
    if n_params > MAX_CHECKED_PARAMS:
        raise ModelError(f"{n_params} parameters is too many for finite differences")

    _, analytic = loss_and_grads(params)
    if set(analytic) != set(params):
        raise ModelError("gradient keys do not match parameter keys")

    worst = 0.0
    for name in sorted(params):
        tensor = params[name]
        numeric = np.zeros_like(tensor, dtype=np.float64)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + h
            up = loss_and_grads(params)[0]
            tensor[idx] = orig - h
            down = loss_and_grads(params)[0]
            tensor[idx] = orig
            numeric[idx] = (up - down) / (2.0 * h)
        if not np.all(np.isfinite(numeric)) or not np.all(np.isfinite(analytic[name])):
            raise ModelError(f"non-finite gradient for {name}")
        worst = max(worst, relative_error(analytic[name], numeric))
    return worst
