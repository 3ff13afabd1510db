"""Central finite-difference gradient validation."""

from __future__ import annotations

import numpy as np

from .tensor import Param


def relative_error(a, n) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def grad_check(forward, params: list[Param], h: float = 1e-5, max_coords: int = 200, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    ``forward()`` must return a scalar Tensor. At most ``max_coords`` coordinates
    per Param are probed, chosen by a seeded permutation.
    """
    for p in params:
        p.zero_grad()
    out = forward()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_coords:
            idx = np.sort(rng.permutation(flat.size)[:max_coords])
        num = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(forward().data)
            flat[i] = orig - h
            fm = float(forward().data)
            flat[i] = orig
            num[j] = (fp - fm) / (2.0 * h)
        if len(idx):
            worst = max(worst, float(relative_error(ga.reshape(-1)[idx], num).max()))
    for p in params:
        p.zero_grad()
    return worst
