"""Pure-numpy backward step, used when the compiled kernel is unavailable."""

from __future__ import annotations

import itertools

import numpy as np

from .penalty import closed_form_values

MOMENTS_ONLY = -1


def conditional_moments(y_next: np.ndarray, sqrt_dt: float):
    """Equal-weight ``E[Y']`` and ``E[Y' dW] / dt`` for every node of the previous slice."""
    d = y_next.ndim
    size = y_next.shape[0] - 1
    ey = np.zeros((size,) * d)
    z = np.zeros((size,) * d + (d,))
    for bits in itertools.product((0, 1), repeat=d):
        child = y_next[tuple(slice(b, b + size) for b in bits)]
        ey += child
        for i, b in enumerate(bits):
            if b:
                z[..., i] += child
            else:
                z[..., i] -= child
    scale = 1.0 / 2 ** d
    return ey * scale, z * (scale / sqrt_dt)


def backward_step(y_next, dt, code, theta_bar, kernel, radius, bound, gamma):
    from .market import EmmSlice

    ey, z = conditional_moments(y_next, np.sqrt(dt))
    if code == MOMENTS_ONLY:
        return ey, z
    sl = EmmSlice(theta_bar, kernel, radius, bound)
    return ey + dt * closed_form_values(code, z, sl, gamma), z
