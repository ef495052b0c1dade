"""Backend selection for the backward-step kernel.

The compiled extension is used when it imports; setting
``RISKBOUNDS_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels
from ._pykernels import MOMENTS_ONLY

try:
    if os.environ.get("RISKBOUNDS_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
AVAILABLE = ("cython", "python") if _ckernels is not None else ("python",)

__all__ = ["BACKEND", "AVAILABLE", "MOMENTS_ONLY", "backward_step"]


def backward_step(y_next: np.ndarray, dt: float, code: int, sl, gamma: float = 1.0,
                  backend: str | None = None):
    """One step of the explicit scheme from slice ``m+1`` to slice ``m``.

    Returns ``(y, z)`` with shapes ``(m+1,)*d`` and ``(m+1,)*d + (d,)``. With
    ``code == MOMENTS_ONLY`` the driver is skipped and ``y = E[y_next]``.
    """
    backend = backend or BACKEND
    if backend == "python":
        return _pykernels.backward_step(y_next, dt, code, sl.theta_bar, sl.kernel,
                                        sl.radius, sl.bound, gamma)
    if _ckernels is None:
        raise RuntimeError("compiled kernel not built")
    d = y_next.ndim
    m = y_next.shape[0] - 2
    y, z = _ckernels.backward_step_flat(
        np.ascontiguousarray(y_next, dtype=float).reshape(-1), m, d, dt, code,
        np.ascontiguousarray(sl.theta_bar, dtype=float),
        np.ascontiguousarray(sl.kernel, dtype=float).reshape(-1),
        sl.radius, sl.bound, gamma)
    shape = (m + 1,) * d
    return y.reshape(shape), z.reshape(shape + (d,))
