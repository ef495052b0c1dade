"""Penalty functions and the BSDE drivers built from them.

Every driver depends on ``z`` only. The seller driver is

    g(z) = max_{theta in M_t} (z theta^T - f(t, theta)) + min_{theta in M_t} f(t, theta)

and the buyer driver is its conjugate ``-g(-z)``. The additive constant
``min_M f`` is the risk of holding nothing, subtracted so that the zero claim
has zero price; it vanishes whenever ``f`` is zero somewhere on ``M_t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .market import EmmSlice

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class PenaltyError(ValueError):
    pass


@dataclass(frozen=True)
class Penalty:
    """Convex, nonnegative penalty density ``f(t, theta)``.

    ``kind`` is ``"zero"``, ``"quadratic"`` (``|theta|^2 / (2 gamma)``) or
    ``"custom"``. A custom ``func(t, theta)`` must broadcast over the leading
    axes of ``theta`` (last axis has length ``d``); pass ``vectorized=False``
    to :meth:`custom` for a scalar-only callable.
    """

    kind: str
    gamma: float | None = None
    func: Callable | None = None

    @classmethod
    def zero(cls) -> "Penalty":
        return cls("zero")

    @classmethod
    def quadratic(cls, gamma: float) -> "Penalty":
        gamma = float(gamma)
        if not (np.isfinite(gamma) and gamma > 0):
            raise PenaltyError(f"quadratic penalty needs gamma > 0, got {gamma}")
        return cls("quadratic", gamma=gamma)

    @classmethod
    def custom(cls, func: Callable, vectorized: bool = True) -> "Penalty":
        if not vectorized:
            scalar = func

            def func(t, theta):
                theta = np.asarray(theta, dtype=float)
                flat = theta.reshape(-1, theta.shape[-1])
                out = np.array([float(scalar(t, row)) for row in flat])
                return out.reshape(theta.shape[:-1])

        return cls("custom", func=func)

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic", "custom"):
            raise PenaltyError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "quadratic" and not (self.gamma and self.gamma > 0):
            raise PenaltyError("quadratic penalty needs gamma > 0")
        if self.kind == "custom" and self.func is None:
            raise PenaltyError("custom penalty needs a callable")

    def value(self, t: float, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "zero":
            return np.zeros(theta.shape[:-1])
        if self.kind == "quadratic":
            return np.sum(theta * theta, axis=-1) / (2.0 * self.gamma)
        out = np.asarray(self.func(t, theta), dtype=float)
        if out.shape != theta.shape[:-1]:
            out = np.broadcast_to(out, theta.shape[:-1])
        if not np.all(np.isfinite(out)):
            raise PenaltyError(f"custom penalty returned non-finite values at t={t}")
        return out

    def min_on_slice(self, sl: EmmSlice, t: float) -> float:
        """``min f(t, theta)`` over the martingale scenarios of the slice."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "quadratic":
            # theta_bar is orthogonal to the kernel, so s = 0 is the minimizer
            return float(sl.theta_bar @ sl.theta_bar) / (2.0 * self.gamma)
        if sl.kernel_dim == 0 or sl.radius == 0.0:
            return float(self.value(t, sl.theta_bar))
        _require_1d_kernel(sl)
        k = sl.kernel[:, 0]

        def neg_f(s):
            return -self.value(t, sl.theta_bar + s[..., None] * k)

        _, best = _golden_max(neg_f, np.array([-sl.radius]), np.array([sl.radius]),
                              1e-10 * (1.0 + sl.radius))
        return float(-best[0])

    def validate(self, dim: int, bound: float, horizon: float = 1.0,
                 samples: int = 256, seed: int = 0) -> list[str]:
        """Randomized checks of nonnegativity, convexity and ``f(t, 0) = 0``."""
        rng = np.random.default_rng(seed)
        problems = []
        ts = rng.uniform(0.0, horizon, samples)
        th = _ball_samples(rng, (2, samples), dim, bound)
        vals = [self.value(t, th[:, i]) for i, t in enumerate(ts)]
        f0 = np.array([v[0] for v in vals])
        f1 = np.array([v[1] for v in vals])
        fmid = np.array([self.value(t, 0.5 * (th[0, i] + th[1, i])) for i, t in enumerate(ts)])
        if np.any(f0 < 0) or np.any(f1 < 0):
            problems.append("penalty takes negative values")
        if np.any(fmid > 0.5 * (f0 + f1) + 1e-10):
            problems.append("penalty fails midpoint convexity")
        zero = np.array([self.value(t, np.zeros(dim)) for t in ts[:16]])
        if np.any(np.abs(zero) > 1e-12):
            problems.append("penalty not normalized: f(t, 0) != 0")
        return problems


def _ball_samples(rng, shape, dim, radius):
    x = rng.standard_normal(shape + (dim,))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    rad = radius * rng.uniform(0.0, 1.0, shape) ** (1.0 / dim)
    return x * rad[..., None]


def _require_1d_kernel(sl: EmmSlice):
    if sl.kernel_dim > 1:
        raise PenaltyError(
            f"custom penalties need a one-dimensional kernel, got d-n={sl.kernel_dim}")


def _golden_max(phi, lo, hi, tol, max_iter=300):
    """Vectorized golden-section maximization of concave ``phi`` on ``[lo, hi]``.

    Returns ``(argmax, max)``. The endpoints are also tried so boundary maxima
    are hit exactly.
    """
    a, b = lo.astype(float).copy(), hi.astype(float).copy()
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = phi(c), phi(e)
    for _ in range(max_iter):
        if np.max(b - a) <= tol:
            break
        left = fc >= fe
        # left: maximum in [a, e]
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        e_new = np.where(left, c, a + GOLDEN * (b - a))
        c_new = np.where(left, b - GOLDEN * (b - a), e)
        fe_new = np.where(left, fc, np.nan)
        fc_new = np.where(left, np.nan, fe)
        c, e = c_new, e_new
        need_c, need_e = left, ~left
        if need_c.any():
            fc_new = np.where(need_c, phi(c), fc_new)
        if need_e.any():
            fe_new = np.where(need_e, phi(e), fe_new)
        fc, fe = fc_new, fe_new
    else:
        worst = int(np.argmax(b - a))
        raise PenaltyError(
            f"golden-section search did not converge: bracket [{a[worst]:.3e}, {b[worst]:.3e}] "
            f"width {b[worst] - a[worst]:.3e} > tol {tol:.1e}")
    mid = 0.5 * (a + b)
    cand = np.stack([mid, lo, hi])
    vals = np.stack([phi(mid), phi(lo), phi(hi)])
    if not np.all(np.isfinite(vals)):
        raise PenaltyError("non-finite objective inside golden-section search")
    idx = np.argmax(vals, axis=0)
    pick = np.arange(vals.shape[1])
    return cand[idx, pick], vals[idx, pick]


# --------------------------------------------------------------------------- #
# Drivers
# --------------------------------------------------------------------------- #

BLACK_SCHOLES = "black_scholes"
UPPER_CW = "upper_cw"
LOWER_CW = "lower_cw"
SELLER = "seller"
BUYER = "buyer"


@dataclass(frozen=True)
class DriverKind:
    name: str
    penalty: Penalty | None = None

    def __post_init__(self):
        if self.name not in (BLACK_SCHOLES, UPPER_CW, LOWER_CW, SELLER, BUYER):
            raise ValueError(f"unknown driver {self.name!r}")
        if self.name in (SELLER, BUYER) and self.penalty is None:
            raise ValueError(f"{self.name} driver needs a penalty")

    @classmethod
    def black_scholes(cls):
        return cls(BLACK_SCHOLES)

    @classmethod
    def upper_cw(cls):
        return cls(UPPER_CW)

    @classmethod
    def lower_cw(cls):
        return cls(LOWER_CW)

    @classmethod
    def upper_m(cls):
        return cls(SELLER, Penalty.zero())

    @classmethod
    def lower_m(cls):
        return cls(BUYER, Penalty.zero())

    @classmethod
    def seller(cls, penalty: Penalty):
        return cls(SELLER, penalty)

    @classmethod
    def buyer(cls, penalty: Penalty):
        return cls(BUYER, penalty)

    @classmethod
    def parse(cls, name: str, penalty: Penalty | None = None) -> "DriverKind":
        aliases = {"upper_m": cls.upper_m, "lower_m": cls.lower_m,
                   "black_scholes": cls.black_scholes, "upper_cw": cls.upper_cw,
                   "lower_cw": cls.lower_cw}
        if name in aliases:
            return aliases[name]()
        return cls(name, penalty)

    @property
    def label(self) -> str:
        if self.name in (SELLER, BUYER) and self.penalty.kind == "zero":
            return "upper_m" if self.name == SELLER else "lower_m"
        if self.name in (SELLER, BUYER):
            extra = f"(gamma={self.penalty.gamma:g})" if self.penalty.kind == "quadratic" else ""
            return f"{self.name}[{self.penalty.kind}{extra}]"
        return self.name


# closed-form driver codes shared with the compiled kernel
CODE_BLACK_SCHOLES = 0
CODE_UPPER_CW = 1
CODE_LOWER_CW = 2
CODE_SELLER_ZERO = 3
CODE_BUYER_ZERO = 4
CODE_SELLER_QUAD = 5
CODE_BUYER_QUAD = 6


def closed_form_code(kind: DriverKind) -> int | None:
    """Kernel code for drivers with a closed form, ``None`` for custom penalties."""
    if kind.name == BLACK_SCHOLES:
        return CODE_BLACK_SCHOLES
    if kind.name == UPPER_CW:
        return CODE_UPPER_CW
    if kind.name == LOWER_CW:
        return CODE_LOWER_CW
    sell = kind.name == SELLER
    if kind.penalty.kind == "zero":
        return CODE_SELLER_ZERO if sell else CODE_BUYER_ZERO
    if kind.penalty.kind == "quadratic":
        return CODE_SELLER_QUAD if sell else CODE_BUYER_QUAD
    return None


def closed_form_values(code: int, z: np.ndarray, sl: EmmSlice, gamma: float = 1.0) -> np.ndarray:
    """Vectorized closed-form drivers; ``z`` has shape ``(..., d)``."""
    if code == CODE_UPPER_CW:
        return sl.bound * np.linalg.norm(z, axis=-1)
    if code == CODE_LOWER_CW:
        return -sl.bound * np.linalg.norm(z, axis=-1)
    lin = z @ sl.theta_bar
    if code == CODE_BLACK_SCHOLES:
        return lin
    qn = np.linalg.norm(z @ sl.kernel, axis=-1)
    r = sl.radius
    if code in (CODE_SELLER_ZERO, CODE_BUYER_ZERO):
        best = r * qn
    else:
        s = np.minimum(gamma * qn, r)
        best = qn * s - s * s / (2.0 * gamma)
    return lin + best if code in (CODE_SELLER_ZERO, CODE_SELLER_QUAD) else lin - best


def _custom_seller(penalty: Penalty, sl: EmmSlice, t: float, z: np.ndarray) -> np.ndarray:
    lin = z @ sl.theta_bar
    if sl.kernel_dim == 0 or sl.radius == 0.0:
        return lin
    _require_1d_kernel(sl)
    k = sl.kernel[:, 0]
    q = (z @ k).reshape(-1)
    theta_bar = sl.theta_bar

    def phi(s):
        return q * s - penalty.value(t, theta_bar + s[:, None] * k)

    lo = np.full(q.shape, -sl.radius)
    hi = np.full(q.shape, sl.radius)
    _, best = _golden_max(phi, lo, hi, 1e-10 * (1.0 + sl.radius))
    return lin + best.reshape(lin.shape) + penalty.min_on_slice(sl, t)


def driver_values(kind: DriverKind, sl: EmmSlice, t: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("driver called with non-finite z")
    code = closed_form_code(kind)
    if code is not None:
        gamma = kind.penalty.gamma if code in (CODE_SELLER_QUAD, CODE_BUYER_QUAD) else 1.0
        return closed_form_values(code, z, sl, gamma)
    if kind.name == SELLER:
        return _custom_seller(kind.penalty, sl, t, z)
    return -_custom_seller(kind.penalty, sl, t, -z)


def eval_driver(kind: DriverKind, sl: EmmSlice, t: float, z) -> float:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape != (sl.dim,):
        raise ValueError(f"z must have length {sl.dim}")
    return float(driver_values(kind, sl, t, z[None, :])[0])
