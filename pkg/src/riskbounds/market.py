"""Market model and the per-step geometry of the scenario sets.

The risky assets follow ``dS/S = mu dt + sigma dW`` with deterministic,
piecewise-constant coefficients on a uniform time grid. The bond has unit
price, so nothing is discounted.

A scenario is a row vector ``theta`` of length ``d``. The martingale scenarios
at a step are ``{theta : sigma theta^T + mu = 0, |theta| <= u}``, which we
parameterize as ``theta^T = theta_bar^T + K s`` with ``|s| <= r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

RANK_TOL = 1e-10


class MarketError(ValueError):
    """Raised for unusable market models or out-of-range scenario coordinates."""


@dataclass(frozen=True)
class ValidationReport:
    problems: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else "; ".join(self.problems)


@dataclass(frozen=True)
class EmmSlice:
    """Martingale-scenario geometry for one time step.

    ``theta_bar`` is the minimum-norm solution of ``sigma theta^T = -mu``,
    ``kernel`` a ``d x (d-n)`` orthonormal basis of ``ker(sigma)`` and
    ``radius`` the largest kernel offset that keeps ``|theta| <= bound``.
    """

    theta_bar: np.ndarray
    kernel: np.ndarray
    radius: float
    bound: float

    @property
    def dim(self) -> int:
        return self.theta_bar.shape[0]

    @property
    def kernel_dim(self) -> int:
        return self.kernel.shape[1]


def _as_float_array(value, shape, name):
    arr = np.asarray(value, dtype=float)
    try:
        arr = np.broadcast_to(arr, shape).copy()
    except ValueError:
        raise MarketError(f"{name} has shape {np.shape(value)}, expected {shape}") from None
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MarketModel:
    """Coefficients of the market on a grid of ``steps`` intervals over ``[0, horizon]``.

    ``mu``, ``sigma`` and ``u`` may be given as constants (``(n,)``, ``(n, d)``,
    scalar) or per step (``(steps, n)``, ``(steps, n, d)``, ``(steps,)``).
    They are stored per step. Construction validates the model unless
    ``check=False``; use :func:`validate_model` to inspect an unchecked one.
    """

    mu: np.ndarray
    sigma: np.ndarray
    u: np.ndarray
    s0: np.ndarray
    horizon: float
    steps: int
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise MarketError(f"steps must be a positive integer, got {self.steps}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise MarketError(f"horizon must be positive, got {self.horizon}")
        sig = np.asarray(self.sigma, dtype=float)
        if sig.ndim not in (2, 3):
            raise MarketError("sigma must be n x d or steps x n x d")
        n, d = sig.shape[-2:]
        N = int(self.steps)
        object.__setattr__(self, "steps", N)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "sigma", _as_float_array(sig, (N, n, d), "sigma"))
        object.__setattr__(self, "mu", _as_float_array(self.mu, (N, n), "mu"))
        object.__setattr__(self, "u", _as_float_array(self.u, (N,), "u"))
        object.__setattr__(self, "s0", _as_float_array(self.s0, (n,), "s0"))
        if self.check:
            report = validate_model(self)
            if not report.ok:
                raise MarketError(str(report))

    @property
    def n(self) -> int:
        return self.sigma.shape[1]

    @property
    def d(self) -> int:
        return self.sigma.shape[2]

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def complete(self) -> bool:
        return self.n == self.d

    @property
    def constant_sigma(self) -> bool:
        return bool(np.all(self.sigma == self.sigma[0]))

    def with_changes(self, **changes) -> "MarketModel":
        """Copy with some fields replaced; per-step arrays are re-broadcast."""
        fields = dict(mu=self.mu, sigma=self.sigma, u=self.u, s0=self.s0,
                      horizon=self.horizon, steps=self.steps)
        if "steps" in changes and changes["steps"] != self.steps:
            # keep only step-constant coefficients when regridding
            for name in ("mu", "sigma", "u"):
                arr = fields[name]
                if name not in changes:
                    if not np.all(arr == arr[0]):
                        raise MarketError(f"cannot regrid time-varying {name}")
                    fields[name] = arr[0]
        fields.update(changes)
        return MarketModel(**fields)

    @cached_property
    def _slices(self) -> tuple[EmmSlice, ...]:
        return tuple(_build_slice(self.sigma[m], self.mu[m], float(self.u[m]))
                     for m in range(self.steps))

    def slice(self, step: int) -> EmmSlice:
        return self._slices[step]


def _min_norm_theta(sigma: np.ndarray, mu: np.ndarray) -> np.ndarray:
    # theta_bar^T = -sigma^T (sigma sigma^T)^{-1} mu
    return -sigma.T @ np.linalg.solve(sigma @ sigma.T, mu)


def _kernel_basis(sigma: np.ndarray) -> np.ndarray:
    n, d = sigma.shape
    q, _ = np.linalg.qr(sigma.T, mode="complete")
    return q[:, n:].copy()


def _build_slice(sigma, mu, u) -> EmmSlice:
    sv = np.linalg.svd(sigma, compute_uv=False)
    if sv.min() <= RANK_TOL:
        raise MarketError("sigma not full rank")
    theta_bar = _min_norm_theta(sigma, mu)
    norm = float(np.linalg.norm(theta_bar))
    if u < norm:
        raise MarketError(f"empty EMM set: u below |theta_bar|={norm:.6g} (u={u:g})")
    kernel = _kernel_basis(sigma)
    for arr in (theta_bar, kernel):
        arr.setflags(write=False)
    return EmmSlice(theta_bar=theta_bar, kernel=kernel,
                    radius=float(np.sqrt(max(u * u - norm * norm, 0.0))), bound=u)


def validate_model(model: MarketModel) -> ValidationReport:
    problems: list[str] = []
    n, d = model.n, model.d
    if not 1 <= n <= d:
        problems.append(f"need 1 <= n <= d, got n={n}, d={d}")
    for name in ("mu", "sigma", "u", "s0"):
        if not np.all(np.isfinite(getattr(model, name))):
            problems.append(f"{name} has non-finite entries")
    if np.any(model.s0 <= 0):
        problems.append("s0 must be strictly positive")
    if np.any(model.u <= 0):
        problems.append("u must be positive")
    if problems:
        return ValidationReport(tuple(problems))
    steps_of: dict[str, list[int]] = {}
    for m in range(model.steps):
        sigma = model.sigma[m]
        if np.linalg.svd(sigma, compute_uv=False).min() <= RANK_TOL:
            steps_of.setdefault("sigma not full rank", []).append(m)
            continue
        norm = float(np.linalg.norm(_min_norm_theta(sigma, model.mu[m])))
        if model.u[m] < norm:
            msg = f"empty EMM set: u below |theta_bar|={norm:.6g} (u={model.u[m]:.6g})"
            steps_of.setdefault(msg, []).append(m)
    for msg, steps in steps_of.items():
        if model.steps == 1:
            problems.append(msg)
        elif len(steps) == 1:
            problems.append(f"{msg} at step {steps[0]}")
        else:
            problems.append(f"{msg} at {len(steps)} steps ({steps[0]}..{steps[-1]})")
    return ValidationReport(tuple(problems))


def emm_slice(model: MarketModel, step: int) -> EmmSlice:
    if not 0 <= step < model.steps:
        raise IndexError(f"step {step} outside 0..{model.steps - 1}")
    if not model.check:
        # unchecked models build (and possibly reject) slices lazily
        return _build_slice(model.sigma[step], model.mu[step], float(model.u[step]))
    return model.slice(step)


def theta_from_kernel_coord(sl: EmmSlice, s) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.shape != (sl.kernel_dim,):
        raise MarketError(f"kernel coordinate must have length {sl.kernel_dim}")
    if np.linalg.norm(s) > sl.radius * (1 + 1e-12) + 1e-15:
        raise MarketError(f"outside scenario ball: |s|={np.linalg.norm(s):.6g} > r={sl.radius:.6g}")
    return sl.theta_bar + sl.kernel @ s
