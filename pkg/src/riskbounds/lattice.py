"""Recombining binary lattice for a d-dimensional Brownian motion, and claims.

Each step moves every Brownian component by ``+-sqrt(dt)`` with probability
1/2, independently, so a node has ``2**d`` equally likely children. At step
``m`` the node with integer index ``j`` (each ``j_i`` in ``0..m``) sits at
``W_i = (2 j_i - m) sqrt(dt)``; the child along branch ``b`` in ``{0, 1}^d``
has index ``j + b``. Slice ``m`` is stored as an array of shape ``(m+1,)*d``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .market import MarketError, MarketModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BrownianLattice:
    steps: int
    horizon: float
    dim: int

    def __post_init__(self):
        if self.steps < 1 or self.dim < 1 or self.horizon <= 0:
            raise ValueError("lattice needs steps >= 1, dim >= 1, horizon > 0")

    @classmethod
    def for_model(cls, model: MarketModel) -> "BrownianLattice":
        return cls(model.steps, model.horizon, model.d)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.dt))

    def slice_shape(self, m: int) -> tuple[int, ...]:
        return (m + 1,) * self.dim

    def node_count(self, m: int) -> int:
        return (m + 1) ** self.dim

    def total_nodes(self) -> int:
        return sum(self.node_count(m) for m in range(self.steps + 1))

    def time(self, m: int) -> float:
        return m * self.dt

    @property
    def branch_bits(self) -> np.ndarray:
        """``(2**d, d)`` array of child offsets in ``{0, 1}``."""
        return np.array(list(itertools.product((0, 1), repeat=self.dim)), dtype=np.int64)

    @property
    def branch_signs(self) -> np.ndarray:
        """``(2**d, d)`` array of increment signs; the increment is ``signs * sqrt(dt)``."""
        return 2.0 * self.branch_bits - 1.0

    def coordinates(self, m: int) -> np.ndarray:
        """Integer coordinates ``k = 2 j - m`` for every node of slice ``m``, shape ``(m+1,)*d + (d,)``."""
        axes = np.meshgrid(*([np.arange(-m, m + 1, 2)] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def brownian_values(self, m: int) -> np.ndarray:
        return self.coordinates(m) * self.sqrt_dt

    def check_model(self, model: MarketModel):
        if (model.steps, model.d) != (self.steps, self.dim) or not np.isclose(model.horizon, self.horizon):
            raise ValueError("lattice does not match the model grid")


def terminal_assets(model: MarketModel, lattice: BrownianLattice, node=None) -> np.ndarray:
    """Asset prices at maturity.

    With ``node`` (integer coordinates ``k``) returns the length-``n`` vector for
    that node, otherwise an array of shape ``(N+1,)*d + (n,)`` for the whole
    terminal slice. The per-step log drift is ``mu dt - sum_j log cosh(sigma_ij sqrt(dt))``,
    which makes ``S`` an exact martingale under equal branch weights when
    ``mu = 0`` and tends to ``(mu - |sigma_i|^2 / 2) dt``.
    """
    lattice.check_model(model)
    if not model.constant_sigma:
        raise MarketError("terminal prices need time-constant sigma (recombination)")
    sig = model.sigma[0]
    h = lattice.sqrt_dt
    log_drift = model.mu.sum(axis=0) * lattice.dt - model.steps * np.log(np.cosh(sig * h)).sum(axis=1)
    if node is None:
        w = lattice.brownian_values(model.steps)
    else:
        k = np.asarray(node)
        N = model.steps
        if k.shape != (lattice.dim,) or np.any(np.abs(k) > N) or np.any((k + N) % 2):
            raise ValueError(f"{node} is not a terminal node")
        w = k * h
    return model.s0 * np.exp(log_drift + w @ sig.T)


@dataclass(frozen=True)
class Claim:
    """European claim on the terminal asset vector.

    ``kind`` is ``"call"``, ``"put"``, ``"digital"`` or ``"custom"``; the first
    three act on asset ``asset``. ``cap`` clips the payoff from above.
    A digital pays 1 when ``S >= strike`` (ties exercise).
    """

    kind: str
    strike: float | None = None
    cap: float | None = None
    func: Callable | None = None
    asset: int = 0

    def __post_init__(self):
        if self.kind not in ("call", "put", "digital", "custom"):
            raise ValueError(f"unknown claim kind {self.kind!r}")
        if self.kind == "custom":
            if self.func is None:
                raise ValueError("custom claim needs a callable")
        elif self.strike is None or not self.strike > 0:
            raise ValueError(f"{self.kind} needs a positive strike")

    @classmethod
    def call(cls, strike, cap=None):
        return cls("call", float(strike), cap)

    @classmethod
    def put(cls, strike, cap=None):
        return cls("put", float(strike), cap)

    @classmethod
    def digital(cls, strike):
        return cls("digital", float(strike))

    @classmethod
    def custom(cls, func, cap=None):
        return cls("custom", None, cap, func)

    @property
    def bounded(self) -> bool:
        return self.cap is not None or self.kind in ("put", "digital")


def payoff(claim: Claim, s_terminal) -> np.ndarray:
    """Payoff for asset vectors of shape ``(..., n)``."""
    s = np.asarray(s_terminal, dtype=float)
    if claim.kind == "custom":
        out = np.asarray(claim.func(s), dtype=float)
    else:
        x = s[..., claim.asset]
        if claim.kind == "call":
            out = np.maximum(x - claim.strike, 0.0)
        elif claim.kind == "put":
            out = np.maximum(claim.strike - x, 0.0)
        else:
            out = (x >= claim.strike).astype(float)
    if claim.cap is not None:
        out = np.minimum(out, claim.cap)
    if not np.all(np.isfinite(out)):
        raise ValueError("payoff is not finite on every node")
    return out


_warned_uncapped: set = set()


def terminal_values(model: MarketModel, lattice: BrownianLattice, claim: Claim) -> np.ndarray:
    if not claim.bounded and claim.kind not in _warned_uncapped:
        _warned_uncapped.add(claim.kind)
        log.warning("claim %s has no cap; payoff is bounded only by the lattice", claim.kind)
    values = payoff(claim, terminal_assets(model, lattice))
    return np.ascontiguousarray(np.broadcast_to(values, lattice.slice_shape(lattice.steps)))
