"""Backward solver for z-only BSDEs on the Brownian lattice.

Explicit scheme, for every node of slice ``m``::

    Z_m = E[Y_{m+1} dW] / dt
    Y_m = E[Y_{m+1}] + g(t_m, Z_m) dt

with equal-weight expectations over the ``2**d`` children. For a driver with
Lipschitz constant ``u`` the step is a positive combination of the children as
long as ``u sqrt(d dt) < 1``, which makes the scheme monotone and the discrete
comparison theorem exact.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import BrownianLattice, Claim, terminal_values
from .market import MarketModel
from .penalty import (CODE_BUYER_QUAD, CODE_SELLER_QUAD, DriverKind, Penalty,
                      closed_form_code, driver_values)


class SchemeError(ValueError):
    pass


def max_workers() -> int:
    cap = os.environ.get("RISKBOUNDS_MAX_WORKERS")
    if cap:
        return max(1, int(cap))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class BsdeSolution:
    """Values ``Y[m]`` (shape ``(m+1,)*d``) for ``m = 0..N`` and ``Z[m]`` for ``m = 0..N-1``."""

    Y: tuple[np.ndarray, ...]
    Z: tuple[np.ndarray, ...]
    kind: DriverKind
    model: MarketModel = field(repr=False)
    lattice: BrownianLattice = field(repr=False)

    @property
    def steps(self) -> int:
        return self.lattice.steps

    @property
    def dt(self) -> float:
        return self.lattice.dt

    @property
    def y0(self) -> float:
        return float(self.Y[0].reshape(-1)[0])


def check_monotone(model: MarketModel, lattice: BrownianLattice):
    level = float(model.u.max()) * np.sqrt(lattice.dim * lattice.dt)
    if level >= 1.0:
        raise SchemeError(
            f"refine dt: u_max*sqrt(d*dt) = {level:.4f} >= 1 breaks monotonicity of the scheme")


def _step(kind: DriverKind, code, y_next, m, model, lattice, backend):
    sl = model.slice(m)
    dt = lattice.dt
    if code is not None:
        gamma = kind.penalty.gamma if code in (CODE_SELLER_QUAD, CODE_BUYER_QUAD) else 1.0
        return kernels.backward_step(y_next, dt, code, sl, gamma, backend=backend)
    ey, z = kernels.backward_step(y_next, dt, kernels.MOMENTS_ONLY, sl, backend=backend)
    return ey + dt * driver_values(kind, sl, lattice.time(m), z), z


def _backward(model, lattice, terminal, kind, start, backend=None):
    code = closed_form_code(kind)
    Y = [None] * (start + 1)
    Z = [None] * start
    Y[start] = terminal
    for m in range(start - 1, -1, -1):
        Y[m], Z[m] = _step(kind, code, Y[m + 1], m, model, lattice, backend)
    return Y, Z


def solve_terminal(model: MarketModel, lattice: BrownianLattice, terminal: np.ndarray,
                   kind: DriverKind, backend: str | None = None) -> BsdeSolution:
    """Solve with explicit terminal values of shape ``(N+1,)*d``."""
    lattice.check_model(model)
    check_monotone(model, lattice)
    terminal = np.array(terminal, dtype=float)
    if terminal.shape != lattice.slice_shape(lattice.steps):
        raise ValueError(f"terminal values have shape {terminal.shape}, "
                         f"expected {lattice.slice_shape(lattice.steps)}")
    if not np.all(np.isfinite(terminal)):
        raise ValueError("terminal values must be finite")
    Y, Z = _backward(model, lattice, terminal, kind, lattice.steps, backend)
    for arr in (*Y, *Z):
        arr.setflags(write=False)
    return BsdeSolution(tuple(Y), tuple(Z), kind, model, lattice)


def solve(model: MarketModel, lattice: BrownianLattice, claim: Claim, kind: DriverKind,
          backend: str | None = None) -> BsdeSolution:
    return solve_terminal(model, lattice, terminal_values(model, lattice, claim), kind, backend)


def restart_consistency(solution: BsdeSolution, split_step: int) -> float:
    """Re-solve ``[0, t_s]`` from the stored slice ``s``; max nodewise deviation."""
    N = solution.steps
    if not 0 < split_step < N:
        raise ValueError(f"split step must lie in 1..{N - 1}")
    Y, _ = _backward(solution.model, solution.lattice, solution.Y[split_step],
                     solution.kind, split_step)
    return max(float(np.max(np.abs(a - b))) for a, b in zip(Y, solution.Y))


# --------------------------------------------------------------------------- #
# Four prices
# --------------------------------------------------------------------------- #

LEGS = ("low", "buyer", "seller", "up")


def chain_tolerance(y) -> np.ndarray:
    return 1e-9 * (1.0 + np.abs(y))


@dataclass(frozen=True)
class PriceQuadruple:
    low: BsdeSolution
    buyer: BsdeSolution
    seller: BsdeSolution
    up: BsdeSolution

    def legs(self):
        return {name: getattr(self, name) for name in LEGS}

    def prices_at_zero(self) -> dict[str, float]:
        return {name: sol.y0 for name, sol in self.legs().items()}

    def chain_violations(self) -> int:
        """Nodes where ``low <= buyer <= seller <= up`` fails beyond the chain tolerance."""
        count = 0
        for m in range(self.low.steps + 1):
            lo, b, s, u = (getattr(self, k).Y[m] for k in LEGS)
            bad = ((lo > b + chain_tolerance(b)) | (b > s + chain_tolerance(s))
                   | (s > u + chain_tolerance(u)))
            count += int(np.count_nonzero(bad))
        return count


def quadruple_kinds(penalty: Penalty, hedging: str = "M") -> dict[str, DriverKind]:
    if hedging == "M":
        low, up = DriverKind.lower_m(), DriverKind.upper_m()
    elif hedging == "CW":
        low, up = DriverKind.lower_cw(), DriverKind.upper_cw()
    else:
        raise ValueError(f"hedging variant must be 'M' or 'CW', got {hedging!r}")
    return {"low": low, "buyer": DriverKind.buyer(penalty),
            "seller": DriverKind.seller(penalty), "up": up}


def price_quadruple(model: MarketModel, lattice: BrownianLattice, claim: Claim,
                    penalty: Penalty, hedging: str = "M", terminal: np.ndarray | None = None,
                    backend: str | None = None) -> PriceQuadruple:
    """Lower hedging, buyer, seller and upper hedging prices on one lattice.

    ``hedging="M"`` uses the martingale-constrained hedging drivers,
    ``"CW"`` the ball drivers ``+-u|z|``.
    """
    if terminal is None:
        terminal = terminal_values(model, lattice, claim)
    kinds = quadruple_kinds(penalty, hedging)
    workers = min(len(kinds), max_workers())
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            futures = {k: pool.submit(solve_terminal, model, lattice, terminal, kind, backend)
                       for k, kind in kinds.items()}
            sols = {k: f.result() for k, f in futures.items()}
    else:
        sols = {k: solve_terminal(model, lattice, terminal, kind, backend)
                for k, kind in kinds.items()}
    return PriceQuadruple(**sols)
