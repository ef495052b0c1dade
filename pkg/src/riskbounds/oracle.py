"""Independent checks for the lattice BSDE prices.

* ``black_scholes_call``: zero-rate closed form.
* ``tilted_dp``: dynamic programming over a grid of martingale scenarios with
  branch probabilities ``prod_i (1 + sign_i theta_i sqrt(dt)) / 2``. It shares
  no code with the BSDE scheme and differs from it by ``O(dt)``.
* ``constant_scenario_bound``: the same, restricted to time-constant kernel
  coordinates.
* ``game_value_bruteforce``: the min-max hedging game over a portfolio grid
  and a grid of *all* bounded scenarios (not only martingale ones), solved by
  enumeration at every node.

Risk-indifference prices are recovered as the difference between the value
with the claim and the value of the zero claim, so the oracles normalize
independently of the BSDE drivers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .lattice import BrownianLattice, Claim, terminal_values
from .market import EmmSlice, MarketModel
from .penalty import Penalty

DP_BUDGET = 5 * 10 ** 7


class OracleError(ValueError):
    pass


def black_scholes_call(s0: float, strike: float, vol: float, T: float) -> float:
    if min(s0, strike, vol, T) <= 0:
        raise ValueError("black_scholes_call needs positive inputs")
    sd = vol * math.sqrt(T)
    d1 = (math.log(s0 / strike) + 0.5 * sd * sd) / sd
    return float(s0 * ndtr(d1) - strike * ndtr(d1 - sd))


def _children(v_next: np.ndarray) -> np.ndarray:
    """Stack the ``2**d`` children of every node of the previous slice along a last axis."""
    d = v_next.ndim
    size = v_next.shape[0] - 1
    return np.stack([v_next[tuple(slice(b, b + size) for b in bits)]
                     for bits in itertools.product((0, 1), repeat=d)], axis=-1)


def _signs(d: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d)))


def kernel_grid(sl: EmmSlice, points: int, radius: float | None = None) -> np.ndarray:
    """Kernel coordinates on a tensor grid of ``points`` per axis, clipped to the ball."""
    q = sl.kernel_dim
    r = sl.radius if radius is None else radius
    if q == 0:
        return np.zeros((1, 0))
    axis = np.linspace(-r, r, points)
    grid = np.stack(np.meshgrid(*([axis] * q), indexing="ij"), axis=-1).reshape(-1, q)
    if q > 1:
        grid = grid[np.linalg.norm(grid, axis=1) <= r * (1 + 1e-12)]
    return grid


def product_tilt(thetas: np.ndarray, sqrt_dt: float) -> np.ndarray:
    """Branch probabilities ``prod_i (1 + sign_i theta_i sqrt(dt)) / 2``, shape ``(G, 2**d)``."""
    if np.any(np.abs(thetas) * sqrt_dt >= 1.0):
        raise OracleError("refine dt: tilted branch probabilities leave (0, 1)")
    signs = _signs(thetas.shape[1])
    return np.prod(0.5 * (1.0 + signs[None, :, :] * thetas[:, None, :] * sqrt_dt), axis=2)


def _check_budget(lattice: BrownianLattice, grid_size: int):
    work = lattice.total_nodes() * grid_size * 2 ** lattice.dim
    if work > DP_BUDGET:
        raise OracleError(f"oracle too large: {work:.2e} evaluations > {DP_BUDGET:.0e}")


def _terminal(model, lattice, claim, terminal):
    lattice.check_model(model)
    if terminal is None:
        terminal = terminal_values(model, lattice, claim)
    return np.asarray(terminal, dtype=float)


def _mode_sign(mode: str) -> int:
    if mode not in ("seller", "buyer"):
        raise ValueError(f"mode must be 'seller' or 'buyer', got {mode!r}")
    return 1 if mode == "seller" else -1


def _raw_dp(model, lattice, terminal, penalty, sign, grid_points):
    """``sup`` (sign=+1) of ``E[xi - int f]`` or ``inf`` (sign=-1) of ``E[xi + int f]`` over adapted grid scenarios."""
    v = terminal
    h = lattice.sqrt_dt
    for m in range(lattice.steps - 1, -1, -1):
        sl = model.slice(m)
        s = kernel_grid(sl, grid_points)
        thetas = sl.theta_bar + s @ sl.kernel.T
        probs = product_tilt(thetas, h)
        pen = penalty.value(lattice.time(m), thetas) * lattice.dt
        cand = _children(v) @ probs.T - sign * pen
        v = cand.max(axis=-1) if sign > 0 else cand.min(axis=-1)
    return float(v.reshape(-1)[0])


def tilted_dp(model: MarketModel, lattice: BrownianLattice, claim: Claim | None,
              penalty: Penalty, mode: str = "seller", grid_points: int = 101,
              terminal: np.ndarray | None = None) -> float:
    """Seller or buyer price at time 0 by scenario-grid dynamic programming."""
    sign = _mode_sign(mode)
    terminal = _terminal(model, lattice, claim, terminal)
    _check_budget(lattice, grid_points ** max(model.d - model.n, 0))
    with_claim = _raw_dp(model, lattice, terminal, penalty, sign, grid_points)
    without = _raw_dp(model, lattice, np.zeros_like(terminal), penalty, sign, grid_points)
    return with_claim - without


def constant_scenario_bound(model: MarketModel, lattice: BrownianLattice, claim: Claim | None,
                            penalty: Penalty, mode: str = "seller", grid_points: int = 101,
                            terminal: np.ndarray | None = None) -> float:
    """Best time-constant kernel coordinate, normalized like :func:`tilted_dp`."""
    sign = _mode_sign(mode)
    terminal = _terminal(model, lattice, claim, terminal)
    _check_budget(lattice, grid_points ** max(model.d - model.n, 0))
    radius = min(model.slice(m).radius for m in range(lattice.steps))
    s = kernel_grid(model.slice(0), grid_points, radius)
    h = lattice.sqrt_dt
    v = np.broadcast_to(terminal[..., None], terminal.shape + (len(s),))
    for m in range(lattice.steps - 1, -1, -1):
        sl = model.slice(m)
        thetas = sl.theta_bar + s @ sl.kernel.T
        probs = product_tilt(thetas, h)
        pen = penalty.value(lattice.time(m), thetas) * lattice.dt
        # v has a trailing scenario axis; children go before it
        d = lattice.dim
        size = v.shape[0] - 1
        kids = np.stack([v[tuple(slice(b, b + size) for b in bits)]
                         for bits in itertools.product((0, 1), repeat=d)], axis=-1)
        v = np.einsum("...gb,gb->...g", kids, probs) - sign * pen
    best = v.reshape(-1, len(s))[0]
    raw = float(best.max() if sign > 0 else best.min())
    return raw - _raw_dp(model, lattice, np.zeros_like(terminal), penalty, sign, grid_points)


# --------------------------------------------------------------------------- #
# Brute-force hedging game
# --------------------------------------------------------------------------- #

GAME_MAX_STEPS = 3


@dataclass(frozen=True)
class GameGrid:
    """Portfolio and scenario grids for :func:`game_value_bruteforce`.

    Portfolios (amounts invested, one per asset) lie on a tensor grid of
    ``pi_points`` per axis over ``[-pi_bound, pi_bound]``. Scenarios are
    ``theta = R alpha + K s``: ``s`` runs over ``scenario_points`` kernel
    coordinates in ``[-r, r]`` and the row-space coordinate ``alpha`` over
    ``scenario_points`` values centred on the martingale value, so the grid
    contains martingale scenarios and their bounded perturbations.
    """

    pi_points: int = 21
    pi_bound: float = 2.0
    scenario_points: int = 41
    budget: int = 10 ** 7

    def __post_init__(self):
        if self.pi_points < 1 or self.scenario_points < 1 or self.pi_bound < 0:
            raise ValueError("grids must be non-empty")

    def refined(self) -> "GameGrid":
        """Halve both grid spacings (the old grid points are kept)."""
        return GameGrid(2 * self.pi_points - 1, self.pi_bound, 2 * self.scenario_points - 1,
                        self.budget)

    def portfolios(self, n: int) -> np.ndarray:
        axis = np.linspace(-self.pi_bound, self.pi_bound, self.pi_points)
        return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)

    def scenarios(self, sl: EmmSlice, sigma: np.ndarray) -> np.ndarray:
        n, d = sigma.shape
        q, _ = np.linalg.qr(sigma.T, mode="complete")
        rows = q[:, :n]
        alpha_bar = rows.T @ sl.theta_bar
        u = sl.bound
        axes = [a + np.linspace(-(u + abs(a)), u + abs(a), self.scenario_points) for a in alpha_bar]
        axes += [np.linspace(-sl.radius, sl.radius, self.scenario_points)] * sl.kernel_dim
        coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        thetas = coords[:, :n] @ rows.T + coords[:, n:] @ sl.kernel.T
        return thetas[np.linalg.norm(thetas, axis=1) <= u * (1 + 1e-12)]


def _game_raw(model, grid, lattice, terminal, penalty):
    h, dt = lattice.sqrt_dt, lattice.dt
    signs = _signs(lattice.dim)
    pis = grid.portfolios(model.n)
    v = terminal
    for m in range(lattice.steps - 1, -1, -1):
        sl = model.slice(m)
        thetas = grid.scenarios(sl, model.sigma[m])
        # E_theta[dW] = theta dt exactly under these weights
        weights = (1.0 + h * thetas @ signs.T) / 2 ** lattice.dim
        if np.any(weights < 0):
            raise OracleError("refine dt: negative tilted weights in the game")
        drift = (model.mu[m] + thetas @ model.sigma[m].T) * dt          # (T, n)
        wealth = pis @ drift.T                                          # (P, T)
        pen = penalty.value(lattice.time(m), thetas) * dt               # (T,)
        ev = _children(v) @ weights.T                                   # (..., T)
        # seller minimizes over portfolios the scenario player's best reply
        total = ev[..., None, :] - wealth - pen
        v = total.max(axis=-1).min(axis=-1)
    return float(v.reshape(-1)[0])


def _game_work(model, grid, lattice) -> int:
    pis = grid.pi_points ** model.n
    work = 0
    for m in range(lattice.steps):
        work += lattice.node_count(m) * pis * len(grid.scenarios(model.slice(m), model.sigma[m]))
    return work


def game_value_bruteforce(model: MarketModel, grid: GameGrid, lattice: BrownianLattice,
                          claim: Claim | None, penalty: Penalty, p0: float = 0.0,
                          terminal: np.ndarray | None = None) -> float:
    """``min over portfolios, max over scenarios of E_theta[xi - X_T - int f]`` with ``X_0 = p0``.

    Both players act in feedback form on the lattice nodes; ``X`` enters
    linearly so the value is computed for ``X_0 = 0`` and shifted by ``p0``.
    """
    if lattice.steps > GAME_MAX_STEPS:
        raise OracleError(f"game enumeration limited to N <= {GAME_MAX_STEPS}")
    terminal = _terminal(model, lattice, claim, terminal)
    work = _game_work(model, grid, lattice)
    if work > grid.budget:
        raise OracleError(f"game budget exceeded: {work:.2e} evaluations > {grid.budget:.0e}")
    return _game_raw(model, grid, lattice, terminal, penalty) - p0


def game_seller_price(model: MarketModel, grid: GameGrid, lattice: BrownianLattice,
                      claim: Claim | None, penalty: Penalty,
                      terminal: np.ndarray | None = None) -> float:
    """Payment equating the seller's minimal risk with and without the claim."""
    terminal = _terminal(model, lattice, claim, terminal)
    with_claim = game_value_bruteforce(model, grid, lattice, None, penalty, terminal=terminal)
    without = game_value_bruteforce(model, grid, lattice, None, penalty,
                                    terminal=np.zeros_like(terminal))
    return with_claim - without
