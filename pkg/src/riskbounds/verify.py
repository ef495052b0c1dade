"""Invariant suite run by ``riskbounds verify``.

Each check returns a :class:`CheckResult`; the suite is deterministic (fixed
seeds) so repeated runs print identical lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import (LEGS, chain_tolerance, price_quadruple, quadruple_kinds,
                   restart_consistency, solve_terminal)
from .lattice import BrownianLattice, terminal_values
from .market import MarketModel
from .penalty import DriverKind, Penalty, driver_values

SEED = 20240611
DOMINANCE_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def _rel(a, b):
    return np.abs(a - b) / (1.0 + np.abs(b))


def driver_dominance(model: MarketModel, penalty: Penalty, samples: int = 10_000,
                     seed: int = SEED) -> CheckResult:
    """``LowerCW <= LowerM <= Buyer <= Seller <= UpperM <= UpperCW`` on random ``z`` and slices."""
    rng = np.random.default_rng(seed)
    steps = rng.integers(0, model.steps, samples)
    scale = np.exp(rng.uniform(-3.0, 3.0, samples))[:, None]
    zs = rng.standard_normal((samples, model.d)) * scale
    names = ("lower_cw", "lower_m", "buyer", "seller", "upper_m", "upper_cw")
    kinds = [DriverKind.parse(k, penalty) for k in names]
    bad = 0
    for m in np.unique(steps):
        z = zs[steps == m]
        sl = model.slice(int(m))
        t = m * model.dt
        vals = [driver_values(k, sl, t, z) for k in kinds]
        for lo, hi in zip(vals, vals[1:]):
            bad += int(np.count_nonzero(lo > hi + DOMINANCE_TOL * (1.0 + np.abs(hi))))
    return CheckResult("driver_dominance", bad == 0, f"{bad} violations in {samples} samples")


def chain(model, lattice, terminal, penalty, hedging) -> CheckResult:
    quad = price_quadruple(model, lattice, None, penalty, hedging, terminal=terminal)
    bad = quad.chain_violations()
    return CheckResult("chain", bad == 0,
                       f"{bad} violations over {lattice.total_nodes()} nodes ({hedging} hedging)")


def normalization(model, lattice, penalty, hedging) -> CheckResult:
    zero = np.zeros(lattice.slice_shape(lattice.steps))
    worst = 0.0
    for kind in quadruple_kinds(penalty, hedging).values():
        sol = solve_terminal(model, lattice, zero, kind)
        worst = max(worst, max(float(np.max(np.abs(y))) for y in sol.Y))
    return CheckResult("normalization", worst == 0.0, f"max |Y| for zero claim = {worst:.3g}")


def translation(model, lattice, terminal, penalty, hedging, shift: float = 1.0,
                tol: float = 1e-12) -> CheckResult:
    worst = 0.0
    for kind in quadruple_kinds(penalty, hedging).values():
        a = solve_terminal(model, lattice, terminal, kind)
        b = solve_terminal(model, lattice, terminal + shift, kind)
        worst = max(worst, max(float(np.max(_rel(yb - shift, ya))) for ya, yb in zip(a.Y, b.Y)))
    return CheckResult("translation", worst <= tol, f"max rel deviation {worst:.3g} (tol {tol:g})")


def duality(model, lattice, terminal, penalty, tol: float = 1e-12) -> CheckResult:
    buy = solve_terminal(model, lattice, terminal, DriverKind.buyer(penalty))
    sell = solve_terminal(model, lattice, -terminal, DriverKind.seller(penalty))
    worst = max(float(np.max(np.abs(b + s))) for b, s in zip(buy.Y, sell.Y))
    return CheckResult("duality", worst <= tol, f"max |buyer(xi) + seller(-xi)| = {worst:.3g}")


def _random_terminals(lattice, scale, count, rng):
    shape = lattice.slice_shape(lattice.steps)
    return [scale * rng.uniform(0.0, 1.0, shape) for _ in range(count)]


def monotonicity(model, lattice, penalty, scale, pairs: int = 100, seed: int = SEED) -> CheckResult:
    rng = np.random.default_rng(seed + 1)
    bad = 0
    kinds = (DriverKind.seller(penalty), DriverKind.buyer(penalty))
    for xi in _random_terminals(lattice, scale, pairs, rng):
        bump = xi + scale * rng.uniform(0.0, 1.0, xi.shape) * (rng.uniform(size=xi.shape) < 0.3)
        for kind in kinds:
            a = solve_terminal(model, lattice, xi, kind)
            b = solve_terminal(model, lattice, bump, kind)
            bad += sum(int(np.count_nonzero(ya > yb + chain_tolerance(yb))) for ya, yb in zip(a.Y, b.Y))
    return CheckResult("monotonicity", bad == 0, f"{bad} violations over {pairs} pairs")


def convexity(model, lattice, penalty, scale, triples: int = 100, seed: int = SEED) -> CheckResult:
    """Seller is convex and buyer concave in the claim."""
    rng = np.random.default_rng(seed + 2)
    bad = 0
    for _ in range(triples):
        x1, x2 = _random_terminals(lattice, scale, 2, rng)
        lam = rng.uniform()
        mix = lam * x1 + (1 - lam) * x2
        for kind, sign in ((DriverKind.seller(penalty), 1.0), (DriverKind.buyer(penalty), -1.0)):
            y1, y2, ym = (solve_terminal(model, lattice, x, kind).Y for x in (x1, x2, mix))
            for a, b, c in zip(y1, y2, ym):
                rhs = lam * a + (1 - lam) * b
                bad += int(np.count_nonzero(sign * (c - rhs) > chain_tolerance(rhs)))
    return CheckResult("convexity", bad == 0, f"{bad} violations over {triples} triples")


def time_consistency(model, lattice, terminal, penalty, tol: float = 1e-12) -> CheckResult:
    N = lattice.steps
    splits = sorted({s for s in (1, N // 2, N - 1) if 0 < s < N})
    worst = 0.0
    for kind in (DriverKind.seller(penalty), DriverKind.buyer(penalty)):
        sol = solve_terminal(model, lattice, terminal, kind)
        for s in splits:
            worst = max(worst, restart_consistency(sol, s))
    return CheckResult("time_consistency", worst <= tol,
                       f"max restart deviation {worst:.3g} at splits {splits}")


def locality(model, lattice, terminal, penalty, scale) -> CheckResult:
    """Changing the claim where some index hits ``N`` leaves nodes with all ``j_i < m`` untouched."""
    N = lattice.steps
    idx = np.indices(lattice.slice_shape(N))
    outside = np.any(idx == N, axis=0)
    bumped = np.where(outside, terminal + scale, terminal)
    bad = 0
    checked = 0
    for kind in (DriverKind.seller(penalty), DriverKind.buyer(penalty)):
        a = solve_terminal(model, lattice, terminal, kind)
        b = solve_terminal(model, lattice, bumped, kind)
        for m in range(1, N + 1):
            keep = np.all(np.indices(lattice.slice_shape(m)) < m, axis=0)
            checked += int(keep.sum())
            bad += int(np.count_nonzero(a.Y[m][keep] != b.Y[m][keep]))
    return CheckResult("locality", bad == 0, f"{bad} of {checked} untouched nodes changed")


def complete_collapse(model, lattice, terminal, penalty, hedging, tol: float = 1e-9) -> CheckResult:
    quad = price_quadruple(model, lattice, None, penalty, hedging, terminal=terminal)
    p = quad.prices_at_zero()
    spread = (max(p.values()) - min(p.values())) / max(1e-300, abs(p["seller"]))
    return CheckResult("complete_collapse", spread <= tol,
                       f"relative spread of the four prices {spread:.3g}")


def run_suite(model: MarketModel, lattice: BrownianLattice, claim, penalty: Penalty,
              hedging: str = "M", dominance_samples: int = 10_000,
              random_cases: int = 100) -> list[CheckResult]:
    terminal = terminal_values(model, lattice, claim)
    scale = float(np.max(np.abs(terminal))) or 1.0
    results = [
        driver_dominance(model, penalty, dominance_samples),
        chain(model, lattice, terminal, penalty, hedging),
        normalization(model, lattice, penalty, hedging),
        translation(model, lattice, terminal, penalty, hedging),
        duality(model, lattice, terminal, penalty),
        monotonicity(model, lattice, penalty, scale, random_cases),
        convexity(model, lattice, penalty, scale, random_cases),
        time_consistency(model, lattice, terminal, penalty),
        locality(model, lattice, terminal, penalty, scale),
    ]
    if model.complete:
        results.append(complete_collapse(model, lattice, terminal, penalty, hedging))
    return results


__all__ = ["CheckResult", "run_suite", "LEGS"]
