import itertools
import math

import numpy as np
import pytest

from riskbounds.bsde import solve, solve_terminal
from riskbounds.lattice import BrownianLattice, Claim, terminal_values
from riskbounds.market import MarketModel
from riskbounds.oracle import (GameGrid, OracleError, black_scholes_call, constant_scenario_bound,
                               game_seller_price, game_value_bruteforce, product_tilt, tilted_dp)
from riskbounds.penalty import DriverKind, Penalty

from conftest import complete_model, incomplete_model, lattice_for

ZERO = Penalty.zero()
QUAD = Penalty.quadratic(1.0)


def test_black_scholes_value():
    assert black_scholes_call(100, 100, 0.2, 1.0) == pytest.approx(7.965567455405804, rel=1e-12)


def test_black_scholes_limits():
    assert black_scholes_call(100, 1e-9, 0.2, 1.0) == pytest.approx(100.0, rel=1e-9)
    assert black_scholes_call(110, 100, 1e-9, 1.0) == pytest.approx(10.0, rel=1e-9)
    with pytest.raises(ValueError):
        black_scholes_call(100, 100, 0.0, 1.0)


def test_product_tilt_moments():
    rng = np.random.default_rng(0)
    thetas = rng.uniform(-0.5, 0.5, (20, 3))
    h = 0.3
    p = product_tilt(thetas, h)
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-15)
    np.testing.assert_allclose(p @ (signs * h), thetas * h * h, atol=1e-15)
    assert np.all(p > 0)
    with pytest.raises(OracleError, match="refine dt"):
        product_tilt(np.array([[4.0, 0.0, 0.0]]), h)


def _binomial_expectation(model, lat, xi):
    theta = model.slice(0).theta_bar[0]
    p = 0.5 * (1 + theta * lat.sqrt_dt)
    N = lat.steps
    return sum(math.comb(N, j) * p ** j * (1 - p) ** (N - j) * xi[j] for j in range(N + 1))


def test_complete_zero_penalty_is_tilted_expectation():
    m = complete_model(steps=40)
    lat = lattice_for(m)
    xi = terminal_values(m, lat, Claim.call(100))
    expect = _binomial_expectation(m, lat, xi)
    for mode in ("seller", "buyer"):
        assert tilted_dp(m, lat, None, ZERO, mode, terminal=xi) == pytest.approx(expect, abs=1e-10)


def test_zero_claim_is_zero():
    m = incomplete_model(steps=5)
    lat = lattice_for(m)
    zero = np.zeros(lat.slice_shape(5))
    assert tilted_dp(m, lat, None, QUAD, terminal=zero) == 0.0
    assert constant_scenario_bound(m, lat, None, QUAD, terminal=zero) == 0.0


def test_constant_equals_adapted_in_complete_market():
    m = complete_model(steps=30)
    lat = lattice_for(m)
    a = tilted_dp(m, lat, Claim.call(100), QUAD)
    b = constant_scenario_bound(m, lat, Claim.call(100), QUAD)
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("claim", [Claim.call(100), Claim.put(100), Claim.digital(100)])
def test_constant_below_adapted(claim):
    m = incomplete_model(steps=8)
    lat = lattice_for(m)
    assert constant_scenario_bound(m, lat, claim, QUAD) <= tilted_dp(m, lat, claim, QUAD) + 1e-12


def test_constant_digital_below_upper_m():
    m = incomplete_model(steps=12)
    lat = lattice_for(m)
    c = constant_scenario_bound(m, lat, Claim.digital(100), ZERO)
    up = solve(m, lat, Claim.digital(100), DriverKind.upper_m()).y0
    assert c <= up + 1e-6


def _pathwise_expectation(model, lat, xi, theta):
    # enumerate all paths; only feasible for tiny lattices
    p = product_tilt(theta[None, :], lat.sqrt_dt)[0]
    bits = np.array(list(itertools.product((0, 1), repeat=lat.dim)))
    total = 0.0
    for path in itertools.product(range(len(bits)), repeat=lat.steps):
        j = sum(bits[b] for b in path)
        total += np.prod([p[b] for b in path]) * xi[tuple(j)]
    return total


def test_heavy_penalty_pins_theta_bar():
    m = incomplete_model(steps=4)
    lat = lattice_for(m)
    xi = terminal_values(m, lat, Claim.call(100))
    expect = _pathwise_expectation(m, lat, xi, m.slice(0).theta_bar)
    got = constant_scenario_bound(m, lat, None, Penalty.quadratic(1e-6), terminal=xi)
    assert got == pytest.approx(expect, abs=1e-6)


def test_oracle_budget():
    m = MarketModel(mu=[0.0], sigma=[[0.2, 0.1, 0.1]], u=0.5, s0=[1.0], horizon=1.0, steps=60)
    with pytest.raises(OracleError, match="too large"):
        tilted_dp(m, lattice_for(m), Claim.put(1.0), QUAD)


def test_mode_checked():
    m = complete_model(steps=2)
    with pytest.raises(ValueError):
        tilted_dp(m, lattice_for(m), Claim.put(100), QUAD, mode="both")


# game ---------------------------------------------------------------------

def small(steps=2, mu=0.05, sigma=((0.2, 0.1),), s0=0.5):
    return MarketModel(mu=[mu], sigma=[list(sigma[0])], u=0.5, s0=[s0], horizon=1.0, steps=steps)


def test_game_zero_claim_zero_drift():
    m = small(mu=0.0)
    lat = lattice_for(m)
    v = game_value_bruteforce(m, GameGrid(), lat, None, ZERO, terminal=np.zeros((3, 3)))
    assert v == pytest.approx(0.0, abs=1e-15)


def test_game_price_of_zero_claim():
    m = small()
    lat = lattice_for(m)
    assert game_seller_price(m, GameGrid(), lat, None, QUAD, terminal=np.zeros((3, 3))) == 0.0


def test_game_initial_wealth_shift():
    m = small()
    lat = lattice_for(m)
    a = game_value_bruteforce(m, GameGrid(), lat, Claim.call(0.5), QUAD)
    b = game_value_bruteforce(m, GameGrid(), lat, Claim.call(0.5), QUAD, p0=0.1)
    assert a - b == pytest.approx(0.1, abs=1e-15)


def test_game_grid_monotonicity():
    m = small()
    lat = lattice_for(m)
    base = GameGrid(11, 1.0, 21)
    v = game_value_bruteforce(m, base, lat, Claim.call(0.5), QUAD)
    more_pi = game_value_bruteforce(m, GameGrid(21, 2.0, 21), lat, Claim.call(0.5), QUAD)
    more_theta = game_value_bruteforce(m, GameGrid(11, 1.0, 41), lat, Claim.call(0.5), QUAD)
    assert more_pi <= v + 1e-15
    assert more_theta >= v - 1e-15


def test_game_complete_market_matches_scheme():
    m = small(sigma=((0.2,),))
    lat = lattice_for(m)
    y = solve(m, lat, Claim.call(0.5), DriverKind.seller(QUAD)).y0
    gaps = []
    grid = GameGrid(21, 2.0, 41)
    for _ in range(2):
        gaps.append(abs(game_seller_price(m, grid, lat, Claim.call(0.5), QUAD) - y))
        grid = grid.refined()
    # both grid effects are second order here; the gap stays at grid-resolution level
    assert max(gaps) < 1e-3 * y


def test_game_limits():
    m = small(steps=4)
    with pytest.raises(OracleError, match="N <= 3"):
        game_value_bruteforce(m, GameGrid(), lattice_for(m), Claim.call(0.5), QUAD)
    m = small()
    with pytest.raises(OracleError, match="budget"):
        game_value_bruteforce(m, GameGrid(budget=10), lattice_for(m), Claim.call(0.5), QUAD)
