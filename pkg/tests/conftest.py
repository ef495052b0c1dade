import numpy as np
import pytest

from riskbounds.lattice import BrownianLattice
from riskbounds.market import EmmSlice, MarketModel


def incomplete_model(steps=20, u=0.5, s0=100.0, mu=0.05):
    return MarketModel(mu=[mu], sigma=[[0.2, 0.1]], u=u, s0=[s0], horizon=1.0, steps=steps)


def complete_model(steps=20, mu=0.05, u=0.5, s0=100.0):
    return MarketModel(mu=[mu], sigma=[[0.2]], u=u, s0=[s0], horizon=1.0, steps=steps)


def lattice_for(model):
    return BrownianLattice.for_model(model)


def segment_slice(r=0.3, u=None):
    """theta_bar = 0, K = (1, -1)/sqrt(2): the martingale set is a segment of half-length r."""
    k = np.array([[1.0], [-1.0]]) / np.sqrt(2.0)
    return EmmSlice(np.zeros(2), k, r, r if u is None else u)


@pytest.fixture
def inc():
    m = incomplete_model()
    return m, lattice_for(m)
