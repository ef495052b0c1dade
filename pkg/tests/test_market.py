import numpy as np
import pytest

from riskbounds.market import (MarketError, MarketModel, emm_slice, theta_from_kernel_coord,
                               validate_model)

from conftest import incomplete_model, segment_slice


def test_incomplete_example_is_valid():
    m = incomplete_model()
    sl = m.slice(0)
    assert validate_model(m).ok
    assert np.linalg.norm(sl.theta_bar) == pytest.approx(0.05 / np.sqrt(0.05), rel=1e-12)
    np.testing.assert_allclose(sl.theta_bar, [-0.2, -0.1], atol=1e-15)
    np.testing.assert_allclose(m.sigma[0] @ sl.theta_bar, -m.mu[0], atol=1e-15)


def test_kernel_is_orthonormal_null_space():
    sl = incomplete_model().slice(0)
    k = sl.kernel[:, 0]
    assert abs(k @ [0.2, 0.1]) < 1e-15
    assert abs(abs(k @ (np.array([0.1, -0.2]) / np.sqrt(0.05))) - 1.0) < 1e-12
    assert sl.radius == pytest.approx(np.sqrt(0.25 - 0.05))


def test_empty_emm_set_message():
    with pytest.raises(MarketError, match=r"empty EMM set: u below \|theta_bar\|=0.25"):
        MarketModel(mu=[0.05], sigma=[[0.2]], u=0.1, s0=[100.0], horizon=1.0, steps=4)


def test_rank_deficient_sigma():
    with pytest.raises(MarketError, match="sigma not full rank"):
        MarketModel(mu=[0.05, 0.0], sigma=[[0.2, 0.1], [0.0, 0.0]], u=1.0, s0=[1.0, 1.0],
                    horizon=1.0, steps=2)


def test_zero_sigma_rejected():
    with pytest.raises(MarketError, match="sigma not full rank"):
        MarketModel(mu=[0.0], sigma=[[0.0]], u=1.0, s0=[1.0], horizon=1.0, steps=2)


def test_unchecked_model_reports_problems():
    m = MarketModel(mu=[0.05], sigma=[[0.2]], u=0.1, s0=[100.0], horizon=1.0, steps=3, check=False)
    report = validate_model(m)
    assert not report and "empty EMM set" in str(report)
    with pytest.raises(MarketError):
        emm_slice(m, 0)


@pytest.mark.parametrize("bad", [dict(s0=[-1.0]), dict(u=-0.5), dict(mu=[np.nan])])
def test_invalid_inputs(bad):
    kw = dict(mu=[0.0], sigma=[[0.2]], u=0.5, s0=[1.0], horizon=1.0, steps=2)
    kw.update(bad)
    with pytest.raises(MarketError):
        MarketModel(**kw)


def test_zero_drift_slice():
    m = MarketModel(mu=[0.0], sigma=[[0.3, -0.1]], u=0.7, s0=[1.0], horizon=1.0, steps=1)
    sl = m.slice(0)
    assert np.all(sl.theta_bar == 0) and sl.radius == 0.7


def test_complete_slice():
    sl = MarketModel(mu=[0.05], sigma=[[0.2]], u=0.5, s0=[1.0], horizon=1.0, steps=1).slice(0)
    assert sl.theta_bar[0] == pytest.approx(-0.25)
    assert sl.kernel.shape == (1, 0)
    assert sl.radius == pytest.approx(np.sqrt(0.25 - 0.0625))


def test_theta_from_kernel_coord():
    sl = incomplete_model().slice(0)
    np.testing.assert_array_equal(theta_from_kernel_coord(sl, 0.0), sl.theta_bar)
    seg = segment_slice(0.3)
    assert np.linalg.norm(theta_from_kernel_coord(seg, 0.3)) == pytest.approx(0.3)
    with pytest.raises(MarketError, match="outside scenario ball"):
        theta_from_kernel_coord(seg, 0.31)


def test_random_kernel_coordinates_are_martingale_scenarios():
    m = MarketModel(mu=[0.05, -0.02], sigma=[[0.2, 0.1, 0.0], [0.05, 0.3, 0.1]], u=1.0,
                    s0=[1.0, 1.0], horizon=1.0, steps=1)
    sl = m.slice(0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = rng.uniform(-sl.radius, sl.radius, 1)
        th = theta_from_kernel_coord(sl, s)
        np.testing.assert_allclose(m.sigma[0] @ th + m.mu[0], 0.0, atol=1e-14)
        assert np.linalg.norm(th) <= sl.bound + 1e-12


def test_time_varying_coefficients_and_regrid():
    u = np.linspace(0.3, 0.6, 4)
    m = MarketModel(mu=[0.05], sigma=[[0.2, 0.1]], u=u, s0=[1.0], horizon=1.0, steps=4)
    assert [m.slice(i).bound for i in range(4)] == list(u)
    with pytest.raises(MarketError, match="time-varying u"):
        m.with_changes(steps=8)
    assert m.with_changes(steps=8, u=0.5).steps == 8


def test_arrays_are_read_only():
    m = incomplete_model()
    with pytest.raises(ValueError):
        m.sigma[0, 0, 0] = 1.0
