import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskbounds.market import EmmSlice, MarketModel
from riskbounds.penalty import (DriverKind, Penalty, PenaltyError, _golden_max, closed_form_code,
                                driver_values, eval_driver)

from conftest import incomplete_model, segment_slice


def scalar_kernel_slice(r):
    # theta_bar = 0 and a unit kernel along the second axis, so zK = z[1]
    return EmmSlice(np.zeros(2), np.array([[0.0], [1.0]]), r, r)


def test_seller_zero_on_segment():
    v = eval_driver(DriverKind.seller(Penalty.zero()), segment_slice(0.3), 0.0, [1.0, 0.0])
    assert v == pytest.approx(0.3 / np.sqrt(2.0), rel=1e-14)
    assert v == pytest.approx(0.21213, abs=5e-6)


def test_quadratic_interior_optimum():
    v = eval_driver(DriverKind.seller(Penalty.quadratic(1.0)), scalar_kernel_slice(0.5), 0.0, [0.0, 0.2])
    assert v == pytest.approx(0.02, rel=1e-14)


def test_quadratic_clamped_optimum():
    v = eval_driver(DriverKind.seller(Penalty.quadratic(1.0)), scalar_kernel_slice(0.5), 0.0, [0.0, 1.0])
    assert v == pytest.approx(0.375, rel=1e-14)


@pytest.mark.parametrize("name", ["black_scholes", "upper_cw", "lower_cw", "upper_m", "lower_m",
                                  "seller", "buyer"])
def test_zero_z_gives_zero(name):
    kind = DriverKind.parse(name, Penalty.zero())
    assert eval_driver(kind, incomplete_model().slice(0), 0.0, [0.0, 0.0]) == 0.0


def test_nonfinite_z_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        eval_driver(DriverKind.upper_cw(), segment_slice(), 0.0, [np.nan, 0.0])


def _quartic(t, theta):
    x = np.sum(theta * theta, axis=-1)
    return x * x + 0.3 * x


def test_custom_penalty_matches_grid_search():
    sl = incomplete_model().slice(0)
    pen = Penalty.custom(_quartic)
    k = sl.kernel[:, 0]
    s = np.linspace(-sl.radius, sl.radius, 401)
    thetas = sl.theta_bar + s[:, None] * k
    fvals = _quartic(0.0, thetas)
    rng = np.random.default_rng(3)
    for z in rng.normal(size=(20, 2)) * 2:
        expect_sell = np.max(thetas @ z - fvals) + fvals.min()
        expect_buy = np.min(thetas @ z + fvals) - fvals.min()
        assert eval_driver(DriverKind.seller(pen), sl, 0.0, z) == pytest.approx(expect_sell, abs=1e-6)
        assert eval_driver(DriverKind.buyer(pen), sl, 0.0, z) == pytest.approx(expect_buy, abs=1e-6)


def test_custom_quadratic_equals_closed_form():
    sl = incomplete_model().slice(0)
    gamma = 0.7
    custom = Penalty.custom(lambda t, th: np.sum(th * th, axis=-1) / (2 * gamma))
    z = np.random.default_rng(1).normal(size=(200, 2)) * 3
    for mk in (DriverKind.seller, DriverKind.buyer):
        a = driver_values(mk(custom), sl, 0.0, z)
        b = driver_values(mk(Penalty.quadratic(gamma)), sl, 0.0, z)
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_scalar_custom_penalty():
    pen = Penalty.custom(lambda t, th: float(th @ th), vectorized=False)
    np.testing.assert_allclose(pen.value(0.0, np.ones((3, 2))), [2.0, 2.0, 2.0])


def test_custom_penalty_needs_one_dimensional_kernel():
    m = MarketModel(mu=[0.05], sigma=[[0.2, 0.1, 0.1]], u=0.5, s0=[1.0], horizon=1.0, steps=1)
    with pytest.raises(PenaltyError, match="one-dimensional kernel"):
        eval_driver(DriverKind.seller(Penalty.custom(_quartic)), m.slice(0), 0.0, [1.0, 0.0, 0.0])


def test_nonfinite_custom_penalty():
    pen = Penalty.custom(lambda t, th: np.full(th.shape[:-1], np.inf))
    with pytest.raises(PenaltyError, match="non-finite"):
        eval_driver(DriverKind.seller(pen), incomplete_model().slice(0), 0.0, [1.0, 1.0])


def test_golden_section_reports_bracket():
    with pytest.raises(PenaltyError, match="bracket"):
        _golden_max(lambda s: -s * s, np.array([-1.0]), np.array([1.0]), 1e-12, max_iter=3)


def test_penalty_validation():
    assert Penalty.quadratic(2.0).validate(2, 1.0) == []
    assert "negative" in " ".join(Penalty.custom(lambda t, th: th[..., 0]).validate(2, 1.0))
    assert "convexity" in " ".join(Penalty.custom(lambda t, th: -np.sum(th ** 2, -1) + 5).validate(2, 1.0))
    assert "f(t, 0)" in " ".join(Penalty.custom(lambda t, th: np.sum(th ** 2, -1) + 1).validate(2, 1.0))
    with pytest.raises(PenaltyError):
        Penalty.quadratic(0.0)


def test_min_on_slice_custom_matches_quadratic():
    sl = incomplete_model().slice(0)
    pen = Penalty.custom(lambda t, th: np.sum((th - [0.0, 0.3]) ** 2, axis=-1))
    s = np.linspace(-sl.radius, sl.radius, 20001)
    grid = pen.value(0.0, sl.theta_bar + s[:, None] * sl.kernel[:, 0])
    assert pen.min_on_slice(sl, 0.0) == pytest.approx(grid.min(), abs=1e-9)
    assert Penalty.quadratic(2.0).min_on_slice(sl, 0.0) == pytest.approx(0.05 / 4)


def test_upper_m_is_seller_zero():
    sl = incomplete_model().slice(3)
    z = np.random.default_rng(2).normal(size=(100, 2))
    assert closed_form_code(DriverKind.upper_m()) == closed_form_code(DriverKind.seller(Penalty.zero()))
    a = driver_values(DriverKind.upper_m(), sl, 0.0, z)
    b = driver_values(DriverKind.seller(Penalty.zero()), sl, 0.0, z)
    assert np.array_equal(a, b)


def test_labels_and_parse():
    assert DriverKind.upper_m().label == "upper_m"
    assert DriverKind.seller(Penalty.quadratic(2)).label == "seller[quadratic(gamma=2)]"
    with pytest.raises(ValueError):
        DriverKind("nope")
    with pytest.raises(ValueError):
        DriverKind("seller")


# property tests ------------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)
zvec = st.tuples(finite, finite).map(np.array)
models = st.builds(
    lambda mu, s1, s2, extra: MarketModel(
        mu=[mu], sigma=[[s1, s2]], u=float(np.hypot(mu, 0) / np.hypot(s1, s2)) + extra,
        s0=[1.0], horizon=1.0, steps=1),
    st.floats(-0.2, 0.2), st.floats(0.05, 0.5), st.floats(-0.5, 0.5), st.floats(1e-3, 1.0))
penalties = st.one_of(st.just(Penalty.zero()), st.floats(1e-3, 1e3).map(Penalty.quadratic))


def _vals(names, pen, sl, z):
    return [eval_driver(DriverKind.parse(n, pen), sl, 0.0, z) for n in names]


@settings(max_examples=300, deadline=None)
@given(models, penalties, zvec)
def test_driver_dominance(model, pen, z):
    sl = model.slice(0)
    chain = _vals(("lower_cw", "lower_m", "buyer", "seller", "upper_m", "upper_cw"), pen, sl, z)
    for lo, hi in zip(chain, chain[1:]):
        assert lo <= hi + 1e-12 * (1 + abs(hi))


@settings(max_examples=200, deadline=None)
@given(models, penalties, zvec)
def test_conjugacy(model, pen, z):
    sl = model.slice(0)
    assert eval_driver(DriverKind.buyer(pen), sl, 0.0, z) == -eval_driver(DriverKind.seller(pen), sl, 0.0, -z)


@settings(max_examples=200, deadline=None)
@given(models, penalties, zvec, zvec)
def test_lipschitz_in_z(model, pen, z1, z2):
    sl = model.slice(0)
    for name in ("seller", "buyer", "upper_cw", "upper_m"):
        kind = DriverKind.parse(name, pen)
        g1, g2 = eval_driver(kind, sl, 0.0, z1), eval_driver(kind, sl, 0.0, z2)
        assert abs(g1 - g2) <= sl.bound * np.linalg.norm(z1 - z2) * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(models, st.floats(1e-3, 1e3), st.floats(1.0, 100.0), zvec)
def test_monotone_in_penalty(model, gamma, factor, z):
    # a larger gamma is a smaller penalty, hence a larger seller and a smaller buyer price
    sl = model.slice(0)
    weak, strong = Penalty.quadratic(gamma * factor), Penalty.quadratic(gamma)
    assert eval_driver(DriverKind.seller(weak), sl, 0.0, z) >= eval_driver(DriverKind.seller(strong), sl, 0.0, z) - 1e-12
    assert eval_driver(DriverKind.buyer(weak), sl, 0.0, z) <= eval_driver(DriverKind.buyer(strong), sl, 0.0, z) + 1e-12


@settings(max_examples=100, deadline=None)
@given(models, st.floats(1e-3, 1e3), zvec, zvec, st.floats(0, 1))
def test_seller_convex_in_z(model, gamma, z1, z2, lam):
    sl = model.slice(0)
    kind = DriverKind.seller(Penalty.quadratic(gamma))
    mid = eval_driver(kind, sl, 0.0, lam * z1 + (1 - lam) * z2)
    rhs = lam * eval_driver(kind, sl, 0.0, z1) + (1 - lam) * eval_driver(kind, sl, 0.0, z2)
    assert mid <= rhs + 1e-10 * (1 + abs(rhs))
