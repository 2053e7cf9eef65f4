from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yardsale.oracles import (
    TradeAlgebraInput,
    brute_force_norm_change,
    check_admissibility,
    expected_norm_change,
    lemma1_lower_bound,
    min_admissible_p,
)


def exact_norm_change(x_mu, x_nu, b, p):
    """Rational-arithmetic enumeration of both coin outcomes."""
    x_mu, x_nu, b, p = (Fraction(v) for v in (x_mu, x_nu, b, p))
    before = x_mu ** 2 + x_nu ** 2
    win = (x_mu - b * x_mu) ** 2 + (x_nu + b * x_mu) ** 2
    lose = (x_mu + b * x_mu) ** 2 + (x_nu - b * x_mu) ** 2
    return p * (win - before) + (1 - p) * (lose - before)


def T(x_mu, x_nu, b, p, delta=0.1):
    return TradeAlgebraInput(x_mu, x_nu, b, p, delta)


@pytest.mark.parametrize("x_nu", [0.2, 0.3, 0.8])
def test_fair_coin_change_is_twice_stake_squared(x_nu):
    t = T(0.2, x_nu, 0.5, 0.5)
    assert expected_norm_change(t) == pytest.approx(0.02, abs=1e-15)
    assert float(exact_norm_change(0.2, x_nu, 0.5, 0.5)) == pytest.approx(0.02, abs=1e-15)


def test_wealth_advantage_example():
    t = T(0.1, 0.3, 0.4, 0.75)
    expected = float(exact_norm_change(0.1, 0.3, 0.4, 0.75))
    assert expected == pytest.approx(0.0112, abs=1e-15)
    assert expected_norm_change(t) == pytest.approx(expected, abs=1e-15)
    assert brute_force_norm_change(t) == pytest.approx(expected, abs=1e-15)


def test_no_wealth_at_stake():
    assert expected_norm_change(T(0.0, 0.4, 0.5, 0.3)) == 0.0


def test_single_outcome_equal_wealths():
    delta = 0.3
    t = T(0.25, 0.25, delta, 1.0, delta)
    assert brute_force_norm_change(t) == pytest.approx(2 * (delta * 0.25) ** 2, abs=1e-16)


def test_negative_change_when_bias_inadmissible():
    t = T(0.2, 0.6, 0.5, 0.0)
    assert float(exact_norm_change(0.2, 0.6, 0.5, 0.0)) == pytest.approx(-0.06, abs=1e-15)
    assert brute_force_norm_change(t) == pytest.approx(-0.06, abs=1e-15)
    assert not check_admissibility(t)


@settings(max_examples=300, deadline=None)
@given(
    x_nu=st.floats(1e-6, 1.0),
    r=st.floats(0.0, 1.0),
    delta=st.floats(1e-3, 0.99),
    bf=st.floats(0.0, 0.999),
    p=st.floats(0.0, 1.0),
)
def test_closed_form_matches_rational_enumeration(x_nu, r, delta, bf, p):
    x_mu = r * x_nu
    b = delta + bf * (1.0 - delta)
    if b >= 1.0:
        b = np.nextafter(1.0, 0.0)
    t = T(x_mu, x_nu, b, p, delta)
    exact = float(exact_norm_change(x_mu, x_nu, b, p))
    assert abs(expected_norm_change(t) - exact) <= 1e-14
    assert abs(brute_force_norm_change(t) - exact) <= 1e-14


def test_admissibility_examples():
    for p in (0.5, 0.6, 0.99):
        assert check_admissibility(T(0.1, 0.7, 0.2, p))
    for p in (0.01, 0.3, 0.5):
        assert check_admissibility(T(0.2, 0.2, 0.2, p))
    # (4*0.47 - 2) * 0.2 = -0.024 < -0.02
    assert not check_admissibility(T(0.2, 0.4, 0.25, 0.47, 0.1))


def test_min_admissible_p_examples():
    assert min_admissible_p(0.2, 0.4, 0.1) == pytest.approx(0.475, abs=1e-15)
    assert min_admissible_p(0.3, 0.3, 0.5) == 0.0
    assert min_admissible_p(0.2, 0.4, 1e-9) == pytest.approx(0.5, abs=1e-9)
    # large poverty advantage allowed when the richer agent is barely richer
    assert min_admissible_p(0.2, 0.2000001, 0.9) == 0.0
    with pytest.raises(ValueError):
        min_admissible_p(0.5, 0.4, 0.1)


@settings(max_examples=300, deadline=None)
@given(x_nu=st.floats(1e-6, 1.0), r=st.floats(0.0, 0.999999), delta=st.floats(1e-3, 0.99))
def test_min_admissible_p_boundary(x_nu, r, delta):
    x_mu = r * x_nu
    m = min_admissible_p(x_mu, x_nu, delta)
    assert 0.0 <= m <= 0.5
    b = delta
    assert check_admissibility(T(x_mu, x_nu, b, m, delta))
    assert check_admissibility(T(x_mu, x_nu, b, min(m + 1e-12, 1.0), delta))
    if m - 1e-6 > 0 and x_nu > x_mu:
        assert not check_admissibility(T(x_mu, x_nu, b, m - 1e-6, delta))


def test_min_admissible_p_vectorized_agrees_with_scalar():
    rng = np.random.default_rng(11)
    x_nu = rng.random(2000)
    x_mu = x_nu * rng.random(2000)
    delta = rng.uniform(0.01, 0.99, 2000)
    vec = min_admissible_p(x_mu, x_nu, delta)
    for k in range(0, 2000, 37):
        assert vec[k] == min_admissible_p(float(x_mu[k]), float(x_nu[k]), float(delta[k]))


def test_stake_squared_bound_value_and_precondition():
    t = T(0.2, 0.5, 0.5, 0.5)
    assert lemma1_lower_bound(t) == pytest.approx(0.01, abs=1e-16)
    assert expected_norm_change(t) >= lemma1_lower_bound(t)
    with pytest.raises(ValueError):
        lemma1_lower_bound(T(0.2, 0.4, 0.25, 0.47, 0.1))


@pytest.mark.parametrize("x_mu,x_nu,delta", [(0.2, 0.4, 0.1), (0.05, 0.9, 0.5), (0.3, 0.31, 0.2)])
def test_stake_squared_bound_is_tight_on_the_boundary(x_mu, x_nu, delta):
    p = min_admissible_p(x_mu, x_nu, delta)
    t = T(x_mu, x_nu, delta, p, delta)
    if p > 0:
        assert expected_norm_change(t) == pytest.approx((delta * x_mu) ** 2, rel=1e-9, abs=1e-16)


def test_input_validation():
    with pytest.raises(ValueError):
        T(0.5, 0.4, 0.2, 0.5)
    with pytest.raises(ValueError):
        T(0.1, 0.4, 0.05, 0.5, 0.1)
    with pytest.raises(ValueError):
        T(0.1, 0.4, 1.0, 0.5)
