from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import pade as scipy_pade

from qbmnet.exceptions import PoleError, ValidationError
from qbmnet.regulators import (
    MAX_PADE_ORDER,
    RegulatorApproximant,
    chi_exact,
    chi_exact_derivative,
    chi_taylor_coefficients,
    pade_coefficients,
    pade_poles,
    pade_regulator,
    pade_regulator_derivative,
    sinc,
)

ORDERS = range(MAX_PADE_ORDER + 1)


def test_first_order_closed_form():
    num, den = pade_coefficients(0)
    assert num == (Fraction(1),)
    assert den == (Fraction(1), Fraction(1, 2))
    z = 0.37 - 1.2j
    assert pade_regulator(0, z) == pytest.approx(1 / (1 + z / 2), rel=1e-15)


@pytest.mark.parametrize("n", ORDERS)
def test_unit_value_at_origin(n):
    assert pade_regulator(n, 0.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("n", ORDERS)
def test_matches_scipy_pade_table(n):
    taylor = [float(c) for c in chi_taylor_coefficients(2 * n + 2)]
    p, q = scipy_pade(taylor, n + 1, n)
    z = np.array([0.3, 1.1 + 0.4j, -0.2j, 2.5])
    assert np.allclose(pade_regulator(n, z), p(z) / q(z), rtol=1e-10)


@pytest.mark.parametrize("n", ORDERS)
def test_taylor_agreement_order(n):
    # the [n/n+1] approximant matches 2n+2 Taylor coefficients
    z = 1e-2
    series = sum(float(c) * (-1) ** 0 * z**k for k, c in enumerate(chi_taylor_coefficients(30)))
    err = abs(pade_regulator(n, z) - series)
    assert err < 10 * z ** (2 * n + 2)


def test_odd_order_numerator_degree():
    for n in ORDERS:
        approx = RegulatorApproximant.of_order(n)
        assert approx.denominator_degree == n + 1
        expected = n if n % 2 == 0 else n - 1
        assert approx.numerator_degree == expected
        assert approx(0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("n", ORDERS)
def test_large_argument_decay(n):
    z = np.array([1e3, 1e4, 1e5])
    scaled = np.abs(pade_regulator(n, z)) * z
    if n % 2 == 0:
        # even orders decay exactly like 1/z
        assert scaled[2] == pytest.approx(scaled[1], rel=1e-2)
    else:
        # the leading numerator coefficient vanishes, so the decay is 1/z^2
        assert scaled[2] < 1e-3
        assert scaled[1] / scaled[2] == pytest.approx(10.0, rel=1e-2)


@pytest.mark.parametrize("n", ORDERS)
def test_poles_in_left_half_plane(n):
    poles, weights = pade_poles(n)
    assert len(poles) == n + 1
    assert np.all(poles.real < 0)
    z = 0.7 + 0.3j
    terms = weights / (z - poles)
    # the terms cancel heavily at high order; compare against their magnitude
    assert abs(terms.sum() - pade_regulator(n, z)) < 1e-13 * np.abs(terms).sum()


def test_pole_error():
    poles, _ = pade_poles(1)
    with pytest.raises(PoleError):
        pade_regulator(1, poles[0])
    with pytest.raises(ZeroDivisionError):
        pade_regulator(0, -2.0)


def test_order_bounds():
    with pytest.raises(ValidationError):
        pade_coefficients(MAX_PADE_ORDER + 1)
    with pytest.raises(ValidationError):
        pade_coefficients(-1)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-30, 30, allow_nan=False),
    st.floats(-30, 30, allow_nan=False),
)
def test_exact_regulator_identity(x, y):
    z = complex(x, y)
    expected = 1.0 if abs(z) < 1e-300 else (1 - np.exp(-z)) / z
    if abs(z) > 1e-3:
        assert chi_exact(z) == pytest.approx(expected, rel=1e-12, abs=1e-14)
    else:
        assert chi_exact(z) == pytest.approx(1 - z / 2 + z * z / 6, rel=1e-12)


@pytest.mark.parametrize("z", [1e-6, 3e-3, 0.5 + 0.5j, 4.0 - 2j])
def test_exact_derivative_by_differences(z):
    h = 1e-6 * max(abs(z), 1e-3)
    fd = (chi_exact(z + h) - chi_exact(z - h)) / (2 * h)
    assert chi_exact_derivative(z) == pytest.approx(fd, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("n", ORDERS)
def test_pade_derivative_by_differences(n):
    z, h = 0.8 + 0.2j, 1e-6
    fd = (pade_regulator(n, z + h) - pade_regulator(n, z - h)) / (2 * h)
    assert pade_regulator_derivative(n, z) == pytest.approx(fd, rel=1e-7)


def test_fourier_regulator_is_sinc():
    w = np.array([0.0, 1e-5, 0.4, 3.0, 25.0])
    assert np.allclose(np.real(chi_exact(1j * w)), sinc(w), atol=1e-14)
    assert sinc(1.0) == pytest.approx(np.sin(1.0))
