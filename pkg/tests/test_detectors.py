import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbmnet.detectors import (
    DetectorPair,
    ModeRates,
    asymptotic_pair_state,
    decay_rates,
    pair_damping_laplace,
    pm_kernels,
    resonant_mode_root,
    single_detector_rate,
    track_rates,
    weak_coupling_rates,
)
from qbmnet.entanglement import to_modewise
from qbmnet.exceptions import ValidationError
from qbmnet.kernels import ThermalEnvironment


def pair(**kw):
    base = dict(omega0=1.0, detuning=0.0, gamma0=0.1, separation=0.01, r0=0.01)
    base.update(kw)
    return DetectorPair(**base)


def test_kernel_low_frequency_limit():
    g = pair_damping_laplace(pair(separation=0.7), 0.0)
    assert np.allclose(g, 0.1)


def test_coincident_kernel_ohmic_form():
    s = 2.0 - 1.0j
    g = pair_damping_laplace(pair(), s)
    assert np.allclose(g, 0.1 / (1 + 0.01 * s / 2))


def test_coincident_dark_kernel_vanishes():
    for s in (0.0, 1j, 3.0 + 2.0j):
        k = pm_kernels(pair(), s)
        assert k.minus == 0
        assert k.plus == pytest.approx(2 * pair_damping_laplace(pair(), s)[0, 0])


def test_self_kernel_independent_of_separation():
    s = 0.4 + 1.3j
    near = pair_damping_laplace(pair(separation=0.02), s)
    far = pair_damping_laplace(pair(separation=50.0), s)
    assert near[0, 0] == far[0, 0]
    assert abs(far[0, 1]) < abs(near[0, 1])


def test_resonant_rates_at_coincidence():
    rates = decay_rates(pair())
    single = single_detector_rate(pair())
    assert abs(rates.minus.gamma) < 1e-12
    assert rates.plus.gamma / single.gamma == pytest.approx(2.0, rel=5e-3)
    assert not rates.ambiguous


def test_scalar_branches_match_matrix_roots():
    p = pair(separation=0.4)
    rates = decay_rates(p)
    assert resonant_mode_root(p, "plus") == pytest.approx(rates.plus.root, abs=1e-12)
    assert resonant_mode_root(p, "minus") == pytest.approx(rates.minus.root, abs=1e-12)
    with pytest.raises(ValidationError):
        resonant_mode_root(p, "left")


def test_exact_regulator_rates():
    at_r0 = decay_rates(pair(), exact=True)
    assert abs(at_r0.minus.gamma) < 1e-12
    far = pair(separation=30.0)
    rates = decay_rates(far, exact=True)
    # labels survive the strong retardation shift of the exact kernel
    assert rates.plus.root == pytest.approx(resonant_mode_root(far, "plus", exact=True, f0=rates.plus.root))
    assert abs(rates.plus.root - rates.minus.root) > 1e-3
    assert decay_rates(far.with_detuning(0.01), exact=True).minus.gamma > 0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(-0.04, 0.04))
def test_label_exchange_symmetry(separation, detuning):
    p = pair(separation=separation, detuning=detuning)
    a, b = decay_rates(p), decay_rates(p.swapped())
    assert a.plus.gamma == pytest.approx(b.plus.gamma, rel=1e-9, abs=1e-13)
    assert a.minus.gamma == pytest.approx(b.minus.gamma, rel=1e-9, abs=1e-13)


def test_mode_rates_frequency_relation():
    m = decay_rates(pair(separation=0.3)).plus
    assert m.omega_observed == pytest.approx(np.sqrt(m.omega_gamma**2 - m.gamma**2))
    assert ModeRates.from_root(-0.1 + 2j).gamma == pytest.approx(0.1)


def test_weak_coupling_agrees_to_second_order():
    for g in (0.01, 0.003):
        p = pair(gamma0=g, separation=0.5, detuning=0.2 * g)
        exact, approx = decay_rates(p), weak_coupling_rates(p)
        assert abs(exact.plus.gamma - approx.plus.gamma) < 3 * g**2
        assert abs(exact.minus.gamma - approx.minus.gamma) < 3 * g**2


def test_tracking_matches_pointwise():
    p = pair(gamma0=0.01)
    detunings = [-0.02, -0.005, 0.0, 0.004, 0.03]
    tracked = track_rates(p, detunings)
    for d, t in zip(detunings, tracked):
        direct = decay_rates(p.with_detuning(d))
        assert t.plus.gamma == pytest.approx(direct.plus.gamma, rel=1e-9, abs=1e-14)
        assert t.minus.gamma == pytest.approx(direct.minus.gamma, rel=1e-9, abs=1e-14)


def test_rates_merge_at_large_detuning():
    rates = decay_rates(pair(gamma0=0.01, detuning=0.1))
    assert rates.plus.gamma == pytest.approx(rates.minus.gamma, rel=0.01)


def test_asymptotic_state_symmetric_and_physical():
    state = asymptotic_pair_state(pair(separation=0.1), ThermalEnvironment(0.0))
    cov = state.cov
    assert cov[0, 0] == pytest.approx(cov[1, 1], rel=1e-10)
    assert cov[2, 2] == pytest.approx(cov[3, 3], rel=1e-10)
    assert state.physicality_margin() > -1e-9
    assert to_modewise(cov)[0, 1] == pytest.approx(cov[0, 2])


def test_validation():
    with pytest.raises(ValidationError):
        pair(separation=0.005)
    with pytest.raises(ValidationError):
        pair(detuning=1.0)
    with pytest.raises(ValidationError):
        pair(gamma0=0.0)
    with pytest.raises(ValidationError):
        pair(pade_order=7)
    assert np.allclose(pair(detuning=0.1).frequencies, [1.1, 0.9])
    assert np.allclose(pair(mass=2.0).network().spring, 2.0 * np.eye(2))
