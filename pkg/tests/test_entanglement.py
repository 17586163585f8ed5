import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from qbmnet.entanglement import (
    J_MODEWISE,
    entanglement_report,
    from_modewise,
    log_negativity,
    partial_transpose,
    physicality_margin,
    simon_criterion,
    symplectic_eigenvalues,
    thermal_product,
    to_modewise,
    two_mode_squeezed,
)
from qbmnet.exceptions import ValidationError

VACUUM = 0.5 * np.eye(4)


def random_symplectic(rng, modes=2, scale=0.6):
    # exp(J S) with S symmetric is symplectic
    s = rng.normal(scale=scale, size=(2 * modes, 2 * modes))
    j = np.kron(np.eye(modes), [[0.0, 1.0], [-1.0, 0.0]])
    return expm(j @ (s + s.T) / 2)


def random_physical(rng, nbar_max=1.0):
    nu = 0.5 + rng.uniform(0, nbar_max, 2)
    s = random_symplectic(rng)
    return s @ np.diag([nu[0], nu[0], nu[1], nu[1]]) @ s.T


def brute_force_symplectic(cov):
    # Williamson: spectrum of |i J sigma| without the library's pairing step
    w = np.sort(np.abs(np.linalg.eigvals(1j * J_MODEWISE @ cov)))
    return w[::2]


def test_vacuum():
    assert np.allclose(symplectic_eigenvalues(VACUUM), [0.5, 0.5])
    raw, en = log_negativity(VACUUM)
    assert raw == pytest.approx(0.0, abs=1e-14) and en == 0.0
    assert simon_criterion(VACUUM) == pytest.approx(0.0, abs=1e-12)


def test_thermal_product():
    cov = thermal_product(0.3, 1.2)
    assert np.allclose(np.sort(symplectic_eigenvalues(cov)), [0.8, 1.7])
    raw, en = log_negativity(thermal_product(0.5))
    assert raw == pytest.approx(-1.0)
    assert en == 0.0


@pytest.mark.parametrize("s", [0.1, 0.5, 1.0])
def test_two_mode_squeezed(s):
    cov = two_mode_squeezed(s)
    nu_pt = brute_force_symplectic(partial_transpose(cov))
    assert nu_pt.min() == pytest.approx(math.exp(-2 * s) / 2, rel=1e-12)
    assert log_negativity(cov)[0] == pytest.approx(2 * s / math.log(2), abs=1e-9)
    assert simon_criterion(cov) > 0


def test_partial_transpose_involution(rng):
    cov = random_physical(rng)
    for mode in (1, 2):
        assert np.allclose(partial_transpose(partial_transpose(cov, mode), mode), cov)
    # transposing either mode gives the same spectrum
    a = brute_force_symplectic(partial_transpose(cov, 1))
    b = brute_force_symplectic(partial_transpose(cov, 2))
    assert np.allclose(a, b)
    with pytest.raises(ValidationError):
        partial_transpose(cov, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_determinant_identity(seed):
    cov = random_physical(np.random.default_rng(seed))
    nu = symplectic_eigenvalues(cov)
    assert (nu[0] * nu[1]) ** 2 == pytest.approx(np.linalg.det(cov), rel=1e-10)
    assert nu[0] >= nu[1] >= 0.5 - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_local_symplectic_invariance(seed):
    rng = np.random.default_rng(seed)
    cov = random_physical(rng)
    s1 = random_symplectic(rng, modes=1)
    s2 = random_symplectic(rng, modes=1)
    local = np.block([[s1, np.zeros((2, 2))], [np.zeros((2, 2)), s2]])
    moved = local @ cov @ local.T
    assert log_negativity(moved)[0] == pytest.approx(log_negativity(cov)[0], abs=1e-10)
    assert simon_criterion(moved) == pytest.approx(simon_criterion(cov), abs=1e-9 * max(1, abs(simon_criterion(cov))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sign_consistency_and_swap(seed):
    cov = random_physical(np.random.default_rng(seed))
    report = entanglement_report(cov)
    assert report.consistent
    assert report.en == max(0.0, report.en_raw)
    swap = np.array([2, 3, 0, 1])
    swapped = cov[np.ix_(swap, swap)]
    assert entanglement_report(swapped).en_raw == pytest.approx(report.en_raw, abs=1e-12)
    assert entanglement_report(swapped).simon_raw == pytest.approx(report.simon_raw, abs=1e-12)


def test_random_product_states_are_separable(rng):
    for _ in range(100):
        a = random_physical(rng)[:2, :2]
        b = random_physical(rng)[2:, 2:]
        cov = np.block([[a, np.zeros((2, 2))], [np.zeros((2, 2)), b]])
        if physicality_margin(cov) < 0:
            continue
        assert simon_criterion(cov) <= 1e-10
        assert log_negativity(cov)[0] <= 1e-10


def test_ordering_permutation():
    xxpp = np.arange(16.0).reshape(4, 4)
    xxpp = xxpp + xxpp.T
    mw = to_modewise(xxpp)
    # modewise (X1, P1, X2, P2) picks xxpp indices (0, 2, 1, 3)
    assert mw[0, 1] == xxpp[0, 2]
    assert mw[1, 2] == xxpp[2, 1]
    assert mw[2, 3] == xxpp[1, 3]
    assert np.array_equal(from_modewise(mw), xxpp)


def test_unphysical_rejected():
    with pytest.raises(ValidationError):
        log_negativity(0.2 * np.eye(4))
    with pytest.raises(ValidationError):
        symplectic_eigenvalues(np.eye(3))
    bad = VACUUM.copy()
    bad[0, 1] = 0.1
    with pytest.raises(ValidationError):
        simon_criterion(bad)
