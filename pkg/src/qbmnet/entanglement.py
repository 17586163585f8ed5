"""Entanglement of two-mode Gaussian states.

Covariances here use the mode-wise ordering ``(X1, P1, X2, P2)`` with vacuum
variance 1/2.  ``to_modewise`` converts from the ``(X1, X2, P1, P2)``
ordering used by the dynamics.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .exceptions import ValidationError

PHYSICALITY_FLOOR = -1e-10
# |E_N_raw| or |Sigma_raw| below this is treated as the separability boundary
SIGN_TIE = 1e-10

_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
J_MODEWISE = np.kron(np.eye(2), _J2)
# row k of the modewise vector is entry PERMUTATION[k] of the (X1, X2, P1, P2) vector
PERMUTATION = np.array([0, 2, 1, 3])


def to_modewise(cov):
    """``(X1, X2, P1, P2)`` ordering to ``(X1, P1, X2, P2)``."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise ValidationError("expected a 4x4 covariance")
    return cov[np.ix_(PERMUTATION, PERMUTATION)]


def from_modewise(cov):
    inverse = np.argsort(PERMUTATION)
    cov = np.asarray(cov, dtype=float)
    return cov[np.ix_(inverse, inverse)]


def _check(cov, name="covariance"):
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise ValidationError(f"{name} must be 4x4, got {cov.shape}")
    if np.abs(cov - cov.T).max() > 1e-12 * max(np.abs(cov).max(), 1.0):
        raise ValidationError(f"{name} is not symmetric")
    return 0.5 * (cov + cov.T)


def physicality_margin(cov):
    """Smallest eigenvalue of ``cov + (i/2) J``."""
    cov = _check(cov)
    return float(np.linalg.eigvalsh(cov + 0.5j * J_MODEWISE).min())


def _require_physical(cov):
    cov = _check(cov)
    margin = physicality_margin(cov)
    if margin < PHYSICALITY_FLOOR:
        raise ValidationError(f"covariance violates the uncertainty principle (margin {margin:.3e})")
    return cov


def _symplectic_spectrum(cov):
    w = np.abs(np.linalg.eigvals(1j * J_MODEWISE @ cov))
    w = np.sort(w)
    # eigenvalues come in +/- pairs; average each pair
    return np.array([0.5 * (w[2] + w[3]), 0.5 * (w[0] + w[1])])


def symplectic_eigenvalues(cov):
    """``(nu1, nu2)`` with ``nu1 >= nu2``; both are 1/2 for the vacuum."""
    return _symplectic_spectrum(_require_physical(cov))


def partial_transpose(cov, mode=2):
    """Flip the sign of the selected mode's momentum (rows and columns)."""
    if mode not in (1, 2):
        raise ValidationError("mode must be 1 or 2")
    cov = _check(cov)
    flip = np.ones(4)
    flip[2 * mode - 1] = -1.0
    return cov * np.outer(flip, flip)


def log_negativity(cov):
    """Unmaximized and maximized logarithmic negativity (base 2)."""
    cov = _require_physical(cov)
    nu_minus = _symplectic_spectrum(partial_transpose(cov))[1]
    raw = -math.log2(2.0 * nu_minus)
    return raw, max(0.0, raw)


def simon_criterion(cov):
    """PPT polynomial, signed so that positive values mean entangled."""
    cov = _require_physical(cov)
    a, b, c = cov[:2, :2], cov[2:, 2:], cov[:2, 2:]
    det_a, det_b, det_c = np.linalg.det(a), np.linalg.det(b), np.linalg.det(c)
    j = _J2
    mixed = np.trace(a @ j @ c @ j @ b @ j @ c.T @ j)
    separable_margin = det_a * det_b + (0.25 - abs(det_c)) ** 2 - mixed - 0.25 * (det_a + det_b)
    return float(-separable_margin)


class EntanglementReport(NamedTuple):
    en_raw: float
    en: float
    simon_raw: float
    consistent: bool


def entanglement_report(cov):
    """Both measures and whether their signs agree (ties below ``SIGN_TIE`` exempt)."""
    raw, en = log_negativity(cov)
    simon = simon_criterion(cov)
    if abs(raw) < SIGN_TIE or abs(simon) < SIGN_TIE:
        consistent = True
    else:
        consistent = (raw > 0) == (simon > 0)
    return EntanglementReport(raw, en, simon, consistent)


def two_mode_squeezed(s):
    """Two-mode squeezed vacuum with squeezing ``s`` (modewise ordering)."""
    ch, sh = math.cosh(2.0 * s), math.sinh(2.0 * s)
    z = np.diag([1.0, -1.0])
    return 0.5 * np.block([[ch * np.eye(2), sh * z], [sh * z, ch * np.eye(2)]])


def thermal_product(nbar1, nbar2=None):
    """Product of thermal states with mean occupations ``nbar1``, ``nbar2``."""
    nbar2 = nbar1 if nbar2 is None else nbar2
    return np.diag([nbar1 + 0.5, nbar1 + 0.5, nbar2 + 0.5, nbar2 + 0.5])


__all__ = [
    "EntanglementReport",
    "J_MODEWISE",
    "PERMUTATION",
    "entanglement_report",
    "from_modewise",
    "log_negativity",
    "partial_transpose",
    "physicality_margin",
    "simon_criterion",
    "symplectic_eigenvalues",
    "thermal_product",
    "to_modewise",
    "two_mode_squeezed",
]
