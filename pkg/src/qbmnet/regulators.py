"""Field-correlation regulator ``chi(z) = (1 - exp(-z)) / z`` and its
``[n/n+1]`` Padé approximants.

The approximant coefficients are solved once, in exact rational arithmetic,
from the Taylor series ``chi(z) = sum_k (-z)^k / (k+1)!``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

from .exceptions import PoleError, ValidationError

MAX_PADE_ORDER = 5

# below this |z| the exact regulator is summed from its Taylor series
_SERIES_RADIUS = 1e-2
_SERIES_TERMS = 12


def chi_taylor_coefficients(count):
    """First ``count`` Taylor coefficients of ``chi`` as exact fractions."""
    return [Fraction((-1) ** k, factorial(k + 1)) for k in range(count)]


def _solve_exact(matrix, rhs):
    # Gauss-Jordan elimination over the rationals with partial pivoting on
    # nonzero entries; sizes here are at most 6x6.
    n = len(rhs)
    a = [list(row) + [b] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[pivot] = a[pivot], a[col]
        piv = a[col][col]
        a[col] = [v / piv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [v - factor * w for v, w in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


@lru_cache(maxsize=None)
def pade_coefficients(n):
    """Numerator and denominator coefficients of ``chi_[n/n+1]``.

    Returns
    -------
    numerator, denominator : tuple of Fraction
        Ascending powers of ``z``; ``denominator[0] == 1``.
    """
    if not 0 <= n <= MAX_PADE_ORDER:
        raise ValidationError(f"Padé order must lie in [0, {MAX_PADE_ORDER}], got {n}")
    m = n + 1
    c = chi_taylor_coefficients(n + m + 1)

    def coef(k):
        return c[k] if k >= 0 else Fraction(0)

    # sum_{j=0}^{m} b_j c_{k-j} = 0 for k = n+1 .. n+m, with b_0 = 1
    rows = [[coef(k - j) for j in range(1, m + 1)] for k in range(n + 1, n + m + 1)]
    rhs = [-coef(k) for k in range(n + 1, n + m + 1)]
    b = [Fraction(1)] + _solve_exact(rows, rhs)
    a = [sum(b[j] * coef(k - j) for j in range(min(k, m) + 1)) for k in range(n + 1)]
    return tuple(a), tuple(b)


@lru_cache(maxsize=None)
def pade_poles(n):
    """Poles ``z_p`` and partial-fraction weights ``c_p`` of ``chi_[n/n+1]``.

    ``chi_[n/n+1](z) = sum_p c_p / (z - z_p)``.
    """
    num, den = pade_coefficients(n)
    num_desc = np.array([float(v) for v in num[::-1]])
    den_desc = np.array([float(v) for v in den[::-1]])
    poles = np.roots(den_desc).astype(complex)
    dden = np.polyder(den_desc)
    # np.roots loses a few digits at higher order
    for _ in range(3):
        poles = poles - np.polyval(den_desc, poles) / np.polyval(dden, poles)
    weights = np.polyval(num_desc, poles) / np.polyval(dden, poles)
    order = np.lexsort((poles.imag, poles.real))
    return poles[order], weights[order]


@dataclass(frozen=True)
class RegulatorApproximant:
    """Exact coefficients of ``chi_[n/n+1]`` in ascending powers.

    For odd ``n`` the leading numerator coefficient vanishes, so the
    numerator degree is ``n - 1``; ``numerator`` still has ``n + 1`` entries.
    """

    order: int
    numerator: tuple
    denominator: tuple

    @classmethod
    def of_order(cls, n):
        num, den = pade_coefficients(n)
        return cls(n, num, den)

    @property
    def numerator_degree(self):
        return max(k for k, v in enumerate(self.numerator) if v != 0)

    @property
    def denominator_degree(self):
        return len(self.denominator) - 1

    def __call__(self, z):
        return pade_regulator(self.order, z)


def pade_regulator(n, z):
    """Value of the ``[n/n+1]`` Padé approximant of ``chi`` at ``z``."""
    num, den = pade_coefficients(n)
    z = np.asarray(z, dtype=complex)
    poles, _ = pade_poles(n)
    if np.any(np.min(np.abs(z[..., None] - poles), axis=-1) < 1e-12):
        raise PoleError(f"z coincides with a pole of chi_[{n}/{n + 1}]")
    p = np.polyval([float(v) for v in num[::-1]], z)
    q = np.polyval([float(v) for v in den[::-1]], z)
    return p / q


def pade_regulator_derivative(n, z):
    num, den = pade_coefficients(n)
    pn = np.array([float(v) for v in num[::-1]])
    qd = np.array([float(v) for v in den[::-1]])
    z = np.asarray(z, dtype=complex)
    p, q = np.polyval(pn, z), np.polyval(qd, z)
    dp, dq = np.polyval(np.polyder(pn), z), np.polyval(np.polyder(qd), z)
    return (dp * q - p * dq) / q**2


def chi_exact(z):
    """``(1 - exp(-z)) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS
    zs = z[small]
    out[small] = sum(((-zs) ** k) / factorial(k + 1) for k in range(_SERIES_TERMS))
    zl = z[~small]
    out[~small] = -np.expm1(-zl) / zl
    return out if out.ndim else out[()]


def chi_exact_derivative(z):
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS
    zs = z[small]
    out[small] = sum(
        k * (-1) ** k * zs ** (k - 1) / factorial(k + 1) for k in range(1, _SERIES_TERMS)
    )
    zl = z[~small]
    out[~small] = (np.exp(-zl) * (zl + 1.0) - 1.0) / zl**2
    return out if out.ndim else out[()]


def sinc(x):
    """``sin(x)/x`` with ``sinc(0) = 1``; series below ``|x| < 1e-4``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = 1.0 - xs**2 / 6.0 + xs**4 / 120.0
    out[~small] = np.sin(x[~small]) / x[~small]
    return out if out.ndim else out[()]


def regulator(order, z):
    """Exact regulator when ``order`` is None, else the Padé approximant."""
    return chi_exact(z) if order is None else pade_regulator(order, z)


def regulator_derivative(order, z):
    return chi_exact_derivative(z) if order is None else pade_regulator_derivative(order, z)
