"""Damping, dissipation, noise and FDR kernels.

Conventions: hbar = c = k_B = 1; Fourier transforms use
``f~(w) = int dt exp(-i w t) f(t)``; Laplace transforms
``f^(s) = int_0^inf dt exp(-s t) f(t)``.

A damping kernel is described by one of four ``DampingSpec`` variants:

``LocalDamping``
    delta-correlated damping ``gamma0``.
``RegulatedOhmic``
    ``gamma^(s) = gamma0 (1 + s/Lambda)^-1`` with commuting matrices.
``FieldPair``
    local detectors in a common massless scalar field,
    ``gamma^_ij(s) = gamma0 chi(r_ij s)`` with ``chi`` the exact regulator or a
    Padé approximant of it.
``Microscopic``
    a finite bath of oscillators with mass ``m``, springs ``c`` and bilinear
    coupling ``-x^T g X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate

from .exceptions import UnsupportedVariantError, ValidationError
from .regulators import (
    pade_poles,
    regulator,
    regulator_derivative,
    sinc,
)

PSD_FLOOR = -1e-10
COMMUTATOR_TOL = 1e-12


def _as_matrix(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def _check_symmetric(a, name, rtol=1e-12):
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    if np.abs(a - a.T).max() > rtol * scale:
        raise ValidationError(f"{name} is not symmetric")


def _check_positive_definite(a, name):
    w = np.linalg.eigvalsh(a)
    if w.min() <= 0:
        raise ValidationError(f"{name} is not positive definite (min eigenvalue {w.min():.3e})")


def _sym_power(a, p):
    w, v = np.linalg.eigh(a)
    return (v * w**p) @ v.T


@dataclass(frozen=True)
class ThermalEnvironment:
    """Reservoir temperature in energy units; 0 selects the vacuum limit."""

    temperature: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.temperature) or self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")


class DampingSpec:
    """Base class of the damping-kernel variants."""

    size: int

    def validate(self):
        pass


@dataclass(frozen=True)
class LocalDamping(DampingSpec):
    """Local (delta-correlated) damping ``gamma(t) = 2 gamma0 delta(t)``.

    ``noise_cutoff`` optionally rolls the noise spectrum off as
    ``1 / (1 + (w / noise_cutoff)^2)``.  Without it the momentum variance of
    a locally damped oscillator diverges logarithmically.

    The pair is not derived from a bath, so the evolved state can violate the
    uncertainty relation for ``t`` of order ``1 / noise_cutoff^2``, by an amount
    of order ``gamma0 / noise_cutoff^2``.  Regulated kernels do not.
    """

    gamma0: np.ndarray
    noise_cutoff: Optional[float] = None

    def __post_init__(self):
        g = _as_matrix(self.gamma0, "gamma0")
        _check_symmetric(g, "gamma0")
        object.__setattr__(self, "gamma0", g)
        if self.noise_cutoff is not None and not self.noise_cutoff > 0:
            raise ValidationError("noise_cutoff must be positive")

    @property
    def size(self):
        return self.gamma0.shape[0]


@dataclass(frozen=True)
class RegulatedOhmic(DampingSpec):
    gamma0: np.ndarray
    cutoff: np.ndarray

    def __post_init__(self):
        g = _as_matrix(self.gamma0, "gamma0")
        lam = _as_matrix(self.cutoff, "cutoff")
        if lam.shape != g.shape:
            raise ValidationError("gamma0 and cutoff must have the same shape")
        _check_symmetric(g, "gamma0")
        _check_symmetric(lam, "cutoff")
        _check_positive_definite(g, "gamma0")
        _check_positive_definite(lam, "cutoff")
        comm = np.linalg.norm(g @ lam - lam @ g)
        if comm > COMMUTATOR_TOL * np.linalg.norm(g) * np.linalg.norm(lam):
            raise ValidationError("gamma0 and cutoff do not commute")
        object.__setattr__(self, "gamma0", g)
        object.__setattr__(self, "cutoff", lam)

    @property
    def size(self):
        return self.gamma0.shape[0]


@dataclass(frozen=True)
class FieldPair(DampingSpec):
    """Detectors at ``positions`` coupled to a common scalar field.

    Separations below ``r0`` (in particular the diagonal) are replaced by
    ``r0``.  ``pade_order=None`` selects the exact regulator.
    """

    gamma0: float
    positions: np.ndarray
    r0: float
    pade_order: Optional[int] = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValidationError("positions must be an (N,) or (N, d) array")
        object.__setattr__(self, "positions", pos)
        if not self.gamma0 > 0:
            raise ValidationError("gamma0 must be positive")
        if not self.r0 > 0:
            raise ValidationError("r0 must be positive")
        if self.pade_order is not None and not 0 <= self.pade_order <= 5:
            raise ValidationError("pade_order must be None or in [0, 5]")

    @property
    def size(self):
        return self.positions.shape[0]

    @property
    def separations(self):
        d = np.linalg.norm(self.positions[:, None, :] - self.positions[None, :, :], axis=-1)
        return np.maximum(d, self.r0)


@dataclass(frozen=True)
class Microscopic(DampingSpec):
    """Finite bath: masses ``m``, springs ``c``, coupling ``g`` (n_bath x N)."""

    m: np.ndarray
    c: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.m, "m")
        c = _as_matrix(self.c, "c")
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if g.shape[0] != m.shape[0] or c.shape != m.shape:
            raise ValidationError("bath matrices have inconsistent shapes")
        for a, name in ((m, "m"), (c, "c")):
            _check_symmetric(a, name)
            _check_positive_definite(a, name)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "g", g)

    @property
    def size(self):
        return self.g.shape[1]

    def bath_modes(self):
        """Bath frequencies ``w_b`` and weights ``W_b``.

        ``gamma(tau) = sum_b W_b cos(w_b tau)``.
        """
        m_isqrt = _sym_power(self.m, -0.5)
        w2, v = np.linalg.eigh(m_isqrt @ self.c @ m_isqrt)
        w = np.sqrt(w2)
        proj = v.T @ m_isqrt @ self.g  # (n_bath, N)
        weights = np.einsum("bi,bj->bij", proj, proj) / (2.0 * w2)[:, None, None]
        return w, weights


# --------------------------------------------------------------------------
# FDR kernel


def fdr_kernel(omega, env):
    """``w coth(w / 2T)``; ``|w|`` at T = 0 and ``2T`` at w = 0."""
    omega = np.asarray(omega, dtype=float)
    temperature = env.temperature if isinstance(env, ThermalEnvironment) else float(env)
    if temperature == 0:
        out = np.abs(omega)
    else:
        x = omega / (2.0 * temperature)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(np.abs(x) < 1e-8, 2.0 * temperature, omega / np.tanh(x))
    return out if out.ndim else float(out)


def coth_weight(omega, env):
    """``coth(w / 2T)`` for w > 0, with the T = 0 limit 1."""
    temperature = env.temperature if isinstance(env, ThermalEnvironment) else float(env)
    if temperature == 0:
        return np.ones_like(np.asarray(omega, dtype=float))
    return 1.0 / np.tanh(np.asarray(omega, dtype=float) / (2.0 * temperature))


# --------------------------------------------------------------------------
# Pole expansion of rational kernels


@dataclass(frozen=True)
class PoleExpansion:
    """``gamma^(s) = local + sum_p R_p lam_p / (lam_p + s)``."""

    local: np.ndarray
    rates: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    residues: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0), complex))

    @property
    def is_real(self):
        return bool(np.all(self.rates.imag == 0) and np.all(self.residues.imag == 0))

    def laplace(self, s):
        w = self.rates / (self.rates + s)
        return self.local + np.einsum("p,pij->ij", w, self.residues)

    def laplace_derivative(self, s):
        w = -self.rates / (self.rates + s) ** 2
        return np.einsum("p,pij->ij", w, self.residues) + 0.0 * self.local


def _group_equal(values, rtol=1e-12):
    groups = []
    for idx, v in np.ndenumerate(values):
        for g in groups:
            if abs(g[0] - v) <= rtol * max(abs(v), abs(g[0])):
                g[1].append(idx)
                break
        else:
            groups.append((v, [idx]))
    return groups


def pole_expansion(spec):
    """Express a rational damping kernel as a sum of simple poles."""
    n = spec.size
    if isinstance(spec, LocalDamping):
        return PoleExpansion(local=spec.gamma0.copy(), residues=np.zeros((0, n, n), complex))
    if isinstance(spec, RegulatedOhmic):
        lam, vecs = np.linalg.eigh(spec.cutoff)
        rates, residues = [], []
        for value, members in _group_equal(lam):
            v = vecs[:, [i[0] for i in members]]
            proj = v @ v.T
            rates.append(value)
            residues.append(spec.gamma0 @ proj)
        return PoleExpansion(
            local=np.zeros((n, n)),
            rates=np.asarray(rates, dtype=complex),
            residues=np.asarray(residues, dtype=complex),
        )
    if isinstance(spec, FieldPair):
        if spec.pade_order is None:
            raise UnsupportedVariantError("the exact field regulator is not rational")
        z_p, c_p = pade_poles(spec.pade_order)
        rates, residues = [], []
        for r, members in _group_equal(spec.separations):
            mask = np.zeros((n, n))
            for idx in members:
                mask[idx] = 1.0
            for z, c in zip(z_p, c_p):
                # c / (r s - z) = (-c/z) / (1 - r s / z)
                rates.append(-z / r)
                residues.append(spec.gamma0 * (-c / z) * mask)
        return PoleExpansion(
            local=np.zeros((n, n)),
            rates=np.asarray(rates, dtype=complex),
            residues=np.asarray(residues, dtype=complex),
        )
    if isinstance(spec, Microscopic):
        w, weights = spec.bath_modes()
        # s / (s^2 + w^2) = 1/2 [1/(s + i w) + 1/(s - i w)]
        rates = np.concatenate([1j * w, -1j * w])
        residues = np.concatenate(
            [weights / (2j * w)[:, None, None], -weights / (2j * w)[:, None, None]]
        )
        return PoleExpansion(local=np.zeros((n, n)), rates=rates, residues=residues)
    raise UnsupportedVariantError(f"unknown damping variant {type(spec).__name__}")


# --------------------------------------------------------------------------
# Kernel evaluation


def damping_laplace(spec, s):
    """Laplace-domain damping kernel ``gamma^(s)`` (complex N x N)."""
    s = complex(s)
    if isinstance(spec, LocalDamping):
        return spec.gamma0.astype(complex)
    if isinstance(spec, RegulatedOhmic):
        n = spec.size
        return spec.gamma0 @ np.linalg.inv(np.eye(n) + s * np.linalg.inv(spec.cutoff))
    if isinstance(spec, FieldPair):
        return spec.gamma0 * regulator(spec.pade_order, spec.separations * s)
    if isinstance(spec, Microscopic):
        w, weights = spec.bath_modes()
        return np.einsum("b,bij->ij", s / (s * s + w * w), weights)
    raise UnsupportedVariantError(f"unknown damping variant {type(spec).__name__}")


def damping_laplace_derivative(spec, s):
    """``d gamma^ / ds``."""
    s = complex(s)
    if isinstance(spec, FieldPair):
        r = spec.separations
        return spec.gamma0 * r * regulator_derivative(spec.pade_order, r * s)
    if isinstance(spec, Microscopic):
        w, weights = spec.bath_modes()
        return np.einsum("b,bij->ij", (w * w - s * s) / (s * s + w * w) ** 2, weights)
    return pole_expansion(spec).laplace_derivative(s)


def damping_fourier(spec, omega, linewidth=None):
    """Fourier-domain damping kernel ``gamma~(w)`` (real symmetric N x N).

    For a ``Microscopic`` bath the spectrum is a comb of delta functions; it
    is only returned when a Lorentzian ``linewidth`` is supplied.
    """
    omega = float(omega)
    if isinstance(spec, LocalDamping):
        return 2.0 * spec.gamma0
    if isinstance(spec, RegulatedOhmic):
        x = omega * np.linalg.inv(spec.cutoff)
        return 2.0 * spec.gamma0 @ np.linalg.inv(np.eye(spec.size) + x @ x)
    if isinstance(spec, FieldPair):
        r = spec.separations
        if spec.pade_order is None:
            return 2.0 * spec.gamma0 * sinc(r * omega)
        return 2.0 * spec.gamma0 * np.real(regulator(spec.pade_order, 1j * r * omega))
    if isinstance(spec, Microscopic):
        if linewidth is None:
            raise UnsupportedVariantError(
                "a discrete bath has a delta-comb spectrum; pass a linewidth"
            )
        w, weights = spec.bath_modes()
        lor = linewidth / ((omega - w) ** 2 + linewidth**2)
        lor = lor + linewidth / ((omega + w) ** 2 + linewidth**2)
        return np.einsum("b,bij->ij", lor, weights)
    raise UnsupportedVariantError(f"unknown damping variant {type(spec).__name__}")


def noise_fourier(spec, omega, env, linewidth=None):
    """Noise spectrum ``nu~(w) = kappa~(w) gamma~(w)``.

    A ``LocalDamping`` spec with ``noise_cutoff`` additionally carries the
    roll-off factor ``1 / (1 + (w/noise_cutoff)^2)``.
    """
    out = fdr_kernel(omega, env) * damping_fourier(spec, omega, linewidth=linewidth)
    if isinstance(spec, LocalDamping) and spec.noise_cutoff is not None:
        out = out / (1.0 + (omega / spec.noise_cutoff) ** 2)
    return out


class MicroscopicKernels(NamedTuple):
    dissipation: np.ndarray
    noise: np.ndarray
    damping: np.ndarray


def microscopic_kernels(g, m, c, env, tau):
    """Stationary kernels induced by a discrete bath at lag ``tau``.

    Parameters
    ----------
    g : (n_bath, N) array
        Coupling matrix in ``-x^T g X``.
    m, c : (n_bath, n_bath) arrays
        Bath mass and spring matrices (positive definite).
    env : ThermalEnvironment
    tau : float
        Time lag ``t - t'``.

    Returns
    -------
    MicroscopicKernels
        ``dissipation`` (mu), ``noise`` (nu) and ``damping`` (gamma), each N x N.
    """
    spec = Microscopic(m=m, c=c, g=g)
    w, weights = spec.bath_modes()
    coth = coth_weight(w, env)
    mu = -np.einsum("b,bij->ij", w * np.sin(w * tau), weights)
    nu = np.einsum("b,bij->ij", w * coth * np.cos(w * tau), weights)
    gamma = np.einsum("b,bij->ij", np.cos(w * tau), weights)
    return MicroscopicKernels(mu, nu, gamma)


def noise_time(spec, tau, env, epsabs=1e-10, limit=400):
    """Stationary noise kernel ``nu(tau)`` by inverse Fourier transform.

    Discrete baths are summed exactly.  For continuum kernels the transform
    ``(1/pi) int_0^inf nu~(w) cos(w tau) dw`` is computed with a Fourier
    quadrature rule; ``tau = 0`` is rejected since spectra decaying like
    ``1/w`` make it logarithmically divergent.
    """
    if isinstance(spec, Microscopic):
        return microscopic_kernels(spec.g, spec.m, spec.c, env, tau).noise
    tau = abs(float(tau))
    if tau == 0:
        raise UnsupportedVariantError("nu(0) is not finite for continuum kernels")
    n = spec.size
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            val, _ = integrate.quad(
                lambda w: noise_fourier(spec, w, env)[i, j],
                0.0,
                np.inf,
                weight="cos",
                wvar=tau,
                epsabs=epsabs,
                limlst=200,
                limit=limit,
            )
            out[i, j] = out[j, i] = val / np.pi
    return out


@dataclass(frozen=True)
class PositivityReport:
    min_eigenvalue: float
    worst_omega: float
    passed: bool


def validate_positivity(spec, omega_grid, linewidth=None):
    """Minimal eigenvalue of ``gamma~(w)`` over a frequency grid."""
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if omega_grid.size == 0:
        raise ValidationError("omega_grid must be nonempty")
    mins = [
        np.linalg.eigvalsh(damping_fourier(spec, w, linewidth=linewidth)).min()
        for w in omega_grid
    ]
    k = int(np.argmin(mins))
    return PositivityReport(float(mins[k]), float(omega_grid[k]), bool(mins[k] >= PSD_FLOOR))
