"""A pair of detectors coupled to a common scalar field.

Each detector is an oscillator of mass ``M`` and frequency ``Omega0 +/-
detuning``.  The field induces the damping kernel
``gamma^_ij(s) = gamma0 chi(r_ij s)`` with the separation floored at ``r0``.
Sum and difference coordinates ``Q_+/-`` decouple at resonance; their decay
rates are the bright (super-radiant) and dark (sub-radiant) rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .covariance import GaussianState, thermal_covariance_late
from .exceptions import ConvergenceError, ValidationError
from .kernels import FieldPair, damping_laplace, damping_laplace_derivative
from .propagator import OscillatorNetwork, mode_vector, newton_root, pole_linearization
from .regulators import MAX_PADE_ORDER, pade_regulator

WEAK_COUPLING_LIMIT = 0.2


class RootTrackingWarning(UserWarning):
    """Bright/dark labels could not be carried unambiguously along the detuning."""


@dataclass(frozen=True)
class DetectorPair:
    """Two detectors at separation ``separation`` with frequencies ``Omega0 +/- detuning``.

    ``pade_order=None`` selects the exact field regulator.
    """

    omega0: float
    detuning: float
    gamma0: float
    separation: float
    r0: float
    mass: float = 1.0
    pade_order: Optional[int] = 0

    def __post_init__(self):
        for name in ("omega0", "gamma0", "r0", "mass"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value}")
        if not np.isfinite(self.detuning) or self.omega0 - abs(self.detuning) <= 0:
            raise ValidationError("detuning must satisfy |detuning| < omega0")
        if not np.isfinite(self.separation) or self.separation < self.r0:
            raise ValidationError(
                f"separation {self.separation} is below the minimal scale r0 = {self.r0}"
            )
        if self.pade_order is not None and not 0 <= self.pade_order <= MAX_PADE_ORDER:
            raise ValidationError(f"pade_order must be None or in [0, {MAX_PADE_ORDER}]")

    @property
    def frequencies(self):
        return np.array([self.omega0 + self.detuning, self.omega0 - self.detuning])

    def network(self):
        return OscillatorNetwork(
            self.mass * np.eye(2), self.mass * np.diag(self.frequencies**2)
        )

    def damping_spec(self, exact=False):
        order = None if exact else self.pade_order
        return FieldPair(self.gamma0, [0.0, self.separation], self.r0, order)

    def swapped(self):
        """The same pair with detector labels exchanged."""
        return replace(self, detuning=-self.detuning)

    def with_detuning(self, detuning):
        return replace(self, detuning=detuning)


class PMKernels(NamedTuple):
    plus: complex
    minus: complex


class ModeRates(NamedTuple):
    """Decay rate ``Gamma = -Re f``, ``Omega_Gamma = |f|`` and observed frequency ``|Im f|``."""

    gamma: float
    omega_gamma: float
    omega_observed: float
    root: complex

    @classmethod
    def from_root(cls, f):
        f = complex(f)
        return cls(-f.real, abs(f), abs(f.imag), f)


class PairRates(NamedTuple):
    plus: ModeRates
    minus: ModeRates
    ambiguous: bool = False


__all__ = [
    "DetectorPair",
    "ModeRates",
    "PMKernels",
    "PairRates",
    "RootTrackingWarning",
    "asymptotic_pair_state",
    "decay_rates",
    "pade_regulator",
    "pair_damping_laplace",
    "pm_kernels",
    "resonant_mode_root",
    "single_detector_rate",
    "track_rates",
    "weak_coupling_rates",
]


def pair_damping_laplace(pair, s, exact=False):
    """2x2 kernel ``gamma^(s)``; ``exact`` switches to the unapproximated regulator."""
    return damping_laplace(pair.damping_spec(exact), s)


def pm_kernels(pair, s, exact=False):
    """Kernels of the sum and difference coordinates, ``gamma^_11 +/- gamma^_12``."""
    g = pair_damping_laplace(pair, s, exact)
    return PMKernels(complex(g[0, 0] + g[0, 1]), complex(g[0, 0] - g[0, 1]))


def _scalar_newton(kernel, kernel_derivative, mass, omega, f0, maxiter=80, tol=1e-15):
    f = complex(f0)
    for _ in range(maxiter):
        k = f * f + 2.0 * f * kernel(f) / mass + omega * omega
        dk = 2.0 * f + 2.0 * (kernel(f) + f * kernel_derivative(f)) / mass
        step = k / dk
        f -= step
        if abs(step) <= tol * max(abs(f), 1.0):
            return f
    raise ConvergenceError(f"scalar Newton iteration did not converge from {f0}")


def resonant_mode_root(pair, branch, exact=False, f0=None):
    """Root of ``f^2 + 2 f gamma^_+/-(f) / M + Omega0^2`` near ``i Omega0``.

    Only meaningful at resonance, where the sum and difference coordinates
    decouple exactly.
    """
    if branch not in ("plus", "minus"):
        raise ValidationError("branch must be 'plus' or 'minus'")
    sign = 1.0 if branch == "plus" else -1.0
    spec = pair.damping_spec(exact)

    def kernel(f):
        g = damping_laplace(spec, f)
        return g[0, 0] + sign * g[0, 1]

    def kernel_derivative(f):
        g = damping_laplace_derivative(spec, f)
        return g[0, 0] + sign * g[0, 1]

    start = 1j * pair.omega0 if f0 is None else f0
    return _scalar_newton(kernel, kernel_derivative, pair.mass, pair.omega0, start)


def single_detector_rate(pair, exact=False):
    """Rates of one isolated detector of frequency ``Omega0``."""
    spec = FieldPair(pair.gamma0, [0.0], pair.r0, None if exact else pair.pade_order)

    def kernel(f):
        return damping_laplace(spec, f)[0, 0]

    def kernel_derivative(f):
        return damping_laplace_derivative(spec, f)[0, 0]

    start = 1j * pair.omega0 - pair.gamma0 / pair.mass
    f = _scalar_newton(kernel, kernel_derivative, pair.mass, pair.omega0, start)
    return ModeRates.from_root(f)


def _resonant_roots(pair, exact):
    # classify the two underdamped roots near i*Omega0 by exchange parity
    net = pair.network()
    spec = pair.damping_spec(exact)
    if spec.pade_order is None:
        # at resonance the branches decouple, so each scalar branch equation is
        # solved on its own; matrix Newton could jump to the other branch
        seed_pair = replace(pair, detuning=0.0, pade_order=0)
        roots = [
            resonant_mode_root(pair, b, exact=True, f0=resonant_mode_root(seed_pair, b))
            for b in ("plus", "minus")
        ]
    else:
        # only the two roots near i*Omega0 are needed; the cutoff branch may
        # be nearly degenerate at large separation
        eigs = np.linalg.eigvals(pole_linearization(net, spec).generator)
        upper = sorted((f for f in eigs if f.imag > 0), key=lambda f: abs(f - 1j * pair.omega0))
        if len(upper) < 2:
            raise ConvergenceError("fewer than two underdamped roots near the bare frequency")
        roots = [newton_root(net, spec, f) for f in upper[:2]]
    bright = np.array([1.0, 1.0]) / math.sqrt(2.0)
    parity = []
    for f in roots:
        u = mode_vector(net, spec, f)
        u = u / np.linalg.norm(u)
        parity.append(abs(bright @ u) ** 2)
    if abs(parity[0] - parity[1]) < 0.5:
        raise ConvergenceError("resonant roots do not separate into sum and difference modes")
    plus, minus = (roots[0], roots[1]) if parity[0] > parity[1] else (roots[1], roots[0])
    return plus, minus


# continuation step as a fraction of the current root gap
_STEP_FRACTION = 0.125


def _track(pair, exact, start, d_from, d_to):
    """Carry the (plus, minus) roots from detuning ``d_from`` to ``d_to``.

    Steps are a fixed fraction of the current gap between the two roots, so
    near-degenerate pairs are crossed finely and well-separated ones quickly.
    """
    plus, minus = start
    ambiguous = False
    current = float(d_from)
    floor = 1e-12 * pair.omega0
    while current != d_to:
        step = max(_STEP_FRACTION * abs(plus - minus), floor)
        if abs(d_to - current) <= step:
            current = d_to
        else:
            current += math.copysign(step, d_to - current)
        p = pair.with_detuning(current)
        net, spec = p.network(), p.damping_spec(exact)
        new_plus = newton_root(net, spec, plus)
        new_minus = newton_root(net, spec, minus)
        # each continued root must stay nearer its own predecessor
        if (
            abs(new_plus - new_minus) < 1e-9 * max(abs(new_plus), 1.0)
            or abs(new_plus - plus) >= abs(new_plus - minus)
            or abs(new_minus - minus) >= abs(new_minus - plus)
        ):
            ambiguous = True
        plus, minus = new_plus, new_minus
    return plus, minus, ambiguous


def _warn_ambiguous(detuning):
    warnings.warn(
        f"bright/dark labels may have swapped near detuning {detuning}",
        RootTrackingWarning,
        stacklevel=3,
    )


def decay_rates(pair, exact=False):
    """Bright (``plus``) and dark (``minus``) decay rates of the pair.

    The two underdamped roots near ``i Omega0`` are labelled at resonance by
    the parity of their mode vectors and carried to the requested detuning by
    Newton continuation.  A possible label swap is reported through
    ``PairRates.ambiguous`` and a ``RootTrackingWarning``.
    """
    start = _resonant_roots(pair.with_detuning(0.0), exact)
    if pair.detuning == 0:
        return PairRates(ModeRates.from_root(start[0]), ModeRates.from_root(start[1]))
    plus, minus, ambiguous = _track(pair, exact, start, 0.0, pair.detuning)
    if ambiguous:
        _warn_ambiguous(pair.detuning)
    return PairRates(ModeRates.from_root(plus), ModeRates.from_root(minus), ambiguous)


def track_rates(pair, detunings, exact=False):
    """Rates along a list of detunings, sharing one continuation path per sign.

    Detunings on either side of zero are tracked outward from resonance.
    """
    detunings = np.asarray(detunings, dtype=float)
    if detunings.ndim != 1 or detunings.size == 0:
        raise ValidationError("detunings must be a nonempty 1-d array")
    start = _resonant_roots(pair.with_detuning(0.0), exact)
    out = [None] * detunings.size
    for side in (1.0, -1.0):
        idx = [i for i, d in enumerate(detunings) if (d > 0 if side > 0 else d <= 0)]
        idx.sort(key=lambda i: abs(detunings[i]))
        plus, minus, current = start[0], start[1], 0.0
        for i in idx:
            d = float(detunings[i])
            plus, minus, amb = _track(pair, exact, (plus, minus), current, d)
            if amb:
                _warn_ambiguous(d)
            out[i] = PairRates(ModeRates.from_root(plus), ModeRates.from_root(minus), amb)
            current = d
    return out


def weak_coupling_rates(pair, exact=False):
    """First-order-in-``gamma0`` roots ``f = i Omega0 + eps``.

    ``eps`` are the eigenvalues of
    ``i diag((Omega_j^2 - Omega0^2) / (2 Omega0)) - gamma^(i Omega0) / M``,
    from linearizing the characteristic equation about ``i Omega0``; the
    detuning enters on the same footing as the damping so near-degenerate
    pairs are treated correctly.  Labels follow the larger overlap with the
    sum coordinate.
    """
    ratio = pair.gamma0 / (pair.mass * pair.omega0)
    if ratio > WEAK_COUPLING_LIMIT:
        warnings.warn(
            f"gamma0/(M Omega0) = {ratio:.3g} is not small; perturbative rates are unreliable",
            stacklevel=2,
        )
    w0 = pair.omega0
    shift = np.diag((pair.frequencies**2 - w0**2) / (2.0 * w0))
    lam = pair_damping_laplace(pair, 1j * w0, exact) / pair.mass
    eps, vecs = np.linalg.eig(1j * shift - lam)
    bright = np.array([1.0, 1.0]) / math.sqrt(2.0)
    overlap = [abs(bright @ (v / np.linalg.norm(v))) ** 2 for v in vecs.T]
    k_plus = int(np.argmax(overlap))
    if overlap[0] == overlap[1]:
        # exact tie (e.g. no damping): order by the eigenvalue itself
        k_plus = int(np.argmax(-eps.real))
    k_minus = 1 - k_plus
    roots = 1j * w0 + eps
    return PairRates(ModeRates.from_root(roots[k_plus]), ModeRates.from_root(roots[k_minus]))


def asymptotic_pair_state(pair, env, quadrature=None):
    """Stationary two-detector state (zero mean) in ``(X1, X2, P1, P2)`` ordering."""
    sigma = thermal_covariance_late(pair.network(), pair.damping_spec(), env, quadrature)
    return GaussianState(np.zeros(4), sigma.matrix)
