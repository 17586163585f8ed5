"""Gaussian-state evolution, thermal covariances and master-equation coefficients.

The finite-time thermal covariance is evaluated in the frequency domain:
with ``Psi(w, t) = int_0^t Phi_P(s) exp(-i w s) ds`` (``Phi_P`` the momentum
columns of the propagator),

    sigma_T(t) = (1/pi) int_0^inf Re[Psi(w, t) nu~(w) Psi(w, t)^H] dw .

For propagators generated by a matrix ``E`` on an extended phase space
``Psi`` has the closed form ``Pr (E - i w)^-1 (exp(t E) exp(-i w t) - 1) T_P``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from .exceptions import (
    AccuracyError,
    DivergentIntegralError,
    IllConditionedError,
    UnsupportedVariantError,
    ValidationError,
)
from .kernels import (
    FieldPair,
    LocalDamping,
    Microscopic,
    coth_weight,
    damping_laplace,
    fdr_kernel,
    noise_fourier,
    noise_time,
    pole_expansion,
)
from .propagator import (
    _real_or_raise,
    extended_generator,
    pole_linearization,
    propagator,
)
from ._filon import FilonTransform

PHYSICALITY_FLOOR = -1e-10


@dataclass(frozen=True)
class QuadratureSettings:
    """Tolerances for the frequency integrals.

    Adaptive (late-time) integrals: ``omega_max_factor`` sets the end of the
    finite panel, ``omega_max = factor * max(|spectral scales|)``; the rest
    of the real line is mapped onto a finite interval.

    Filon (finite-time) integrals: node spacing is ``density`` times the
    distance to the nearest spectral feature, the grid reaches ``reach``
    times the largest scale, and ``max_refinements`` halvings of ``density``
    are attempted.

    ``error_factor`` is the slack allowed between an error estimate and the
    requested tolerance before an ``AccuracyError`` is raised.
    """

    rtol: float = 1e-9
    atol: float = 1e-13
    limit: int = 20000
    omega_max_factor: float = 50.0
    error_factor: float = 10.0
    density: float = 0.05
    reach: float = 1e6
    max_refinements: int = 3

    @classmethod
    def from_env(cls, prefix="QBMNET_"):
        """Defaults overridden by ``QBMNET_RTOL``, ``QBMNET_ATOL``, ... if set."""
        kwargs = {}
        for name, conv in (
            ("rtol", float),
            ("atol", float),
            ("limit", int),
            ("omega_max_factor", float),
            ("error_factor", float),
            ("density", float),
            ("reach", float),
            ("max_refinements", int),
        ):
            raw = os.environ.get(prefix + name.upper())
            if raw is not None:
                kwargs[name] = conv(raw)
        return cls(**kwargs)


DEFAULT_QUADRATURE = QuadratureSettings()


def symplectic_form(n):
    """``J = [[0, 1], [-1, 0]]`` in ``(X, P)`` ordering."""
    z, e = np.zeros((n, n)), np.eye(n)
    return np.block([[z, e], [-e, z]])


def physicality_margin(cov):
    """Minimal eigenvalue of ``cov + (i/2) J``; non-negative for physical states."""
    n = cov.shape[0] // 2
    return float(np.linalg.eigvalsh(cov + 0.5j * symplectic_form(n)).min())


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance in ``(X_1..X_N, P_1..P_N)`` ordering."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size) or mean.size % 2:
            raise ValidationError(
                f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}"
            )
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValidationError("covariance matrix is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def n(self):
        return self.mean.size // 2

    def physicality_margin(self):
        return physicality_margin(self.cov)

    def is_physical(self, floor=PHYSICALITY_FLOOR):
        return self.physicality_margin() >= floor

    @classmethod
    def vacuum(cls, net):
        """Ground state of the free network."""
        w, v = net.normal_modes
        xx = net.mass_isqrt @ (v / (2.0 * w)) @ v.T @ net.mass_isqrt
        pp = net.mass_sqrt @ (v * (w / 2.0)) @ v.T @ net.mass_sqrt
        z = np.zeros_like(xx)
        return cls(np.zeros(2 * net.n), np.block([[xx, z], [z, pp]]))


class ThermalCovariance:
    """Environment-induced covariance ``sigma_T`` with its four blocks."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.n = self.matrix.shape[0] // 2

    @property
    def xx(self):
        return self.matrix[: self.n, : self.n]

    @property
    def xp(self):
        return self.matrix[: self.n, self.n :]

    @property
    def px(self):
        return self.matrix[self.n :, : self.n]

    @property
    def pp(self):
        return self.matrix[self.n :, self.n :]

    def __repr__(self):
        return f"ThermalCovariance(n={self.n})"


@dataclass(frozen=True)
class MasterCoefficients:
    """Drift ``H(t) = -Phi' Phi^-1`` and diffusion ``D(t)``."""

    drift: np.ndarray
    diffusion: np.ndarray
    time: float = field(default=0.0)


# --------------------------------------------------------------------------
# quadrature plumbing


def _integrate(fun, points, omega_max, settings, what):
    pts = sorted(p for p in set(points) if 0.0 < p < omega_max)
    kw = dict(epsabs=settings.atol, epsrel=settings.rtol, limit=settings.limit)
    head, err_head = integrate.quad_vec(fun, 0.0, omega_max, points=pts or None, **kw)
    tail, err_tail = integrate.quad_vec(fun, omega_max, np.inf, **kw)
    total = head + tail
    err = err_head + err_tail
    allowed = settings.error_factor * max(settings.atol, settings.rtol * np.linalg.norm(total))
    if not np.all(np.isfinite(total)):
        raise DivergentIntegralError(f"{what}: integral is not finite")
    if err > allowed:
        raise AccuracyError(f"{what}: error estimate {err:.2e} exceeds {allowed:.2e}")
    return total


def _breakpoints(eigs, omega_min=1e-12):
    pts = []
    for mu in eigs:
        w, g = abs(mu.imag), abs(mu.real)
        if w > omega_min:
            pts.append(w)
            for k in (0.5, 3.0, 20.0):
                pts.extend([w - k * g, w + k * g])
        elif g > 0:
            pts.append(g)
    return [p for p in pts if p > 0]


def _spectral_scale(net, eigs):
    scale = max(np.abs(eigs).max() if len(eigs) else 0.0, net.frequencies.max())
    return scale


def _generator_for(net, spec):
    if isinstance(spec, FieldPair) and spec.pade_order is None:
        raise UnsupportedVariantError(
            "covariance quadrature is only available for Padé-regulated field kernels"
        )
    if spec.size != net.n:
        raise ValidationError("damping spec and network differ in size")
    return extended_generator(net, spec)


# --------------------------------------------------------------------------
# finite-time thermal covariance


def _check_local_noise(spec):
    if isinstance(spec, LocalDamping) and spec.noise_cutoff is None:
        raise DivergentIntegralError(
            "momentum variance diverges for local damping without a noise cutoff"
        )


def _microscopic_series(net, spec, env, gen, times, derivative):
    # discrete bath: the frequency integral collapses onto the bath modes
    n, e, dim = net.n, gen.generator, gen.dim
    t_p = gen.constraint[:, n:].astype(e.dtype)
    b = np.array([expm(t * e) for t in times]) @ t_p
    w_b, weights = spec.bath_modes()
    kappa = w_b * coth_weight(w_b, env)
    sig = np.zeros((len(times), 2 * n, 2 * n))
    dsig = np.zeros_like(sig)
    for wb, kb, wt in zip(w_b, kappa, weights):
        phase = np.exp(-1j * wb * times)[:, None, None]
        psi = np.linalg.solve((e - 1j * wb * np.eye(dim))[None], b * phase - t_p[None])[:, : 2 * n]
        psi_h = np.conj(np.swapaxes(psi, 1, 2))
        sig += np.real(psi @ (kb * wt) @ psi_h)
        if derivative:
            m = (b * phase)[:, : 2 * n] @ (kb * wt) @ psi_h
            dsig += np.real(m + np.conj(np.swapaxes(m, 1, 2)))
    return (sig, dsig) if derivative else sig


def _spectral_scales(net, spec, env, eigs):
    """Centres and widths of every spectral feature of the integrand."""
    eigs = np.asarray(eigs, dtype=complex)
    centres = [abs(mu.imag) for mu in eigs]
    widths = [abs(mu.real) for mu in eigs]
    if not isinstance(spec, LocalDamping):
        for rate in pole_expansion(spec).rates:
            centres.append(abs(rate.imag))
            widths.append(abs(rate.real))
    elif spec.noise_cutoff is not None:
        centres.append(0.0)
        widths.append(spec.noise_cutoff)
    if env.temperature > 0:
        centres.append(0.0)
        widths.append(2.0 * np.pi * env.temperature)
    return np.array(centres), np.array(widths)


def _frequency_grid(centres, widths, w_max, density):
    # local spacing density * distance-to-nearest-feature, so the node count
    # grows only logarithmically with the ratio of scales
    nodes = [0.0]
    w = 0.0
    while w < w_max:
        w += density * np.min(widths + np.abs(w - centres))
        nodes.append(w)
    if len(nodes) % 2 == 0:
        nodes.insert(-1, 0.5 * (nodes[-2] + nodes[-1]))
    return np.array(nodes)


class _SpectralModel:
    """Samples of ``S1(w) = Z nu~ Z^H`` with ``Z = (E - i w)^-1 T_P``."""

    def __init__(self, net, spec, env, gen, density, reach):
        e, n = gen.generator, net.n
        self.n, self.e = n, e
        self.real = not np.iscomplexobj(e) or not np.abs(e.imag).any()
        eigs = np.linalg.eigvals(e)
        if np.any(np.abs(eigs.real) <= 1e-12 * np.maximum(np.abs(eigs), 1.0)):
            raise UnsupportedVariantError(
                "finite-time covariance requires every characteristic root to be damped"
            )
        centres, widths = _spectral_scales(net, spec, env, eigs)
        w_max = reach * max(np.max(centres + widths), net.frequencies.max())
        self.nodes = _frequency_grid(centres, widths, w_max, density)
        t_p = gen.constraint[:, n:].astype(complex)
        nu = np.array([noise_fourier(spec, w, env) for w in self.nodes])
        self.pos = self._samples(e, t_p, self.nodes, nu)
        self.neg = None if self.real else self._samples(e, t_p, -self.nodes, nu).conj()

    @staticmethod
    def _samples(e, t_p, omegas, nu):
        dim = e.shape[0]
        a = e[None] - 1j * omegas[:, None, None] * np.eye(dim)[None]
        z = np.linalg.solve(a, np.broadcast_to(t_p, (len(omegas),) + t_p.shape))
        return z @ nu @ np.conj(np.swapaxes(z, 1, 2))

    def tail(self, times):
        """Estimates of the truncated tails of ``sigma`` and ``sigma'``.

        Assumes ``|S1| ~ w^-3`` beyond the grid.  The ``X'`` tail oscillates
        and contributes ``~ |w S1(W)| / t``; for ``t < 1/W`` it cancels in
        ``sigma'`` up to ``O(t |E|)``.
        """
        w = self.nodes[-1]
        mag = np.abs(self.pos[-1]).max()
        if self.neg is not None:
            mag = max(mag, np.abs(self.neg[-1]).max())
        norm_e = np.linalg.norm(self.e, 2)
        t = times[times > 0]
        bound = np.minimum(w * t * norm_e, 1.0 / t).max() if t.size else 0.0
        return mag * w / np.pi, mag * w * bound / np.pi

    def correlation(self, times, derivative, coarse=False):
        """``X(t) = (1/2pi) int e^{-iwt} S1(w) dw`` (and ``X'(t)``)."""
        step = 2 if coarse else 1
        nodes = self.nodes[::step]
        fp = FilonTransform(nodes, self.pos[::step])
        fm = None if self.neg is None else FilonTransform(nodes, self.neg[::step])
        out = []
        for power in (0, 1) if derivative else (0,):
            a = fp.transform(times, power)
            if fm is None:
                out.append(a.real / np.pi)
            else:
                out.append((a + np.conj(fm.transform(times, power))) / (2.0 * np.pi))
        return out


def _evolution(e, times):
    """``exp(t E)`` for every ``t``, by eigendecomposition when well conditioned."""
    mu, v = np.linalg.eig(e)
    if np.linalg.cond(v) < 1e8:
        vinv = np.linalg.inv(v)
        return np.einsum("ik,tk,kj->tij", v, np.exp(np.multiply.outer(times, mu)), vinv)
    return np.array([expm(t * e) for t in times])


def _assemble(model, times, derivative, coarse, evolution):
    n, e = model.n, model.e
    p = slice(0, 2 * n)
    xs = model.correlation(times, derivative, coarse)
    s = model.correlation([0.0], False, coarse)[0][0]
    u = evolution
    uh = np.conj(np.swapaxes(u, 1, 2))
    x = xs[0]
    us = u @ s
    ux = u @ x
    a = us @ uh + s - ux - np.conj(np.swapaxes(ux, 1, 2))
    sig = np.real(a[:, p, p])
    if not derivative:
        return sig, None
    b = e @ us @ uh - e @ ux - u @ xs[1]
    dsig = np.real((b + np.conj(np.swapaxes(b, 1, 2)))[:, p, p])
    return sig, dsig


def thermal_covariance_series(net, spec, env, times, quadrature=None, derivative=False):
    """``sigma_T`` (and optionally ``d sigma_T/dt``) at several times.

    Expanding ``Psi nu~ Psi^H`` separates the time dependence into ``exp(tE)``
    factors and the stationary extended-space correlation
    ``X(t) = (1/2pi) int exp(-iwt) S1(w) dw``, ``S1 = Z nu~ Z^H``.  ``X`` is
    evaluated by cubic Filon quadrature on a graded frequency grid, so the
    cost does not grow with ``t`` and the derivative is exact for the
    discretised covariance.  The error is estimated against the same rule on
    every other node; the grid is refined up to ``max_refinements`` times.

    Returns an array of shape ``(len(times), 2N, 2N)``, or a pair of such
    arrays when ``derivative`` is true.
    """
    settings = quadrature or DEFAULT_QUADRATURE
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValidationError("times must be finite and non-negative")
    _check_local_noise(spec)
    gen = _generator_for(net, spec)
    if isinstance(spec, Microscopic):
        return _microscopic_series(net, spec, env, gen, times, derivative)
    evolution = _evolution(gen.generator, times)
    density = settings.density
    for _ in range(settings.max_refinements + 1):
        model = _SpectralModel(net, spec, env, gen, density, settings.reach)
        sig, dsig = _assemble(model, times, derivative, False, evolution)
        sig_c, dsig_c = _assemble(model, times, derivative, True, evolution)
        tail, tail_d = model.tail(times)
        checks = [(sig, sig_c, tail, "sigma_T")]
        if derivative:
            checks.append((dsig, dsig_c, tail_d, "d sigma_T/dt"))
        failed = None
        for fine, coarse, tail_est, name in checks:
            err = np.abs(fine - coarse).max() / 15.0 + tail_est
            allowed = settings.error_factor * max(
                settings.atol, settings.rtol * np.abs(fine).max()
            )
            if err > allowed:
                failed = (name, err, allowed)
                break
        if failed is None:
            sig = _symmetrize(sig)
            return (sig, _symmetrize(dsig)) if derivative else sig
        density /= 2.0
    name, err, allowed = failed
    raise AccuracyError(
        f"{name}: error estimate {err:.2e} exceeds {allowed:.2e} "
        f"after {settings.max_refinements} refinements"
    )


def _symmetrize(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def noise_time_series(spec, taus, env, quadrature=None):
    """Noise kernel ``nu(tau)`` at many lags from one Filon transform.

    ``nu(tau) = (1/pi) int_0^inf nu~(w) cos(w tau) dw`` on a grid graded
    around the spectral features of ``nu~``, with an asymptotic correction
    for the truncated tail.  Lags shorter than about 20 / reach are smoothed
    by the truncation.
    """
    settings = quadrature or DEFAULT_QUADRATURE
    taus = np.abs(np.atleast_1d(np.asarray(taus, dtype=float)))
    if isinstance(spec, Microscopic):
        return np.array([noise_time(spec, t, env) for t in taus])
    _check_local_noise(spec)
    centres, widths = _spectral_scales(None, spec, env, [])
    if centres.size == 0:
        raise UnsupportedVariantError("noise spectrum has no finite scale")
    w_max = settings.reach * np.max(centres + widths)
    nodes = _frequency_grid(centres, widths, w_max, settings.density / 2.0)
    nu = np.array([noise_fourier(spec, w, env) for w in nodes])
    head = FilonTransform(nodes, nu).transform(taus).real
    # two-term integration by parts for the truncated tail; valid for w_max tau >> 1
    w_end = nodes[-1]
    slope = (nu[-1] - nu[-2]) / (nodes[-1] - nodes[-2])
    tail = np.zeros_like(head)
    far = taus * w_end > 20.0
    tf = taus[far][:, None, None]
    tail[far] = -nu[-1] * np.sin(w_end * tf) / tf - slope * np.cos(w_end * tf) / tf**2
    return (head + tail) / np.pi


def _lag_panels(t, fine=0.25, depth=48):
    # geometric panels resolve the log singularity of nu at zero lag,
    # uniform panels resolve the oscillations of the propagator
    edges = list(np.arange(0.0, t, fine)[1:]) + [t]
    first = edges[0]
    edges = [first * 0.5**k for k in range(depth, 0, -1)] + edges
    return np.array([0.0] + edges)


def _direct_thermal_covariance(net, spec, env, t, nodes=24, quadrature=None):
    # sigma_T(t) = int_0^t du [D(u) + D(u)^T],
    # D(u) = int_0^{t-u} Phi_P(a) nu(u) Phi_P(a+u)^T da
    gen = _generator_for(net, spec)
    n = net.n
    mu, v = np.linalg.eig(gen.generator)
    left = v[: 2 * n]
    right = np.linalg.solve(v, gen.constraint[:, n:].astype(complex))
    x, wts = np.polynomial.legendre.leggauss(nodes)

    def phi_p(a):
        return np.real(np.einsum("ik,...k,kj->...ij", left, np.exp(np.multiply.outer(a, mu)), right))

    edges = _lag_panels(t)
    lo, hi = edges[:-1, None], edges[1:, None]
    u = (0.5 * (hi - lo) * (x + 1.0) + lo).ravel()
    wu = (0.5 * (hi - lo) * wts).ravel()
    nus = noise_time_series(spec, u, env, quadrature)
    inner_x, inner_w = np.polynomial.legendre.leggauss(max(nodes, int(8 * t) + 16))
    total = np.zeros((2 * n, 2 * n))
    for uk, wk, nu in zip(u, wu, nus):
        half = 0.5 * (t - uk)
        a = half * (inner_x + 1.0)
        d = half * np.einsum("a,aik,kl,ajl->ij", inner_w, phi_p(a), nu, phi_p(a + uk))
        total += wk * (d + d.T)
    return total


def thermal_covariance_time(net, spec, env, t, quadrature=None, method="spectral"):
    """Thermal covariance ``sigma_T(t)`` at a single time.

    ``method="spectral"`` (default) uses the frequency-domain representation
    described in the module docstring; ``method="direct"`` integrates the
    double time integral in lag variables with the noise kernel obtained by
    inverse Fourier transform (slow, intended for cross-checks).
    """
    t = float(t)
    if t < 0:
        raise ValidationError("t must be non-negative")
    if t == 0:
        return ThermalCovariance(np.zeros((2 * net.n, 2 * net.n)))
    if method == "direct":
        _check_local_noise(spec)
        return ThermalCovariance(_direct_thermal_covariance(net, spec, env, t, quadrature=quadrature))
    if method != "spectral":
        raise ValidationError(f"unknown method {method!r}")
    return ThermalCovariance(thermal_covariance_series(net, spec, env, [t], quadrature)[0])


# --------------------------------------------------------------------------
# late-time covariance


def _undamped_subspace(net, spec, probes=(0.37, 1.3, 4.1)):
    """Normal modes that decouple exactly from the environment."""
    n = net.n
    scale = net.frequencies.max()
    stack = []
    for p in probes:
        lam = net.mass_isqrt @ damping_laplace(spec, 1j * p * scale) @ net.mass_isqrt
        stack.extend([lam.real, lam.imag])
    a = np.vstack(stack)
    _, sv, vh = np.linalg.svd(a)
    ref = max(sv[0] if sv.size else 0.0, 1e-300)
    null = vh[np.concatenate([sv, np.zeros(n - sv.size)]) <= 1e-12 * ref]
    if null.size == 0:
        return np.zeros((n, 0)), np.zeros(0)
    z = null.T
    om2 = net.omega_squared
    if np.linalg.norm(om2 @ z - z @ (z.T @ om2 @ z)) > 1e-10 * np.linalg.norm(om2):
        return np.zeros((n, 0)), np.zeros(0)
    w2, u = np.linalg.eigh(z.T @ om2 @ z)
    return z @ u, np.sqrt(w2)


def _check_stability(net, spec, undamped_freqs):
    try:
        eigs = np.linalg.eigvals(pole_linearization(net, spec).generator)
    except UnsupportedVariantError:
        return np.zeros(0)
    keep = np.ones(eigs.size, bool)
    for w in undamped_freqs:
        for sign in (1, -1):
            d = np.abs(eigs - sign * 1j * w)
            k = int(np.argmin(np.where(keep, d, np.inf)))
            if d[k] < 1e-8 * max(w, 1.0):
                keep[k] = False
    rest = eigs[keep]
    if rest.size and rest.real.max() >= -1e-13 * max(np.abs(rest).max(), 1.0):
        raise DivergentIntegralError(
            f"unstable or marginal characteristic root {rest[np.argmax(rest.real)]}"
        )
    return rest


def thermal_covariance_late(net, spec, env, quadrature=None, form="linear"):
    """Stationary thermal covariance ``sigma_T(inf)``.

    ``form="linear"`` evaluates
    ``(1/2pi) int dw (kappa~/w) Im diag(G^(-iw), w^2 M G^(-iw) M)``,
    which relies on the FDR; ``form="quadratic"`` evaluates
    ``(1/pi) int_0^inf Re[Psi nu~ Psi^H] dw`` with ``Psi = Phi^_P(i w)`` and
    works for any noise spectrum.  Normal modes that decouple exactly from
    the environment are assigned their free thermal state (the zero-damping
    limit).
    """
    settings = quadrature or DEFAULT_QUADRATURE
    if isinstance(spec, Microscopic):
        raise UnsupportedVariantError("a finite bath has no stationary late-time limit")
    if isinstance(spec, FieldPair) and spec.pade_order is None:
        raise UnsupportedVariantError(
            "late-time quadrature with the exact field regulator is not supported"
        )
    if spec.size != net.n:
        raise ValidationError("damping spec and network differ in size")
    if isinstance(spec, LocalDamping):
        _check_local_noise(spec)
        form = "quadratic"
    n = net.n
    z, wz = _undamped_subspace(net, spec)
    if z.shape[1] and form == "quadratic":
        raise UnsupportedVariantError("quadratic form requires every mode to be damped")
    eigs = _check_stability(net, spec, wz)
    s_half, s_ihalf = net.mass_sqrt, net.mass_isqrt
    # orthonormal complement of the undamped subspace
    if z.shape[1]:
        q, _ = np.linalg.qr(np.hstack([z, np.eye(n)]))
        w_basis = q[:, z.shape[1] :]
    else:
        w_basis = np.eye(n)
    om2_w = w_basis.T @ net.omega_squared @ w_basis

    def green_damped(s):
        lam = s_ihalf @ damping_laplace(spec, s) @ s_ihalf
        k = s * s * np.eye(w_basis.shape[1]) + 2.0 * s * (w_basis.T @ lam @ w_basis) + om2_w
        inner = np.linalg.solve(k, np.eye(k.shape[0]))
        return s_ihalf @ w_basis @ inner @ w_basis.T @ s_ihalf

    m = net.mass
    if form == "linear":

        def integrand(w):
            g = green_damped(-1j * w)
            kappa = fdr_kernel(w, env)
            xx = kappa * g.imag / w
            pp = kappa * w * (m @ g.imag @ m)
            z0 = np.zeros((n, n))
            return np.block([[xx, z0], [z0, pp]]).ravel() / np.pi

    elif form == "quadratic":
        gen = _generator_for(net, spec)
        e, t_p, dim = gen.generator, gen.constraint[:, n:], gen.dim

        def integrand(w):
            psi = -np.linalg.solve(e - 1j * w * np.eye(dim), t_p)[: 2 * n]
            nu = noise_fourier(spec, w, env)
            return np.real(psi @ nu @ psi.conj().T).ravel() / np.pi

    else:
        raise ValidationError(f"unknown form {form!r}")

    omega_max = settings.omega_max_factor * _spectral_scale(net, eigs)
    flat = _integrate(integrand, _breakpoints(eigs), omega_max, settings, "late covariance")
    sigma = _symmetrize(flat.reshape(2 * n, 2 * n))
    for k in range(z.shape[1]):
        v, w = z[:, k], wz[k]
        weight = fdr_kernel(w, env) / (2.0 * w * w)
        vx, vp = s_ihalf @ v, s_half @ v
        sigma[:n, :n] += weight * np.outer(vx, vx)
        sigma[n:, n:] += weight * w * w * np.outer(vp, vp)
    return ThermalCovariance(sigma)


# --------------------------------------------------------------------------
# state evolution and master equation


def _as_state(state0, net):
    if not isinstance(state0, GaussianState):
        raise ValidationError("state0 must be a GaussianState")
    if state0.n != net.n:
        raise ValidationError("state and network differ in size")
    margin = state0.physicality_margin()
    if margin < PHYSICALITY_FLOOR:
        raise ValidationError(f"unphysical initial covariance (margin {margin:.3e})")
    return state0


def evolve_gaussian(state0, net, spec, env, t, quadrature=None):
    """Mean ``Phi m0`` and covariance ``Phi cov0 Phi^T + sigma_T(t)``."""
    state0 = _as_state(state0, net)
    phi = propagator(net, spec, t).matrix
    sigma = thermal_covariance_time(net, spec, env, t, quadrature).matrix
    return GaussianState(phi @ state0.mean, phi @ state0.cov @ phi.T + sigma)


def evolve_gaussian_series(state0, net, spec, env, times, quadrature=None):
    """``evolve_gaussian`` at many times sharing one frequency quadrature."""
    state0 = _as_state(state0, net)
    sig = thermal_covariance_series(net, spec, env, times, quadrature)
    out = []
    for t, s in zip(np.atleast_1d(times), sig):
        phi = propagator(net, spec, t).matrix
        out.append(GaussianState(phi @ state0.mean, phi @ state0.cov @ phi.T + s))
    return out


def _drift(phi, phi_dot, t):
    cond = np.linalg.cond(phi)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedError(f"Phi({t}) has condition number {cond:.3e}")
    return -np.linalg.solve(phi.T, phi_dot.T).T


def master_coefficient_series(net, spec, env, times, quadrature=None):
    """Drift and diffusion matrices at several times (analytic derivatives)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    gen = _generator_for(net, spec)
    sig, dsig = thermal_covariance_series(net, spec, env, times, quadrature, derivative=True)
    u = _evolution(gen.generator, times) @ gen.constraint
    phis = _real_or_raise(u[:, : 2 * net.n], "Phi")
    phi_dots = _real_or_raise((gen.generator @ u)[:, : 2 * net.n], "Phi'")
    out = []
    for t, s, ds, phi, phi_dot in zip(times, sig, dsig, phis, phi_dots):
        h = _drift(phi, phi_dot, t)
        d = 0.5 * (h @ s + s @ h.T + ds)
        out.append(MasterCoefficients(h, 0.5 * (d + d.T), float(t)))
    return out


def master_coefficients(net, spec, env, t, h=None, quadrature=None):
    """Coefficients ``H = -Phi' Phi^-1`` and ``D = (H s + s H^T + s')/2``.

    With ``h`` given, ``Phi'`` and ``sigma_T'`` are taken by central
    differences of step ``h`` (one-sided at ``t < h``); otherwise they are
    evaluated analytically.
    """
    t = float(t)
    if t < 0:
        raise ValidationError("t must be non-negative")
    if h is None:
        return master_coefficient_series(net, spec, env, [t], quadrature)[0]
    if t >= h:
        grid, wts = [t - h, t + h], np.array([-0.5, 0.5]) / h
    else:
        grid, wts = [t, t + h, t + 2 * h], np.array([-1.5, 2.0, -0.5]) / h
    phis = [propagator(net, spec, s).matrix for s in grid]
    sigs = thermal_covariance_series(net, spec, env, grid + [t], quadrature)
    phi = propagator(net, spec, t).matrix
    phi_dot = sum(w * p for w, p in zip(wts, phis))
    ds = sum(w * s for w, s in zip(wts, sigs[:-1]))
    drift = _drift(phi, phi_dot, t)
    s = sigs[-1]
    d = 0.5 * (drift @ s + s @ drift.T + ds)
    return MasterCoefficients(drift, 0.5 * (d + d.T), t)


__all__ = [
    "GaussianState",
    "MasterCoefficients",
    "QuadratureSettings",
    "ThermalCovariance",
    "evolve_gaussian",
    "evolve_gaussian_series",
    "master_coefficient_series",
    "master_coefficients",
    "noise_time_series",
    "physicality_margin",
    "symplectic_form",
    "thermal_covariance_late",
    "thermal_covariance_series",
    "thermal_covariance_time",
]
