"""Green functions and phase-space propagators.

Three construction paths are provided:

* ``propagator_local``: matrix exponential of the local-damping generator;
* ``propagator_rational``: matrix exponential on an extended phase space
  (positions, momenta and auxiliary forces) for damping kernels that are
  rational in the Laplace domain;
* ``characteristic_roots`` / ``green_time_modes``: pseudo-normal-mode
  decomposition of the Green function.

Phase-space vectors are ordered ``(X_1..X_N, P_1..P_N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .exceptions import (
    ConvergenceError,
    DegenerateSpectrumError,
    InconsistentModesError,
    RootCollisionError,
    UnsupportedVariantError,
    ValidationError,
)
from .kernels import (
    LocalDamping,
    RegulatedOhmic,
    _as_matrix,
    _check_positive_definite,
    _check_symmetric,
    _sym_power,
    damping_laplace,
    damping_laplace_derivative,
    pole_expansion,
)


@dataclass(frozen=True)
class OscillatorNetwork:
    """System oscillators with mass matrix ``mass`` and renormalized springs ``spring``."""

    mass: np.ndarray
    spring: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.mass, "mass")
        c = _as_matrix(self.spring, "spring")
        if m.shape != c.shape:
            raise ValidationError("mass and spring matrices differ in shape")
        for a, name in ((m, "mass"), (c, "spring")):
            _check_symmetric(a, name)
            _check_positive_definite(a, name)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "spring", c)

    @property
    def n(self):
        return self.mass.shape[0]

    @cached_property
    def mass_inv(self):
        return np.linalg.inv(self.mass)

    @cached_property
    def mass_sqrt(self):
        return _sym_power(self.mass, 0.5)

    @cached_property
    def mass_isqrt(self):
        return _sym_power(self.mass, -0.5)

    @cached_property
    def omega_squared(self):
        a = self.mass_isqrt @ self.spring @ self.mass_isqrt
        return 0.5 * (a + a.T)

    @cached_property
    def normal_modes(self):
        """Normal-mode frequencies (ascending) and M^1/2-orthonormal vectors."""
        w2, v = np.linalg.eigh(self.omega_squared)
        return np.sqrt(w2), v

    @property
    def frequencies(self):
        return self.normal_modes[0]


class PhasePropagator:
    """Homogeneous phase-space propagator ``Phi(t)``.

    Blocks, in the notation of the Green function ``G``:
    ``[[G' M, G], [M G'' M, M G']]``.
    """

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.n = self.matrix.shape[0] // 2

    @classmethod
    def from_green(cls, net, green):
        m = net.mass
        top = np.hstack([green.g_dot @ m, green.g])
        bottom = np.hstack([m @ green.g_ddot @ m, m @ green.g_dot])
        return cls(np.vstack([top, bottom]))

    @property
    def gdot_m(self):
        return self.matrix[: self.n, : self.n]

    @property
    def g(self):
        return self.matrix[: self.n, self.n :]

    @property
    def m_gddot_m(self):
        return self.matrix[self.n :, : self.n]

    @property
    def m_gdot(self):
        return self.matrix[self.n :, self.n :]

    def __repr__(self):
        return f"PhasePropagator(n={self.n})"


class GreenFunction(NamedTuple):
    g: np.ndarray
    g_dot: np.ndarray
    g_ddot: np.ndarray


def _scalar_spectrum_point(s):
    s = complex(s)
    if not np.isfinite(s):
        raise ValidationError("s must be finite")
    return s


def resolvent_matrix(net, spec, s):
    """``s^2 M + 2 s gamma^(s) + C``."""
    s = _scalar_spectrum_point(s)
    return s * s * net.mass + 2.0 * s * damping_laplace(spec, s) + net.spring


def green_laplace(net, spec, s):
    """Laplace-domain Green function ``[s^2 M + 2 s gamma^(s) + C]^-1``."""
    k = resolvent_matrix(net, spec, s)
    cond = np.linalg.cond(k)
    if not np.isfinite(cond) or cond > 1e14:
        raise RootCollisionError(f"s = {s} is (numerically) a characteristic root", cond)
    return np.linalg.solve(k, np.eye(net.n, dtype=complex))


def local_generator(net, gamma0):
    """``H = [[0, -M^-1], [C, 2 gamma0 M^-1]]`` so that ``Phi(t) = exp(-t H)``."""
    gamma0 = np.atleast_2d(np.asarray(gamma0, dtype=float))
    n = net.n
    return np.block(
        [
            [np.zeros((n, n)), -net.mass_inv],
            [net.spring, 2.0 * gamma0 @ net.mass_inv],
        ]
    )


def _check_time(t):
    t = float(t)
    if not t >= 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    return t


def propagator_local(net, gamma0, t):
    t = _check_time(t)
    return PhasePropagator(expm(-t * local_generator(net, gamma0)))


@dataclass(frozen=True)
class ExtendedGenerator:
    """Time-translation generator on an extended phase space.

    ``generator`` acts on ``(X, P, aux...)`` and ``constraint`` maps the
    physical initial data ``(X0, P0)`` onto the full initial vector.
    """

    generator: np.ndarray
    constraint: np.ndarray
    n: int
    bare_spring: np.ndarray | None = None

    @property
    def dim(self):
        return self.generator.shape[0]

    def evolve(self, t):
        """``exp(t F) T`` restricted to the physical rows (complex if F is)."""
        return (expm(t * self.generator) @ self.constraint)[: 2 * self.n]

    def evolve_derivative(self, t):
        f = self.generator
        return (f @ expm(t * f) @ self.constraint)[: 2 * self.n]


def _real_or_raise(a, what, rtol=1e-8):
    if np.iscomplexobj(a):
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a.imag).max() > rtol * scale:
            raise InconsistentModesError(f"{what} has a non-negligible imaginary part")
        return a.real.copy()
    return a


def _regulated_ohmic_generator(net, spec):
    n = net.n
    lam, g0, c = spec.cutoff, spec.gamma0, net.spring
    bare = c + 2.0 * lam @ g0
    zero, eye = np.zeros((n, n)), np.eye(n)
    f = np.block(
        [
            [zero, net.mass_inv, zero],
            [zero, zero, eye],
            [-lam @ c, (-2.0 * lam @ g0 - c) @ net.mass_inv, -lam],
        ]
    )
    t = np.block([[eye, zero], [zero, eye], [-bare, zero]])
    return ExtendedGenerator(f, t, n, bare_spring=bare)


def _factor_residue(r, rtol=1e-12):
    u, sv, vh = np.linalg.svd(r)
    if sv.size == 0 or sv[0] == 0:
        return np.zeros((r.shape[0], 0)), np.zeros((0, r.shape[0]))
    k = int(np.sum(sv > rtol * sv[0]))
    return u[:, :k] * sv[:k], vh[:k]


def pole_linearization(net, spec):
    """Minimal auxiliary-force linearization of the nonlocal Langevin equation.

    Each pole ``R_p lam_p / (lam_p + s)`` with ``R_p = A_p B_p^T`` contributes
    auxiliary variables ``y_p`` with ``F_p = A_p y_p``,
    ``y_p' = -lam_p y_p - 2 lam_p B_p^T M^-1 P`` and
    ``y_p(0) = -2 lam_p B_p^T X0``.  Any local part enters as the drag
    ``-2 gamma_loc M^-1 P``.
    """
    n = net.n
    pe = pole_expansion(spec)
    minv = net.mass_inv
    blocks_a, blocks_bt, lams = [], [], []
    for lam, r in zip(pe.rates, pe.residues):
        a, bt = _factor_residue(r)
        if a.shape[1]:
            blocks_a.append(a)
            blocks_bt.append(bt)
            lams.append(np.full(a.shape[1], lam))
    k = sum(a.shape[1] for a in blocks_a)
    dtype = complex if (k and not pe.is_real) else float
    dim = 2 * n + k
    f = np.zeros((dim, dim), dtype=dtype)
    t = np.zeros((dim, 2 * n), dtype=dtype)
    f[:n, n : 2 * n] = minv
    f[n : 2 * n, :n] = -net.spring
    f[n : 2 * n, n : 2 * n] = -2.0 * pe.local @ minv
    t[: 2 * n, : 2 * n] = np.eye(2 * n)
    if k:
        a_all = np.hstack(blocks_a)
        bt_all = np.vstack(blocks_bt)
        lam_all = np.concatenate(lams)
        if dtype is float:
            a_all, bt_all, lam_all = a_all.real, bt_all.real, lam_all.real
        f[n : 2 * n, 2 * n :] = a_all
        f[2 * n :, n : 2 * n] = -2.0 * lam_all[:, None] * (bt_all @ minv)
        f[2 * n :, 2 * n :] = -np.diag(lam_all)
        t[2 * n :, :n] = -2.0 * lam_all[:, None] * bt_all
    return ExtendedGenerator(f, t, n)


def extended_generator(net, spec):
    """Extended-phase-space generator for a rational damping kernel.

    ``RegulatedOhmic`` uses the force-space form ``(X, P, F = P')``;
    ``LocalDamping`` reduces to ``-H``; other rational kernels use the
    auxiliary-force linearization of ``pole_linearization``.
    """
    if spec.size != net.n:
        raise ValidationError("damping spec and network differ in size")
    if isinstance(spec, RegulatedOhmic):
        return _regulated_ohmic_generator(net, spec)
    if isinstance(spec, LocalDamping):
        h = local_generator(net, spec.gamma0)
        return ExtendedGenerator(-h, np.eye(2 * net.n), net.n)
    return pole_linearization(net, spec)


def propagator_rational(net, spec, t):
    t = _check_time(t)
    gen = extended_generator(net, spec)
    return PhasePropagator(_real_or_raise(gen.evolve(t), "exp(tF) T"))


def propagator(net, spec, t):
    """Dispatch to the appropriate propagator construction."""
    if isinstance(spec, LocalDamping):
        return propagator_local(net, spec.gamma0, t)
    return propagator_rational(net, spec, t)


# --------------------------------------------------------------------------
# Pseudo-normal modes


@dataclass(frozen=True)
class PseudoModeSet:
    """Characteristic roots ``f_k`` and mode vectors ``U_k`` (rows of ``vectors``).

    In mass-normalized coordinates the Laplace Green function is
    ``sum_k U_k U_k^T / (f_k (s - f_k))``.
    """

    roots: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return len(self.roots)

    def outer(self):
        return np.einsum("ki,kj->kij", self.vectors, self.vectors)

    def sum_rules(self):
        """``(sum_k U_k U_k^T, sum_k U_k U_k^T / f_k)``; ideally ``(1, 0)``."""
        uu = self.outer()
        return uu.sum(axis=0), np.einsum("k,kij->ij", 1.0 / self.roots, uu)


def _char_matrix(net, spec, f):
    lam = net.mass_isqrt @ damping_laplace(spec, f) @ net.mass_isqrt
    return f * f * np.eye(net.n) + 2.0 * f * lam + net.omega_squared


def _char_derivative(net, spec, f):
    lam = net.mass_isqrt @ damping_laplace(spec, f) @ net.mass_isqrt
    dlam = net.mass_isqrt @ damping_laplace_derivative(spec, f) @ net.mass_isqrt
    return 2.0 * f * np.eye(net.n) + 2.0 * lam + 2.0 * f * dlam


def newton_root(net, spec, f0, maxiter=60, tol=1e-14):
    """Refine a root of ``det[f^2 + 2 f lambda^(f) + Omega^2]`` by Newton.

    The Newton step uses Jacobi's formula,
    ``d/df log det K = tr(K^-1 K')``.
    """
    f = complex(f0)
    history = [f]
    for _ in range(maxiter):
        k = _char_matrix(net, spec, f)
        try:
            step = 1.0 / np.trace(np.linalg.solve(k, _char_derivative(net, spec, f)))
        except np.linalg.LinAlgError:
            return f
        if not np.isfinite(step):
            return f
        f = f - step
        history.append(f)
        if abs(step) <= tol * max(abs(f), 1.0):
            return f
    raise ConvergenceError(
        f"Newton iteration did not converge from {f0}", {"iterates": history}
    )


def _null_vector(k):
    _, sv, vh = np.linalg.svd(k)
    return vh[-1].conj(), sv[-1] / max(sv[0], 1.0)


def mode_vector(net, spec, f):
    """Mode vector ``U`` normalized so the residue of ``G^`` at ``f`` is ``U U^T / f``."""
    u, _ = _null_vector(_char_matrix(net, spec, f))
    denom = u @ _char_derivative(net, spec, f) @ u
    vec = u * np.sqrt(f / denom)
    k = int(np.argmax(np.abs(vec)))
    if vec[k].real < 0:
        vec = -vec
    return vec


def characteristic_roots(net, spec, residual_tol=1e-9, separation_tol=1e-8):
    """All roots of the nonlinear eigenproblem for a rational damping kernel.

    Starting points are the eigenvalues of the minimal linearization (whose
    dimension equals the number of roots); each is polished by Newton
    iteration on the determinant.
    """
    if spec.size != net.n:
        raise ValidationError("damping spec and network differ in size")
    try:
        lin = pole_linearization(net, spec)
    except UnsupportedVariantError:
        raise
    starts = np.linalg.eigvals(lin.generator)
    roots = np.array([newton_root(net, spec, f0) for f0 in starts])
    for f in roots:
        k = _char_matrix(net, spec, f)
        sv = np.linalg.svd(k, compute_uv=False)
        scale = sv[0] + abs(f) * np.linalg.norm(_char_derivative(net, spec, f), 2)
        rel = sv[-1] / scale
        if rel > residual_tol:
            raise ConvergenceError(
                f"root {f} has relative residual {rel:.2e}",
                {"roots": roots, "starts": starts},
            )
    for i in range(len(roots)):
        for j in range(i):
            if abs(roots[i] - roots[j]) < separation_tol * max(abs(roots[i]), 1e-300):
                if abs(starts[i] - starts[j]) < separation_tol * max(abs(starts[i]), 1e-300):
                    raise DegenerateSpectrumError(
                        f"repeated characteristic root near {roots[i]}"
                    )
                raise ConvergenceError(
                    f"{len(roots)} roots expected but two starts converged to {roots[i]}",
                    {"roots": roots, "starts": starts, "expected": lin.dim},
                )
    order = np.lexsort((roots.imag, roots.real))
    roots = roots[order]
    vectors = np.array([mode_vector(net, spec, f) for f in roots])
    return PseudoModeSet(roots=roots, vectors=vectors)


def green_time_modes(modes, net, t, imag_tol=1e-10):
    """``G``, ``G'`` and ``G''`` at time ``t`` from a pseudo-mode set."""
    t = _check_time(t)
    uu = modes.outer()
    e = np.exp(modes.roots * t)
    s = net.mass_isqrt
    parts = [
        np.einsum("k,kij->ij", e / modes.roots, uu),
        np.einsum("k,kij->ij", e, uu),
        np.einsum("k,kij->ij", e * modes.roots, uu),
    ]
    out = []
    for p in parts:
        scale = max(np.abs(p).max(), 1.0)
        if np.abs(p.imag).max() > imag_tol * scale:
            raise InconsistentModesError(
                f"pseudo-mode sum has imaginary part {np.abs(p.imag).max():.2e}"
            )
        out.append(s @ p.real @ s)
    return GreenFunction(*out)
