"""Fourier integrals of sampled smooth functions by cubic Filon quadrature.

``int_0^W f(w) exp(-i w t) dw`` is evaluated for many ``t`` at once by
integrating a cubic spline of ``f`` against the exponential exactly, so the
node count is independent of ``t``.
"""

from __future__ import annotations

from math import factorial

import numpy as np
from scipy.interpolate import CubicSpline

# |theta| below this uses the power series for the moments; above it the
# upward recursion loses at most k!/theta^k, i.e. ~400x at k = 4
_SERIES_CUT = 0.5
_SERIES_TERMS = 16
_T_CHUNK = 32


def unit_moments(theta, kmax):
    """``m_k(theta) = int_0^1 u^k exp(-i theta u) du`` for ``k = 0..kmax``.

    Returns an array of shape ``theta.shape + (kmax + 1,)``.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape + (kmax + 1,), dtype=complex)
    small = np.abs(theta) < _SERIES_CUT
    ts = theta[small]
    if ts.size:
        n = np.arange(_SERIES_TERMS)[:, None]
        k = np.arange(kmax + 1)[None, :]
        fact = np.array([float(factorial(j)) for j in range(_SERIES_TERMS)])[:, None]
        c = 1.0 / (fact * (n + k + 1))
        z = (-1j * ts)[..., None]
        acc = np.broadcast_to(c[-1], ts.shape + (kmax + 1,)).astype(complex)
        for j in range(_SERIES_TERMS - 2, -1, -1):
            acc = acc * z + c[j]
        out[small] = acc
    tl = theta[~small]
    if tl.size:
        e = np.exp(-1j * tl)
        it = 1j * tl
        prev = (1.0 - e) / it
        out[~small, 0] = prev
        for k in range(1, kmax + 1):
            prev = (k * prev - e) / it
            out[~small, k] = prev
    return out


class FilonTransform:
    """Cubic-spline model of vector-valued samples ``f(w_i)`` on a grid.

    ``transform(times, power)`` returns
    ``int_0^W (-i w)^power f(w) exp(-i w t) dw`` for ``power`` in {0, 1}.
    """

    def __init__(self, nodes, values):
        self.nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values)
        self.shape = values.shape[1:]
        flat = values.reshape(len(self.nodes), -1)
        spline = CubicSpline(self.nodes, flat, axis=0)
        # ascending coefficients a_k (k = 0..3) of the local polynomial in x = w - w_i
        self.coef = spline.c[::-1]
        self.width = np.diff(self.nodes)

    def _poly(self, power):
        a = self.coef
        if power == 0:
            return a
        left = self.nodes[:-1][None, :, None]
        out = np.zeros((5,) + a.shape[1:], dtype=complex)
        out[:4] += left * a
        out[1:] += a
        return -1j * out

    def transform(self, times, power=0):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        poly = self._poly(power)
        kmax = poly.shape[0] - 1
        h = self.width
        # scaled coefficients a_k h^(k+1)
        scaled = poly * (h[None, :, None] ** (np.arange(kmax + 1)[:, None, None] + 1))
        scaled = np.moveaxis(scaled, 0, 1).reshape(len(h) * (kmax + 1), -1)
        out = np.empty((len(times), scaled.shape[1]), dtype=complex)
        for start in range(0, len(times), _T_CHUNK):
            t = times[start : start + _T_CHUNK]
            mom = unit_moments(t[:, None] * h[None, :], kmax)
            phase = np.exp(-1j * t[:, None] * self.nodes[None, :-1])
            w = (mom * phase[..., None]).reshape(len(t), -1)
            out[start : start + len(t)] = w @ scaled
        return out.reshape((len(times),) + self.shape)

    def subgrid(self, values):
        """Same transform built on every other node (for error estimates)."""
        return FilonTransform(self.nodes[::2], np.asarray(values)[::2])
