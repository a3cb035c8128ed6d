"""One-dimensional potential functions ``g`` with ``g(0) = 0``.

Every Azema-Yor type functional in this package has the shape

    f(s) * g(s - y) + int_s^inf f(x) g'(x - y) dx

for some nondecreasing ``g``: the renewal function ``h``, its ``q``-resolvent
version ``h_q``, or the half-normal CDF for the constant clock. A
:class:`Potential` bundles ``g``, ``g'``, an antiderivative of ``g`` and the
exponentially damped tail integral, so that weight functions can evaluate
the tail term in closed form whenever one exists.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, special

from .errors import NumericalError

__all__ = [
    "Potential",
    "PowerPotential",
    "SaturatingExpPotential",
    "HalfNormalCdfPotential",
    "ScaledLawPotential",
    "scaled_upper_gamma",
]


def scaled_upper_gamma(p: float, x) -> np.ndarray:
    """``exp(x) * Gamma(p, x)`` for ``p > 0`` and ``x >= 0`` without overflow."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape)
    small = x <= 50.0
    xs = x[small]
    out[small] = np.exp(xs) * special.gammaincc(p, xs) * special.gamma(p)
    xl = x[~small]
    if xl.size:
        # asymptotic series; terms shrink like k!/x**k so 12 terms is plenty at x > 50
        term = np.ones_like(xl)
        acc = np.ones_like(xl)
        for k in range(1, 13):
            term = term * (p - k) / xl
            acc = acc + term
        out[~small] = xl ** (p - 1.0) * acc
    return out


class Potential:
    """Base class; subclasses override what they know in closed form."""

    def __call__(self, u) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, u) -> np.ndarray:
        raise NotImplementedError

    def antideriv(self, u) -> np.ndarray:
        """An antiderivative of ``g`` vanishing at 0."""
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        for i, ui in np.ndenumerate(u):
            val, err = integrate.quad(lambda v: float(self(v)), 0.0, ui, limit=200)
            out[i] = val
        return out

    def integral(self, u0, u1) -> np.ndarray:
        return self.antideriv(u1) - self.antideriv(u0)

    def exp_tail(self, c: float, z) -> np.ndarray:
        """``int_0^inf exp(-c w) g'(z + w) dw`` for ``c > 0``, ``z >= 0``."""
        # by parts: c int e^{-cw} g(z + w) dw - g(z); g is continuous where g' may not be
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        for i, zi in np.ndenumerate(z):
            val, err = integrate.quad(
                lambda w: c * np.exp(-c * w) * float(self(zi + w)), 0.0, np.inf, limit=200,
                epsabs=1e-14, epsrel=1e-11,
            )
            if err > 1e-8 * max(abs(val), 1e-300) and err > 1e-13:
                raise NumericalError("exponential tail quadrature did not converge", err)
            out[i] = val - float(self(zi))
        return out

    @property
    def limit(self) -> float:
        """``g(+inf)`` (may be ``inf``)."""
        return np.inf


class PowerPotential(Potential):
    """``g(u) = u**p`` on ``u >= 0``; ``p = 1`` is the Brownian renewal function."""

    def __init__(self, p: float):
        if not p > 0:
            raise ValueError("power must be positive")
        self.p = float(p)

    def __call__(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return u**self.p

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        if self.p == 1.0:
            return np.ones(u.shape)
        with np.errstate(divide="ignore"):
            return self.p * u ** (self.p - 1.0)

    def antideriv(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return u ** (self.p + 1.0) / (self.p + 1.0)

    def exp_tail(self, c, z):
        # p * int_0^inf e^{-cw} (z+w)^{p-1} dw = p c^{-p} e^{cz} Gamma(p, cz)
        z = np.asarray(z, dtype=float)
        if self.p == 1.0:
            return np.full(z.shape, 1.0 / c)
        return self.p * c ** (-self.p) * scaled_upper_gamma(self.p, c * z)


class SaturatingExpPotential(Potential):
    """``g(u) = (1 - exp(-theta u)) / theta``, the Brownian ``h_q`` with ``theta = sqrt(2q)``."""

    def __init__(self, theta: float):
        if not theta > 0:
            raise ValueError("theta must be positive")
        self.theta = float(theta)

    def __call__(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return -np.expm1(-self.theta * u) / self.theta

    def deriv(self, u):
        return np.exp(-self.theta * np.asarray(u, dtype=float))

    def antideriv(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        th = self.theta
        return u / th + np.expm1(-th * u) / th**2

    def exp_tail(self, c, z):
        return np.exp(-self.theta * np.asarray(z, dtype=float)) / (c + self.theta)

    @property
    def limit(self):
        return 1.0 / self.theta


class HalfNormalCdfPotential(Potential):
    """``g(u) = P(|N(0, T)| <= u) = erf(u / sqrt(2T))``: the law of a Brownian supremum at time ``T``."""

    def __init__(self, horizon: float):
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        self.horizon = float(horizon)
        self._a = np.sqrt(2.0 * horizon)

    def __call__(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return special.erf(u / self._a)

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(-(u**2) / (2.0 * self.horizon)) * np.sqrt(2.0 / (np.pi * self.horizon))

    def antideriv(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        a = self._a
        return u * special.erf(u / a) + (a / np.sqrt(np.pi)) * (np.exp(-(u**2) / a**2) - 1.0)

    def exp_tail(self, c, z):
        z = np.asarray(z, dtype=float)
        T = self.horizon
        return np.exp(-(z**2) / (2.0 * T)) * special.erfcx((z + c * T) / np.sqrt(2.0 * T))

    @property
    def limit(self):
        return 1.0


class ScaledLawPotential(Potential):
    """``g(u) = F(k u) / norm`` for a tabulated distribution function ``F``.

    Used for the stable ``h_q``, which is ``P(S_{e_q} <= u) / kappa(q, 0)``
    and by scaling ``P(S_{e_1} <= q**(1/alpha) u)``.
    """

    def __init__(self, table, scale: float, norm: float):
        self.table = table
        self.scale = float(scale)
        self.norm = float(norm)

    def __call__(self, u):
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return self.table.cdf(self.scale * u) / self.norm

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        return self.scale * self.table.pdf(self.scale * u) / self.norm

    @property
    def limit(self):
        return 1.0 / self.norm
