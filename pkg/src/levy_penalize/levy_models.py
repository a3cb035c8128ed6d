"""Catalog of oscillating Levy models and their fluctuation-theory closed forms.

Normalisation. The local time at the supremum is fixed by requiring the
renewal function to be ``h(x) = x`` (Brownian motion) or ``h(x) = x**(alpha*rho)``
(strictly stable). Since ``lam * int e^{-lam x} h(x) dx = 1 / kappa(0, lam)``
this pins

    kappa(0, lam) = lam**(alpha*rho) / Gamma(1 + alpha*rho),
    kappa(q, 0)   = c**rho * q**rho / Gamma(1 + alpha*rho),   c = cos(pi*alpha*(rho - 1/2)),
    n(s < zeta)   = c**rho * s**(-rho) / (Gamma(1 - rho) * Gamma(1 + alpha*rho)),

for the stable process with characteristic exponent of unit scale in the
Chambers-Mallows-Stuck parametrisation. For the Cauchy process this gives
``kappa(q, 0) = 2 sqrt(q/pi)``. Penalisation ratios do not depend on this
constant; only normalised masses do.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalError, UnsupportedCapability, UsageError
from .laplace import SupremumLawTable, SymmetricStableFactor
from .potentials import (
    Potential,
    PowerPotential,
    SaturatingExpPotential,
    ScaledLawPotential,
)

__all__ = [
    "CharTriplet",
    "LadderBundle",
    "LevyModel",
    "brownian",
    "stable",
    "parse_model",
    "h_eval",
    "kappa_eval",
    "hq_eval",
    "n_tail_eval",
    "sup_density_eval",
    "IdentityResult",
    "check_laplace_hq",
    "check_convolution_identity",
    "check_sup_law_exponential",
    "check_excursion_density_ratio",
    "q_over_kappa",
    "check_q_over_kappa",
]


def _nonneg(name: str, v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0):
        raise DomainError(f"{name} must be finite and nonnegative, got {v!r}")
    return a


def _positive(name: str, v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise DomainError(f"{name} must be finite and positive, got {v!r}")
    return a


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class CharTriplet:
    """Documentary Levy-Khinchin triplet, only used in reports."""

    gamma: float
    sigma2: float
    levy_measure: str


@dataclass(frozen=True)
class LadderBundle:
    h: Callable
    h_prime: Callable
    h_q: Callable
    hq_prime: Callable
    kappa: Callable
    n_tail: Callable
    sup_density: Optional[Callable]
    gamma_H: float


@dataclass(frozen=True)
class LevyModel:
    """A catalog model. Build with :func:`brownian`, :func:`stable` or :func:`parse_model`.

    ``alpha`` and ``rho`` are the self-similarity index and positivity
    parameter (2 and 1/2 for Brownian motion); ``beta`` is the skewness of
    the increment law.
    """

    kind: str
    alpha: float
    rho: float
    beta: float
    char_triplet: CharTriplet
    ladder: LadderBundle = field(repr=False, compare=False)
    _hq_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def is_brownian(self) -> bool:
        return self.kind == "brownian"

    @property
    def name(self) -> str:
        if self.is_brownian:
            return "brownian"
        return f"stable:alpha={self.alpha:g},rho={self.rho:g}"

    @property
    def symmetric(self) -> bool:
        return self.rho == 0.5

    @property
    def height_index(self) -> float:
        """``alpha * rho``, the index of ``h``."""
        return 1.0 if self.is_brownian else self.alpha * self.rho

    def h_potential(self) -> Potential:
        return PowerPotential(self.height_index)

    def hq_potential(self, q: float) -> Potential:
        """``h_q`` as a :class:`Potential`; ``q = 0`` gives ``h``."""
        q = float(_nonneg("q", q))
        if q == 0.0:
            return self.h_potential()
        if q not in self._hq_cache:
            if self.is_brownian:
                pot = SaturatingExpPotential(np.sqrt(2.0 * q))
            else:
                table = _stable_sup_table(self)
                pot = ScaledLawPotential(
                    table, q ** (1.0 / self.alpha), float(self.ladder.kappa(q, 0.0))
                )
            self._hq_cache[q] = pot
        return self._hq_cache[q]


@lru_cache(maxsize=None)
def _sup_table(alpha: float) -> SupremumLawTable:
    return SupremumLawTable(alpha)


def _stable_sup_table(model: LevyModel) -> SupremumLawTable:
    if not model.symmetric or model.alpha > 1.0:
        raise UnsupportedCapability(
            "h_q for stable models is available only for symmetric laws with alpha <= 1"
        )
    return _sup_table(model.alpha)


def _brownian_bundle() -> LadderBundle:
    def h(x):
        return np.asarray(x, dtype=float) * 1.0

    def h_prime(x):
        return np.ones(np.shape(x))

    def h_q(q, x):
        q, x = np.broadcast_arrays(np.asarray(q, float), np.asarray(x, float))
        k = np.sqrt(2.0 * q)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = -np.expm1(-k * x) / k
        return np.where(q == 0, x, val)

    def hq_prime(q, x):
        return np.exp(-np.sqrt(2.0 * np.asarray(q, float)) * np.asarray(x, float))

    def kappa(q, lam):
        return np.sqrt(2.0 * np.asarray(q, float)) + np.asarray(lam, float)

    def n_tail(s):
        return np.sqrt(2.0 / (np.pi * np.asarray(s, float)))

    def sup_density(t, x):
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        return np.sqrt(2.0 / (np.pi * t)) * np.exp(-(x**2) / (2.0 * t))

    return LadderBundle(h, h_prime, h_q, hq_prime, kappa, n_tail, sup_density, 1.0)


def brownian() -> LevyModel:
    """Standard Brownian motion, ``E exp(i theta X_1) = exp(-theta**2 / 2)``."""
    return LevyModel(
        kind="brownian",
        alpha=2.0,
        rho=0.5,
        beta=0.0,
        char_triplet=CharTriplet(0.0, 1.0, "none"),
        ladder=_brownian_bundle(),
    )


def stable(alpha: float, rho: float) -> LevyModel:
    """Strictly ``alpha``-stable process with positivity parameter ``rho``.

    The increment over unit time has characteristic exponent
    ``|theta|**alpha (1 - i beta sgn(theta) tan(pi alpha / 2))`` with
    ``tan(pi alpha (rho - 1/2)) = beta tan(pi alpha / 2)``; at ``alpha = 1``
    only the symmetric Cauchy process (``rho = 1/2``) is strictly stable.
    """
    alpha = float(alpha)
    rho = float(rho)
    if not (np.isfinite(alpha) and 0.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    lo, hi = max(0.0, 1.0 - 1.0 / alpha), min(1.0, 1.0 / alpha)
    if not (np.isfinite(rho) and 0.0 < rho < 1.0 and lo - 1e-12 <= rho <= hi + 1e-12):
        raise DomainError(f"rho={rho} outside the admissible range for alpha={alpha}")
    if alpha == 1.0:
        if abs(rho - 0.5) > 1e-12:
            raise DomainError("a strictly 1-stable process without drift must have rho = 1/2")
        beta = 0.0
    else:
        beta = float(np.tan(np.pi * alpha * (rho - 0.5)) / np.tan(np.pi * alpha / 2.0))
        beta = float(np.clip(beta, -1.0, 1.0))
    p = alpha * rho
    gp = special.gamma(1.0 + p)
    c_rho = np.cos(np.pi * alpha * (rho - 0.5)) ** rho
    symmetric = rho == 0.5
    factor = SymmetricStableFactor(alpha) if symmetric else None

    def h(x):
        return np.asarray(x, float) ** p

    def h_prime(x):
        with np.errstate(divide="ignore"):
            return p * np.asarray(x, float) ** (p - 1.0)

    def kappa(q, lam):
        q, lam = np.broadcast_arrays(np.asarray(q, float), np.asarray(lam, float))
        out = np.empty(q.shape)
        q0 = q == 0
        l0 = lam == 0
        out[q0] = lam[q0] ** p / gp
        only_q = l0 & ~q0
        out[only_q] = c_rho * q[only_q] ** rho / gp
        joint = ~q0 & ~l0
        if np.any(joint):
            if factor is None:
                raise UnsupportedCapability(
                    "joint kappa(q, lam) is only available for symmetric stable models"
                )
            out[joint] = factor.kappa(q[joint], lam[joint]) / gp
        return out

    def n_tail(s):
        return c_rho * np.asarray(s, float) ** (-rho) / (special.gamma(1.0 - rho) * gp)

    model_ref = {}

    def h_q(q, x):
        q, x = np.broadcast_arrays(np.asarray(q, float), np.asarray(x, float))
        out = np.empty(q.shape)
        for qi in np.unique(q):
            sel = q == qi
            out[sel] = model_ref["m"].hq_potential(qi)(x[sel])
        return out

    def hq_prime(q, x):
        q, x = np.broadcast_arrays(np.asarray(q, float), np.asarray(x, float))
        out = np.empty(q.shape)
        for qi in np.unique(q):
            sel = q == qi
            out[sel] = model_ref["m"].hq_potential(qi).deriv(x[sel])
        return out

    bundle = LadderBundle(
        h, h_prime, h_q, hq_prime, kappa, n_tail, None, 1.0 if abs(p - 1.0) < 1e-12 else 0.0
    )
    model = LevyModel(
        kind="stable",
        alpha=alpha,
        rho=rho,
        beta=beta,
        char_triplet=CharTriplet(0.0, 0.0, f"stable(alpha={alpha:g}, beta={beta:.6g})"),
        ladder=bundle,
    )
    model_ref["m"] = model
    return model


_STABLE_RE = re.compile(r"^stable:(.*)$")


def parse_model(text: str) -> LevyModel:
    """Parse ``"brownian"``, ``"cauchy"`` or ``"stable:alpha=<a>,rho=<r>"``."""
    t = text.strip().lower()
    if t == "brownian":
        return brownian()
    if t == "cauchy":
        return stable(1.0, 0.5)
    m = _STABLE_RE.match(t)
    if not m:
        raise UsageError("unknown model", text)
    params = {}
    for part in m.group(1).split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in ("alpha", "rho") or key in params:
            raise UsageError("bad stable parameter", part)
        try:
            params[key] = float(val)
        except ValueError:
            raise UsageError("bad number", val) from None
    if set(params) != {"alpha", "rho"}:
        raise UsageError("stable model needs alpha and rho", text)
    try:
        return stable(params["alpha"], params["rho"])
    except DomainError as exc:
        raise UsageError(str(exc), text) from exc


# --- evaluators with domain checking ---------------------------------------


def h_eval(model: LevyModel, x):
    x = _nonneg("x", x)
    return _out(model.ladder.h(x))


def kappa_eval(model: LevyModel, q, lam):
    q = _nonneg("q", q)
    lam = _nonneg("lam", lam)
    return _out(model.ladder.kappa(q, lam))


def hq_eval(model: LevyModel, q, x):
    q = _nonneg("q", q)
    x = _nonneg("x", x)
    return _out(model.ladder.h_q(q, x))


def n_tail_eval(model: LevyModel, s):
    s = _positive("s", s)
    return _out(model.ladder.n_tail(s))


def sup_density_eval(model: LevyModel, t, x):
    """Density ``phi_t(x)`` of ``S_t``; only Brownian motion carries one."""
    if model.ladder.sup_density is None:
        raise UnsupportedCapability(f"{model.name} has no closed-form supremum density")
    t = _positive("t", t)
    x = _positive("x", x)
    return _out(model.ladder.sup_density(t, x))


# --- identity checks ---------------------------------------------------------


@dataclass(frozen=True)
class IdentityResult:
    """Outcome of a numerical identity check.

    ``truncation`` is the upper integration limit actually used (``nan`` if
    the range was finite) and ``quad_error`` the quadrature's own estimate.
    """

    check: str
    residual: float
    value: float
    target: float
    truncation: float
    quad_error: float

    def passes(self, tol: float) -> bool:
        return bool(self.residual <= tol)


def _quad(fun, a, b, *, points=None, tol=1e-13, **kw):
    val, err = integrate.quad(fun, a, b, limit=500, epsabs=0.0, epsrel=tol, points=points, **kw)
    return val, err


def check_laplace_hq(model: LevyModel, q: float, lam: float) -> IdentityResult:
    """``|lam * int_0^inf e^{-lam x} h_q(x) dx * kappa(q, lam) - 1|``.

    The integral is truncated where ``e^{-lam X} sup h_q`` falls below
    ``1e-12`` of the accumulated value.
    """
    q = float(_positive("q", q))
    lam = float(_positive("lam", lam))
    kap = float(model.ladder.kappa(q, lam))
    pot = model.hq_potential(q)
    bound = float(pot.limit)
    value_guess = 1.0 / kap
    upper = max(np.log(max(bound, 1e-300) / (1e-12 * value_guess)), 1.0) / lam
    # split where e^{-lam x} decays and at the scale where h_q saturates
    scale = q ** (-1.0 / model.alpha)
    pts = sorted({p for p in (1.0 / lam, scale, 10.0 / lam) if 0 < p < upper})
    val, err = _quad(lambda x: lam * np.exp(-lam * x) * float(pot(x)), 0.0, upper, points=pts)
    if err > 1e-9 * abs(val):
        raise NumericalError("Laplace-transform quadrature did not converge", err)
    prod = val * kap
    return IdentityResult("laplace_hq", abs(prod - 1.0), prod, 1.0, upper, err * kap)


def check_convolution_identity(model: LevyModel, t: float, x: float) -> IdentityResult:
    """Relative residual of ``int_0^t n(t - s < zeta) rho_x(s) ds = phi_t(x)``.

    ``rho_x(s) = x e^{-x^2/(2s)} / sqrt(2 pi s^3)`` is the first-passage
    density of level ``x``. The ``(t - s)**(-1/2)`` endpoint singularity is
    handled by an algebraic-weight rule on the upper half of the range.
    """
    if not model.is_brownian:
        raise UnsupportedCapability("convolution identity needs the Brownian closed forms")
    t = float(_positive("t", t))
    x = float(_positive("x", x))

    def rho_x(s):
        if s <= 0.0:
            return 0.0
        return x * np.exp(-(x**2) / (2.0 * s)) / np.sqrt(2.0 * np.pi * s**3)

    mid = 0.5 * t
    peak = x**2 / 3.0
    pts = [peak] if 0 < peak < mid else None
    lower, err_lo = _quad(lambda s: float(model.ladder.n_tail(t - s)) * rho_x(s), 0.0, mid, points=pts)
    # n_tail(t - s) = sqrt(2/pi) (t - s)^{-1/2}
    upper, err_hi = integrate.quad(
        lambda s: np.sqrt(2.0 / np.pi) * rho_x(s), mid, t, weight="alg", wvar=(0.0, -0.5),
        limit=500, epsabs=0.0, epsrel=1e-13,
    )
    total = lower + upper
    err = err_lo + err_hi
    target = float(model.ladder.sup_density(t, x))
    if err > 1e-8 * abs(total):
        raise NumericalError("convolution quadrature did not converge near s = 0", err)
    return IdentityResult("convolution", abs(total - target) / target, total, target, np.nan, err)


def check_sup_law_exponential(model: LevyModel, q: float, x: float) -> IdentityResult:
    """``|kappa(q, 0) h_q(x) - P(S_{e_q} <= x)|`` with the Brownian closed form ``1 - e^{-sqrt(2q) x}``."""
    if not model.is_brownian:
        raise UnsupportedCapability("closed-form law of S_{e_q} is Brownian-only")
    q = float(_positive("q", q))
    x = float(_nonneg("x", x))
    lhs = float(model.ladder.kappa(q, 0.0) * model.ladder.h_q(q, x))
    rhs = float(-np.expm1(-np.sqrt(2.0 * q) * x))
    return IdentityResult("sup_law_exponential", abs(lhs - rhs), lhs, rhs, np.nan, 0.0)


def check_excursion_density_ratio(model: LevyModel, t: float, x_max: float = 1.0,
                                  n_grid: int = 1001) -> IdentityResult:
    """``max_{0 < x <= x_max} |phi_t(x) / n(t < zeta) - h'(x)|`` on a grid (Brownian)."""
    if model.ladder.sup_density is None:
        raise UnsupportedCapability(f"{model.name} has no closed-form supremum density")
    t = float(_positive("t", t))
    xs = np.linspace(x_max / n_grid, x_max, n_grid)
    ratio = model.ladder.sup_density(t, xs) / model.ladder.n_tail(t)
    dev = np.abs(ratio - model.ladder.h_prime(xs))
    return IdentityResult("excursion_density_ratio", float(dev.max()), float(ratio.min()),
                          1.0, np.nan, 0.0)


def q_over_kappa(model: LevyModel, q) -> np.ndarray:
    q = _positive("q", q)
    return _out(q / model.ladder.kappa(q, 0.0))


def check_q_over_kappa(model: LevyModel, k_max: int = 6):
    """Values of ``q / kappa(q, 0)`` on ``q = 10**-k`` and whether they decrease strictly."""
    qs = 10.0 ** -np.arange(k_max + 1)
    vals = np.asarray(q_over_kappa(model, qs))
    return qs, vals, bool(np.all(np.diff(vals) < 0))
