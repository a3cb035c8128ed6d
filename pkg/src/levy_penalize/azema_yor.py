"""Weight functions and the Azema-Yor type functionals built from them.

For a weight ``f`` and a potential ``g`` (``h``, ``h_q`` or the half-normal
CDF) all evaluators reduce to

    value(f, g; s, y) = f(s) g(s - y) + int_s^inf f(x) g'(x - y) dx,

evaluated at ``s = S_t``, ``y = X_t``. Each weight shape knows how to do the
tail integral exactly for any potential exposing ``g``, its antiderivative
and its exponentially damped tail.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AdmissibilityError, DomainError, UnsupportedCapability, UsageError
from .levy_models import LevyModel
from .path_sim import PathSample
from .potentials import HalfNormalCdfPotential, Potential

__all__ = [
    "WeightFn",
    "Indicator",
    "ExpDecay",
    "TableWeight",
    "parse_weight",
    "MartingaleState",
    "weight_tail_integral",
    "m0",
    "ay_eval",
    "ay_values",
    "n_qf_eval",
    "n_qf_values",
    "m_qf_eval",
    "m_sf_eval",
    "m_sf_values",
]


class WeightFn:
    """Nonnegative weight ``f`` on ``[0, inf)``."""

    spec: str

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def tail(self, g: Potential, s, y) -> np.ndarray:
        """``int_s^inf f(x) g'(x - y) dx``."""
        raise NotImplementedError

    @property
    def support_max(self) -> float:
        """``f`` vanishes beyond this point."""
        return np.inf

    def value(self, g: Potential, s, y) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        return self(s) * g(s - y) + self.tail(g, s, y)


@dataclass(frozen=True)
class Indicator(WeightFn):
    """``f = 1_[0, a]``."""

    a: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise DomainError("indicator level must be positive")

    @property
    def spec(self):
        return f"indicator:a={self.a:g}"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return ((x >= 0) & (x <= self.a)).astype(float)

    def tail(self, g, s, y):
        s, y = np.broadcast_arrays(np.asarray(s, float), np.asarray(y, float))
        out = np.zeros(s.shape)
        inside = s < self.a
        if inside.any():
            out[inside] = g(self.a - y[inside]) - g(s[inside] - y[inside])
        return out

    def value(self, g, s, y):
        # the two terms telescope to g(a - y) while s <= a
        s, y = np.broadcast_arrays(np.asarray(s, float), np.asarray(y, float))
        out = np.zeros(s.shape)
        inside = s <= self.a
        if inside.any():
            out[inside] = g(self.a - y[inside])
        return out

    @property
    def support_max(self):
        return self.a


@dataclass(frozen=True)
class ExpDecay(WeightFn):
    """``f(x) = exp(-c x)``."""

    c: float

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise DomainError("decay rate must be positive")

    @property
    def spec(self):
        return f"expdecay:c={self.c:g}"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.exp(-self.c * np.maximum(x, 0.0)), 0.0)

    def tail(self, g, s, y):
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.exp(-self.c * s) * g.exp_tail(self.c, s - y)


class TableWeight(WeightFn):
    """Piecewise-linear ``f`` through the knots, zero outside them.

    The tail integral is exact for piecewise-linear ``f``: on a segment with
    slope ``m`` starting at ``lo``,
    ``int (f_lo + m (x - lo)) g'(x - y) dx`` integrates by parts to
    ``f_lo [g] + m ((hi - lo) g(hi - y) - int g)``.
    """

    def __init__(self, xs, fs, source: str = "<array>"):
        xs = np.asarray(xs, dtype=float)
        fs = np.asarray(fs, dtype=float)
        if xs.ndim != 1 or xs.shape != fs.shape or len(xs) < 2:
            raise DomainError("table needs at least two (x, f) knots")
        if np.any(~np.isfinite(xs)) or np.any(~np.isfinite(fs)):
            raise DomainError("table knots must be finite")
        if xs[0] < 0 or np.any(np.diff(xs) <= 0):
            raise DomainError("table x must be nonnegative and strictly increasing")
        if np.any(fs < 0) or not np.any(fs > 0):
            raise AdmissibilityError("table weight must be nonnegative and not identically 0")
        self.xs = xs
        self.fs = fs
        self.source = source

    @classmethod
    def from_csv(cls, path) -> "TableWeight":
        path = Path(path)
        try:
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise UsageError("cannot read weight table", str(path)) from exc
        try:
            xs = [float(r["x"]) for r in rows]
            fs = [float(r["f"]) for r in rows]
        except (KeyError, TypeError, ValueError):
            raise UsageError("weight table needs numeric columns x,f", str(path)) from None
        return cls(xs, fs, str(path))

    @property
    def spec(self):
        return f"table:{self.source}"

    def __eq__(self, other):
        return (isinstance(other, TableWeight) and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.fs, other.fs))

    def __hash__(self):
        return hash((self.xs.tobytes(), self.fs.tobytes()))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.fs, left=0.0, right=0.0)

    def tail(self, g, s, y):
        s, y = np.broadcast_arrays(np.asarray(s, float), np.asarray(y, float))
        out = np.zeros(s.shape)
        for x0, x1, f0, f1 in zip(self.xs[:-1], self.xs[1:], self.fs[:-1], self.fs[1:]):
            act = s < x1
            if not act.any():
                continue
            lo = np.maximum(s[act], x0)
            yy = y[act]
            slope = (f1 - f0) / (x1 - x0)
            f_lo = f0 + slope * (lo - x0)
            g_hi = g(x1 - yy)
            part = f_lo * (g_hi - g(lo - yy))
            if slope != 0.0:
                part = part + slope * ((x1 - lo) * g_hi - g.integral(lo - yy, x1 - yy))
            out[act] += part
        return out

    @property
    def support_max(self):
        return float(self.xs[-1])


def parse_weight(text: str) -> WeightFn:
    """Parse ``indicator:a=<a>``, ``expdecay:c=<c>`` or ``table:<csv path>``."""
    kind, sep, rest = text.strip().partition(":")
    kind = kind.lower()
    if not sep:
        raise UsageError("weight spec needs a ':'", text)
    if kind == "table":
        return TableWeight.from_csv(rest)
    key, sep, val = rest.partition("=")
    expected = {"indicator": "a", "expdecay": "c"}.get(kind)
    if expected is None:
        raise UsageError("unknown weight", kind)
    if not sep or key.strip() != expected:
        raise UsageError(f"{kind} needs {expected}=<value>", rest)
    try:
        v = float(val)
    except ValueError:
        raise UsageError("bad number", val) from None
    try:
        return Indicator(v) if kind == "indicator" else ExpDecay(v)
    except DomainError as exc:
        raise UsageError(str(exc), text) from exc


@dataclass(frozen=True)
class MartingaleState:
    t: float
    s_t: float
    x_t: float

    def __post_init__(self):
        vals = (self.t, self.s_t, self.x_t)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("state must be finite")
        if self.t < 0 or self.s_t < 0 or self.s_t < self.x_t:
            raise DomainError("state needs t >= 0 and s_t >= max(x_t, 0)")


def _check_states(s, x):
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(s < 0) or np.any(s < x):
        raise DomainError("states need s >= max(x, 0)")
    return s, x


def weight_tail_integral(f: WeightFn, model: LevyModel, s, y):
    """``int_s^inf f(x) h'(x - y) dx``."""
    if np.any(np.asarray(s) < 0):
        raise DomainError("s must be nonnegative")
    v = f.tail(model.h_potential(), s, y)
    return float(v) if np.ndim(v) == 0 else v


def m0(f: WeightFn, model: LevyModel) -> float:
    """Normaliser ``int_0^inf f(x) h'(x) dx``; raises if not in ``(0, inf)``."""
    val = float(f.tail(model.h_potential(), 0.0, 0.0))
    if not (np.isfinite(val) and val > 0):
        raise AdmissibilityError(f"{f.spec} is not admissible for {model.name}: M_0 = {val}")
    return val


def ay_values(f: WeightFn, model: LevyModel, s, x) -> np.ndarray:
    """Vectorised ``f(s) h(s - x) + int_s^inf f(z) h'(z - x) dz``."""
    s, x = _check_states(s, x)
    return f.value(model.h_potential(), s, x)


def ay_eval(f: WeightFn, model: LevyModel, st: MartingaleState) -> float:
    return float(ay_values(f, model, st.s_t, st.x_t))


def n_qf_values(f: WeightFn, model: LevyModel, q: float, s, x, t) -> np.ndarray:
    if not q > 0:
        raise DomainError("q must be positive")
    s, x = _check_states(s, x)
    return np.exp(-q * np.asarray(t, float)) * f.value(model.hq_potential(q), s, x)


def n_qf_eval(f: WeightFn, model: LevyModel, q: float, st: MartingaleState, t: float) -> float:
    """``e^{-qt} [f(S_t) h_q(S_t - X_t) + int_{S_t}^inf f(x) h_q'(x - X_t) dx]``."""
    return float(n_qf_values(f, model, q, st.s_t, st.x_t, t))


def m_qf_eval(f: WeightFn, model: LevyModel, q: float, path: PathSample, t: float) -> float:
    """``N_t + (q / kappa(q, 0)) int_0^t e^{-qs} f(S_s) ds``, trapezoid rule on the path grid."""
    if not q > 0:
        raise DomainError("q must be positive")
    k = path.index_at(t)
    n_t = n_qf_values(f, model, q, path.s[k], path.x[k], t)
    if k == 0:
        return float(n_t)
    times = path.times[: k + 1]
    integrand = np.exp(-q * times) * f(path.s[: k + 1])
    integral = np.trapezoid(integrand, times)
    return float(n_t + q / float(model.ladder.kappa(q, 0.0)) * integral)


def m_sf_values(f: WeightFn, model: LevyModel, horizon: float, s, x, t) -> np.ndarray:
    if not model.is_brownian:
        raise UnsupportedCapability("constant-clock functional needs the Brownian supremum law")
    if not horizon > t:
        raise DomainError("constant clock must exceed t")
    s, x = _check_states(s, x)
    g = HalfNormalCdfPotential(horizon - t)
    return f.value(g, s, x) / float(model.ladder.n_tail(horizon))


def m_sf_eval(f: WeightFn, model: LevyModel, s: float, st: MartingaleState, t: float) -> float:
    """``[f(S_t) P(S_{s-t} <= S_t - X_t) + int_{S_t}^inf f(x) phi_{s-t}(x - X_t) dx] / n(s < zeta)``."""
    return float(m_sf_values(f, model, s, st.s_t, st.x_t, t))
