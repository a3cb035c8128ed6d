"""Monte Carlo penalisation experiments and samplers of the penalised law.

Every Monte Carlo routine splits its paths into fixed-size batches; batch
``b`` draws from the streams ``(seed, b, purpose)`` and the per-batch
summaries are merged in batch order, so results do not depend on the thread
count.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .azema_yor import (
    ExpDecay,
    Indicator,
    TableWeight,
    WeightFn,
    ay_values,
    m0,
    m_sf_values,
)
from .errors import DomainError, UnsupportedCapability, UsageError
from .levy_models import LevyModel
from .mc_stats import (
    PairedMoments,
    StreamingMoments,
    WeightedEcdf,
    delta_ratio_ci,
    effective_sample_size,
    ks_distance,
)
from .path_sim import (
    BATCH_SIZE,
    Censored,
    ClockSpec,
    PathSample,
    Purpose,
    first_passage,
    grid_steps,
    map_batches,
    simulate_batch,
    stream,
)
from .potentials import HalfNormalCdfPotential

__all__ = [
    "FunctionalSpec",
    "parse_functional",
    "Estimate",
    "ReportRow",
    "ExperimentReport",
    "exp_clock_ratio",
    "penalized_target",
    "const_clock_ratio",
    "normalized_mass",
    "exact_normalized_mass",
    "WeightedSample",
    "importance_sample_penalized",
    "PenalizedPath",
    "sample_sup_inf",
    "decompose_sample_brownian",
    "DecompositionBatch",
    "decompose_batch_brownian",
    "CrosscheckResult",
    "crosscheck_samplers",
    "martingale_check",
    "bessel3_cdf",
]


_BOUNDED = {
    "logistic": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "tanh": np.tanh,
    "cos": np.cos,
    "atan": lambda x: np.arctan(x) * (2.0 / np.pi),
}


@dataclass(frozen=True)
class FunctionalSpec:
    """A bounded functional of ``(X_t, S_t)``.

    ``kind`` is ``"xle"`` (``1{X_t <= b}``), ``"sle"`` (``1{S_t <= b}``),
    ``"bounded"`` (a named map of ``X_t`` with values in ``[-1, 1]``) or
    ``"one"``.
    """

    kind: str
    b: float = 0.0
    tag: str = ""

    def __post_init__(self):
        if self.kind not in ("xle", "sle", "bounded", "one"):
            raise UsageError("unknown functional", self.kind)
        if self.kind == "bounded" and self.tag not in _BOUNDED:
            raise UsageError("unknown bounded map", self.tag)
        if self.kind in ("xle", "sle") and np.isnan(self.b):
            raise UsageError("functional level is not a number", str(self.b))

    @property
    def spec(self) -> str:
        if self.kind == "one":
            return "one"
        if self.kind == "bounded":
            return f"bounded:{self.tag}"
        return f"{self.kind}:b={self.b:g}"

    def __call__(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.kind == "one":
            return np.ones(np.broadcast(x, s).shape)
        if self.kind == "xle":
            return (x <= self.b).astype(float)
        if self.kind == "sle":
            return (s <= self.b).astype(float)
        return _BOUNDED[self.tag](x)


def parse_functional(text: str) -> FunctionalSpec:
    """``one`` | ``xle:b=<b>`` | ``sle:b=<b>`` | ``bounded:<logistic|tanh|cos|atan>``."""
    t = text.strip().lower()
    if t == "one":
        return FunctionalSpec("one")
    kind, sep, rest = t.partition(":")
    if not sep:
        raise UsageError("unknown functional", text)
    if kind == "bounded":
        return FunctionalSpec("bounded", tag=rest)
    if kind in ("xle", "sle"):
        key, sep, val = rest.partition("=")
        if not sep or key != "b":
            raise UsageError(f"{kind} needs b=<value>", rest)
        try:
            return FunctionalSpec(kind, float(val))
        except ValueError:
            raise UsageError("bad number", val) from None
    raise UsageError("unknown functional", kind)


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate; unpacks as ``(estimate, std_err)``."""

    estimate: float
    std_err: float
    n_paths: int
    info: dict = field(default_factory=dict, compare=False)

    def __iter__(self):
        return iter((self.estimate, self.std_err))


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    model: str
    weight: str
    functional: str
    clock_param: float
    estimate: float
    std_err: float
    target: float
    abs_err: float
    n_paths: int
    dt: float
    seed: int
    passed: bool


CSV_FIELDS = [
    "experiment", "model", "weight", "functional", "clock_param", "estimate", "std_err",
    "target", "abs_err", "n_paths", "dt", "seed", "pass",
]


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def add(self, row: ReportRow) -> None:
        if row.n_paths > 1 and not row.std_err > 0 and row.abs_err != 0:
            raise DomainError("a multi-path row needs a positive standard error")
        self.rows.append(row)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([
                r.experiment, r.model, r.weight, r.functional, repr(float(r.clock_param)),
                repr(float(r.estimate)), repr(float(r.std_err)), repr(float(r.target)),
                repr(float(r.abs_err)), r.n_paths, repr(float(r.dt)), r.seed,
                "true" if r.passed else "false",
            ])
        return buf.getvalue()


# --- helpers -----------------------------------------------------------------


def _refine_flag(model: LevyModel, refine: Optional[bool]) -> bool:
    if refine is None:
        return model.is_brownian
    if refine and not model.is_brownian:
        raise UnsupportedCapability("bridge refinement is exact only for Brownian paths")
    return bool(refine)


def _check_n(n: int, minimum: int = 1) -> int:
    n = int(n)
    if n < minimum:
        raise DomainError(f"need at least {minimum} paths")
    return n


def _stop_level(f: WeightFn):
    lvl = f.support_max
    return None if not np.isfinite(lvl) else lvl


def _merge(parts):
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


# --- clock experiments ---------------------------------------------------------


def _clock_ratio(f, model, F, clock: ClockSpec, t, n, dt, seed, refine):
    refine = _refine_flag(model, refine)
    r = grid_steps(t, dt)

    def batch(b, m):
        clocks = np.broadcast_to(
            np.asarray(
                clock.param if clock.kind == "constant"
                else stream(seed, b, Purpose.CLOCK).standard_exponential(m) / clock.param
            ),
            (m,),
        )
        res = simulate_batch(model, dt, m, stream(seed, b, Purpose.INCREMENTS),
                             stream(seed, b, Purpose.BRIDGE), clock=clocks, record_steps=[r],
                             stop_level=_stop_level(f), refine=refine)
        fc = f(res.s_clock)
        live = fc > 0
        num = np.zeros(m)
        num[live] = F(res.x_rec[live, 0], res.s_rec[live, 0]) * fc[live]
        return PairedMoments.of(num, fc)

    pair = _merge(map_batches(batch, n))
    ratio, se = delta_ratio_ci(pair)
    return Estimate(ratio, se, n, {"denominator": pair.b.mean})


def exp_clock_ratio(f: WeightFn, model: LevyModel, F: FunctionalSpec, q: float, t: float,
                    n: int, dt: float, seed: int, refine: Optional[bool] = None) -> Estimate:
    """``E[F_t f(S_{e_q})] / E[f(S_{e_q})]`` with a paired delta-method standard error.

    Each path runs to ``max(e_q, t)``; paths whose supremum leaves the support
    of ``f`` are stopped early since both numerator and denominator vanish.
    """
    if not q > 0:
        raise DomainError("q must be positive")
    _check_n(n, 100)
    return _clock_ratio(f, model, F, ClockSpec.exponential(q), t, n, dt, seed, refine)


def const_clock_ratio(f: WeightFn, model: LevyModel, F: FunctionalSpec, s: float, t: float,
                      n: int, dt: float, seed: int, refine: Optional[bool] = None) -> Estimate:
    """``E[F_t f(S_s)] / E[f(S_s)]`` for a constant horizon ``s > t``."""
    if not model.is_brownian:
        raise UnsupportedCapability("constant-clock experiments are Brownian-only")
    if not s > t:
        raise DomainError("constant clock must exceed t")
    _check_n(n, 100)
    return _clock_ratio(f, model, F, ClockSpec.constant(s), t, n, dt, seed, refine)


def penalized_target(f: WeightFn, model: LevyModel, F: FunctionalSpec, t: float, n: int,
                     dt: float, seed: int, refine: Optional[bool] = None) -> Estimate:
    """Plain Monte Carlo of ``E[F_t M_t / M_0]``, the penalised expectation of ``F_t``."""
    m_zero = m0(f, model)
    _check_n(n)
    if t == 0:
        return Estimate(float(F(0.0, 0.0)), 0.0, n)
    sample = importance_sample_penalized(f, model, t, n, dt, seed, refine=refine)
    vals = F(sample.x_t, sample.s_t) * sample.w
    mom = StreamingMoments.of(vals)
    return Estimate(mom.mean, mom.std_err, n, {"m0": m_zero})


def exact_normalized_mass(f: WeightFn, model: LevyModel, clock: ClockSpec) -> float:
    """``E[f(S_{e_q})] / kappa(q, 0)`` or ``E[f(S_s)] / n(s < zeta)`` from closed forms."""
    if clock.kind == "exponential":
        return float(f.tail(model.hq_potential(clock.param), 0.0, 0.0))
    return float(m_sf_values(f, model, clock.param, 0.0, 0.0, 0.0))


def normalized_mass(f: WeightFn, model: LevyModel, clock: ClockSpec, n: int, dt: float,
                    seed: int, refine: Optional[bool] = None) -> Estimate:
    """Monte Carlo of ``E[f(S_clock)]`` divided by ``kappa(q, 0)`` or ``n(s < zeta)``.

    Both tend to ``M_0`` as the clock grows.
    """
    refine = _refine_flag(model, refine)
    _check_n(n, 2)
    if clock.kind == "exponential":
        norm = float(model.ladder.kappa(clock.param, 0.0))
    else:
        norm = float(model.ladder.n_tail(clock.param))

    def batch(b, m):
        if clock.kind == "constant":
            clocks = clock.param
        else:
            clocks = stream(seed, b, Purpose.CLOCK).standard_exponential(m) / clock.param
        res = simulate_batch(model, dt, m, stream(seed, b, Purpose.INCREMENTS),
                             stream(seed, b, Purpose.BRIDGE), clock=clocks,
                             stop_level=_stop_level(f), refine=refine)
        return StreamingMoments.of(f(res.s_clock))

    mom = _merge(map_batches(batch, n))
    return Estimate(mom.mean / norm, mom.std_err / norm, n, {"normaliser": norm})


# --- change of measure -----------------------------------------------------------


@dataclass(frozen=True)
class WeightedSample:
    """Time-``t`` states of paths drawn under ``P`` with weights ``M_t / M_0``.

    ``s_half`` is ``S_{t/2}`` when ``t/2`` is on the grid (else ``nan``).
    """

    t: float
    x_t: np.ndarray
    s_t: np.ndarray
    s_half: np.ndarray
    w: np.ndarray
    ess: float
    low_ess: bool

    @property
    def mean_weight(self) -> tuple[float, float]:
        mom = StreamingMoments.of(self.w)
        return mom.mean, mom.std_err

    def ecdf(self, which: str = "s") -> WeightedEcdf:
        vals = self.s_t if which == "s" else self.x_t
        return WeightedEcdf(vals, self.w)

    def late_increase_fraction(self) -> float:
        """Weighted fraction of paths whose supremum still grows after ``t/2``."""
        return float(np.sum(self.w * (self.s_t > self.s_half)) / np.sum(self.w))


def importance_sample_penalized(f: WeightFn, model: LevyModel, t: float, n: int, dt: float,
                                seed: int, refine: Optional[bool] = None) -> WeightedSample:
    """States ``(X_t, S_t)`` of ``n`` paths with change-of-measure weights ``M_t / M_0``.

    Flags (and warns) when the effective sample size drops below ``n / 100``.
    """
    refine = _refine_flag(model, refine)
    _check_n(n)
    m_zero = m0(f, model)
    r = grid_steps(t, dt)
    rec = [r // 2, r] if r % 2 == 0 else [r]

    def batch(b, m):
        res = simulate_batch(model, dt, m, stream(seed, b, Purpose.INCREMENTS),
                             stream(seed, b, Purpose.BRIDGE), record_steps=rec, refine=refine)
        return res.x_rec[:, -1], res.s_rec[:, -1], res.s_rec[:, 0] if len(rec) == 2 else \
            np.full(m, np.nan)

    parts = map_batches(batch, n)
    x = np.concatenate([p[0] for p in parts])
    s = np.concatenate([p[1] for p in parts])
    sh = np.concatenate([p[2] for p in parts])
    w = ay_values(f, model, s, x) / m_zero
    ess = effective_sample_size(w)
    low = ess < 0.01 * n
    if low:
        warnings.warn(f"effective sample size {ess:.0f} is below 1% of {n}", RuntimeWarning)
    return WeightedSample(t, x, s, sh, w, ess, low)


def martingale_check(f: WeightFn, model: LevyModel, times, n: int, dt: float, seed: int,
                     coarse: bool = False, refine: Optional[bool] = None) -> dict:
    """Monte Carlo means of ``M_t`` at each time, with standard errors.

    With ``coarse=True`` (unrefined paths) the same paths are also read at
    step ``2 dt``, giving a coupled estimate of the discretisation shift.
    Returns ``{t: (mean, se, shift, shift_se)}``.
    """
    refine = _refine_flag(model, refine)
    rec = [grid_steps(t, dt) for t in times]
    if coarse and (refine or any(k % 2 for k in rec)):
        raise DomainError("coupled dt-halving needs unrefined paths and even record steps")

    def batch(b, m):
        res = simulate_batch(model, dt, m, stream(seed, b, Purpose.INCREMENTS),
                             stream(seed, b, Purpose.BRIDGE), record_steps=rec, refine=refine,
                             coarse=coarse)
        out = []
        for k in range(len(rec)):
            fine = ay_values(f, model, res.s_rec[:, k], res.x_rec[:, k])
            if coarse:
                crs = ay_values(f, model, res.s_rec_coarse[:, k], res.x_rec[:, k])
                out.append((StreamingMoments.of(fine), StreamingMoments.of(fine - crs)))
            else:
                out.append((StreamingMoments.of(fine), None))
        return out

    parts = map_batches(batch, n)
    result = {}
    for k, t in enumerate(times):
        mom = _merge([p[k][0] for p in parts])
        if coarse:
            d = _merge([p[k][1] for p in parts])
            result[t] = (mom.mean, mom.std_err, d.mean, d.std_err)
        else:
            result[t] = (mom.mean, mom.std_err, np.nan, np.nan)
    return result


# --- explicit path decomposition (Brownian) ----------------------------------------


def sample_sup_inf(f: WeightFn, u) -> np.ndarray:
    """Inverse CDF of the density ``f / int f`` (the Brownian law of the overall maximum)."""
    u = np.asarray(u, dtype=float)
    if isinstance(f, Indicator):
        return f.a * u
    if isinstance(f, ExpDecay):
        return -np.log1p(-u) / f.c
    if isinstance(f, TableWeight):
        xs, fs = f.xs, f.fs
        seg = 0.5 * (fs[:-1] + fs[1:]) * np.diff(xs)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        target = u * cum[-1]
        k = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(seg) - 1)
        rem = target - cum[k]
        f0 = fs[k]
        slope = (fs[k + 1] - f0) / (xs[k + 1] - xs[k])
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = 2.0 * rem / (f0 + np.sqrt(np.maximum(f0**2 + 2.0 * slope * rem, 0.0)))
        return xs[k] + np.where(np.abs(slope) > 0, quad, rem / np.where(f0 > 0, f0, 1.0))
    raise UnsupportedCapability(f"no inverse CDF for {type(f).__name__}")


@dataclass(frozen=True)
class PenalizedPath:
    """One draw from the penalised Brownian law, split at the time ``g`` of its maximum.

    ``post_max[k]`` is ``S_inf - X_{g + k dt}``, a Bessel(3) path from 0.
    """

    s_inf: float
    pre_max: PathSample
    g: float
    post_max: np.ndarray
    dt: float

    def x_at(self, t: float) -> float:
        if t <= self.g:
            return float(self.pre_max.x[self.pre_max.index_at(t)])
        k = grid_steps(t - self.g, self.dt)
        return float(self.s_inf - self.post_max[k])


def _bessel3_path(n_steps: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    steps = rng.standard_normal((n_steps, 3)) * np.sqrt(dt)
    walk = np.vstack([np.zeros((1, 3)), np.cumsum(steps, axis=0)])
    return np.sqrt(np.sum(walk**2, axis=1))


def decompose_sample_brownian(f: WeightFn, u_max: float, dt: float, cap: float, seed: int,
                              replica: int = 0):
    """Penalised Brownian path: overall maximum, path up to it, Bessel(3) after it.

    Returns :class:`PenalizedPath`, or :class:`~levy_penalize.path_sim.Censored`
    when the first passage to the sampled maximum is not seen before ``cap``.
    """
    from .levy_models import brownian

    if not u_max > 0:
        raise DomainError("u_max must be positive")
    model = brownian()
    m0(f, model)
    u = stream(seed, replica, Purpose.AUXILIARY).random()
    s_inf = float(sample_sup_inf(f, u))
    fp = first_passage(model, s_inf, dt, cap, stream(seed, replica, Purpose.INCREMENTS),
                       seed_path=replica)
    if isinstance(fp, Censored):
        return fp
    n_post = int(np.ceil(u_max / dt - 1e-9))
    post = _bessel3_path(n_post, dt, stream(seed, replica, Purpose.POST_MAX))
    return PenalizedPath(s_inf, fp.path, fp.time, post, dt)


@dataclass(frozen=True)
class DecompositionBatch:
    """Vectorised decomposition draws.

    ``g`` is ``inf`` where the path did not reach ``s_inf`` before ``horizon``;
    ``x_t`` is ``X_t`` assembled from the pre- and post-maximum pieces and
    ``post_lag`` the post-maximum value ``S_inf - X_{g + lag}``.
    """

    s_inf: np.ndarray
    g: np.ndarray
    x_t: np.ndarray
    post_lag: np.ndarray
    horizon: float

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(~np.isfinite(self.g)))


def decompose_batch_brownian(f: WeightFn, t: float, n: int, dt: float, seed: int,
                             horizon: Optional[float] = None, lag: float = 1.0
                             ) -> DecompositionBatch:
    """Draw ``n`` decomposition samples and read them at time ``t``.

    Pre-maximum paths run to ``horizon`` (default ``t``). Where ``g <= t``,
    ``X_t = S_inf - R_{t - g}`` with ``R`` a Bessel(3) process from 0, whose
    one-time marginal ``sqrt(u) * chi_3`` is sampled exactly.
    """
    from .levy_models import brownian

    model = brownian()
    m0(f, model)
    _check_n(n)
    horizon = t if horizon is None else horizon
    if horizon < t:
        raise DomainError("horizon must cover t")
    r = grid_steps(t, dt)

    def batch(b, m):
        aux = stream(seed, b, Purpose.AUXILIARY)
        s_inf = sample_sup_inf(f, aux.random(m))
        res = simulate_batch(model, dt, m, stream(seed, b, Purpose.DECOMP_INCREMENTS),
                             stream(seed, b, Purpose.DECOMP_BRIDGE), clock=horizon,
                             record_steps=[r] if r > 0 else [], stop_level=s_inf, refine=True)
        g = np.where(res.hit_step >= 0, res.hit_step * dt, np.inf)
        post = stream(seed, b, Purpose.POST_MAX)
        chi_t = np.sqrt(np.sum(post.standard_normal((m, 3)) ** 2, axis=1))
        chi_lag = np.sqrt(np.sum(post.standard_normal((m, 3)) ** 2, axis=1))
        before = g > t
        x_t = np.empty(m)
        if r > 0:
            x_t[before] = res.x_rec[before, 0]
        else:
            x_t[before] = 0.0
        after = ~before
        x_t[after] = s_inf[after] - np.sqrt(t - g[after]) * chi_t[after]
        return s_inf, g, x_t, np.sqrt(lag) * chi_lag

    parts = map_batches(batch, n)
    cat = [np.concatenate([p[i] for p in parts]) for i in range(4)]
    return DecompositionBatch(*cat, horizon=horizon)


@dataclass(frozen=True)
class CrosscheckResult:
    ks: float
    pre_max_fraction: float
    censored_fraction: float
    late_increase_fraction: float
    ess: float

    @property
    def inconclusive(self) -> bool:
        return self.censored_fraction > 0.05


def crosscheck_samplers(f: WeightFn, model: LevyModel, t: float, n: int, dt: float,
                        seed: int) -> CrosscheckResult:
    """Weighted KS distance between the two samplers' laws of ``X_t``.

    (a) paths under ``P`` weighted by ``M_t / M_0``; (b) the explicit
    decomposition. ``pre_max_fraction`` is the share of (b) with ``g > t``,
    whose ``X_t`` is read off the pre-maximum path itself.
    """
    if not model.is_brownian:
        raise UnsupportedCapability("the decomposition sampler is Brownian-only")
    if t == 0:
        return CrosscheckResult(0.0, 1.0, 0.0, 0.0, float(n))
    ws = importance_sample_penalized(f, model, t, n, dt, seed)
    dec = decompose_batch_brownian(f, t, n, dt, seed)
    ks = ks_distance(ws.ecdf("x"), WeightedEcdf(dec.x_t))
    pre = float(np.mean(dec.g > t))
    late = ws.late_increase_fraction() if np.all(np.isfinite(ws.s_half)) else np.nan
    return CrosscheckResult(ks, pre, 0.0, late, ws.ess)


def bessel3_cdf(r, u: float) -> np.ndarray:
    """CDF of the Bessel(3) process from 0 at time ``u`` (Maxwell law with scale ``sqrt(u)``)."""
    return stats.maxwell.cdf(np.asarray(r, dtype=float), scale=np.sqrt(u))
