"""Command-line runner: suites, config files, CSV reports and run manifests."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__
from .azema_yor import m0, parse_weight
from .errors import (
    AdmissibilityError,
    DegenerateExperiment,
    DomainError,
    NumericalError,
    UnsupportedCapability,
    UsageError,
)
from .levy_models import (
    LevyModel,
    check_convolution_identity,
    check_excursion_density_ratio,
    check_laplace_hq,
    check_q_over_kappa,
    check_sup_law_exponential,
    parse_model,
)
from .mc_stats import WeightedEcdf, ks_to_cdf
from .path_sim import ClockSpec, Purpose, simulate_path, refine_supremum_brownian, stream, \
    write_path_dump
from .penalization import (
    ExperimentReport,
    ReportRow,
    bessel3_cdf,
    const_clock_ratio,
    crosscheck_samplers,
    decompose_batch_brownian,
    exact_normalized_mass,
    exp_clock_ratio,
    importance_sample_penalized,
    martingale_check,
    normalized_mass,
    parse_functional,
    penalized_target,
)

__all__ = ["RunConfig", "run_suite", "emit_manifest", "build_id", "main", "SUITES"]

SUITES = (
    "exp-clock", "const-clock", "mass", "penalized-sample", "decompose", "crosscheck",
    "identities", "martingale", "dump-paths",
)

# default absolute tolerances per suite (the statistical part, 3 standard errors, is added on top)
DEFAULT_TOL = {
    "exp-clock": 0.02,
    "const-clock": 0.02,
    "mass": 0.005,
    "penalized-sample": 0.03,
    "decompose": 0.0043,
    "crosscheck": 0.03,
    "identities": 1e-8,
    "martingale": 0.0,
    "dump-paths": 0.0,
}

IDENTITY_FIELDS = ["model", "check", "param_q", "param_lambda_or_x", "residual", "tolerance",
                   "pass"]


@dataclass(frozen=True)
class RunConfig:
    suite: str
    model: str = "brownian"
    weight: str = "indicator:a=1"
    functional: str = "xle:b=0"
    clock_grid: tuple = ()
    clock_kind: str = "exponential"
    t: float = 0.25
    dt: float = 1e-3
    n_paths: int = 100000
    seed: int = 0
    out: Optional[str] = None
    refine: str = "auto"
    horizon: Optional[float] = None
    tolerance: Optional[float] = None

    def validate(self) -> "RunConfig":
        if self.suite not in SUITES:
            raise UsageError("unknown suite", self.suite)
        if self.suite in ("exp-clock", "const-clock", "mass") and not self.clock_grid:
            raise UsageError("empty clock grid", "--clock-grid")
        grid = tuple(float(v) for v in self.clock_grid)
        if any(not (np.isfinite(v) and v > 0) for v in grid):
            raise UsageError("clock grid values must be positive", ",".join(map(str, grid)))
        if list(grid) != sorted(grid):
            raise UsageError("clock grid must be sorted", ",".join(map(str, grid)))
        if not (self.dt > 0 and self.n_paths > 0 and self.t >= 0):
            raise UsageError("dt, paths must be positive and t nonnegative",
                             f"dt={self.dt}, paths={self.n_paths}, t={self.t}")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative", str(self.seed))
        if self.refine not in ("auto", "on", "off"):
            raise UsageError("refine must be on, off or auto", self.refine)
        if self.clock_kind not in ("exponential", "constant"):
            raise UsageError("clock kind must be exponential or constant", self.clock_kind)
        return replace(self, clock_grid=grid)

    @property
    def refine_flag(self) -> Optional[bool]:
        return {"auto": None, "on": True, "off": False}[self.refine]

    @property
    def tol(self) -> float:
        return DEFAULT_TOL[self.suite] if self.tolerance is None else self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clock_grid"] = list(self.clock_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise UsageError("unknown config key", sorted(extra)[0])
        d = dict(d)
        d["clock_grid"] = tuple(d.get("clock_grid", ()))
        return cls(**d).validate()

    @classmethod
    def from_manifest(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text)["config"])


# --- config file and flags -------------------------------------------------------

_CASTS = {
    "t": float, "dt": float, "n_paths": int, "seed": int, "horizon": float, "tolerance": float,
}
_ALIASES = {"paths": "n_paths"}


def _cast(key: str, raw: str):
    key = _ALIASES.get(key, key)
    try:
        if key == "clock_grid":
            return key, tuple(float(v) for v in raw.split(",") if v.strip())
        if key in _CASTS:
            return key, _CASTS[key](raw)
    except ValueError:
        raise UsageError(f"bad value for {key}", raw) from None
    return key, raw.strip()


def read_config_file(path, suite: str) -> dict:
    """Flat ``key = value`` file; ``[run]`` holds defaults, a section named after the suite overrides them."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError("cannot read config", str(path)) from exc
    except configparser.Error as exc:
        raise UsageError("malformed config", str(exc)) from None
    out = {}
    for section in ("run", suite):
        if cp.has_section(section):
            for key, raw in cp.items(section):
                k, v = _cast(key.replace("-", "_"), raw)
                out[k] = v
    return out


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levy-penalize",
                                description="Supremum penalisation experiments for Levy processes.")
    sub = p.add_subparsers(dest="suite", required=True)
    for name in SUITES:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--model")
        s.add_argument("--weight")
        s.add_argument("--functional")
        s.add_argument("--clock-grid", dest="clock_grid")
        s.add_argument("--clock-kind", dest="clock_kind", choices=("exponential", "constant"))
        s.add_argument("--t")
        s.add_argument("--dt")
        s.add_argument("--paths")
        s.add_argument("--seed")
        s.add_argument("--out")
        s.add_argument("--refine", choices=("on", "off", "auto"))
        s.add_argument("--horizon")
        s.add_argument("--tolerance")
    return p


def config_from_args(argv) -> RunConfig:
    ns = _parser().parse_args(argv)
    values = {}
    if ns.config:
        values.update(read_config_file(ns.config, ns.suite))
    for key in ("model", "weight", "functional", "clock_grid", "clock_kind", "t", "dt", "paths",
                "seed", "out", "refine", "horizon", "tolerance"):
        raw = getattr(ns, key)
        if raw is not None:
            k, v = _cast(key, raw)
            values[k] = v
    values["suite"] = ns.suite
    return RunConfig.from_dict(values)


# --- manifest ----------------------------------------------------------------------


def build_id() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        if res.returncode == 0 and res.stdout.strip():
            return res.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def emit_manifest(config: RunConfig, build: Optional[str] = None, wall_time: float = 0.0) -> str:
    doc = {
        "config": config.to_dict(),
        "seed": config.seed,
        "build_id": build if build is not None else build_id(),
        "wall_time": wall_time,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


# --- suites ----------------------------------------------------------------------


@dataclass
class IdentityReport:
    rows: list = field(default_factory=list)

    def add(self, model, check, q, lam_or_x, residual, tol):
        self.rows.append((model, check, q, lam_or_x, residual, tol, residual <= tol))

    @property
    def all_passed(self):
        return all(r[-1] for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(IDENTITY_FIELDS)
        for m, c, q, x, res, tol, ok in self.rows:
            w.writerow([m, c, repr(float(q)), repr(float(x)), repr(float(res)), repr(float(tol)),
                        "true" if ok else "false"])
        return buf.getvalue()


def _combined(*ses):
    return float(np.sqrt(sum(s * s for s in ses)))


def _row(cfg, model, weight, functional, clock, est, se, target, passed, n=None):
    return ReportRow(cfg.suite, model.name, weight, functional, float(clock), float(est), float(se),
                     float(target), float(abs(est - target)), cfg.n_paths if n is None else n,
                     cfg.dt, cfg.seed, bool(passed))


def _sup_limit_cdf(f, model: LevyModel):
    g = model.h_potential()
    total = m0(f, model)
    return lambda y: 1.0 - f.tail(g, np.maximum(y, 0.0), 0.0) / total


def _suite_identities(cfg: RunConfig, model: LevyModel) -> IdentityReport:
    rep = IdentityReport()
    grid = cfg.clock_grid or (0.1, 1.0, 10.0)
    tol_laplace = cfg.tol if model.is_brownian else max(cfg.tol, 1e-6)
    for q in grid:
        for lam in grid:
            try:
                r = check_laplace_hq(model, q, lam)
            except UnsupportedCapability:
                continue
            rep.add(model.name, "laplace_hq", q, lam, r.residual, tol_laplace)
    if model.is_brownian:
        for t, x in ((1.0, 0.1), (1.0, 1.0), (4.0, 2.0)):
            r = check_convolution_identity(model, t, x)
            rep.add(model.name, "convolution", t, x, r.residual, 1e-6)
        for q in grid:
            for x in (0.5, 1.0, 2.0):
                r = check_sup_law_exponential(model, q, x)
                rep.add(model.name, "sup_law_exponential", q, x, r.residual, 1e-12)
        r = check_excursion_density_ratio(model, 50.0)
        rep.add(model.name, "excursion_density_ratio", 50.0, 1.0, r.residual, 0.011)
    qs, vals, decreasing = check_q_over_kappa(model)
    rep.add(model.name, "q_over_kappa_final", qs[-1], 0.0, float(vals[-1]), 1e-3)
    rep.add(model.name, "q_over_kappa_decreasing", qs[-1], 0.0, 0.0 if decreasing else 1.0, 0.0)
    return rep


def _suite_clock(cfg, model, f, F) -> ExperimentReport:
    rep = ExperimentReport()
    target = penalized_target(f, model, F, cfg.t, cfg.n_paths, cfg.dt, cfg.seed, cfg.refine_flag)
    for c in cfg.clock_grid:
        if cfg.suite == "exp-clock":
            est = exp_clock_ratio(f, model, F, c, cfg.t, cfg.n_paths, cfg.dt, cfg.seed,
                                  cfg.refine_flag)
        else:
            est = const_clock_ratio(f, model, F, c, cfg.t, cfg.n_paths, cfg.dt, cfg.seed,
                                    cfg.refine_flag)
        ok = abs(est.estimate - target.estimate) <= cfg.tol + 3 * _combined(est.std_err,
                                                                              target.std_err)
        rep.add(_row(cfg, model, f.spec, F.spec, c, est.estimate, est.std_err, target.estimate,
                     ok))
    return rep


def _suite_mass(cfg, model, f) -> ExperimentReport:
    rep = ExperimentReport()
    for c in cfg.clock_grid:
        clock = ClockSpec(cfg.clock_kind, c)
        est = normalized_mass(f, model, clock, cfg.n_paths, cfg.dt, cfg.seed, cfg.refine_flag)
        exact = exact_normalized_mass(f, model, clock)
        ok = abs(est.estimate - exact) <= cfg.tol + 3 * est.std_err
        rep.add(_row(cfg, model, f.spec, cfg.clock_kind, c, est.estimate, est.std_err, exact, ok))
    return rep


def _suite_penalized(cfg, model, f) -> ExperimentReport:
    rep = ExperimentReport()
    ws = importance_sample_penalized(f, model, cfg.t, cfg.n_paths, cfg.dt, cfg.seed,
                                     cfg.refine_flag)
    mw, se = ws.mean_weight
    rep.add(_row(cfg, model, f.spec, "mean_weight", cfg.t, mw, se, 1.0,
                 abs(mw - 1.0) <= 3 * se))
    ks = ks_to_cdf(ws.ecdf("s"), _sup_limit_cdf(f, model))
    rep.add(_row(cfg, model, f.spec, "ks_sup_vs_limit", cfg.t, ks, 1.0 / np.sqrt(ws.ess), 0.0,
                 ks <= cfg.tol))
    rep.add(_row(cfg, model, f.spec, "low_ess_flag", cfg.t, float(ws.low_ess), 0.0, 0.0,
                 not ws.low_ess))
    return rep


def _suite_decompose(cfg, model, f) -> ExperimentReport:
    if not model.is_brownian:
        raise UnsupportedCapability("the decomposition sampler is Brownian-only")
    rep = ExperimentReport()
    horizon = cfg.horizon if cfg.horizon is not None else 64.0 * max(cfg.t, cfg.dt)
    lag = cfg.t if cfg.t > 0 else 1.0
    dec = decompose_batch_brownian(f, cfg.t, cfg.n_paths, cfg.dt, cfg.seed, horizon=horizon,
                                   lag=lag)
    n = cfg.n_paths
    ks_s = ks_to_cdf(WeightedEcdf(dec.s_inf), _sup_limit_cdf(f, model))
    rep.add(_row(cfg, model, f.spec, "ks_sup_inf", horizon, ks_s, 1.0 / np.sqrt(n), 0.0,
                 ks_s <= cfg.tol))
    ks_b = ks_to_cdf(WeightedEcdf(dec.post_lag), lambda r: bessel3_cdf(r, lag))
    rep.add(_row(cfg, model, f.spec, "ks_bessel3_marginal", lag, ks_b, 1.0 / np.sqrt(n), 0.0,
                 ks_b <= max(cfg.tol, 0.01)))
    rho = stats.spearmanr(dec.g, dec.post_lag).statistic
    rep.add(_row(cfg, model, f.spec, "rank_corr_g_postmax", lag, rho, 1.0 / np.sqrt(n - 1), 0.0,
                 abs(rho) <= 3.0 / np.sqrt(n - 1)))
    cf = dec.censored_fraction
    rep.add(_row(cfg, model, f.spec, "censored_fraction", horizon, cf,
                 np.sqrt(max(cf * (1 - cf), 1.0 / n) / n), 0.0, True))
    return rep


def _suite_crosscheck(cfg, model, f) -> ExperimentReport:
    rep = ExperimentReport()
    res = crosscheck_samplers(f, model, cfg.t, cfg.n_paths, cfg.dt, cfg.seed)
    se = 1.0 / np.sqrt(max(res.ess, 1.0))
    rep.add(_row(cfg, model, f.spec, "ks_x_t", cfg.t, res.ks, se, 0.0,
                 res.ks <= cfg.tol and not res.inconclusive))
    rep.add(_row(cfg, model, f.spec, "pre_max_fraction", cfg.t, res.pre_max_fraction,
                 np.sqrt(max(res.pre_max_fraction * (1 - res.pre_max_fraction), 1e-12)
                         / cfg.n_paths), 0.0, True))
    rep.add(_row(cfg, model, f.spec, "censored_fraction", cfg.t, res.censored_fraction, 0.0, 0.0,
                 not res.inconclusive))
    return rep


def _suite_martingale(cfg, model, f) -> ExperimentReport:
    rep = ExperimentReport()
    times = cfg.clock_grid or (0.25, 0.5, 1.0)
    coarse = not model.is_brownian
    res = martingale_check(f, model, times, cfg.n_paths, cfg.dt, cfg.seed, coarse=coarse,
                           refine=cfg.refine_flag)
    target = m0(f, model)
    for t in times:
        mean, se, shift, shift_se = res[t]
        rep.add(_row(cfg, model, f.spec, "mean_M_t", t, mean, se, target,
                     abs(mean - target) <= cfg.tol + 3 * se))
        if coarse:
            rep.add(_row(cfg, model, f.spec, "dt_doubling_shift", t, shift, se, 0.0,
                         abs(shift) <= 2 * se))
    return rep


def _dump_paths(cfg, model) -> ExperimentReport:
    if cfg.out is None:
        raise UsageError("dump-paths needs an output file", "--out")
    horizon = cfg.horizon if cfg.horizon is not None else max(cfg.t, cfg.dt)
    refine = model.is_brownian if cfg.refine_flag is None else cfg.refine_flag
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("wb") as fh:
        for i in range(cfg.n_paths):
            path = simulate_path(model, horizon, cfg.dt, stream(cfg.seed, i, Purpose.INCREMENTS),
                                 seed_path=i)
            if refine:
                path = refine_supremum_brownian(path, stream(cfg.seed, i, Purpose.BRIDGE))
            write_path_dump(fh, path)
    return ExperimentReport()


def run_suite(cfg: RunConfig):
    """Run one suite; returns ``(report, exit_code)`` and writes CSV + manifest if ``cfg.out`` is set."""
    cfg = cfg.validate()
    start = time.perf_counter()
    model = parse_model(cfg.model)
    if cfg.suite == "identities":
        report = _suite_identities(cfg, model)
    elif cfg.suite == "dump-paths":
        _dump_paths(cfg, model)
        wall = time.perf_counter() - start
        manifest_path(Path(cfg.out)).write_text(emit_manifest(cfg, wall_time=wall))
        return ExperimentReport(), 0
    else:
        f = parse_weight(cfg.weight)
        m0(f, model)
        if cfg.suite in ("exp-clock", "const-clock"):
            report = _suite_clock(cfg, model, f, parse_functional(cfg.functional))
        elif cfg.suite == "mass":
            report = _suite_mass(cfg, model, f)
        elif cfg.suite == "penalized-sample":
            report = _suite_penalized(cfg, model, f)
        elif cfg.suite == "decompose":
            report = _suite_decompose(cfg, model, f)
        elif cfg.suite == "crosscheck":
            report = _suite_crosscheck(cfg, model, f)
        else:
            report = _suite_martingale(cfg, model, f)
    wall = time.perf_counter() - start
    if cfg.out is not None:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_csv())
        manifest_path(out).write_text(emit_manifest(cfg, wall_time=wall))
    return report, 0 if report.all_passed else 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
        report, code = run_suite(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, AdmissibilityError, UnsupportedCapability, DegenerateExperiment,
            NumericalError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if cfg.out is None and cfg.suite != "dump-paths":
        sys.stdout.write(report.to_csv())
    return code
