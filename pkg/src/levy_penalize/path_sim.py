"""Discretised paths, running suprema, clocks and first passage.

Random numbers come from counter-based Philox streams keyed by
``(seed, replica, purpose)``, so a replica's draws never depend on how many
other replicas exist or in which order they are run. Monte Carlo engines
work on batches of ``BATCH_SIZE`` paths; the batch index is the replica.
"""

from __future__ import annotations

import enum
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, UnsupportedCapability
from .levy_models import LevyModel

__all__ = [
    "BATCH_SIZE",
    "Purpose",
    "stream",
    "worker_count",
    "map_batches",
    "PathSample",
    "ClockSpec",
    "sample_increment",
    "bridge_maximum",
    "simulate_path",
    "refine_supremum_brownian",
    "sample_clock",
    "FirstPassage",
    "Censored",
    "first_passage",
    "BatchResult",
    "simulate_batch",
    "grid_steps",
    "write_path_dump",
    "read_path_dump",
]

BATCH_SIZE = 8192


class Purpose(enum.IntEnum):
    INCREMENTS = 0
    BRIDGE = 1
    CLOCK = 2
    AUXILIARY = 3
    POST_MAX = 4
    DECOMP_INCREMENTS = 5
    DECOMP_BRIDGE = 6


def stream(seed: int, replica: int, purpose: Purpose) -> np.random.Generator:
    """Independent generator for one (seed, replica, purpose) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    """Thread cap from ``LEVY_PENALIZE_THREADS`` (default 1)."""
    raw = os.environ.get("LEVY_PENALIZE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_batches(fn: Callable[[int, int], object], n_paths: int) -> list:
    """Run ``fn(batch_index, batch_len)`` over all batches; results in batch order."""
    sizes = [min(BATCH_SIZE, n_paths - i) for i in range(0, n_paths, BATCH_SIZE)]
    workers = min(worker_count(), len(sizes))
    if workers <= 1:
        return [fn(i, m) for i, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(len(sizes)), sizes))


def grid_steps(t: float, dt: float) -> int:
    """Number of grid steps to reach ``t``; ``t`` must be a multiple of ``dt``."""
    k = int(round(t / dt))
    if abs(k * dt - t) > 1e-9 * max(1.0, t):
        raise DomainError(f"time {t} is not on the grid of step {dt}")
    return k


@dataclass(frozen=True)
class PathSample:
    dt: float
    times: np.ndarray
    x: np.ndarray
    s: np.ndarray
    refined: bool
    seed_path: int
    model: str = "brownian"

    @property
    def reflected(self) -> np.ndarray:
        """``S - X``."""
        return self.s - self.x

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def index_at(self, t: float) -> int:
        k = grid_steps(t, self.dt)
        if k >= len(self.times):
            raise DomainError(f"path ends at {self.horizon}, before t={t}")
        return k


@dataclass(frozen=True)
class ClockSpec:
    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("exponential", "constant"):
            raise DomainError(f"unknown clock kind {self.kind!r}")
        if not (np.isfinite(self.param) and self.param > 0):
            raise DomainError("clock parameter must be positive")

    @classmethod
    def exponential(cls, q: float) -> "ClockSpec":
        return cls("exponential", float(q))

    @classmethod
    def constant(cls, s: float) -> "ClockSpec":
        return cls("constant", float(s))


def _stable_unit(alpha: float, beta: float, rng: np.random.Generator, size) -> np.ndarray:
    # Chambers-Mallows-Stuck; unit-scale strictly stable, no shift
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(v)
    zeta = beta * np.tan(np.pi * alpha / 2.0)
    b = np.arctan(zeta) / alpha
    scale = (1.0 + zeta**2) ** (1.0 / (2.0 * alpha))
    ab = alpha * (v + b)
    return (
        scale
        * np.sin(ab)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - ab) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_increment(model: LevyModel, dt, rng: np.random.Generator, size=None):
    """Exact increment of ``model`` over a time step ``dt`` (broadcast with ``size``)."""
    dt = np.asarray(dt, dtype=float)
    if np.any(~np.isfinite(dt)) or np.any(dt <= 0):
        raise DomainError("dt must be positive")
    if size is None:
        size = dt.shape
    if model.is_brownian:
        return rng.standard_normal(size) * np.sqrt(dt)
    return _stable_unit(model.alpha, model.beta, rng, size) * dt ** (1.0 / model.alpha)


def bridge_maximum(a, b, dt, u) -> np.ndarray:
    """Maximum of a Brownian bridge from ``a`` to ``b`` over time ``dt``, by inversion of ``u``."""
    return 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * dt * np.log(u)))


def simulate_path(model: LevyModel, horizon: float, dt: float, rng: np.random.Generator,
                  seed_path: int = 0) -> PathSample:
    """Grid path on ``[0, horizon]`` with the unrefined running maximum."""
    if not (np.isfinite(horizon) and np.isfinite(dt)) or dt <= 0 or horizon < dt:
        raise DomainError("need finite horizon >= dt > 0")
    n = int(np.ceil(horizon / dt - 1e-9))
    inc = sample_increment(model, dt, rng, n)
    x = np.concatenate([[0.0], np.cumsum(inc)])
    s = np.maximum.accumulate(np.maximum(x, 0.0))
    return PathSample(dt, np.arange(n + 1) * dt, x, s, False, seed_path, model.name)


def refine_supremum_brownian(path: PathSample, rng: np.random.Generator) -> PathSample:
    """Replace grid maxima by sampled Brownian-bridge cell maxima."""
    if path.model != "brownian":
        raise UnsupportedCapability("bridge refinement is exact only for Brownian paths")
    if path.refined:
        raise DomainError("path is already refined")
    a, b = path.x[:-1], path.x[1:]
    u = 1.0 - rng.random(len(a))
    cell = bridge_maximum(a, b, path.dt, u)
    s = np.concatenate([[0.0], np.maximum.accumulate(np.maximum(cell, 0.0))])
    return replace(path, s=s, refined=True)


def sample_clock(spec: ClockSpec, rng: np.random.Generator, size=None):
    if spec.kind == "constant":
        return spec.param if size is None else np.full(size, spec.param)
    return rng.standard_exponential(size) / spec.param


@dataclass(frozen=True)
class FirstPassage:
    time: float
    path: PathSample


@dataclass(frozen=True)
class Censored:
    cap: float
    path: PathSample


def first_passage(model: LevyModel, level: float, dt: float, cap: float,
                  rng: np.random.Generator, refine: Optional[bool] = None,
                  seed_path: int = 0, chunk: int = 4096):
    """Simulate until the running supremum exceeds ``level`` or time ``cap``.

    The crossing time is the right end of the first cell whose (bridge-refined
    for Brownian motion) maximum exceeds ``level``; the returned path is
    stopped there, with its last point set to the level itself.
    """
    if not (np.isfinite(level) and level > 0):
        raise DomainError("level must be positive")
    if not (np.isfinite(cap) and cap >= dt > 0):
        raise DomainError("need cap >= dt > 0")
    refine = model.is_brownian if refine is None else refine
    if refine and not model.is_brownian:
        raise UnsupportedCapability("bridge refinement is exact only for Brownian paths")
    n_max = int(np.floor(cap / dt + 1e-9))
    xs = [np.zeros(1)]
    ss = [np.zeros(1)]
    x0, s0, done = 0.0, 0.0, 0
    while done < n_max:
        m = min(chunk, n_max - done)
        x = x0 + np.cumsum(sample_increment(model, dt, rng, m))
        prev = np.concatenate([[x0], x[:-1]])
        cell = bridge_maximum(prev, x, dt, 1.0 - rng.random(m)) if refine else x
        s = np.maximum.accumulate(np.maximum(cell, s0))
        hit = np.flatnonzero(s > level)
        if hit.size:
            k = hit[0]
            x, s = x[: k + 1].copy(), s[: k + 1].copy()
            x[-1] = max(x[-1], level) if not refine else level
            s[-1] = level if refine else s[-1]
            xs.append(x)
            ss.append(s)
            n = done + k + 1
            path = PathSample(dt, np.arange(n + 1) * dt, np.concatenate(xs), np.concatenate(ss),
                              refine, seed_path, model.name)
            return FirstPassage(n * dt, path)
        xs.append(x)
        ss.append(s)
        x0, s0 = x[-1], s[-1]
        done += m
    path = PathSample(dt, np.arange(done + 1) * dt, np.concatenate(xs), np.concatenate(ss),
                      refine, seed_path, model.name)
    return Censored(cap, path)


# --- vectorised batch engine -------------------------------------------------


@dataclass
class BatchResult:
    """Per-path summaries from :func:`simulate_batch`.

    ``x_rec``/``s_rec`` have one column per record time (``nan`` where the
    path was stopped before that time). ``s_clock`` is the supremum up to the
    path's clock; for stopped paths it is the (larger than ``stop_level``)
    value at stopping. ``hit_step`` is the first step whose cell maximum
    exceeded ``stop_level`` (``-1`` if none).
    """

    x_rec: np.ndarray
    s_rec: np.ndarray
    x_clock: np.ndarray
    s_clock: np.ndarray
    hit_step: np.ndarray
    s_rec_coarse: Optional[np.ndarray] = None
    clock: Optional[np.ndarray] = None


def simulate_batch(model: LevyModel, dt: float, n: int, rng_inc: np.random.Generator,
                   rng_bridge: np.random.Generator, *, clock=None, record_steps: Sequence[int] = (),
                   stop_level=None, refine: bool = True, coarse: bool = False,
                   block: int = 256) -> BatchResult:
    """Simulate ``n`` paths on the ``dt`` grid.

    Parameters
    ----------
    clock : float or ndarray, optional
        Per-path clock times (need not lie on the grid). The cell containing
        a clock is split in two exact sub-increments so that ``S`` at the
        clock is exact for refined Brownian paths. Paths run to
        ``max(clock, last record time)``.
    record_steps : sequence of int
        Grid indices at which ``(X, S)`` is recorded.
    stop_level : float or ndarray, optional
        A path is dropped as soon as its supremum exceeds this level, unless
        its clock has already passed below the level. Records after the
        stopping step are ``nan``.
    refine : bool
        Bridge-maximum refinement (Brownian only).
    coarse : bool
        Also record the grid maximum over even steps only, i.e. the
        supremum the same path would show at step ``2 dt``.
    """
    if refine and not model.is_brownian:
        raise UnsupportedCapability("bridge refinement is exact only for Brownian paths")
    record_steps = np.asarray(sorted(record_steps), dtype=np.int64)
    n_rec = len(record_steps)
    if clock is None:
        clock_cell = np.full(n, -1, dtype=np.int64)
        frac = np.zeros(n)
        end = np.full(n, record_steps[-1] if n_rec else 0, dtype=np.int64)
    else:
        clock = np.broadcast_to(np.asarray(clock, dtype=float), (n,))
        clock_cell = np.floor(clock / dt).astype(np.int64)
        frac = clock - clock_cell * dt
        # a clock sitting on the grid point needs no split cell
        on_grid = frac <= 1e-12 * dt
        frac = np.where(on_grid, 0.0, frac)
        end = np.where(on_grid, clock_cell, clock_cell + 1)
        if n_rec:
            end = np.maximum(end, record_steps[-1])
    level = None if stop_level is None else np.broadcast_to(
        np.asarray(stop_level, dtype=float), (n,)).copy()

    x_rec = np.full((n, n_rec), np.nan)
    s_rec = np.full((n, n_rec), np.nan)
    s_rec_c = np.full((n, n_rec), np.nan) if coarse else None
    x_clock = np.full(n, np.nan)
    s_clock = np.full(n, np.nan)
    hit = np.full(n, -1, dtype=np.int64)

    # clocks at time 0 (or on the grid) are read off directly
    if clock is not None:
        zero = (clock_cell == 0) & (frac == 0.0)
        x_clock[zero] = 0.0
        s_clock[zero] = 0.0
    if n_rec:
        at0 = record_steps == 0
        x_rec[:, at0] = 0.0
        s_rec[:, at0] = 0.0
        if coarse:
            s_rec_c[:, at0] = 0.0

    idx = np.flatnonzero(end > 0)
    x = np.zeros(n)
    s = np.zeros(n)
    sc = np.zeros(n)
    step = 0
    max_end = int(end.max()) if n else 0
    sqdt = np.sqrt(dt)
    while idx.size and step < max_end:
        m = idx.size
        B = min(block, max_end - step)
        inc = sample_increment(model, dt, rng_inc, (m, B))
        cols = np.arange(B)
        gstep = step + cols  # increment j moves the path from step+j to step+j+1

        # split cells holding a clock inside this block
        cc = clock_cell[idx] - step
        split = (cc >= 0) & (cc < B) & (frac[idx] > 0)
        sp_rows = np.flatnonzero(split)
        if sp_rows.size:
            f_sp = frac[idx[sp_rows]]
            i1 = sample_increment(model, f_sp, rng_inc)
            i2 = sample_increment(model, dt - f_sp, rng_inc)
            inc[sp_rows, cc[sp_rows]] = i1 + i2

        X = x[idx, None] + np.cumsum(inc, axis=1)
        prev = np.concatenate([x[idx, None], X[:, :-1]], axis=1)
        if refine:
            cell = bridge_maximum(prev, X, dt, 1.0 - rng_bridge.random((m, B)))
        else:
            cell = X.copy()
        if sp_rows.size:
            a = prev[sp_rows, cc[sp_rows]]
            xc = a + i1
            b = X[sp_rows, cc[sp_rows]]
            if refine:
                m1 = bridge_maximum(a, xc, f_sp, 1.0 - rng_bridge.random(sp_rows.size))
                m2 = bridge_maximum(xc, b, dt - f_sp, 1.0 - rng_bridge.random(sp_rows.size))
            else:
                m1, m2 = xc, b
            cell[sp_rows, cc[sp_rows]] = np.maximum(m1, m2)
        # steps past a path's end must not count
        past = (gstep[None, :] >= end[idx, None])
        if past.any():
            cell[past] = -np.inf
        S = np.maximum.accumulate(np.maximum(cell, s[idx, None]), axis=1)

        if sp_rows.size:
            c = cc[sp_rows]
            s_before = np.where(c > 0, S[sp_rows, np.maximum(c - 1, 0)], s[idx[sp_rows]])
            x_clock[idx[sp_rows]] = xc
            s_clock[idx[sp_rows]] = np.maximum(s_before, m1)
        # clocks exactly on a grid point inside this block
        on = (~split) & (clock_cell[idx] > step) & (clock_cell[idx] <= step + B) & (frac[idx] == 0)
        if clock is not None and on.any():
            r = np.flatnonzero(on)
            c = clock_cell[idx[r]] - step - 1
            x_clock[idx[r]] = X[r, c]
            s_clock[idx[r]] = S[r, c]

        for k, rs in enumerate(record_steps):
            j = rs - step - 1
            if 0 <= j < B:
                x_rec[idx, k] = X[:, j]
                s_rec[idx, k] = S[:, j]

        if coarse:
            even = ((gstep + 1) % 2 == 0)
            Xe = np.where(even[None, :] & ~past, X, -np.inf)
            SC = np.maximum.accumulate(np.maximum(Xe, sc[idx, None]), axis=1)
            for k, rs in enumerate(record_steps):
                j = rs - step - 1
                if 0 <= j < B:
                    s_rec_c[idx, k] = SC[:, j]
            sc[idx] = SC[:, -1]

        x[idx] = X[np.arange(m), np.minimum(end[idx] - step, B) - 1]
        s[idx] = S[:, -1]
        step += B

        alive = end[idx] > step
        if level is not None:
            over = S > level[idx, None]
            crossed = over.any(axis=1)
            first = np.argmax(over, axis=1)
            new_hits = crossed & (hit[idx] < 0)
            hit[idx[new_hits]] = step - B + first[new_hits] + 1
            # stop only if the crossing came no later than the clock: then the
            # clock supremum is only known to exceed the level
            sc_now = s_clock[idx]
            stop = crossed & (np.isnan(sc_now) | (sc_now > level[idx]))
            pend = stop & np.isnan(sc_now)
            s_clock[idx[pend]] = S[pend, -1]
            if n_rec and stop.any():
                rows = idx[stop]
                x_rec[rows] = np.where(record_steps[None, :] > hit[rows, None], np.nan,
                                       x_rec[rows])
                s_rec[rows] = np.where(record_steps[None, :] > hit[rows, None], np.nan,
                                       s_rec[rows])
                if coarse:
                    s_rec_c[rows] = np.where(record_steps[None, :] > hit[rows, None], np.nan,
                                             s_rec_c[rows])
            alive &= ~stop
        idx = idx[alive]

    return BatchResult(x_rec, s_rec, x_clock, s_clock, hit, s_rec_c,
                       None if clock is None else np.asarray(clock))


# --- binary dump -------------------------------------------------------------


def write_path_dump(fh, path: PathSample) -> None:
    """Append one little-endian record ``(dt f64, n u64, x f64[n], s f64[n])``."""
    n = len(path.x)
    fh.write(struct.pack("<dQ", path.dt, n))
    fh.write(np.asarray(path.x, dtype="<f8").tobytes())
    fh.write(np.asarray(path.s, dtype="<f8").tobytes())


def read_path_dump(fh) -> list[tuple[float, np.ndarray, np.ndarray]]:
    out = []
    while True:
        head = fh.read(16)
        if not head:
            return out
        dt, n = struct.unpack("<dQ", head)
        x = np.frombuffer(fh.read(8 * n), dtype="<f8")
        s = np.frombuffer(fh.read(8 * n), dtype="<f8")
        out.append((dt, x, s))
