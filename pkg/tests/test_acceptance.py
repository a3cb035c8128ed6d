"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION <k>: PASS|FAIL ...`` line to the
terminal (bypassing capture) and then asserts the criterion at its stated
tolerance.
"""

import time

import numpy as np
import pytest
from scipy import stats

from levy_penalize.azema_yor import ExpDecay, Indicator, m0
from levy_penalize.cli import RunConfig, run_suite
from levy_penalize.levy_models import (
    brownian,
    check_convolution_identity,
    check_laplace_hq,
    check_q_over_kappa,
    n_tail_eval,
    stable,
    sup_density_eval,
)
from levy_penalize.mc_stats import WeightedEcdf, ks_distance, ks_to_cdf
from levy_penalize.path_sim import ClockSpec
from levy_penalize.penalization import (
    FunctionalSpec,
    bessel3_cdf,
    const_clock_ratio,
    crosscheck_samplers,
    decompose_batch_brownian,
    exact_normalized_mass,
    exp_clock_ratio,
    importance_sample_penalized,
    martingale_check,
    normalized_mass,
    penalized_target,
)

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

N = 100_000
BM = brownian()
CAUCHY = stable(1.0, 0.5)


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def test_criterion_01_identity_suite(report):
    start = time.perf_counter()
    grid = (0.1, 1.0, 10.0)
    bm = max(check_laplace_hq(BM, q, lam).residual for q in grid for lam in grid)
    ca = max(check_laplace_hq(CAUCHY, q, lam).residual for q in grid for lam in grid)
    conv = max(check_convolution_identity(BM, t, x).residual
               for t, x in ((1.0, 0.1), (1.0, 1.0), (4.0, 2.0)))
    elapsed = time.perf_counter() - start
    ok = bm <= 1e-8 and ca <= 1e-6 and conv <= 1e-6 and elapsed < 10
    report(1, ok, f"laplace_bm={bm:.2e} laplace_cauchy={ca:.2e} conv={conv:.2e} "
                  f"time={elapsed:.1f}s")
    assert ok


def test_criterion_02_martingale_suite(report):
    times = (0.25, 0.5, 1.0)
    lines, ok = [], True
    for f in (Indicator(1.0), ExpDecay(1.0)):
        target = m0(f, BM)
        res = martingale_check(f, BM, times, N, 1e-3, seed=21)
        for t in times:
            mean, se, _, _ = res[t]
            good = abs(mean - target) <= 3 * se
            ok &= good
            lines.append(f"bm/{f.spec}/t={t}:{(mean - target) / se:+.2f}se")
        # Cauchy at dt/2 = 5e-4, read also at dt = 1e-3 on the same paths
        target = m0(f, CAUCHY)
        res = martingale_check(f, CAUCHY, times, N, 5e-4, seed=22, coarse=True)
        for t in times:
            mean, se, shift, _ = res[t]
            coarse_mean = mean - shift
            good = abs(coarse_mean - target) <= 3 * se and abs(shift) <= 2 * se
            ok &= good
            lines.append(f"cauchy/{f.spec}/t={t}:{(coarse_mean - target) / se:+.2f}se,"
                         f"shift={shift / se:+.2f}se")
    report(2, ok, " ".join(lines))
    assert ok


def test_criterion_03_exponential_clock(report):
    f = Indicator(1.0)
    F = FunctionalSpec("xle", 0.0)
    t, dt = 0.25, 1e-3
    target = penalized_target(f, BM, F, t, N, dt, seed=31)
    gaps, ses = [], []
    for q in (1.0, 0.1, 0.01):
        est = exp_clock_ratio(f, BM, F, q, t, N, dt, seed=32)
        gaps.append(abs(est.estimate - target.estimate))
        ses.append(float(np.hypot(est.std_err, target.std_err)))
    decreasing = all(gaps[i + 1] <= gaps[i] + 3 * np.hypot(ses[i], ses[i + 1])
                     for i in range(2))
    final = gaps[-1] <= 0.02 + 3 * ses[-1]
    ok = decreasing and final
    report(3, ok, f"target={target.estimate:.4f} gaps={[round(g, 4) for g in gaps]} "
                  f"se={[round(s, 4) for s in ses]}")
    assert ok


def test_criterion_04_normalized_mass_exponential(report):
    f = Indicator(1.0)
    ok, parts = True, []
    for q in (1.0, 0.1, 0.02):
        clock = ClockSpec.exponential(q)
        est = normalized_mass(f, BM, clock, N, 1e-3, seed=41)
        exact = (1 - np.exp(-np.sqrt(2 * q))) / np.sqrt(2 * q)
        assert exact_normalized_mass(f, BM, clock) == pytest.approx(exact, rel=1e-12)
        good = abs(est.estimate - exact) <= 3 * est.std_err + 0.005
        ok &= good
        parts.append(f"q={q}:{est.estimate:.4f}vs{exact:.4f}(se={est.std_err:.4f})")
    report(4, ok, " ".join(parts))
    assert ok


def test_criterion_05_constant_clock(report):
    f = Indicator(1.0)
    # bridge refinement makes S at a grid-aligned clock exact in law, so dt only sets cost
    dt = 1e-2
    ok, parts = True, []
    for s in (4.0, 16.0, 64.0):
        clock = ClockSpec.constant(s)
        est = normalized_mass(f, BM, clock, N, dt, seed=51)
        exact = (2 * stats.norm.cdf(1 / np.sqrt(s)) - 1) / np.sqrt(2 / (np.pi * s))
        assert exact_normalized_mass(f, BM, clock) == pytest.approx(exact, rel=1e-12)
        good = (abs(est.estimate - exact) <= 3 * est.std_err + 0.01
                and abs(exact - 1.0) <= 1 / (6 * s) + 0.005)
        ok &= good
        parts.append(f"s={s:g}:{est.estimate:.4f}vs{exact:.4f}")
    F = FunctionalSpec("xle", 0.0)
    target = penalized_target(f, BM, F, 0.25, N, dt, seed=52)
    ratio = const_clock_ratio(f, BM, F, 64.0, 0.25, N, dt, seed=53)
    gap = abs(ratio.estimate - target.estimate)
    comb = float(np.hypot(ratio.std_err, target.std_err))
    ok &= gap <= 0.02 + 3 * comb
    parts.append(f"ratio_gap(s=64)={gap:.4f}(se={comb:.4f})")
    report(5, ok, " ".join(parts))
    assert ok


def test_criterion_06_excursion_density_ratio(report):
    xs = np.linspace(1e-4, 1.0, 2001)
    worst = 0.0
    for t in (50.0, 100.0, 1e3, 1e4):
        ratio = sup_density_eval(BM, t, xs) / n_tail_eval(BM, t)
        worst = max(worst, float(np.max(np.abs(ratio - 1.0))))
    ok = worst <= 0.011
    report(6, ok, f"max|phi_t/n_t - h'|={worst:.5f}")
    assert ok


def test_criterion_07_penalized_sup_law(report):
    f = Indicator(1.0)
    ws = importance_sample_penalized(f, BM, 16.0, N, 1e-2, seed=71)
    ks_bm = ks_to_cdf(ws.ecdf("s"), lambda y: np.clip(y, 0.0, 1.0))
    # unrefined stable suprema need a finer grid; see the README
    wc = importance_sample_penalized(f, CAUCHY, 16.0, N, 1e-3, seed=72)
    ks_c = ks_to_cdf(wc.ecdf("s"), lambda y: np.sqrt(np.clip(y, 0.0, 1.0)))
    ok = ks_bm <= 0.03 and ks_c <= 0.04
    report(7, ok, f"ks_brownian={ks_bm:.4f}(<=0.03) ks_cauchy={ks_c:.4f}(<=0.04) "
                  f"ess={ws.ess:.0f}/{wc.ess:.0f}")
    assert ok


def test_criterion_08_decomposition_sampler(report):
    f = Indicator(1.0)
    t, dt = 16.0, 1e-2
    dec = decompose_batch_brownian(f, t, N, dt, seed=81, horizon=64.0 * t, lag=t)
    ks_s = ks_to_cdf(WeightedEcdf(dec.s_inf), lambda y: np.clip(y, 0.0, 1.0))
    ks_b = ks_to_cdf(WeightedEcdf(dec.post_lag), lambda r: bessel3_cdf(r, t))
    rank_corr = stats.spearmanr(dec.g, dec.post_lag).statistic
    corr_se = 1.0 / np.sqrt(N - 1)
    cc = crosscheck_samplers(f, BM, t, N, dt, seed=82)
    ok = (ks_s <= 0.0043 and ks_b <= 0.01 and abs(rank_corr) <= 3 * corr_se
          and cc.ks <= 0.03 and not cc.inconclusive)
    report(8, ok, f"ks_s_inf={ks_s:.4f} ks_bessel={ks_b:.4f} corr={rank_corr:+.4f}"
                  f"(3se={3 * corr_se:.4f}) crosscheck_ks={cc.ks:.4f} "
                  f"censored={dec.censored_fraction:.4f}")
    assert ok


def test_criterion_09_q_over_kappa(report):
    _, vb, dec_b = check_q_over_kappa(BM)
    _, vc, dec_c = check_q_over_kappa(CAUCHY)
    ok = dec_b and dec_c and vb[-1] <= 1e-3 and vc[-1] <= 1e-3
    report(9, ok, f"brownian_final={vb[-1]:.3e} cauchy_final={vc[-1]:.3e}")
    assert ok


def test_criterion_10_reproducibility(report, tmp_path, monkeypatch):
    outputs = []
    for i, threads in enumerate(("1", "1", "3")):
        monkeypatch.setenv("LEVY_PENALIZE_THREADS", threads)
        cfg = RunConfig(suite="exp-clock", clock_grid=(1.0, 0.1)[::-1], t=0.25, dt=1e-2,
                        n_paths=20_000, seed=101, out=str(tmp_path / f"run{i}.csv"))
        run_suite(cfg)
        outputs.append((tmp_path / f"run{i}.csv").read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    report(10, ok, f"identical={ok} bytes={len(outputs[0])}")
    assert ok
