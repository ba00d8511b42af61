"""Acceptance suite: one marked group of tests per criterion.

The S1 campaign (n = 1000, k = n^2, M = 500) is shared by criteria 7, 8 and 9
and takes tens of minutes on a single core.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np
import pytest
from scipy import stats
from test_optimize import BOX2, gap_instance

from splineii.density import fit_from_points, resolution_rule, simulated_coeffs
from splineii.harness import McConfig, csv_text, emit_svg_hist, paired_variance_exceedance, rate_check, run_montecarlo, summary_dict
from splineii.inference import EstimationConfig, ideal_estimate, indirect_inference_estimate
from splineii.models import SharedDraws, fisher_information, get_model, simulate_sample
from splineii.objective import eval_Qnk, eval_Qnk_direct, precompute
from splineii.optimize import minimize
from splineii.selftest import (
    _derivative_recurrence,
    _gram_banded,
    _partition_of_unity,
    _projection_idempotent,
)
from splineii.spline_core import SplineBasis, basis_moments, gram_matrix, inf_norm_inverse_gram, project

TE = get_model("trunc_exp")
FISHER = float(fisher_information(TE, [1.0])[0, 0])
MASTER_SEED = 2024
N = 1000
M = 500
WORKERS = os.cpu_count() or 1


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def campaign(regime, **kw):
    cfg = McConfig(
        model="trunc_exp",
        theta0=[1.0],
        n_list=[N],
        reps=M,
        master_seed=MASTER_SEED,
        estimation=EstimationConfig.preset(regime, **kw),
        record_timing=False,
    )
    start = time.perf_counter()
    report = run_montecarlo(cfg, workers=WORKERS)
    return report, time.perf_counter() - start


@pytest.fixture(scope="session")
def s1_campaign():
    return campaign("S1", compute_variance=True)


@pytest.fixture(scope="session")
def s3_campaign():
    return campaign("S3", kappa=1.0, r=4)


@criterion(1, "spline invariants")
def test_c01_spline_invariants(record_property):
    start = time.perf_counter()
    pou, rec, idem, band = _partition_of_unity(), _derivative_recurrence(), _projection_idempotent(), _gram_banded()
    elapsed = time.perf_counter() - start
    record_property("measure", f"pou {pou:.1e}, recurrence {rec:.1e}, idempotency {idem:.1e}, {elapsed:.1f}s")
    assert pou <= 1e-12
    assert rec <= 1e-14
    assert idem <= 1e-10
    assert band == 0.0
    assert elapsed < 10


@criterion(2, "gram stability")
def test_c02_gram_stability(record_property):
    start = time.perf_counter()
    spreads = []
    for r in (2, 3, 4):
        d = [inf_norm_inverse_gram(gram_matrix(SplineBasis(r, j))) for j in range(5, 10)]
        spreads.append((max(d) - min(d)) / min(d))
    elapsed = time.perf_counter() - start
    record_property("measure", f"max relative spread {max(spreads):.2e}, {elapsed:.1f}s")
    assert max(spreads) < 0.05
    assert elapsed < 30


@criterion(3, "bias identity")
def test_c03_bias_identity(record_property):
    start = time.perf_counter()
    k, reps = 10**4, 200
    basis = SplineBasis(4, resolution_rule(k, 1.5))
    gram = gram_matrix(basis)
    target = project(basis, gram, basis_moments(basis, lambda x: TE.density([1.0], x), level=8))
    coeffs = np.array([simulated_coeffs(basis, gram, TE, SharedDraws.generate(k, 7000 + i), [1.0]) for i in range(reps)])
    z = (coeffs.mean(axis=0) - target) / (coeffs.std(axis=0, ddof=1) / np.sqrt(reps))
    elapsed = time.perf_counter() - start
    record_property("measure", f"max |z| {np.abs(z).max():.2f} over {z.size} coefficients, {elapsed:.1f}s")
    assert np.all(np.abs(z) <= 3)
    assert elapsed < 60


@criterion(4, "MISE rate")
def test_c04_mise_rate(record_property):
    start = time.perf_counter()
    slope = rate_check(TE, [1.0], [2**e for e in range(8, 15)], tau=1.5, r=4, reps=50)
    elapsed = time.perf_counter() - start
    record_property("measure", f"slope {slope:.3f}, {elapsed:.1f}s")
    assert -1.0 <= slope <= -0.55
    assert elapsed < 120


@criterion(5, "objective equivalence")
def test_c05_objective_equivalence(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(55)
    worst = 0.0
    for case in range(100):
        n = int(rng.integers(50, 3000))
        x = simulate_sample(TE, SharedDraws.generate(n, 100 + case), [float(rng.uniform(0.2, 3.0))])
        obs = SplineBasis(int(rng.integers(2, 5)), resolution_rule(n, 1.5))
        p_n = fit_from_points(obs, gram_matrix(obs), x)
        basis = SplineBasis(int(rng.integers(2, 5)), int(rng.integers(1, 9)))
        pre = precompute(p_n, basis)
        if not pre.a_n_holds:
            continue
        gamma = simulated_coeffs(basis, gram_matrix(basis), TE, SharedDraws.generate(2000, 900 + case), [float(rng.uniform(0.2, 3.0))])
        worst = max(worst, abs(eval_Qnk(pre, gamma) - eval_Qnk_direct(pre, gamma)))
    elapsed = time.perf_counter() - start
    record_property("measure", f"max gap {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-8
    assert elapsed < 30


@criterion(6, "minimizer gap")
def test_c06_minimizer_gap(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    g = np.linspace(-2, 2, 26)
    worst = 0.0
    for _ in range(100):
        M1, _, m2, c, e = gap_instance(rng)
        m1 = minimize(M1, BOX2).theta
        sup = max(abs(e(np.array([a, b]))) for a in g for b in g)
        worst = max(worst, np.linalg.norm(m1 - m2) / (2 * c**-0.5 * np.sqrt(sup)))
    elapsed = time.perf_counter() - start
    record_property("measure", f"largest gap / bound {worst:.3f}, {elapsed:.1f}s")
    assert worst <= 1.0
    assert elapsed < 10


@criterion(7, "efficiency under S1")
def test_c07_s1_efficiency(s1_campaign, record_property):
    report, elapsed = s1_campaign
    s = report.summaries[N]
    ratio = float(s.variance_ratio[0])
    record_property("measure", f"variance ratio {ratio:.3f}, valid {s.valid}/{M}, {elapsed / 60:.1f} min on {WORKERS} worker(s)")
    assert 0.85 <= ratio <= 1.15
    assert elapsed < 30 * 60


@criterion(8, "variance inflation under S3")
def test_c08_s3_inflation(s1_campaign, s3_campaign, record_property):
    low, _ = s1_campaign
    high, elapsed = s3_campaign
    ratio = float(high.summaries[N].variance_ratio[0]) / 2
    share = paired_variance_exceedance(low, high, N)
    record_property("measure", f"ratio / 2 {ratio:.3f}, paired exceedance {share:.3f}, {elapsed:.0f}s")
    assert 0.8 <= ratio <= 1.2
    assert share >= 0.9
    assert elapsed < 30 * 60


@criterion(9, "variance estimator")
def test_c09_variance_estimator(s1_campaign, record_property):
    report, _ = s1_campaign
    s = report.summaries[N]
    median_rel = float(s.median_info_inverse[0, 0]) * FISHER
    coverage = float(s.coverage[0])
    record_property("measure", f"median plug-in / bound {median_rel:.3f}, coverage {coverage:.3f}")
    assert abs(median_rel - 1.0) <= 0.15
    assert 0.92 <= coverage <= 0.98


@criterion(10, "ideal vs simulated closeness")
def test_c10_ideal_vs_simulated(record_property):
    start = time.perf_counter()
    gaps = []
    for rep in range(20):
        x = simulate_sample(TE, SharedDraws.generate(512, 5100 + rep), [1.0])
        ideal = ideal_estimate(x, TE).theta_hat[0]
        sim = indirect_inference_estimate(x, TE, EstimationConfig(k=2**20, seed=rep)).theta_hat[0]
        gaps.append(abs(sim - ideal))
    elapsed = time.perf_counter() - start
    record_property("measure", f"median gap {np.median(gaps):.4f}, {elapsed:.0f}s")
    assert np.median(gaps) <= 0.02
    assert elapsed < 300


def _outputs(report, tmp_path, tag):
    svg = tmp_path / f"{tag}.svg"
    emit_svg_hist(report, 0, svg, n=200)
    return csv_text(report).encode(), json.dumps(summary_dict(report)).encode(), svg.read_bytes()


@criterion(11, "reproducibility")
def test_c11_reproducibility(tmp_path, record_property):
    start = time.perf_counter()
    cfg = McConfig(
        model="trunc_exp",
        theta0=[1.0],
        n_list=[200, 400],
        reps=12,
        master_seed=11,
        estimation=EstimationConfig.preset("S3", kappa=2.0, compute_variance=True),
        record_timing=False,
    )
    serial = _outputs(run_montecarlo(cfg, workers=1), tmp_path, "serial")
    again = _outputs(run_montecarlo(cfg, workers=1), tmp_path, "again")
    parallel = _outputs(run_montecarlo(cfg, workers=3), tmp_path, "parallel")
    elapsed = time.perf_counter() - start
    record_property("measure", f"{elapsed:.0f}s")
    assert serial == again
    assert serial == parallel
    assert elapsed < 120


class TestCampaignInvariants:
    """Distributional invariants of the estimator checked on full campaigns."""

    def test_s1_coverage_and_a_n(self, s1_campaign):
        report, _ = s1_campaign
        s = report.summaries[N]
        assert 0.92 <= s.coverage[0] <= 0.98
        assert s.failures.get("a_n_failed", 0) <= 0.01 * M

    def test_s1_covariance_symmetric_psd(self, s1_campaign):
        cov = s1_campaign[0].summaries[N].cov
        assert np.array_equal(cov, cov.T) and np.linalg.eigvalsh(cov).min() >= 0

    def test_normality_at_n2000(self):
        cfg = McConfig(
            model="trunc_exp",
            theta0=[1.0],
            n_list=[2000],
            reps=M,
            master_seed=MASTER_SEED,
            estimation=EstimationConfig.preset("S2"),
            record_timing=False,
        )
        report = run_montecarlo(cfg, workers=WORKERS)
        z = report.scaled_errors(2000)[:, 0]
        assert abs(stats.skew(z)) <= 0.3
        assert abs(stats.kurtosis(z)) <= 0.6
        assert report.summaries[2000].failures.get("a_n_failed", 0) <= 0.01 * M
