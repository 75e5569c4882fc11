import json

import numpy as np
import pytest
from scipy import stats

from gpmlab.density import invariant_density
from gpmlab.kernel import kernel_matrix
from gpmlab.limits import (IIDSource, LimitReport, SampleSizeError, batch_means_sigma2,
                           dyadic, gaussian_ks_scaled, hill_estimator, ks_distance,
                           lil_ratio_scan, loglog2, sigma2_spectral, slln_rate_scan,
                           stable_law_diagnostics, tail_mass_ratio)
from gpmlab.maps import make_doubling


def normal_draw(rng, n):
    return rng.standard_normal(n)


def pareto_draw(rng, n, alpha=1.5):
    return rng.pareto(alpha, n) + 1.0


@pytest.fixture(scope="module")
def doubling_kernel():
    m = make_doubling()
    g = np.linspace(0, 1, 65)
    return kernel_matrix(invariant_density(m, g), m, g)


def test_loglog2_floor():
    assert loglog2(1) == pytest.approx(1.0)
    assert loglog2(np.e ** np.e) == pytest.approx(1.0)
    assert loglog2(1e6) == pytest.approx(np.log(np.log(1e6)))
    assert list(dyadic(4)) == [2, 4, 8, 16]


def test_sigma2_constant_is_zero(lsv):
    _, _, K = lsv(0.25, 1000)
    assert sigma2_spectral(K, np.full(K.n_cells, 3.0)) == (0.0, 0.0)


def test_sigma2_doubling_indicator(doubling_kernel):
    # correlations of 1[0,1/2] vanish at every positive lag under doubling
    s2, tail = sigma2_spectral(doubling_kernel, doubling_kernel.indicator(0.5))
    assert s2 == pytest.approx(0.25, abs=1e-12)
    assert tail == 0.0


def test_sigma2_grid_invariance(lsv):
    vals = []
    for cells in (1000, 2000):
        _, _, K = lsv(0.25, cells)
        vals.append(sigma2_spectral(K, K.indicator(0.5))[0])
    assert vals[1] == pytest.approx(vals[0], rel=0.02)


def test_batch_means_iid():
    x = np.random.default_rng(5).standard_normal(400_000)
    assert batch_means_sigma2(x) == pytest.approx(1.0, rel=0.1)
    with pytest.raises(SampleSizeError):
        batch_means_sigma2(np.ones(3), batch_len=2)


def test_iid_gaussian_lil_ratios():
    rep = lil_ratio_scan(IIDSource(normal_draw), None, A=3.0, n_max_log2=14, replicas=200,
                         seed=3)
    assert rep.ratios["lil"].shape == (200, 14)
    assert rep.summary["fraction_below"] == 1.0
    assert rep.summary["max_ratio"] < 3.0


def test_iid_slln_ratio_decreases():
    rep = slln_rate_scan(IIDSource(normal_draw), None, p=1.5, b=0.0, n_max_log2=16,
                         replicas=200, seed=4, window=10)
    assert rep.summary["fraction_decreasing"] > 0.9


def test_hill_pareto():
    x = pareto_draw(np.random.default_rng(6), 200_000)
    idx, lo, hi = hill_estimator(x, fraction=0.01, bootstrap=50)
    assert idx == pytest.approx(1.5, abs=0.15)
    assert lo <= idx <= hi


def test_hill_sample_size():
    with pytest.raises(SampleSizeError):
        hill_estimator(np.arange(1.0, 1000.0), fraction=0.05)


def test_tail_mass_ratio_one_sided():
    x = pareto_draw(np.random.default_rng(7), 50_000)
    ratio, right, left = tail_mass_ratio(x - np.median(x))
    assert ratio == np.inf and left == 0 and right > 0


def test_stable_diagnostics_iid_pareto():
    src = IIDSource(pareto_draw, mean=3.0)
    rep = stable_law_diagnostics(src, None, p=1.5, n=64, replicas=8000, seed=8, bootstrap=30)
    assert rep.hill["index"] == pytest.approx(1.5, abs=0.3)
    assert rep.summary["tail_ratio"] > 3
    with pytest.raises(SampleSizeError):
        stable_law_diagnostics(src, None, p=1.5, n=64, replicas=1000, seed=8)


def test_ks_identical_and_disjoint():
    a = np.random.default_rng(9).standard_normal(1000)
    assert ks_distance(a, a)["statistic"] == 0.0
    assert ks_distance(a, a + 100.0)["statistic"] == 1.0
    with pytest.raises(SampleSizeError):
        ks_distance([], "norm")


def test_ks_pvalues_uniform_under_null():
    rng = np.random.default_rng(10)
    pv = [ks_distance(rng.standard_normal(500), "norm")["p_value"] for _ in range(300)]
    assert stats.kstest(pv, "uniform").pvalue > 0.01


def test_gaussian_ks_scaled():
    x = 2.5 * np.random.default_rng(11).standard_normal(20_000)
    res, scale = gaussian_ks_scaled(x)
    assert scale == pytest.approx(2.5, rel=0.02)
    assert res["statistic"] < 0.015


def test_limit_report_serialization(tmp_path):
    rep = LimitReport(sigma2=0.3, n=[2, 4], ratios={"lil": np.array([[0.5, 0.6], [0.7, 0.2]])},
                      summary={"inf": float("inf"), "flag": np.bool_(True)})
    data = json.loads(rep.to_json())
    assert data["summary"] == {"inf": "inf", "flag": True}
    rep.curves_csv(tmp_path / "c.csv", "lil")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "n,ratio,q05,q95" and len(rows) == 3
    assert float(rows[1].split(",")[1]) == pytest.approx(0.6)
