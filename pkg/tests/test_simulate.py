import numpy as np
import pytest
from scipy import stats

from gpmlab.density import invariant_density
from gpmlab.limits import orbit_batch_means_sigma2
from gpmlab.maps import make_doubling, make_lsv, z_sequence
from gpmlab.observables import ObservableSpec, Piece
from gpmlab.simulate import (ChainWeightError, Trajectory, chain_sums, escape_time,
                             orbit_sums, sample_stationary, simulate_chain, simulate_orbit,
                             time_reversal_test)

HALF = ObservableSpec.indicator(0.0, 0.5)
IDENTITY = ObservableSpec((Piece("affine", c1=1.0),), name="x")


@pytest.fixture(scope="module")
def doubling():
    m = make_doubling()
    return m, invariant_density(m, np.linspace(0, 1, 129))


def test_sample_stationary_doubling_uniform(doubling):
    _, d = doubling
    x = sample_stationary(d, np.random.default_rng(1), 100_000)
    assert stats.kstest(x, "uniform").statistic < 0.01


def test_sample_stationary_lsv_mass(lsv):
    m, d, _ = lsv(0.5, 1000)
    x = sample_stationary(d, np.random.default_rng(2), 200_000)
    assert np.mean(x <= m.z1) == pytest.approx(d.nu_mass(0, m.z1), rel=0.01)


def test_sample_single_cell():
    d = invariant_density(make_doubling(), np.array([0.0, 1.0]))
    x = sample_stationary(d, np.random.default_rng(0), 100)
    assert np.all((x >= 0) & (x <= 1))
    assert isinstance(sample_stationary(d, np.random.default_rng(0)), float)


def test_doubling_chain_steps_to_preimages(doubling):
    m, d = doubling
    tr = simulate_chain(m, d, 2000, seed=3)
    y = tr.states
    step = np.minimum(np.abs(y[1:] - y[:-1] / 2), np.abs(y[1:] - (y[:-1] + 1) / 2))
    assert np.max(step) <= 1e-15
    assert tr.weight_sum_worst <= 1e-12
    # both preimages taken about equally often
    assert np.mean(y[1:] > 0.5) == pytest.approx(0.5, abs=0.05)


def test_chain_occupation_matches_nu(lsv):
    m, d, _ = lsv(0.25, 1000)
    tr = simulate_chain(m, d, 10_000_000, seed=4)
    thin = tr.states[::200]
    edges = np.linspace(0, 1, 51)
    counts = np.histogram(thin, edges)[0]
    cdf = np.concatenate([[0], np.cumsum(d.nu_weights)])
    expected = np.diff(np.interp(edges, d.grid, cdf))
    n = len(thin)
    z = (counts - n * expected) / np.sqrt(n * expected * (1 - expected))
    assert np.max(np.abs(z)) < 3.5
    assert abs(tr.weight_sum_mean - 1) <= 5e-3


def test_chain_weight_drift_raises(lsv):
    m, d, _ = lsv(0.25, 200)
    bad = type(d)(h=type(d.h)(d.grid, d.h.values * np.linspace(0.3, 3, len(d.h.values))),
                  nu_weights=d.nu_weights, ulam=d.ulam, gamma=d.gamma,
                  residual=d.residual, iterations=d.iterations)
    with pytest.raises(ChainWeightError):
        simulate_chain(m, bad, 1000, seed=0)


def test_orbit_fixed_point(lsv):
    m, d, _ = lsv(0.25, 200)
    tr = simulate_orbit(m, d, 100, seed=0, x0=0.0)
    assert np.all(tr.states == 0.0)


def test_orbit_is_exact_iteration(lsv):
    m, d, _ = lsv(0.25, 200)
    s = simulate_orbit(m, d, 1000, seed=1).states
    assert np.array_equal(s[1:], m(s[:-1]))
    assert np.all((s >= 0) & (s <= 1))


def test_birkhoff_average_of_identity(lsv):
    m, d, _ = lsv(0.25, 2000)
    n = 10_000_000
    s2, avg = orbit_batch_means_sigma2(m, d, IDENTITY, n, seed=5)
    assert abs(avg - IDENTITY.nu_mean(d)) <= 3 * np.sqrt(s2 / n)


def test_escape_time_from_z_orbit():
    m = make_lsv(0.3)
    z = z_sequence(m, 50).values
    for k in (1, 2, 10, 50):
        assert escape_time(m, z[k] * (1 - 1e-12)) == k


def test_orbit_and_chain_birkhoff_agree(lsv):
    m, d, _ = lsv(0.25, 1000)
    so, _ = orbit_sums(m, d, HALF, 4096, 400, 6, mean=0.0)
    sc, _ = chain_sums(m, d, HALF, 4096, 400, 7, mean=0.0)
    a, b = so[:, 0] / 4096, sc[:, 0] / 4096
    se = np.sqrt(a.var() / len(a) + b.var() / len(b))
    assert abs(a.mean() - b.mean()) <= 4 * se


def test_sums_independent_of_threads(lsv):
    m, d, _ = lsv(0.25, 500)
    for fn in (orbit_sums, chain_sums):
        r1 = fn(m, d, HALF, 300, 16, 11, [100, 300], threads=1)
        r3 = fn(m, d, HALF, 300, 16, 11, [100, 300], threads=3)
        assert all(np.array_equal(a, b) for a, b in zip(r1, r3))


def test_suffix_max_of_reversed_chain(lsv):
    m, d, _ = lsv(0.25, 500)
    S, M = chain_sums(m, d, HALF, 50, 3, 2, mean=0.5, suffix=True)
    S0, M0 = chain_sums(m, d, HALF, 50, 3, 2, mean=0.5)
    assert np.allclose(S, S0)
    assert np.all(M >= np.abs(S) - 1e-12)


def test_time_reversal_trivial_cases(lsv):
    m, d, _ = lsv(0.25, 500)
    const = ObservableSpec.constant(1.0)
    rep = time_reversal_test(m, d, const, 64, 200, 1)
    assert rep.statistic == 0.0
    assert np.max(np.abs(rep.orbit_sample)) <= 1e-12
    assert np.max(np.abs(rep.chain_sample)) <= 1e-12
    rep = time_reversal_test(m, d, HALF, 1, 10_000, 2)
    assert rep.p_value > 0.01


def test_trajectory_exports(tmp_path):
    tr = Trajectory(np.array([0.1, 0.25]), "orbit", 1)
    tr.to_csv(tmp_path / "t.csv")
    tr.to_binary(tmp_path / "t.bin")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["i,state", "0,0.1", "1,0.25"]
    assert np.fromfile(tmp_path / "t.bin", "<f8").tolist() == [0.1, 0.25]
    with pytest.raises(ValueError):
        tr.states[0] = 1.0
