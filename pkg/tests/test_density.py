import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gpmlab.density import (GridFunction, anchor_grid, density_series_extension,
                            invariant_density, make_graded_grid, model_grid, ulam_matrix,
                            variation_norm)
from gpmlab.maps import make_doubling, make_lsv, z_sequence
from gpmlab.simulate import simulate_orbit
from gpmlab._util import loglog_fit


def test_graded_grid_examples():
    assert make_graded_grid(4, 1.0).tolist() == [0, 0.25, 0.5, 0.75, 1]
    assert make_graded_grid(4, 2.0).tolist() == [0, 1 / 16, 1 / 4, 9 / 16, 1]
    g = make_graded_grid(100, None, make_lsv(0.5))
    assert np.allclose(g[:5], (np.arange(5) / 100) ** 2)


def test_model_grid_contains_anchors():
    m = make_lsv(0.3)
    g = model_grid(m, 500)
    for z in (0.5, m.z0, m.z1):
        assert np.min(np.abs(g - z)) == 0.0
    g2 = anchor_grid(g, [0.5, 0.123])
    assert 0.123 in g2 and np.all(np.diff(g2) > 0)


def test_variation_norm_examples():
    assert variation_norm([1.0]) == 2.0
    assert variation_norm([1.0, 3.0, 2.0]) == 1 + 2 + 1 + 2
    assert GridFunction(np.array([0, 0.5, 1.0]), [0.0, 0.0]).variation_norm() == 0.0


@given(arrays(float, 12, elements=st.floats(-5, 5)), arrays(float, 12, elements=st.floats(-5, 5)))
def test_variation_submultiplicative(f, g):
    assert variation_norm(f * g) <= variation_norm(f) * variation_norm(g) + 1e-9
    assert variation_norm(f) >= 0


def test_ulam_doubling_uniform_grid():
    L = ulam_matrix(make_doubling(), np.linspace(0, 1, 5)).toarray()
    expected = np.array([[0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5],
                         [0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5]])
    assert np.allclose(L, expected, atol=1e-15)


@pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9])
def test_ulam_rows_sum_to_one(gamma):
    m = make_lsv(gamma)
    L = ulam_matrix(m, model_grid(m, 300))
    assert np.max(np.abs(np.asarray(L.sum(axis=1)).ravel() - 1)) <= 1e-12


def test_doubling_density_is_one():
    d = invariant_density(make_doubling(), np.linspace(0, 1, 257))
    assert np.max(np.abs(d.h.values - 1.0)) <= 1e-8


def test_lsv_density_stationary_and_normalized(lsv):
    _, d, _ = lsv(0.5, 2000)
    assert d.nu_weights.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(d.h.values > 0)
    assert d.residual < 1e-10
    nuL = d.ulam.T @ d.nu_weights
    rng = np.random.default_rng(3)
    for _ in range(5):
        f = rng.standard_normal(len(d.nu_weights))
        assert abs(nuL @ f - d.nu_weights @ f) <= 1e-8


@pytest.mark.parametrize("gamma", [0.25, 0.5])
def test_density_exponent(lsv, gamma):
    _, d, _ = lsv(gamma, 2000)
    c = d.h.centers
    sel = (c > 1e-4) & (c < 1e-2)
    assert loglog_fit(c[sel], d.h.values[sel])[0] == pytest.approx(-gamma, abs=0.1)


def test_density_at_z_orbit_bounded(lsv):
    m, d, _ = lsv(0.5, 2000)
    z = z_sequence(m, 1000).values
    r = d.interpolated(z) * z ** m.gamma
    assert r.max() / r.min() <= 10


def test_reference_mass_matches_orbit_frequency(lsv):
    m, d, _ = lsv(0.25, 1000)
    mass = d.nu_mass(m.z1, 1.0)
    tr = simulate_orbit(m, d, 2_000_000, seed=4)
    assert mass > 0
    assert np.mean(tr.states > m.z1) == pytest.approx(mass, rel=0.02)


def test_series_extension_matches_ulam(lsv):
    m, d, _ = lsv(0.5, 2000)
    c = d.h.centers
    sel = (c >= m.z1 / 2) & (c <= m.z1)
    ext = density_series_extension(m, d, 2000, c[sel])
    assert np.max(np.abs(ext.h / d.h.values[sel] - 1)) <= 0.05
    assert np.all(ext.tail_bound >= 0)


def test_series_extension_linear_in_input(lsv):
    m, d, _ = lsv(0.5, 1000)
    zero = type(d)(h=GridFunction(d.grid, np.zeros_like(d.h.values)), nu_weights=d.nu_weights,
                   ulam=d.ulam, gamma=d.gamma, residual=d.residual, iterations=d.iterations)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ext = density_series_extension(m, zero, 50)
    assert np.all(ext.h == 0)


def test_series_extension_grows_linearly_along_z_orbit(lsv):
    m, d, _ = lsv(0.5, 2000)
    z = z_sequence(m, 400).values
    ks = np.arange(20, 400, 20)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ext = density_series_extension(m, d, 3000, z[ks])
    assert loglog_fit(ks, ext.h)[0] == pytest.approx(1.0, rel=0.15)


def test_refinement_error_decreases():
    m = make_lsv(0.5)
    ref = invariant_density(m, model_grid(m, 8000))
    errs = []
    for n in (500, 1000, 2000, 4000):
        d = invariant_density(m, model_grid(m, n))
        # compare ν-masses of 50 common coarse bins
        edges = np.linspace(0, 1, 51)
        coarse = lambda dm: np.array([dm.nu_mass(a, b) for a, b in zip(edges[:-1], edges[1:])])
        errs.append(np.abs(coarse(d) - coarse(ref)).sum())
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_density_csv(tmp_path, lsv):
    _, d, _ = lsv(0.5, 1000)
    p = tmp_path / "h.csv"
    d.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "cell_left,cell_right,h_value,nu_mass"
    assert len(rows) == len(d.nu_weights) + 1
