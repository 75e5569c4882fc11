import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from gpmlab.bounds import (RS, BoundInputs, ContractError, best_fn_bound, domination_test_fn,
                           fn_maximal_bound, fn_simplified_bound, h_fn, lil_constant,
                           min_sn2, pinelis_bound, pinelis_test, r_grid, rio_covariance_bound,
                           rio_test, slln_series_bound)
from gpmlab.kernel import AlphaSequence, alpha_estimate, iid_surrogate
from gpmlab.limits import IIDSource, loglog2
from gpmlab.observables import ConditionError, ObservableSpec, TailSpec, check_condition, q_integral
from gpmlab.simulate import sample_stationary

ONE = TailSpec.indicator(1.0)
HARMONIC = 1.0 / np.arange(1, 101)          # α2(q) = 1/q at q = 1..100
GEOMETRIC = 2.0 ** -np.arange(60.0)


def power_alpha(slope, n_max=1000):
    k = np.arange(n_max + 1, dtype=float)
    return AlphaSequence(order=1, values=(k + 1.0) ** slope, slope=slope,
                         slope_band=(slope, slope), fit_range=(0, n_max), fit_residual=0.0,
                         thresholds=np.array([]))


def test_h_values():
    assert h_fn(0.0) == 0.0
    assert h_fn(1.0) == pytest.approx(0.386294361119891, rel=1e-14)


def test_R_direct_evaluation():
    rs = RS(TailSpec.power(4.0), np.concatenate([[1.0], HARMONIC]), 100)
    assert float(rs.R(0.1)) == pytest.approx(17.7828, abs=1e-4)
    assert int(rs.qmin(1e-6)) == 100


def test_R_S_degenerate_independence():
    rs = RS(ONE, np.array([1.0]), 50)
    assert np.all(rs.R([1e-9, 0.3, 0.999]) == 1.0)
    assert float(rs.R(1.0)) == 0.0
    assert rs.S(1.0) == 0.0
    assert rs.S(0.5) == 1.0


@given(st.floats(1e-3, 40.0), st.floats(2.5, 8.0))
def test_R_of_S_below_w(w, q):
    rs = RS(TailSpec.power(q), HARMONIC, 100)
    assert float(rs.R(rs.S(w))) <= w * (1 + 1e-12)


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_R_nonincreasing(u, v):
    rs = RS(TailSpec.powerlog(3.0, 1.0), HARMONIC, 100)
    lo, hi = min(u, v), max(u, v)
    assert rs.R(hi) <= rs.R(lo)


def test_R_rejects_increasing_alpha():
    with pytest.raises(ContractError):
        RS(ONE, np.array([0.3, 0.1, 0.2]), 2)


def test_exp_term_below_simplified_first_term():
    sn2, r = 50.0, 4.0
    for x in np.geomspace(0.1, 100, 40):
        expo = r * r * sn2 / (8 * x * x) * h_fn(2 * x * x / (r * sn2))
        assert 4 * math.exp(-expo) <= 4 * (1 + 2 * x * x / (r * sn2)) ** (-r / 8) * (1 + 1e-12)
    tail, a = TailSpec.power(4.0), 0.25 * HARMONIC
    for x in (2.0, 10.0, 50.0):
        assert (fn_maximal_bound(tail, a, a, 100, x, r)
                <= fn_simplified_bound(tail, a, a, 100, x, r) * (1 + 1e-12))


def test_fn_bound_monotone_in_x_and_n():
    tail, a = TailSpec.power(4.0), 0.25 * HARMONIC
    sn2 = min_sn2(tail, a, 64)
    xs = np.geomspace(1.0, 2000.0, 15)
    vals = [fn_maximal_bound(tail, a, a, 64, x, 4.0, sn2=sn2) for x in xs]
    assert np.all(np.diff(vals) <= 1e-15)
    by_n = [fn_maximal_bound(tail, a, a, n, 20.0, 4.0, sn2=sn2) for n in (8, 16, 32, 64)]
    assert np.all(np.diff(by_n) >= 0)
    assert fn_maximal_bound(tail, a, a, 64, 1e7, 4.0, sn2=sn2) < 1e-6


def test_fn_contract_errors():
    tail, a = TailSpec.power(4.0), 0.25 * HARMONIC
    need = min_sn2(tail, a, 32)
    with pytest.raises(ContractError):
        fn_maximal_bound(tail, a, a, 32, 5.0, 2.0, sn2=0.5 * need)
    with pytest.raises(ContractError):
        BoundInputs(tail, a, a, 32, sn2=0.5 * need)
    with pytest.raises(ContractError):
        fn_maximal_bound(tail, a, a, 32, -1.0, 2.0)
    inputs = BoundInputs(tail, a, a, 32)
    assert inputs.sn2 == pytest.approx(need)
    assert inputs.bound(5.0, 2.0) == fn_maximal_bound(tail, a, a, 32, 5.0, 2.0)
    assert not inputs.extended


def test_min_sn2_bounded_oracle():
    # Q ≡ 1: ∫_0^a Q² = a
    assert min_sn2(ONE, GEOMETRIC, 10) == pytest.approx(40 * GEOMETRIC[:10].sum())


def test_r_grid():
    n = 2 ** 20
    g = r_grid(n)
    assert g[0] == 1 and g[-1] == pytest.approx(8 * loglog2(n))
    assert np.all(g[1:-1] == 2 ** np.arange(1, len(g) - 1))
    b, r = best_fn_bound(TailSpec.power(4.0), 0.25 * HARMONIC, 0.25 * HARMONIC, 100, 30.0)
    assert r in g


def test_lil_constant_geometric():
    A = lil_constant(GEOMETRIC, ONE)
    assert A["chain"] == pytest.approx(20 * math.sqrt(2), rel=1e-12)
    assert A["map"] == pytest.approx(40 * math.sqrt(2) * 1.0, rel=1e-12)
    assert A["chain_truncation"] == 0.0


def test_lil_constant_lag_zero_only():
    A = lil_constant(np.array([0.7]), ONE)
    assert A["chain"] <= 20 and A["map"] == 0.0


def test_lil_constant_extension():
    A = lil_constant(power_alpha(-3.0), ONE)
    assert 0 < A["chain_truncation"] < 0.05 * A["chain"]
    with pytest.raises(ConditionError):
        lil_constant(power_alpha(-1.0), TailSpec.power(3.0))


def test_pinelis_limits():
    assert pinelis_bound(1.0, 100.0, 1e-9) == pytest.approx(2.0)
    assert pinelis_bound(1.0, 100.0, 40.0) == pytest.approx(
        2 * math.exp(-100 * float(h_fn(0.4))))
    with pytest.raises(ContractError):
        pinelis_bound(0.0, 1.0, 1.0)


def test_pinelis_random_walk():
    n = 2500
    rep = pinelis_test(n, [2 * math.sqrt(n), 4 * math.sqrt(n)], replicas=20_000, seed=3)
    assert rep.passed
    assert rep.to_dict()["pass"] is True


def test_rio_bound_values():
    assert rio_covariance_bound(ONE, np.array([0.3]), 0) == pytest.approx(1.2)
    assert rio_covariance_bound(ONE, np.array([0.3]), 5) == 0.0


@pytest.fixture(scope="module")
def iid_setup(lsv):
    m, d, K = lsv(0.25, 400)
    S = iid_surrogate(K)
    return d, S, alpha_estimate(S, 1, 4), alpha_estimate(S, 2, 4, m_max=2)


def test_iid_alpha_vanishes_past_lag_zero(iid_setup):
    _, _, a1, a2 = iid_setup
    assert a1.values[0] > 0.4 and np.all(a1.values[1:] == 0)
    assert np.all(a2.values[1:] == 0)


def test_rio_iid_kernel(iid_setup):
    d, S, a1, _ = iid_setup
    rep = rio_test(S, S.indicator(0.5), ONE, a1.values, [0, 1, 2, 3])
    assert rep.passed
    assert np.allclose(rep.mc_lhs[1:], 0.0, atol=1e-15)
    assert rep.rhs[1:] == [0.0, 0.0, 0.0]


def test_rio_lsv(lsv):
    _, _, K = lsv(0.5, 400)
    a1 = alpha_estimate(K, 1, 64)
    assert rio_test(K, K.indicator(0.5), ONE, a1, range(1, 65)).passed


def test_fn_iid_slack(iid_setup):
    d, _, a1, a2 = iid_setup
    f = ObservableSpec.indicator(0.0, 0.5)
    src = IIDSource(lambda rng, n: sample_stationary(d, rng, n), mean=f.nu_mean(d))
    n = 1024
    rep = domination_test_fn(src, f, ONE, a1.values, a2.values, n,
                             np.geomspace(math.sqrt(n), n / 5, 5), 2000, 1)
    assert rep.passed
    assert min(r / c[1] for r, c in zip(rep.rhs, rep.mc_ci)) > 10
    json.loads(rep.to_json())


def test_fn_constant_observable(iid_setup):
    d, _, a1, a2 = iid_setup
    f = ObservableSpec.constant(1.0)
    src = IIDSource(lambda rng, n: sample_stationary(d, rng, n), mean=1.0)
    rep = domination_test_fn(src, f, ONE, a1.values, a2.values, 256, [2.0, 8.0], 200, 2)
    assert rep.mc_lhs == [0.0, 0.0] and rep.passed


def test_slln_direct_summation():
    a = (np.arange(200_000) + 1.0) ** -2.0
    res = slln_series_bound(ONE, a, 1.5)
    assert res["series"] == pytest.approx(1.19151, abs=1e-4)
    assert res["series_finite"] and not res["extended"]


def test_slln_lag_zero_only():
    res = slln_series_bound(TailSpec.power(4.0), np.array([0.3]), 1.5)
    assert res["series"] == pytest.approx(q_integral(TailSpec.power(4.0), 0.3, 1.5))


def test_slln_strict_divergence():
    with pytest.raises(ConditionError):
        slln_series_bound(TailSpec.power(2.0), power_alpha(-1.5), 1.8, strict=True)


@given(st.sampled_from(["power", "powerlog"]), st.floats(1.6, 10.0), st.floats(0.0, 3.0),
       st.floats(0.1, 0.45), st.floats(1.1, 2.0))
def test_slln_verdict_matches_condition(family, q, b, gamma, p):
    assume(p * gamma < 1)
    tail = TailSpec.power(q) if family == "power" else TailSpec.powerlog(q, b)
    q_star = p * (1 - gamma) / (1 - p * gamma)
    assume(abs(q - q_star) > 1e-3)
    holds = check_condition(tail, gamma, p, "rate")["holds"]
    res = slln_series_bound(tail, power_alpha(-(1 - gamma) / gamma, 200), p, gamma)
    assert res["proxy_finite"] == holds
    assert res["series_finite"] == holds
