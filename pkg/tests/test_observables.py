import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from gpmlab.density import invariant_density
from gpmlab.maps import make_doubling
from gpmlab.observables import (ConditionError, ObservableIntegrabilityError, ObservableSpec,
                                Piece, TailSpec, change_of_variables_identity, check_condition,
                                extrapolated_nu_mean, in_class, parse_observable, parse_tail,
                                q_integral, quantile_of_observable, tail_of_observable)
from gpmlab._util import loglog_fit

TAILS = st.one_of(
    st.builds(TailSpec.power, st.floats(1.5, 12)),
    st.builds(TailSpec.powerlog, st.floats(1.5, 12), st.floats(0, 4)),
    st.builds(TailSpec.indicator, st.floats(0.1, 5)),
)


@pytest.fixture(scope="module")
def doubling_density():
    return invariant_density(make_doubling(), np.linspace(0, 1, 65))


def test_parsers():
    assert parse_tail("power:q=4") == TailSpec.power(4)
    assert parse_tail("powerlog:q=3,b=2") == TailSpec.powerlog(3, 2)
    f = parse_observable("indicator:lo=0,hi=0.5+pow0:a=0.2,weight=0.5")
    assert len(f.pieces) == 2 and f.pieces[1].a == 0.2
    with pytest.raises(ValueError):
        parse_tail("gauss:q=1")


@given(TAILS, st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_tail_nonincreasing(tail, x, y):
    lo, hi = min(x, y), max(x, y)
    assert tail.H(hi) <= tail.H(lo)


@given(TAILS, st.floats(1e-9, 0.999))
def test_cadlag_inverse_laws(tail, u):
    q = float(tail.Q(u))
    assert tail.H(q) <= u * (1 + 1e-9)
    x = 1.0 + 10 * u
    assert tail.Q(tail.H(x)) <= x * (1 + 1e-9)


@given(TAILS, st.floats(1e-6, 0.99), st.floats(1e-6, 0.99))
def test_quantile_nonincreasing(tail, u, v):
    lo, hi = min(u, v), max(u, v)
    assert tail.Q(hi) <= tail.Q(lo) * (1 + 1e-12)


@given(st.floats(2.5, 20), st.floats(0.01, 1.0), st.sampled_from([1, 2]))
def test_power_q_integral_beta_oracle(q, a, m):
    # ∫_0^a u^{-m/q} du in closed form
    e = m / q
    assert q_integral(TailSpec.power(q), a, m) == pytest.approx(a ** (1 - e) / (1 - e),
                                                                rel=1e-12)


@pytest.mark.parametrize("q,b,m", [(3.0, 1.0, 2), (4.0, 2.5, 1), (2.5, 0.5, 2)])
def test_powerlog_q_integral_tail_side_oracle(q, b, m):
    # ∫_0^a Q^m du = a Q(a)^m + ∫_{Q(a)}^inf m x^{m-1} H(x) dx
    t = TailSpec.powerlog(q, b)
    for a in (1e-3, 0.2, 1.0):
        qa = float(t.Q(a))
        tail_part = integrate.quad(lambda x: m * x ** (m - 1) * t.H(x), max(qa, 1.0),
                                   np.inf, epsrel=1e-12, limit=400)[0]
        low = integrate.quad(lambda x: m * x ** (m - 1), qa, 1.0)[0] if qa < 1 else 0.0
        assert q_integral(t, a, m) == pytest.approx(a * qa ** m + tail_part + low, rel=1e-8)


def test_q_integral_divergence_is_inf():
    assert q_integral(TailSpec.power(2.0), 0.5, 2) == math.inf
    assert q_integral(TailSpec.powerlog(2.0, 1.0), 0.5, 2) == math.inf
    assert math.isfinite(q_integral(TailSpec.powerlog(2.0, 3.0), 0.5, 2))


def test_lil_threshold_q_3():
    assert not check_condition(TailSpec.power(2.99), 0.25, which="lil")["holds"]
    assert not check_condition(TailSpec.power(3.0), 0.25, which="lil")["holds"]
    assert check_condition(TailSpec.power(3.01), 0.25, which="lil")["holds"]


def test_bounded_tail_satisfies_everything():
    t = TailSpec.indicator(2.0)
    for which in ("lil", "rate", "rate_weak"):
        rec = check_condition(t, 0.3, 1.5, which)
        assert rec["holds"] and math.isfinite(rec["value"])
        assert set(rec) == {"condition", "parameters", "holds", "value"}


def test_rate_borderline_fails_weak_holds():
    gamma, p = 0.3, 1.5
    t = TailSpec.power(p * (1 - gamma) / (1 - p * gamma))
    assert not check_condition(t, gamma, p, "rate")["holds"]
    weak = check_condition(t, gamma, p, "rate_weak")
    assert weak["holds"] and weak["value"] == pytest.approx(1.0, rel=1e-9)


def test_condition_domain_errors():
    with pytest.raises(ConditionError):
        check_condition(TailSpec.power(4), 0.6, 2.0)
    with pytest.raises(ConditionError):
        check_condition(TailSpec.power(4), 0.2, 2.5)


@pytest.mark.parametrize("tail,gamma,p", [(TailSpec.power(10.0), 0.25, 2.0),
                                          (TailSpec.power(5.0), 0.4, 1.5),
                                          (TailSpec.powerlog(4.0, 1.5), 0.3, 1.8)])
def test_change_of_variables(tail, gamma, p):
    assert change_of_variables_identity(tail, gamma, p)["relative_gap"] < 1e-6


def test_change_of_variables_bounded_closed_form():
    gamma, p = 0.25, 2.0
    rec = change_of_variables_identity(TailSpec.indicator(1.0), gamma, p)
    assert rec["lhs"] == pytest.approx((1 - gamma) / (1 - gamma * p), rel=1e-12)
    assert rec["rhs"] == pytest.approx(rec["lhs"], rel=1e-12)


def test_change_of_variables_beta_oracle():
    gamma, p, q = 0.25, 2.0, 10.0
    beta = gamma * (p - 1) / (1 - gamma)
    rec = change_of_variables_identity(TailSpec.power(q), gamma, p)
    assert rec["lhs"] == pytest.approx(1 / (1 - beta - p / q), rel=1e-10)


def test_change_of_variables_divergent():
    with pytest.raises(ConditionError):
        change_of_variables_identity(TailSpec.power(2.0), 0.25, 2.0)


def test_observable_tail_exponent(lsv):
    _, d, _ = lsv(0.5, 2000)
    f = ObservableSpec.power_at_zero(0.2)
    t = np.logspace(0.5, 3, 12)
    slope = loglog_fit(t, tail_of_observable(f, d, t))[0]
    assert slope == pytest.approx(-(1 - 0.5) / 0.2, rel=0.10)


def test_bounded_observable_tail_vanishes(lsv):
    _, d, _ = lsv(0.5, 500)
    f = parse_observable("affine:c0=0.5,c1=1")
    assert np.all(tail_of_observable(f, d, [1.5, 2.0, 10.0]) == 0)


def test_indicator_tail_under_doubling(doubling_density):
    f = ObservableSpec.indicator(0.0, 0.5)
    assert tail_of_observable(f, doubling_density, [0.0, 0.5, 0.99]) == pytest.approx(0.5)
    assert np.all(tail_of_observable(f, doubling_density, [1.0, 3.0]) == 0)


def test_integrability_error_mentions_density_exponent(lsv):
    _, d, _ = lsv(0.5, 500)
    with pytest.raises(ObservableIntegrabilityError, match="x\\^-0.5"):
        tail_of_observable(ObservableSpec.power_at_zero(0.5), d, [1.0])
    ObservableSpec.power_at_zero(0.49).check_integrable(0.5)


def test_membership_and_quantile_views_agree(lsv):
    _, d, _ = lsv(0.5, 1000)
    f = ObservableSpec.power_at_zero(0.2)
    us = np.logspace(-0.5, -6, 12)
    Qf = quantile_of_observable(f, d, us)
    ts = np.logspace(0, 2, 9)
    for tail in (TailSpec.power(2.0), TailSpec.power(3.5)):
        by_tail = in_class(f, tail, d, ts)
        by_quantile = bool(np.all(Qf <= tail.Q(us) * (1 + 1e-9)))
        assert by_tail == by_quantile


def test_piece_count_bound(lsv):
    _, d, _ = lsv(0.5, 1000)
    f = parse_observable("pow0:a=0.2,hi=0.5,weight=0.5+affine:lo=0.5,c1=0.5")
    ts = np.logspace(-1, 1.5, 10)
    H_emp = lambda t: tail_of_observable(f, d, np.asarray(t) / 2)
    assert np.all(tail_of_observable(f, d, ts) <= H_emp(ts) + 1e-15)


def test_nu_mean_and_extrapolation():
    m = make_doubling()
    f = ObservableSpec.constant(2.0)
    mean, levels, _ = extrapolated_nu_mean(f, m, n_cells=(16, 32, 64))
    assert mean == pytest.approx(2.0, abs=1e-12)
    g = parse_observable("affine:c1=1")
    assert g.nu_mean(invariant_density(m, np.linspace(0, 1, 33))) == pytest.approx(0.5)


def test_piece_validation():
    with pytest.raises(ValueError):
        Piece("abspow", lo=0.2, hi=0.6, x0=0.4, a=0.3)
    with pytest.raises(ValueError):
        Piece("pow0", lo=0.6, hi=0.2)
