"""Acceptance checks shared by the test suite and ``gpmlab verify-all``.

Each check returns a :class:`CheckResult`; sizes come from a profile.
``desk`` runs every check at its stated scale, ``smoke`` shrinks Monte-Carlo
sizes so the plumbing can be exercised in seconds (its verdicts mean little).
"""
from dataclasses import dataclass, field
import math
import time

import numpy as np

from .bounds import (domination_test_fn, lil_constant, pinelis_test, rio_test,
                     slln_series_bound)
from .density import anchor_grid, density_series_extension, invariant_density, model_grid
from .kernel import (AlphaSequence, alpha_estimate, decomposition_errors, en_remainder,
                     kernel_matrix)
from .limits import (OrbitSource, ChainSource, IIDSource, gaussian_ks_scaled,
                     lil_ratio_scan, sigma2_spectral, slln_rate_scan,
                     stable_law_diagnostics, ks_distance)
from .maps import make_lsv, z_sequence
from .observables import (ObservableSpec, TailSpec, change_of_variables_identity,
                          check_condition, extrapolated_nu_mean)
from .simulate import chain_sums, orbit_sums, time_reversal_test
from ._util import loglog_fit

__all__ = ["CheckResult", "Workbench", "CHECKS", "PROFILES", "run_checks", "run_check",
           "ANALYTIC_TAILS"]

PROFILES = {
    "desk": dict(cells=2000, tr_replicas=10_000, clt_n=2 ** 14, clt_replicas=10_000,
                 lil_log2=20, lil_replicas=200, fn_replicas=10_000, pin_replicas=100_000,
                 slln_log2=20, slln_replicas=100, stable_n=2 ** 16, stable_replicas=10_000,
                 p2_n=2 ** 18, p2_replicas=10_000, alpha2_nmax=128),
    "smoke": dict(cells=400, tr_replicas=500, clt_n=2 ** 10, clt_replicas=500,
                  lil_log2=12, lil_replicas=20, fn_replicas=500, pin_replicas=2000,
                  slln_log2=12, slln_replicas=20, stable_n=2 ** 10, stable_replicas=4000,
                  p2_n=2 ** 10, p2_replicas=500, alpha2_nmax=32),
}

# (tail, gamma, p): finite and divergent cases, including log-damped borderlines
ANALYTIC_TAILS = [
    (TailSpec.power(4.0), 0.25, 1.5),
    (TailSpec.power(3.5), 0.25, 2.0),
    (TailSpec.power(6.0), 0.4, 1.5),
    (TailSpec.power(2.5), 0.2, 1.2),
    (TailSpec.powerlog(3.0, 2.0), 0.25, 1.5),
    (TailSpec.powerlog(2.0, 1.5), 0.5, 1.5),
    (TailSpec.powerlog(3.0, 0.5), 0.25, 2.0),
    (TailSpec.indicator(1.0), 0.3, 1.8),
    (TailSpec.power(2.2), 0.3, 1.9),
    (TailSpec.powerlog(5.0, 1.0), 0.1, 1.7),
]

INDICATOR_HALF = ObservableSpec.indicator(0.0, 0.5)
SLLN_GAMMA = 0.4


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.id:2d} {self.name}: {_short(self.detail)}"

    def to_dict(self):
        return {"id": self.id, "name": self.name, "pass": self.passed,
                "detail": self.detail, "seconds": self.seconds}


def _short(d):
    parts = []
    for k, v in d.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.4g}")
        elif isinstance(v, (int, bool, str)):
            parts.append(f"{k}={v}")
    return ", ".join(parts)


class Workbench:
    """Caches LSV models and α sequences across checks."""

    def __init__(self, profile="desk", seed=20240, threads=None):
        self.profile = profile
        self.size = PROFILES[profile]
        self.seed = seed
        self.threads = threads
        self._models, self._alpha = {}, {}

    def model(self, gamma, cells=None):
        cells = cells or self.size["cells"]
        key = (gamma, cells)
        if key not in self._models:
            m = make_lsv(gamma)
            g = anchor_grid(model_grid(m, cells), [0.5])
            d = invariant_density(m, g)
            self._models[key] = (m, d, kernel_matrix(d, m, g))
        return self._models[key]

    def alpha(self, gamma, order, n_max=128):
        key = (gamma, order, n_max)
        if key not in self._alpha:
            self._alpha[key] = alpha_estimate(self.model(gamma)[2], order, n_max)
        return self._alpha[key]


# ------------------------------------------------------------- checks

def c01_kernel_algebra(wb):
    rng = np.random.default_rng(wb.seed + 1)
    det = {}
    ok = True
    for gamma in (0.25, 0.5):
        m, d, K = wb.model(gamma)
        row = float(np.max(np.abs(np.asarray(K.P.sum(axis=1)).ravel() - 1.0)))
        inv = float(np.max(np.abs(K.P.T @ K.nu - K.nu)))
        # ν(f·g∘T) from the Ulam transition fractions against ν(Kf·g)
        worst = 0.0
        for _ in range(50):
            f, g = rng.standard_normal(K.n_cells), rng.standard_normal(K.n_cells)
            lhs = float(K.nu @ (f * (d.ulam @ g)))
            rhs = float(K.nu @ (K.P @ f * g))
            worst = max(worst, abs(lhs - rhs))
        det[f"row_{gamma}"], det[f"inv_{gamma}"], det[f"dual_{gamma}"] = row, inv, worst
        ok &= row <= 1e-12 and inv <= 1e-8 and worst <= 1e-6
    return ok, det


def c02_decompositions(wb):
    det, ok = {}, True
    for gamma in (0.25, 0.5):
        K = wb.model(gamma)[2]
        recs = decomposition_errors(K, 30)
        for ident in ("first_last_visit", "renewal"):
            e = max(r["max_abs_error"] for r in recs if r["identity"] == ident)
            det[f"{ident}_{gamma}"] = e
            ok &= e <= 1e-10
    return ok, det


def c03_density(wb):
    det, ok = {}, True
    for gamma in (0.25, 0.5):
        m, d, _ = wb.model(gamma)
        c = d.h.centers
        sel = (c > 1e-4) & (c < 1e-2)
        slope = loglog_fit(c[sel], d.h.values[sel])[0]
        z1 = m.z1
        pts = c[(c >= z1 / 2) & (c <= z1)]
        ext = density_series_extension(m, d, 4000, pts)
        ulam = d.h.values[(c >= z1 / 2) & (c <= z1)]
        rel = float(np.max(np.abs(ext.h / ulam - 1.0)))
        det[f"slope_{gamma}"], det[f"series_rel_{gamma}"] = slope, rel
        ok &= abs(slope + gamma) <= 0.1 and rel <= 0.05
    return ok, det


def c04_z_orbit(wb):
    det, ok = {}, True
    for gamma in (0.25, 0.5):
        z = z_sequence(make_lsv(gamma), 20_000)
        r = z.ratio(10_000) / 2.0 ** (1.0 / gamma)
        det[f"ratio_rel_{gamma}"] = r
        ok &= abs(r - 1.0) <= 0.05
    return ok, det


def c05_alpha_decay(wb):
    det, ok = {}, True
    for gamma, tol in ((0.5, 0.2), (1.0 / 3.0, 0.6)):
        a1 = wb.alpha(gamma, 1)
        target = -(1.0 - gamma) / gamma
        det[f"slope_{gamma:.3g}"] = a1.slope
        ok &= abs(a1.slope - target) <= tol
        ok &= bool(np.all(np.diff(a1.values) <= 0))
    a1, a2 = wb.alpha(0.5, 1), wb.alpha(0.5, 2, wb.size["alpha2_nmax"])
    k = len(a2.values)
    dominated = bool(np.all(a2.values >= a1.values[:k] - 1e-15))
    det["alpha2_ge_alpha1"] = dominated
    ok &= dominated and bool(np.all(np.diff(a2.values) <= 0))
    return ok, det


def c06_en_decay(wb):
    rep = en_remainder(wb.model(0.5)[2], 64)
    return abs(rep.slope + 1.0) <= 0.3, {"slope": rep.slope}


def c07_time_reversal(wb):
    m, d, _ = wb.model(0.25)
    rep = time_reversal_test(m, d, INDICATOR_HALF, 256, wb.size["tr_replicas"], wb.seed + 7,
                             threads=wb.threads)
    return rep.p_value > 0.01, {"ks": rep.statistic, "p_value": rep.p_value}


def c08_clt(wb):
    m, d, K = wb.model(0.25)
    s2, _ = sigma2_spectral(K, K.indicator(0.5))
    n = wb.size["clt_n"]
    S, _ = orbit_sums(m, d, INDICATOR_HALF, n, wb.size["clt_replicas"], wb.seed + 8,
                      threads=wb.threads)
    ks = ks_distance(S[:, 0] / math.sqrt(s2 * n), "norm")["statistic"]
    return ks < 0.02, {"sigma2": s2, "ks": ks}


def c09_bounded_lil(wb):
    m, d, _ = wb.model(0.25)
    A = lil_constant(wb.alpha(0.25, 1, 256), TailSpec.indicator(1.0))
    rep = lil_ratio_scan(OrbitSource(m, d), INDICATOR_HALF, A["map"], wb.size["lil_log2"],
                         wb.size["lil_replicas"], wb.seed + 9, threads=wb.threads)
    s = rep.summary
    return s["fraction_below"] == 1.0, {"A": A["map"], "truncation": A["map_truncation"],
                                        "fraction_below": s["fraction_below"],
                                        "max_ratio": s["max_ratio"]}


def c10_fn_domination(wb):
    m, d, K = wb.model(0.25)
    s2, _ = sigma2_spectral(K, K.indicator(0.5))
    n = 2 ** 10
    xs = np.geomspace(math.sqrt(s2 * n) / 5.0, n / 5.0, 6)
    rep = domination_test_fn(ChainSource(m, d), INDICATOR_HALF, TailSpec.indicator(1.0),
                             wb.alpha(0.25, 1, 256), wb.alpha(0.25, 2, wb.size["alpha2_nmax"]),
                             n, xs, wb.size["fn_replicas"], wb.seed + 10, wb.threads)
    slack = min(r / max(c[1], 1e-300) for r, c in zip(rep.rhs, rep.mc_ci))
    return rep.passed, {"min_slack": slack, "min_rhs": min(rep.rhs)}


def c11_pinelis(wb):
    n = 10 ** 4
    rep = pinelis_test(n, [2 * math.sqrt(n), 4 * math.sqrt(n)], wb.size["pin_replicas"],
                       wb.seed + 11, threads=wb.threads)
    return rep.passed, {"mc_2sqrt": rep.mc_lhs[0], "rhs_2sqrt": rep.rhs[0],
                        "mc_4sqrt": rep.mc_lhs[1], "rhs_4sqrt": rep.rhs[1]}


def c12_rio(wb):
    K = wb.model(0.5)[2]
    rep = rio_test(K, K.indicator(0.5), TailSpec.indicator(1.0), wb.alpha(0.5, 1),
                   range(65))
    worst = max(c / r for c, r in zip(rep.mc_lhs, rep.rhs) if r > 0)
    return rep.passed, {"max_cov_over_bound": worst}


def _slln_setup(wb):
    m, d, _ = wb.model(SLLN_GAMMA)
    p = 1.5
    f = ObservableSpec.power_at_zero((1.0 - p * SLLN_GAMMA) / p)
    mean, _, _ = extrapolated_nu_mean(f, m)
    return m, d, f, p, mean


def c13_slln(wb):
    m, d, f, p, mean = _slln_setup(wb)
    src = OrbitSource(m, d, mean=mean)
    log2 = wb.size["slln_log2"]
    # last three decades: n from 2^log2 / 1000 up to 2^log2
    window = int(round(math.log2(1000)))
    out = {}
    for b in (0.8, 0.0):
        rep = slln_rate_scan(src, f, p, b, log2, wb.size["slln_replicas"], wb.seed + 13,
                             window=window, threads=wb.threads)
        out[b] = rep.summary["fraction_decreasing"]
    return out[0.8] >= 0.9 and out[0.0] <= 0.5, {"decreasing_b0.8": out[0.8],
                                                 "decreasing_b0": out[0.0],
                                                 "window": window}


def c14_stable(wb):
    m, d, f, p, mean = _slln_setup(wb)
    rep = stable_law_diagnostics(OrbitSource(m, d, mean=mean), f, p, wb.size["stable_n"],
                                 wb.size["stable_replicas"], wb.seed + 14, threads=wb.threads)
    hill, ratio = rep.hill["index"], rep.summary["tail_ratio"]
    # p = 2 boundary: f ~ x^{-(1-2γ)/2}
    f2 = ObservableSpec.power_at_zero((1.0 - 2.0 * SLLN_GAMMA) / 2.0)
    mean2, _, _ = extrapolated_nu_mean(f2, m)
    n = wb.size["p2_n"]
    S, _ = OrbitSource(m, d, mean=mean2).sums(f2, n, wb.size["p2_replicas"], wb.seed + 15,
                                              threads=wb.threads)
    ks, scale = gaussian_ks_scaled(S[:, 0] / math.sqrt(n * math.log(n)))
    ks = ks["statistic"]
    ok = abs(hill - 1.5) <= 0.2 and ratio >= 5.0 and ks < 0.05
    return ok, {"hill": hill, "hill_ci_lo": rep.hill["ci"][0], "hill_ci_hi": rep.hill["ci"][1],
                "tail_ratio": ratio, "p2_ks": ks, "p2_scale": scale}


def _exact_alpha(gamma, n_max=1000):
    slope = -(1.0 - gamma) / gamma
    k = np.arange(n_max + 1, dtype=float)
    vals = (k + 1.0) ** slope
    return AlphaSequence(order=1, values=vals, slope=slope, slope_band=(slope, slope),
                         fit_range=(0, n_max), fit_residual=0.0, thresholds=np.array([]))


def c15_change_of_variables(wb):
    worst, agree, n_finite = 0.0, True, 0
    for tail, gamma, p in ANALYTIC_TAILS:
        verdict = check_condition(tail, gamma, p, "rate")["holds"]
        ser = slln_series_bound(tail, _exact_alpha(gamma), p, gamma)
        agree &= ser["proxy_finite"] == verdict and ser["series_finite"] == verdict
        if verdict:
            n_finite += 1
            worst = max(worst, change_of_variables_identity(tail, gamma, p)["relative_gap"])
    return worst < 1e-6 and agree, {"max_relative_gap": worst, "verdicts_agree": agree,
                                     "finite_cases": n_finite}


def c16_determinism(wb):
    m, d, _ = wb.model(0.25)
    seed = wb.seed + 16
    blobs = []
    for threads in (1, 4):
        a = orbit_sums(m, d, INDICATOR_HALF, 512, 64, seed, [128, 512], threads=threads)
        b = chain_sums(m, d, INDICATOR_HALF, 512, 64, seed, [128, 512], threads=threads)
        c = pinelis_test(256, [16.0], 3000, seed, threads=threads, chunk=100)
        blobs.append(b"".join(x.tobytes() for x in (*a, *b)) + repr(c.mc_lhs).encode())
    return blobs[0] == blobs[1], {"bytes": len(blobs[0])}


CHECKS = [
    (1, "kernel algebra", c01_kernel_algebra),
    (2, "exact decompositions", c02_decompositions),
    (3, "density exponent", c03_density),
    (4, "z-orbit asymptotics", c04_z_orbit),
    (5, "alpha decay", c05_alpha_decay),
    (6, "E_n decay", c06_en_decay),
    (7, "time reversal", c07_time_reversal),
    (8, "CLT", c08_clt),
    (9, "bounded LIL", c09_bounded_lil),
    (10, "maximal inequality", c10_fn_domination),
    (11, "Pinelis domination", c11_pinelis),
    (12, "covariance domination", c12_rio),
    (13, "SLLN rates", c13_slln),
    (14, "stable-law diagnostics", c14_stable),
    (15, "change of variables", c15_change_of_variables),
    (16, "determinism", c16_determinism),
]


def run_check(wb, cid):
    _, name, fn = next(c for c in CHECKS if c[0] == cid)
    t = time.perf_counter()
    ok, detail = fn(wb)
    return CheckResult(cid, name, bool(ok), detail, time.perf_counter() - t)


def run_checks(profile="desk", ids=None, seed=20240, threads=None, log=None):
    wb = Workbench(profile, seed, threads)
    out = []
    for cid, _, _ in CHECKS:
        if ids is not None and cid not in ids:
            continue
        res = run_check(wb, cid)
        if log:
            log(res.line())
        out.append(res)
    return out
