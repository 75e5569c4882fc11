"""``gpmlab`` command-line front end.

Every command writes its numeric artifact(s) under ``--out`` plus a
``<command>.manifest.json`` with the config, versions and wall time.
Exit codes: 0 success, 1 numerical/module failure, 2 invalid input,
3 an acceptance check failed (``verify-all``).
"""
import argparse
import json
import logging
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .bounds import ContractError, domination_test_fn, lil_constant, pinelis_test, rio_test
from .config import ConfigError, load_config
from .density import anchor_grid, invariant_density, model_grid
from .kernel import (alpha_estimate, decomposition_errors, en_remainder, iid_surrogate,
                     kernel_matrix)
from .limits import (ChainSource, OrbitSource, lil_ratio_scan, sigma2_spectral,
                     slln_rate_scan, stable_law_diagnostics, _jsonable)
from .maps import MapDomainError, map_from_config
from .observables import (ObservableIntegrabilityError, TailSpec, extrapolated_nu_mean,
                          parse_observable, parse_tail)
from .simulate import simulate_chain, simulate_orbit
from ._util import loglog_fit

COMMANDS = ("density", "kernel", "alpha", "decompose", "simulate", "lil", "slln", "stable",
            "bounds", "verify-all")

logger = logging.getLogger("gpmlab")


class AcceptanceFailure(RuntimeError):
    pass


# ------------------------------------------------------------ output

class Output:
    """Artifact writer that echoes the config into every file."""

    def __init__(self, cfg, command):
        self.cfg, self.command = cfg, command
        self.dir = cfg.out
        os.makedirs(self.dir, exist_ok=True)
        self.files = []
        self._echo = json.dumps(cfg.to_dict(), sort_keys=True)

    def _path(self, stem, ext):
        p = os.path.join(self.dir, f"{stem}.{ext}")
        self.files.append(p)
        return p

    def table(self, stem, header, rows):
        """Rows as CSV (``# config`` comment first) or newline-delimited JSON."""
        if self.cfg.format == "csv":
            with open(self._path(stem, "csv"), "w") as fh:
                fh.write(f"# config: {self._echo}\n")
                fh.write(",".join(header) + "\n")
                for r in rows:
                    fh.write(",".join(_fmt(v) for v in r) + "\n")
        else:
            with open(self._path(stem, "jsonl"), "w") as fh:
                fh.write(json.dumps({"config": json.loads(self._echo)}) + "\n")
                for r in rows:
                    fh.write(json.dumps(_jsonable(dict(zip(header, r)))) + "\n")

    def records(self, stem, recs):
        """Newline-delimited JSON records, config first."""
        with open(self._path(stem, "jsonl"), "w") as fh:
            fh.write(json.dumps({"config": json.loads(self._echo)}) + "\n")
            for r in recs:
                fh.write(json.dumps(_jsonable(r), sort_keys=True) + "\n")

    def manifest(self, wall, status):
        import numba
        import scipy
        man = {"command": self.command, "config": self.cfg.to_dict(), "seed": self.cfg.seed,
               "status": status, "wall_time_s": wall,
               "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
               "versions": {"gpmlab": __version__, "python": platform.python_version(),
                            "numpy": np.__version__, "scipy": scipy.__version__,
                            "numba": numba.__version__},
               "artifacts": [os.path.basename(f) for f in self.files]}
        with open(os.path.join(self.dir, f"{self.command}.manifest.json"), "w") as fh:
            json.dump(man, fh, indent=2)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------- builders

def _model(cfg, kernel=False):
    tmap = map_from_config(cfg.map_config())
    grid = anchor_grid(model_grid(tmap, cfg.cells, cfg.grading), [0.5])
    dens = invariant_density(tmap, grid)
    if not kernel:
        return tmap, dens
    return tmap, dens, kernel_matrix(dens, tmap, grid)


def _observable(cfg, dens):
    f = parse_observable(cfg.observable)
    f.check_integrable(dens.gamma)
    return f


def _tail(cfg):
    return parse_tail(cfg.tail) if cfg.tail else TailSpec.indicator(1.0)


def _log2(n):
    return max(2, int(math.floor(math.log2(n))))


# ---------------------------------------------------------- commands

def cmd_density(cfg, out, args):
    tmap, d = _model(cfg)
    g = d.grid
    out.table("density", ["cell_left", "cell_right", "h", "nu_mass"],
              zip(g[:-1], g[1:], d.h.values, d.nu_weights))
    c = d.h.centers
    sel = (c > 1e-4) & (c < 1e-2)
    slope, _, rms = loglog_fit(c[sel], d.h.values[sel])
    rep = {"slope": slope, "target": -tmap.gamma, "fit_rms": rms, "fit_range": [1e-4, 1e-2],
           "residual": d.residual, "iterations": d.iterations}
    out.records("density_report", [rep])
    return rep


def cmd_kernel(cfg, out, args):
    _, _, K = _model(cfg, kernel=True)
    rows = float(np.max(np.abs(np.asarray(K.P.sum(axis=1)).ravel() - 1.0)))
    inv = float(np.max(np.abs(K.P.T @ K.nu - K.nu)))
    en = en_remainder(K, cfg.nmax)
    out.table("en_remainder", ["n", "variation"], zip(en.n, en.values))
    rep = {"row_sum_error": rows, "stationarity_error": inv,
           "renorm_max_dev": K.renorm_max_dev, "en_slope": en.slope,
           "en_fit_range": list(en.fit_range)}
    out.records("kernel_report", [rep])
    return rep


def cmd_alpha(cfg, out, args):
    _, _, K = _model(cfg, kernel=True)
    if args.surrogate == "iid":
        K = iid_surrogate(K)
    a = alpha_estimate(K, cfg.order, cfg.nmax, fit_range=(min(8, cfg.nmax), cfg.nmax))
    out.table(f"alpha{cfg.order}", ["n", "alpha"], zip(a.n, a.values))
    rep = {"order": a.order, "slope": a.slope, "slope_band": list(a.slope_band),
           "fit_range": list(a.fit_range), "surrogate": args.surrogate}
    out.records(f"alpha{cfg.order}_report", [rep])
    return rep


def cmd_decompose(cfg, out, args):
    _, _, K = _model(cfg, kernel=True)
    recs = decomposition_errors(K, min(cfg.nmax, 64))
    out.records("decomposition", recs)
    return {"max_abs_error": max(r["max_abs_error"] for r in recs)}


def cmd_simulate(cfg, out, args):
    tmap, d = _model(cfg)
    if args.mode == "chain":
        tr = simulate_chain(tmap, d, cfg.n, cfg.seed)
    else:
        tr = simulate_orbit(tmap, d, cfg.n, cfg.seed)
    out.table(f"{args.mode}", ["i", "state"], enumerate(tr.states))
    rep = {"mode": tr.mode, "n": len(tr), "weight_sum_mean": tr.weight_sum_mean,
           "weight_sum_worst": tr.weight_sum_worst}
    out.records(f"{args.mode}_report", [rep])
    return rep


def _curves(out, stem, rep, key):
    arr = np.asarray(rep.ratios[key])
    rows = [(n, np.median(arr[:, j]), np.quantile(arr[:, j], 0.05),
             np.quantile(arr[:, j], 0.95)) for j, n in enumerate(rep.n)]
    out.table(stem, ["n", "ratio", "q05", "q95"], rows)


def cmd_lil(cfg, out, args):
    tmap, d, K = _model(cfg, kernel=True)
    f = _observable(cfg, d)
    A = lil_constant(alpha_estimate(K, 1, 256), _tail(cfg))
    src = OrbitSource(tmap, d) if args.mode == "orbit" else ChainSource(tmap, d)
    rep = lil_ratio_scan(src, f, A["map" if args.mode == "orbit" else "chain"], _log2(cfg.n),
                         cfg.replicas, cfg.seed, threads=cfg.threads)
    _curves(out, "lil_curves", rep, "lil")
    summary = dict(rep.summary, **{"A_" + k: v for k, v in A.items()})
    out.records("lil_report", [summary])
    return summary


def _mean(cfg, f, tmap, dens):
    if any(p.singular_point() is not None for p in f.pieces):
        return extrapolated_nu_mean(f, tmap, grading=cfg.grading)[0]
    return f.nu_mean(dens)


def cmd_slln(cfg, out, args):
    tmap, d = _model(cfg)
    f = _observable(cfg, d)
    src = OrbitSource(tmap, d, mean=_mean(cfg, f, tmap, d))
    rep = slln_rate_scan(src, f, cfg.p, cfg.b, _log2(cfg.n), cfg.replicas, cfg.seed,
                         window=args.window, threads=cfg.threads)
    _curves(out, "slln_curves", rep, "slln")
    out.records("slln_report", [rep.summary])
    return rep.summary


def cmd_stable(cfg, out, args):
    tmap, d = _model(cfg)
    f = _observable(cfg, d)
    src = OrbitSource(tmap, d, mean=_mean(cfg, f, tmap, d))
    rep = stable_law_diagnostics(src, f, cfg.p, cfg.n, cfg.replicas, cfg.seed,
                                 threads=cfg.threads)
    W = rep.summary.pop("W")
    out.table("stable_sample", ["replica", "W"], enumerate(W))
    summary = dict(rep.summary, hill=rep.hill)
    out.records("stable_report", [summary])
    return summary


def cmd_bounds(cfg, out, args):
    tmap, d, K = _model(cfg, kernel=True)
    f = _observable(cfg, d)
    tail = _tail(cfg)
    fc = f.cell_averages(d.grid)
    a1 = alpha_estimate(K, 1, 256)
    a2 = alpha_estimate(K, 2, min(cfg.nmax, 128)) if cfg.order == 2 else a1
    s2, _ = sigma2_spectral(K, fc)
    n = cfg.n
    xs = np.geomspace(max(math.sqrt(s2 * n), 1e-3) / 5.0, n / 5.0, 6)
    reports = [domination_test_fn(ChainSource(tmap, d), f, tail, a1, a2, n, xs,
                                  cfg.replicas, cfg.seed, cfg.threads),
               pinelis_test(n, [2 * math.sqrt(n), 4 * math.sqrt(n)], cfg.replicas, cfg.seed,
                            threads=cfg.threads),
               rio_test(K, fc, tail, a1, range(min(cfg.nmax, 64) + 1))]
    recs = [r.to_dict() for r in reports]
    for r in recs:
        r["extended_alpha"] = n > 256
    out.records("bounds", recs)
    return {r["bound_name"]: r["pass"] for r in recs}


def cmd_verify_all(cfg, out, args):
    from .verify import run_checks
    ids = [int(x) for x in args.only.split(",")] if args.only else None
    res = run_checks(cfg.profile, ids, seed=cfg.seed, threads=cfg.threads,
                     log=lambda s: print(s, file=sys.stderr))
    out.records("verify", [r.to_dict() for r in res])
    failed = [r.id for r in res if not r.passed]
    summary = {"passed": [r.id for r in res if r.passed], "failed": failed}
    if failed:
        raise AcceptanceFailure(summary)
    return summary


HANDLERS = {"density": cmd_density, "kernel": cmd_kernel, "alpha": cmd_alpha,
            "decompose": cmd_decompose, "simulate": cmd_simulate, "lil": cmd_lil,
            "slln": cmd_slln, "stable": cmd_stable, "bounds": cmd_bounds,
            "verify-all": cmd_verify_all}


# ------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="JSON config file; flags override it")
    g.add_argument("--map", choices=["lsv", "pm", "doubling"])
    g.add_argument("--gamma", type=float)
    g.add_argument("--z0", type=float)
    g.add_argument("--cells", type=int)
    g.add_argument("--grading", type=float)
    g.add_argument("--n", type=int)
    g.add_argument("--replicas", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--observable")
    g.add_argument("--tail")
    g.add_argument("--p", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--order", type=int)
    g.add_argument("--nmax", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--out")
    g.add_argument("--format", choices=["csv", "json"])
    g.add_argument("--profile", choices=["desk", "smoke"])
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gpmlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "alpha":
            p.add_argument("--surrogate", choices=["none", "iid"], default="none")
        if name in ("simulate", "lil"):
            p.add_argument("--mode", choices=["orbit", "chain"], default="orbit")
        if name == "slln":
            p.add_argument("--window", type=int, default=10,
                           help="dyadic steps in the trend fit (default: 3 decades)")
        if name == "verify-all":
            p.add_argument("--only", help="comma-separated criterion ids")
    return parser


_KEYS = ("map", "gamma", "z0", "cells", "grading", "n", "replicas", "seed", "observable",
         "tail", "p", "b", "order", "nmax", "threads", "out", "format", "profile")

_INPUT_ERRORS = (ConfigError, MapDomainError, ObservableIntegrabilityError, ContractError,
                 ValueError)


def _diagnostic(kind, exc, code):
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {k: getattr(args, k) for k in _KEYS})
    except (ConfigError, OSError) as exc:
        return _diagnostic("invalid_config", exc, 2)
    cfg.experiment = cfg.experiment or args.command
    out = Output(cfg, args.command)
    t = time.perf_counter()
    try:
        result = HANDLERS[args.command](cfg, out, args)
    except AcceptanceFailure as exc:
        out.manifest(time.perf_counter() - t, "acceptance_failure")
        return _diagnostic("acceptance_failure", exc, 3)
    except _INPUT_ERRORS as exc:
        out.manifest(time.perf_counter() - t, "invalid_input")
        return _diagnostic("invalid_input", exc, 2)
    except Exception as exc:  # module failures: report, do not traceback
        logger.debug("failure", exc_info=True)
        out.manifest(time.perf_counter() - t, "error")
        return _diagnostic("module_error", exc, 1)
    out.manifest(time.perf_counter() - t, "ok")
    print(json.dumps(_jsonable(result)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
