"""Command-line harness: ``python -m fracboltz SUBCOMMAND --config FILE``.

Exit codes: 0 all assertions hold, 1 an estimate was violated, 2 the
configuration is invalid, 3 the numerics failed.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from . import realspace as rs
from .charfn import make_charfn
from .config import ExperimentConfig
from .errors import ConfigError, DomainError, FracBoltzError
from .evolve import (_jsonable, apriori_check, estimate_C0, export_trace, growth_monitor,
                     holder_time_check, nonexistence_probe, picard_solve_cutoff,
                     solve_noncutoff, stability_compare)
from .kernel import c_const, c_const_quadrature, kernel_moments

SUBCOMMANDS = ("constants", "evolve", "stability", "cutoff-limit", "invert", "stable-density",
               "nonexistence", "verify-all")


class Report:
    """Assertions plus plot data, written as report.json and CSV files."""

    def __init__(self, name, cfg, tol_scale):
        self.name = name
        self.cfg = cfg
        self.tol_scale = tol_scale
        self.assertions = []
        self.results = {}
        self.tolerances = {}
        self.tables = {}

    def check(self, name, passed, value=None, bound=None):
        self.assertions.append({"name": name, "passed": bool(passed), "value": value,
                                "bound": bound})
        return passed

    def tol(self, key, base):
        val = base * self.tol_scale
        self.tolerances[key] = val
        return val

    def table(self, name, header, rows):
        self.tables[name] = (header, rows)

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)

    def write(self, out):
        out.mkdir(parents=True, exist_ok=True)
        doc = {"subcommand": self.name, "passed": self.passed, "assertions": self.assertions,
               "results": self.results, "tolerances": self.tolerances,
               "tolerance_scale": self.tol_scale, "config": self.cfg.echo()}
        (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True))
        for name, (header, rows) in self.tables.items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                                for x in row])
        return out / "report.json"


def _trace(phi0, cs, cfg, T):
    if cs.is_cutoff:
        return picard_solve_cutoff(phi0, cs, cfg, T)
    return solve_noncutoff(phi0, cs, cfg, T)


def _setup(ec):
    cs = ec.kernel()
    cfg = ec.solver()
    ec.validate_physics(cs, cfg)
    return cs, cfg, ec.grid()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_constants(ec, rep, args):
    cs = ec.kernel(default={"kind": "constant", "K": 1.0})
    alphas = ec.get("constants.alphas", [0.5, 1.0, 1.5, 2.0])
    alphas = alphas if isinstance(alphas, list) else [alphas]
    rows = []
    for a in alphas:
        km = kernel_moments(cs, float(a))
        rows.append([float(a), km.gamma_alpha, km.lambda_alpha, km.mu_alpha])
        rep.results[f"alpha={float(a):g}"] = {"gamma": km.gamma_alpha, "lambda": km.lambda_alpha,
                                              "mu": km.mu_alpha}
    km2 = kernel_moments(cs, 2.0)
    rep.results["gamma_2"] = km2.gamma_alpha
    rep.results["lambda_2"] = km2.lambda_alpha
    rep.table("moments", ["alpha", "gamma", "lambda", "mu"], rows)
    if cs.kind == "bounded" and cs.describe().startswith("constant"):
        K = cs.K if cs.K is not None else 1.0
        rep.check("gamma_2 = 2 pi K", abs(km2.gamma_alpha - 2 * math.pi * K)
                  <= rep.tol("gamma_2", 1e-10), km2.gamma_alpha, 2 * math.pi * K)
        rep.check("lambda_2 = 0", abs(km2.lambda_alpha) <= rep.tol("lambda_2", 1e-12),
                  km2.lambda_alpha, 0.0)
    ps = ec.get("constants.p", [0.5, 1.0, 1.5, 2.0])
    ps = ps if isinstance(ps, list) else [ps]
    crow = []
    tol = rep.tol("c_const_relative", 1e-5)
    for p in ps:
        for frac in (0.25, 0.5, 0.75, 0.9):
            a = frac * float(p)
            f, q = c_const(float(p), a), c_const_quadrature(float(p), a)
            crow.append([float(p), a, f, q])
            rep.check(f"C_(p={float(p):g},alpha={a:g}) formula vs quadrature",
                      abs(f / q - 1) <= tol, f, q)
    rep.table("c_const", ["p", "alpha", "formula", "quadrature"], crow)


def _monitors(rep, trace, cfg, cs, grid, ec):
    g = growth_monitor(trace, cfg)
    rep.check("growth", g.passed, g.details["max_margin"], 1 + cfg.tol_growth)
    c0 = estimate_C0(cs, cfg.alpha, grid, extra_states=trace.states[:: max(1, len(trace.states) // 4)])
    ap = apriori_check(trace, cfg, C0_hat=c0, tol=rep.tol("apriori", 1e-3))
    rep.check("apriori", ap.passed, float(np.max(ap.lhs / ap.rhs)), 1.0)
    rep.results["C0_hat"] = c0
    if len(trace.times) >= 8:
        ho = holder_time_check(trace, cfg, C0_hat=c0, tol=rep.tol("holder", 1e-3))
        rep.check("holder", ho.passed, ho.details["max_quotient"], ho.details["C_prime"])
    mass = max(abs(float(s(np.array([0.0]))[0]) - 1.0) for s in trace.states)
    rep.check("phi(0, t) = 1", mass <= rep.tol("mass", 1e-12), mass, 0.0)
    rep.table("monitors", ["t", "growth_margin", "m_norm_to_one", "apriori_bound",
                           "step_error"],
              list(zip(trace.times, trace.growth_margin, trace.m_norm_to_one,
                       trace.apriori_bound, trace.step_error_estimate)))


def cmd_evolve(ec, rep, args):
    cs, cfg, grid = _setup(ec)
    cfg = _with_tol(cfg, rep)
    phi0 = make_charfn(ec.datum(), grid)
    T = ec.number("run.T", 0.5)
    trace = _trace(phi0, cs, cfg, T)
    _monitors(rep, trace, cfg, cs, grid, ec)
    rep.results["windows"] = len(trace.windows)
    rep.results["max_contraction_ratio"] = max(trace.contraction_ratios(), default=0.0)
    export_trace(trace, args.out_dir / "trace")


def _with_tol(cfg, rep):
    from dataclasses import replace
    return replace(cfg, tol_growth=rep.tol("growth", cfg.tol_growth),
                   tol_stab=rep.tol("stability", cfg.tol_stab))


def cmd_stability(ec, rep, args):
    cs, cfg, grid = _setup(ec)
    cfg = _with_tol(cfg, rep)
    T = ec.number("run.T", 0.5)
    a = _trace(make_charfn(ec.datum("datum"), grid), cs, cfg, T)
    b = _trace(make_charfn(ec.datum("datum2"), grid), cs, cfg, T)
    st = stability_compare(a, b, cfg)
    rep.check("stability", st.passed, float(np.max(st.lhs / st.rhs)), 1.0)
    rep.check("V(0)/V(0) = 1", st.details["ratio"][0] == 1.0, st.details["ratio"][0], 1.0)
    rep.results["lambda_alpha"] = st.details["lambda_alpha"]
    rep.table("stability", ["t", "V", "bound"], list(zip(st.times, st.lhs, st.rhs)))


def cmd_cutoff_limit(ec, rep, args):
    cs, cfg, grid = _setup(ec)
    if cs.is_cutoff:
        raise ConfigError("cutoff-limit needs a power-law kernel")
    T = ec.number("run.T", 0.1)
    phi0 = make_charfn(ec.datum(), grid)
    fine = solve_noncutoff(phi0, cs, cfg, T)
    d = fine.meta["level_distances"]
    rep.check("level distances decrease", all(y < x for x, y in zip(d, d[1:])), d, None)
    rep.results.update({"level_distances": d, "extrapolated_error": fine.meta["extrapolated_error"],
                        "n_schedule": list(cfg.n_schedule)})
    rep.table("levels", ["n_coarse", "n_fine", "distance"],
              [[a, b, x] for a, b, x in zip(cfg.n_schedule, cfg.n_schedule[1:], d)])
    if ec.get("run.direct", False):
        from .evolve import solve_direct
        direct = solve_direct(phi0, cs, cfg, T, times=fine.times)
        gap = acceptance._trace_dis(direct, fine, cfg.alpha, cfg.beta)
        budget = (fine.meta["extrapolated_error"] + float(np.max(fine.step_error_estimate))
                  + float(np.max(direct.step_error_estimate)))
        rep.check("direct agrees with continuation", gap <= budget * rep.tol_scale, gap, budget)
    export_trace(fine, args.out_dir / "trace")


def cmd_invert(ec, rep, args):
    cs, cfg, grid = _setup(ec)
    if abs(cfg.alpha - 1.0) < 1e-12:
        raise ConfigError("real-space mode excludes alpha = 1")
    T = ec.number("run.T", 0.5)
    trace = _trace(make_charfn(ec.datum(), grid), cs, cfg, T)
    idx = trace.subsample(int(ec.get("invert.n_times", 6)))
    vgrid = rs.default_vgrid(float(ec.get("invert.v_min", 1e-3)),
                             float(ec.get("invert.v_max", 200.0)), int(ec.get("invert.n_v", 601)))
    dens = []
    out = args.out_dir / "densities"
    out.mkdir(parents=True, exist_ok=True)
    for k in idx:
        d = rs.invert_charfn(trace.states[k], vgrid, p=cfg.p)
        dens.append(d)
        rs.write_density(out / f"density_{k:04d}.csv", d)
    tm = rep.tol("mass", 1e-4)
    tp = rep.tol("positivity", 1e-6)
    for k, d in zip(idx, dens):
        if trace.times[k] > 0 or trace.states[k].tail_kind == "decay":
            rep.check(f"mass t={trace.times[k]:g}", abs(d.mass_estimate - 1) <= tm,
                      d.mass_estimate, 1.0)
        rep.check(f"positivity t={trace.times[k]:g}", d.min_value >= -tp, d.min_value, -tp)
    cont = rs.weak_continuity_check(dens, trace.times[idx], cfg.alpha, cfg.p,
                                    states=[trace.states[k] for k in idx], tol_mass=tm,
                                    tol_parseval=rep.tol("parseval", 1e-5))
    rep.check("weak continuity", cont.passed, cont.constants, None)
    rep.results["continuity"] = cont.to_dict()
    rep.table("pairings", ["t"] + list(cont.curves),
              [[t] + [cont.curves[n][j] for n in cont.curves]
               for j, t in enumerate(trace.times[idx])])


def cmd_stable_density(ec, rep, args):
    seed = ec.seed(args.seed)
    v = np.linspace(0.0, 12.0, 10)
    g = max(abs(rs.stable_density(2, 1, x) - (4 * math.pi) ** -1.5 * math.exp(-x * x / 4))
            for x in v)
    rep.check("gaussian pair", g <= rep.tol("gaussian", 1e-8), g, 1e-8)
    c = max(abs(rs.stable_density(1, 1, x) * math.pi ** 2 * (1 + x * x) ** 2 - 1) for x in v)
    rep.check("cauchy pair", c <= rep.tol("cauchy", 1e-6), c, 1e-6)
    rng = np.random.default_rng(seed)
    worst, rows = 0.0, []
    for _ in range(20):
        p, t, x = rng.uniform(0.5, 2.0), rng.uniform(0.2, 3.0), rng.uniform(0.0, 8.0)
        lhs = rs.stable_density(p, t, x)
        rhs = t ** (-3 / p) * rs.stable_density(p, 1.0, t ** (-1 / p) * x)
        worst = max(worst, abs(lhs - rhs) / rhs)
        rows.append([p, t, x, lhs, rhs])
    rep.check("scaling identity", worst <= rep.tol("scaling", 1e-8), worst, 1e-8)
    rep.table("scaling", ["p", "t", "v", "f_p(v,t)", "scaled"], rows)
    tail_rows = []
    for p in ec.get("stable.tail_p", [0.5, 1.0, 1.5]) or []:
        tc = rs.tail_check(float(p))
        tail_rows += [[float(p), r, e, tc["L"]] for r, e in zip(tc["radii"], tc["empirical"])]
        rel = tc["relative_error"]
        rep.check(f"tail p={float(p):g} improves with |v|", all(b <= a for a, b in zip(rel, rel[1:])),
                  rel, None)
        if float(p) == 1.0:
            rep.check("L(1) at |v| = 20", rel[0] <= rep.tol("tail", 0.02), rel[0], 0.02)
    rep.table("tail", ["p", "v", "v^(3+p) f", "L"], tail_rows)
    mrows = []
    for p, a in ((1.0, 0.5), (1.0, 1.0), (2.0, 2.0)):
        m = rs.moment_probe(p, a)
        rep.results[f"moment p={p:g} alpha={a:g}"] = m.to_dict()
        mrows += [[p, a, R, M] for R, M in zip(m.R, m.M)]
        if a < p:
            rep.check(f"moments p={p:g} alpha={a:g} convergent", m.kind == "convergent"
                      and abs(m.exponent - (a - p)) <= rep.tol("moment_exponent", 0.05),
                      m.exponent, a - p)
        elif p == 2.0:
            rep.check("gaussian second moment = 6", abs(m.limit - 6) <= rep.tol("moment_6", 1e-6),
                      m.limit, 6.0)
        else:
            rep.check(f"moments p={p:g} alpha={a:g} divergent", m.kind.startswith("divergent")
                      and abs(m.exponent) <= rep.tol("moment_exponent", 0.05), m.exponent, 0.0)
    rep.table("moments", ["p", "alpha", "R", "M"], mrows)


def cmd_nonexistence(ec, rep, args):
    cases = ec.get("nonexistence.cases", None)
    if cases is None:
        cases = [[1.0, 1.5], [1.5, 2.0], [1.0, 1.0]]
    delta = ec.number("nonexistence.delta_p", 1.0)
    t = ec.number("nonexistence.t", 1.0)
    tol = rep.tol("exponent", 0.05)
    rows = []
    for p, a in cases:
        r = nonexistence_probe(float(p), float(a), delta, t, tol=tol)
        rep.check(f"p={float(p):g} alpha={float(a):g} {r.kind}", r.passed, r.exponent,
                  0.0 if r.kind == "log" else float(p) - float(a))
        rep.results[f"p={float(p):g},alpha={float(a):g}"] = r.to_dict()
        rows += [[float(p), float(a), e, I] for e, I in zip(r.eps, r.integrals)]
    rep.table("divergence", ["p", "alpha", "eps", "integral"], rows)


def cmd_verify_all(ec, rep, args):
    only = ec.get("verify.only", None)
    only = set(only if isinstance(only, list) else [only]) if only is not None else None
    for res in acceptance.run_all(scale=rep.tol_scale, only=only):
        rep.check(f"criterion {res.number}: {res.title}", res.passed, res.summary, None)
        rep.results[str(res.number)] = res.details
        print(res.line(), flush=True)


COMMANDS = {
    "constants": cmd_constants,
    "evolve": cmd_evolve,
    "stability": cmd_stability,
    "cutoff-limit": cmd_cutoff_limit,
    "invert": cmd_invert,
    "stable-density": cmd_stable_density,
    "nonexistence": cmd_nonexistence,
    "verify-all": cmd_verify_all,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="fracboltz", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="flat key = value config file")
    ap.add_argument("--out", type=Path, default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--tolerance-scale", type=float, default=1.0,
                    help="multiplies every pass tolerance")
    return ap


def run(subcommand, config_path=None, out=None, seed=None, tolerance_scale=1.0):
    """Run one subcommand; returns (exit status, output directory)."""
    args = argparse.Namespace(seed=seed)
    try:
        ec = ExperimentConfig.load(config_path) if config_path else ExperimentConfig()
        if not tolerance_scale > 0:
            raise ConfigError("tolerance scale must be positive")
        if subcommand not in COMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        args.out_dir = ec.output_dir(out) / subcommand
        rep = Report(subcommand, ec, tolerance_scale)
        rep.results["seed"] = ec.seed(seed)
        COMMANDS[subcommand](ec, rep, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2, None
    except DomainError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2, None
    except (FracBoltzError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure in {type(exc).__module__}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        out_dir = args.out_dir if hasattr(args, "out_dir") else None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.json").write_text(json.dumps(
                {"subcommand": subcommand, "passed": False,
                 "error": {"type": type(exc).__name__, "module": type(exc).__module__,
                           "message": str(exc)}}, indent=2, sort_keys=True))
        return 3, out_dir
    path = rep.write(args.out_dir)
    if not rep.passed:
        failed = [a["name"] for a in rep.assertions if not a["passed"]]
        print("violated: " + "; ".join(failed), file=sys.stderr)
        return 1, path.parent
    return 0, path.parent


def main(argv=None):
    args = build_parser().parse_args(argv)
    status, out = run(args.subcommand, args.config, args.out, args.seed, args.tolerance_scale)
    if out is not None:
        print(f"report: {out / 'report.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
