"""The twelve acceptance checks, each returning a CriterionResult.

Expensive traces are cached per process, so criteria that share runs (the
growth configurations, reused by the contraction and grid checks) pay once.
``scale`` multiplies every pass tolerance.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import realspace as rs
from .charfn import (BKW, Gaussian, Mixture, RadialGrid, Stable, difference_profile,
                     make_charfn, profile_ksup, profile_malpha)
from .collision import lipschitz_check_G
from .evolve import (SolverConfig, growth_monitor, nonexistence_probe, picard_solve_cutoff,
                     solve_direct, solve_noncutoff, stability_compare)
from .kernel import (c_const, c_const_quadrature, constant, kernel_moments, power_law,
                     tabulated, truncate)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number:2d} ({self.title}): {self.summary}"


def _grid(n=512):
    return RadialGrid(1e-4, 1e2, n)


def _run(phi0, cs, cfg, T):
    if cs.is_cutoff:
        return picard_solve_cutoff(phi0, cs, cfg, T)
    return solve_noncutoff(phi0, cs, cfg, T)


# --------------------------------------------------------------------------
# shared configurations
# --------------------------------------------------------------------------

def _table_kernel():
    return tabulated([[0.0, 2.0], [0.5, 1.5], [1.0, 1.0], [math.pi / 2, 0.5]], alpha0=1e-3)


def _pl():
    return power_law(1.0, 0.25, 0.75)


GROWTH_CONFIGS = {
    "constant/stable1.5": (lambda: constant(1.0), lambda: Stable(1.5, 1.0),
                           SolverConfig(p=2.0, delta_p=0.5, alpha=1.2, dt=0.05), 0.5),
    "truncated/bkw": (lambda: truncate(_pl(), 100.0), lambda: BKW(0.5, -0.2),
                      SolverConfig(p=1.5, delta_p=1.0, alpha=1.0, dt=0.05), 0.5),
    "tabulated/mixture": (_table_kernel,
                          lambda: Mixture(((0.5, Gaussian(1.0)), (0.5, Stable(1.2, 1.0)))),
                          SolverConfig(p=1.3, delta_p=0.3, alpha=0.8, dt=0.05), 0.5),
    "powerlaw/stable1.8": (_pl, lambda: Stable(1.8, 1.0),
                           SolverConfig(p=2.0, delta_p=0.5, alpha=1.0, beta=0.5, dt=0.02), 0.1),
    "powerlaw/stable0.95": (_pl, lambda: Stable(0.95, 1.0),
                            SolverConfig(p=2.0, delta_p=0.5, alpha=0.9, beta=0.5, dt=0.02), 0.1),
}


@lru_cache(maxsize=None)
def growth_run(name, n=512):
    kf, ff, cfg, T = GROWTH_CONFIGS[name]
    return _run(make_charfn(ff(), _grid(n)), kf(), cfg, T)


STABILITY_PAIRS = (
    (Stable(1.5, 1.0), Stable(1.5, 1.3)),
    (Gaussian(1.0), Stable(1.6, 0.5)),
    (Mixture(((0.5, Gaussian(1.0)), (0.5, Stable(1.4, 1.0)))), BKW(0.5, -0.2)),
)
STABILITY_CFG = SolverConfig(p=2.0, delta_p=0.5, alpha=1.2, dt=0.05)


@lru_cache(maxsize=None)
def stability_run(k, which):
    fam = STABILITY_PAIRS[k][which]
    return picard_solve_cutoff(make_charfn(fam, _grid()), constant(1.0), STABILITY_CFG, 0.5)


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def criterion_1(scale=1.0):
    """Constants: closed forms for b = 1, C_{2,1}, Gamma formula against quadrature."""
    km2 = kernel_moments(constant(1.0), 2.0)
    km1 = kernel_moments(constant(1.0), 1.0)
    checks = {
        "gamma_2": abs(km2.gamma_alpha - 2 * math.pi),
        "lambda_2": abs(km2.lambda_alpha),
        "mu_2": abs(km2.mu_alpha - math.pi / 2),
        "lambda_1": abs(km1.lambda_alpha - 2 * math.pi / 3),
    }
    ok = all(v <= 1e-8 * scale for v in checks.values())
    # C_{2,1} against an independent three-dimensional quadrature
    f3 = lambda ph, th, r: (-math.expm1(-r * r)) * r ** -2.0 * math.sin(th)
    c3d = integrate.nquad(f3, [[0, 2 * math.pi], [0, math.pi], [0, math.inf]],
                          opts={"epsabs": 1e-13, "epsrel": 1e-12, "limit": 200})[0]
    rel_c21 = abs(c_const(2.0, 1.0) - c3d) / c3d
    exact_c21 = abs(c_const(2.0, 1.0) - 4 * math.pi ** 1.5) / (4 * math.pi ** 1.5)
    ok = ok and rel_c21 <= 1e-6 * scale and exact_c21 <= 1e-12
    worst = 0.0
    for p in np.linspace(0.4, 2.0, 5):
        for frac in np.linspace(0.1, 0.9, 5):
            a = frac * p
            worst = max(worst, abs(c_const(p, a) / c_const_quadrature(p, a) - 1.0))
    ok = ok and worst <= 1e-5 * scale
    return CriterionResult(1, "constants", ok,
                           f"max closed-form dev {max(checks.values()):.1e}, C21 rel {rel_c21:.1e}, "
                           f"Gamma-vs-quadrature {worst:.1e}",
                           {"checks": checks, "c21_3d": c3d, "c21_rel": rel_c21,
                            "gamma_vs_quadrature": worst})


def criterion_2(scale=1.0):
    """Gaussian fixed point for b = 1 and the power law, delta_p = 0, t in [0, 1]."""
    g = _grid()
    phi0 = make_charfn(Gaussian(1.0), g)
    cfg = SolverConfig(p=2.0, delta_p=0.0, alpha=1.0, dt=0.05)
    devs = {}
    for name, cs in (("constant", constant(1.0)), ("powerlaw", _pl())):
        tr = _run(phi0, cs, cfg, 1.0)
        devs[name] = max(float(np.max(np.abs(s.values - phi0.values))) for s in tr.states)
    ok = all(d <= 1e-8 * scale for d in devs.values())
    return CriterionResult(2, "gaussian fixed point", ok,
                           ", ".join(f"{k} max dev {v:.1e}" for k, v in devs.items()), devs)


def criterion_3(scale=1.0):
    """Pure decay with b = 0."""
    g = _grid()
    phi0 = make_charfn(Stable(1.5, 1.0), g)
    cfg = SolverConfig(p=1.5, delta_p=0.7, alpha=1.0, dt=0.05)
    tr = picard_solve_cutoff(phi0, constant(0.0), cfg, 1.0)
    r = g.nodes
    dev = max(float(np.max(np.abs(s.values - np.exp(-0.7 * r ** 1.5 * t) * phi0.values)))
              for t, s in zip(tr.times, tr.states))
    return CriterionResult(3, "pure decay", dev <= 1e-10 * scale, f"max nodal dev {dev:.1e}",
                           {"max_dev": dev})


def criterion_4(scale=1.0):
    """Maximal growth on five configurations with alpha0 <= alpha < p, delta_p > 0."""
    margins = {}
    for name in GROWTH_CONFIGS:
        tr = growth_run(name)
        rep = growth_monitor(tr, _scaled_cfg(tr.cfg, scale))
        margins[name] = (rep.passed, rep.details["max_margin"])
    ok = all(p for p, _ in margins.values()) and len(margins) >= 5
    worst = max(m for _, m in margins.values())
    return CriterionResult(4, "maximal growth", ok,
                           f"{len(margins)} configurations, worst margin 1{worst - 1:+.1e}",
                           {k: v[1] for k, v in margins.items()})


def _scaled_cfg(cfg, scale):
    from dataclasses import replace
    return replace(cfg, tol_growth=cfg.tol_growth * scale, tol_stab=cfg.tol_stab * scale)


def criterion_5(scale=1.0):
    """Stability: V(t) <= e^{lambda_alpha t} V(0)(1 + 1e-2) for three pairs."""
    out = {}
    ok = True
    for k in range(len(STABILITY_PAIRS)):
        a, b = stability_run(k, 0), stability_run(k, 1)
        rep = stability_compare(a, b, STABILITY_CFG, tol=1e-2 * scale)
        first = rep.details["ratio"][0]
        worst = float(np.max(rep.lhs / (rep.rhs / (1 + 1e-2 * scale))))
        out[k] = {"passed": rep.passed, "ratio_at_0": float(first), "worst_fraction": worst}
        ok = ok and rep.passed and first == 1.0
    worst = max(v["worst_fraction"] for v in out.values())
    return CriterionResult(5, "stability", ok,
                           f"{len(out)} pairs, max V/(e^(lambda t)V0) = {worst:.4f}", out)


def _cutoff_traces():
    for name in GROWTH_CONFIGS:
        tr = growth_run(name)
        if "levels" in tr.meta:
            yield from ((f"{name}@{lv.kernel.describe()}", lv) for lv in tr.meta["levels"])
        else:
            yield name, tr
    for k in range(len(STABILITY_PAIRS)):
        for w in (0, 1):
            yield f"stability{k}.{w}", stability_run(k, w)


def criterion_6(scale=1.0):
    """Picard residual ratios within 2(1 - e^{-gamma_2 T0})(1 + 1e-2) on every window."""
    worst, n_windows, n_ratios, ok = 0.0, 0, 0, True
    for name, tr in _cutoff_traces():
        for w in tr.windows:
            n_windows += 1
            for r in w["ratios"]:
                n_ratios += 1
                frac = r / w["bound"]
                worst = max(worst, frac)
                ok = ok and r <= w["bound"] * (1 + 1e-2 * scale)
    return CriterionResult(6, "contraction", ok,
                           f"{n_ratios} ratios over {n_windows} windows, max ratio/bound {worst:.3f}",
                           {"windows": n_windows, "ratios": n_ratios, "max_fraction": worst})


def random_catalog_pair(rng, alpha):
    def one():
        kind = rng.integers(4)
        if kind == 0:
            return Stable(float(rng.uniform(alpha + 0.1, 2.0)), float(rng.uniform(0.3, 2.0)))
        if kind == 1:
            return Gaussian(float(rng.uniform(0.5, 2.0)))
        if kind == 2:
            a = float(rng.uniform(0.3, 1.0))
            return BKW(a, float(rng.uniform(-2 * a / 3, 0.0)))
        w = float(rng.uniform(0.2, 0.8))
        return Mixture(((w, Gaussian(float(rng.uniform(0.5, 2.0)))),
                        (1 - w, Stable(float(rng.uniform(alpha + 0.1, 2.0)), 1.0))))
    return one(), one()


def criterion_7(scale=1.0, n_pairs=100, seed=7):
    """Lipschitz bound of G in M^alpha on seeded catalog pairs."""
    rng = np.random.default_rng(seed)
    g = _grid()
    kernels = (constant(1.0), truncate(_pl(), 100.0))
    worst, ok = 0.0, True
    for k in range(n_pairs):
        alpha = float(rng.uniform(0.5, 1.5))
        fa, fb = random_catalog_pair(rng, alpha)
        rep = lipschitz_check_G(make_charfn(fa, g), make_charfn(fb, g), kernels[k % 2], alpha,
                                tol=1e-3 * scale)
        worst = max(worst, rep.ratio / rep.bound)
        ok = ok and rep.passed
    return CriterionResult(7, "Lipschitz bound of G", ok,
                           f"{n_pairs} pairs, max ratio/gamma_alpha {worst:.4f}",
                           {"pairs": n_pairs, "max_fraction": worst})


def criterion_8(scale=1.0, T=0.02):
    """Cutoff limit: decreasing level distances; direct integrator agrees with the limit."""
    g = _grid()
    phi0 = make_charfn(Stable(1.8, 1.0), g)
    cfg = SolverConfig(p=2.0, delta_p=0.5, alpha=1.0, beta=0.5, dt=0.02)
    fine = solve_noncutoff(phi0, _pl(), cfg, T)
    dists = fine.meta["level_distances"]
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    direct = solve_direct(phi0, _pl(), cfg, T, times=fine.times)
    gap = _trace_dis(direct, fine, cfg.alpha, cfg.beta)
    budget = (fine.meta["extrapolated_error"] + float(np.max(fine.step_error_estimate))
              + float(np.max(direct.step_error_estimate)))
    to_levels = [_trace_dis(direct, lv, cfg.alpha, cfg.beta) for lv in fine.meta["levels"]]
    ok = decreasing and gap <= budget * scale
    return CriterionResult(8, "cutoff limit", ok,
                           f"level distances {_fmt(dists)}, direct-vs-finest {gap:.2e} "
                           f"<= budget {budget:.2e}",
                           {"level_distances": dists, "direct_gap": gap, "budget": budget,
                            "direct_to_levels": to_levels})


def _fmt(xs):
    return "[" + ", ".join(f"{x:.3e}" for x in xs) + "]"


def _trace_dis(a, b, alpha, beta, times=None):
    """max over the stored times of ``a`` (found in ``b``) of dis_{alpha,beta}."""
    out = 0.0
    for t, sa in zip(a.times, a.states):
        k = int(np.argmin(np.abs(b.times - t)))
        if abs(b.times[k] - t) > 1e-12:
            continue
        prof = difference_profile(sa, b.states[k])
        out = max(out, profile_malpha(prof, alpha) + profile_ksup(prof, beta))
    return out


def criterion_9(scale=1.0, seed=9):
    """Stable densities: transform pairs, scaling, tail constant, moment probe."""
    v = np.linspace(0.0, 12.0, 10)
    gauss = max(abs(rs.stable_density(2.0, 1.0, x) - (4 * math.pi) ** -1.5 * math.exp(-x * x / 4))
                for x in v)
    cauchy = max(abs(rs.stable_density(1.0, 1.0, x) * math.pi ** 2 * (1 + x * x) ** 2 - 1.0)
                 for x in v)
    rng = np.random.default_rng(seed)
    scal = 0.0
    for _ in range(20):
        p, t, x = rng.uniform(0.5, 2.0), rng.uniform(0.2, 3.0), rng.uniform(0.0, 8.0)
        lhs = rs.stable_density(p, t, x)
        rhs = t ** (-3 / p) * rs.stable_density(p, 1.0, t ** (-1 / p) * x)
        scal = max(scal, abs(lhs - rhs) / abs(rhs))
    tail = rs.tail_check(1.0, radii=(80.0,))["relative_error"][0]
    m_conv = rs.moment_probe(1.0, 0.5)
    m_div = rs.moment_probe(1.0, 1.0)
    ok = (gauss <= 1e-8 * scale and cauchy <= 1e-6 * scale and scal <= 1e-8 * scale
          and tail <= 0.02 * scale
          and m_conv.kind == "convergent" and abs(m_conv.exponent + 0.5) <= 0.05 * scale
          and m_div.kind == "divergent-log" and abs(m_div.exponent) <= 0.05 * scale)
    return CriterionResult(9, "stable densities", ok,
                           f"gauss {gauss:.1e}, cauchy rel {cauchy:.1e}, scaling {scal:.1e}, "
                           f"L(1) at 80 {tail:.2%}, exponents {m_conv.exponent:+.3f} "
                           f"({m_conv.kind}) / {m_div.exponent:+.3f} ({m_div.kind})",
                           {"gauss": gauss, "cauchy": cauchy, "scaling": scal, "tail": tail,
                            "moment_convergent": m_conv.to_dict(),
                            "moment_divergent": m_div.to_dict()})


def criterion_10(scale=1.0):
    """Non-existence diagnostic: power exponents and the logarithmic case."""
    reps = [nonexistence_probe(1.0, 1.5, 1.0, 1.0, tol=0.05 * scale),
            nonexistence_probe(1.5, 2.0, 1.0, 1.0, tol=0.05 * scale),
            nonexistence_probe(1.0, 1.0, 1.0, 1.0, tol=0.05 * scale)]
    ok = all(r.passed for r in reps)
    return CriterionResult(10, "non-existence diagnostic", ok,
                           ", ".join(f"(p={r.p:g}, alpha={r.alpha:g}) {r.kind} e={r.exponent:+.3f}"
                                     + (f" slope={r.log_slope:.3f}" if r.kind == "log" else "")
                                     for r in reps),
                           {"reports": [r.to_dict() for r in reps]})


def criterion_11(scale=1.0, n_times=6):
    """Real-space inversion of an evolved state at t = 0.5 with weak continuity."""
    tr = growth_run("constant/stable1.5")
    idx = tr.subsample(n_times)
    states = [tr.states[k] for k in idx]
    dens = [rs.invert_charfn(s, p=tr.cfg.p) for s in states]
    last = dens[-1]
    mass_dev = abs(last.mass_estimate - 1.0)
    min_val = min(d.min_value for d in dens)
    cont = rs.weak_continuity_check(dens, tr.times[idx], tr.cfg.alpha, tr.cfg.p, states=states,
                                    tol_mass=1e-4 * scale, tol_parseval=1e-5 * scale)
    ok = (abs(tr.times[idx][-1] - 0.5) < 1e-12 and mass_dev <= 1e-4 * scale
          and min_val >= -1e-6 * scale and cont.passed)
    return CriterionResult(11, "real-space solution", ok,
                           f"mass dev {mass_dev:.1e}, min {min_val:.1e}, weak continuity "
                           f"{'ok' if cont.passed else 'failed'}",
                           {"mass_dev": mass_dev, "min_value": min_val,
                            "continuity": cont.to_dict()})


def criterion_12(scale=1.0):
    """Second-order stepping and grid independence of reported norms."""
    g = _grid()
    phi0 = make_charfn(Stable(1.5, 1.0), g)
    base = SolverConfig(p=2.0, delta_p=0.5, alpha=1.2, dt=0.05)
    from dataclasses import replace
    runs = [picard_solve_cutoff(phi0, constant(1.0), replace(base, dt=base.dt / 2 ** k), 0.5,
                                window=0.05) for k in range(3)]
    ref = runs[2]
    e1 = _trace_dis(runs[0], ref, base.alpha, base.beta)
    e2 = _trace_dis(runs[1], ref, base.alpha, base.beta)
    factor = e1 / e2 if e2 > 0 else math.inf
    worst_rel = 0.0
    for name in GROWTH_CONFIGS:
        a, b = growth_run(name), growth_run(name, 1024)
        for x, y in ((a.growth_margin, b.growth_margin), (a.m_norm_to_one, b.m_norm_to_one)):
            rel = np.abs(y - x) / np.maximum(np.abs(x), 1e-300)
            worst_rel = max(worst_rel, float(np.max(rel)))
    ok = factor >= 3.0 / scale and worst_rel <= 1e-4 * scale
    return CriterionResult(12, "convergence order", ok,
                           f"dt-halving error factor {factor:.2f}, grid-doubling max rel change "
                           f"{worst_rel:.1e}",
                           {"errors": [e1, e2], "factor": factor, "grid_rel_change": worst_rel})


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}


def run_all(scale=1.0, only=None):
    out = []
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        out.append(fn(scale=scale))
    return out
