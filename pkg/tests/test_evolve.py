import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracboltz import charfn as C
from fracboltz import collision as Co
from fracboltz import kernel as K
from fracboltz.errors import ConfigMismatch, DomainError, NonCutoffKernel
from fracboltz.evolve import (LOG2, SolverConfig, apriori_check, export_trace, growth_monitor,
                              holder_time_check, nonexistence_probe, picard_solve_cutoff,
                              solve_noncutoff, stability_compare, truncated_diffusion_integral,
                              window_length)


@pytest.fixture(scope="module")
def g():
    return C.RadialGrid(1e-4, 1e2, 256)


@pytest.fixture(scope="module")
def decay_trace(g):
    cfg = SolverConfig(p=1.5, delta_p=0.7, alpha=1.0, dt=0.05)
    phi0 = C.make_charfn(C.Stable(1.5, 1.0), g)
    return phi0, cfg, picard_solve_cutoff(phi0, K.constant(0.0), cfg, 1.0)


@pytest.fixture(scope="module")
def bkw_trace(g):
    cfg = SolverConfig(p=2.0, delta_p=0.0, alpha=1.0, dt=0.05)
    return picard_solve_cutoff(C.make_charfn(C.BKW(0.5, -0.2), g), K.constant(1.0), cfg, 1.0)


@pytest.fixture(scope="module")
def stab_traces(g):
    cfg = SolverConfig(p=1.0, delta_p=0.5, alpha=0.8, dt=0.05)
    one = K.constant(1.0)
    a = picard_solve_cutoff(C.make_charfn(C.Stable(0.9, 1.0), g), one, cfg, 1.0)
    b = picard_solve_cutoff(C.make_charfn(C.Stable(0.9, 1.2), g), one, cfg, 1.0)
    return cfg, a, b


def test_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(p=1.0, alpha=1.0).validate()
    SolverConfig(p=1.0, alpha=1.0, diagnostic=True).validate()
    for bad in (dict(p=2.5), dict(delta_p=-1.0), dict(alpha=1.0, beta=1.5), dict(dt=0.0),
                dict(mode="magic"), dict(n_schedule=(1e3, 1e2))):
        with pytest.raises(DomainError):
            SolverConfig(**bad).validate()


def test_window_respects_log2_bound():
    for g2 in (1.0, 2 * math.pi, 100.0):
        T0 = window_length(g2, 1.0)
        assert T0 < LOG2 / g2
        assert abs(round(1.0 / T0) * T0 - 1.0) < 1e-12


def test_pure_decay_exact(decay_trace):
    phi0, cfg, tr = decay_trace
    r = phi0.grid.nodes
    dev = max(np.max(np.abs(s.values - np.exp(-cfg.delta_p * t * r ** cfg.p) * phi0.values))
              for t, s in zip(tr.times, tr.states))
    assert dev <= 1e-10
    assert tr.states[0] is phi0
    gm = growth_monitor(tr, cfg)
    assert gm.passed and gm.details["max_margin"] == pytest.approx(1.0, abs=1e-12)


def test_pure_decay_holder_K1(decay_trace):
    _, cfg, tr = decay_trace
    rep = holder_time_check(tr, cfg)
    assert rep.passed
    # ||phi(t) - phi(s)|| <= C_{p,alpha} [delta (t - s)]^{alpha/p}
    cpa = K.c_const(cfg.p, cfg.alpha)
    for k in (3, 10, 20):
        d = C.norm_malpha(tr.states[k], tr.states[0], cfg.alpha)
        assert d <= cpa * (cfg.delta_p * tr.times[k]) ** (cfg.alpha / cfg.p) * (1 + 1e-6)


def test_gaussian_steady_state(g):
    cfg = SolverConfig(p=2.0, delta_p=0.0, alpha=1.0, dt=0.05)
    phi0 = C.make_charfn(C.Gaussian(1.0), g)
    tr = picard_solve_cutoff(phi0, K.constant(1.0), cfg, 0.5)
    assert max(np.max(np.abs(s.values - phi0.values)) for s in tr.states) <= 1e-8
    gm = growth_monitor(tr, cfg)
    assert gm.passed and np.all(gm.lhs <= 1.0 + 1e-12)
    ap = apriori_check(tr, cfg, C0_hat=1.0)
    assert ap.passed and ap.rhs[0] == ap.lhs[0]


def test_bkw_exact_solution(bkw_trace):
    # phi = e^{-a r^2}(1 + c r^2) stays in the family: with kappa = 2 pi int sin^3/4 = pi/3,
    # c' = a' = -kappa c  =>  c = c0 e^{-kappa t}, a = a0 + c0 (e^{-kappa t} - 1)
    a0, c0, kap = 0.5, -0.2, math.pi / 3
    r = bkw_trace.grid.nodes
    for t, s, est in zip(bkw_trace.times, bkw_trace.states, bkw_trace.step_error_estimate):
        c = c0 * math.exp(-kap * t)
        a = a0 + c0 * (math.exp(-kap * t) - 1)
        err = np.max(np.abs(s.values - np.exp(-a * r * r) * (1 + c * r * r)))
        assert err <= max(est, 1e-12)
        assert err <= 1e-5


def test_bkw_ode_oracle_by_integration():
    from scipy.integrate import solve_ivp
    kap = math.pi / 3
    sol = solve_ivp(lambda t, y: [-kap * y[1], -kap * y[1]], (0, 1), [0.5, -0.2], rtol=1e-12,
                    atol=1e-14)
    assert sol.y[1, -1] == pytest.approx(-0.2 * math.exp(-kap), rel=1e-9)
    assert sol.y[0, -1] == pytest.approx(0.5 - 0.2 * (math.exp(-kap) - 1), rel=1e-9)


def test_contraction_and_mass(bkw_trace):
    for w in bkw_trace.windows:
        assert w["T0"] < LOG2 / bkw_trace.meta["gamma2"]
        assert all(r <= w["bound"] * 1.01 for r in w["ratios"])
        assert w["residuals"][-1] <= bkw_trace.cfg.picard_tol
    assert all(abs(s(np.array([0.0]))[0] - 1.0) <= 1e-12 for s in bkw_trace.states)


def test_duhamel_consistency(bkw_trace):
    # centred differences of the trace against B(phi); error O(h^2)
    cs = K.constant(1.0)
    tr = bkw_trace
    h = tr.times[1] - tr.times[0]
    plan = Co.get_plan(tr.grid, cs)
    worst = 0.0
    for k in range(2, len(tr.times) - 2, 3):
        dphi = (tr.states[k + 1].values - tr.states[k - 1].values) / (2 * h)
        worst = max(worst, np.max(np.abs(dphi - Co.full_B(tr.states[k], cs, plan).output_values)))
    assert worst <= 5 * h * h


def test_cutoff_solver_rejects_noncutoff(g):
    with pytest.raises(NonCutoffKernel):
        picard_solve_cutoff(C.constant_one(g), K.power_law(1.0, 0.25), SolverConfig(), 0.1)


def test_stability_example(stab_traces):
    cfg, a, b = stab_traces
    rep = stability_compare(a, b, cfg, tol=1e-2)
    assert rep.passed
    assert rep.details["ratio"][0] == 1.0
    assert rep.lhs[0] == pytest.approx(C.norm_malpha(a.states[0], b.states[0], cfg.alpha),
                                       rel=1e-12)
    lam = K.kernel_moments(K.constant(1.0), 0.8).lambda_alpha
    assert rep.details["lambda_alpha"] == lam
    same = stability_compare(a, a, cfg)
    assert same.passed and np.all(same.lhs == 0)


def test_stability_mismatch(stab_traces, g):
    cfg, a, _ = stab_traces
    other = picard_solve_cutoff(C.make_charfn(C.Stable(0.9, 1.0), g), K.constant(1.0), cfg, 0.5)
    with pytest.raises(ConfigMismatch):
        stability_compare(a, other, cfg)


def test_noncutoff_gaussian_constant_in_time(g):
    cfg = SolverConfig(p=2.0, delta_p=0.0, alpha=1.0, dt=0.05, n_schedule=(1e2, 1e3))
    phi0 = C.make_charfn(C.Gaussian(1.0), g)
    tr = solve_noncutoff(phi0, K.power_law(1.0, 0.25, 0.75), cfg, 0.1)
    assert max(np.max(np.abs(s.values - phi0.values)) for s in tr.states) <= 1e-8


def test_noncutoff_refuses_bad_input(g):
    pl = K.power_law(1.0, 0.25, 0.75)
    with pytest.raises(DomainError):
        solve_noncutoff(C.constant_one(g), K.constant(1.0), SolverConfig(), 0.1)
    with pytest.raises(DomainError):
        solve_noncutoff(C.make_charfn(C.Stable(1.5, 1.0), g), pl,
                        SolverConfig(alpha=0.5, p=2.0), 0.1)


def test_nonexistence_examples():
    r = nonexistence_probe(1.0, 1.5, 1.0, 1.0)
    assert r.kind == "power" and r.passed and r.exponent == pytest.approx(-0.5, abs=0.05)
    r = nonexistence_probe(1.5, 2.0, 0.5, 2.0)
    assert r.passed
    r = nonexistence_probe(1.0, 1.0, 1.0, 1.0)
    assert r.kind == "log" and r.passed
    ratio = r.integrals[2] / r.integrals[1]
    # I(eps) ~ 4 pi a log(1/eps) + const
    assert ratio == pytest.approx(math.log(1e6) / math.log(1e4), rel=0.15)
    with pytest.raises(DomainError):
        nonexistence_probe(1.0, 0.5, 1.0, 1.0)


def test_subcritical_control_converges():
    val = truncated_diffusion_integral(1.5, 0.9, 0.7, 1e-12)
    assert val == pytest.approx(K.c_const_scaled(1.5, 0.9, 0.7), rel=1e-6)


def test_export_trace(tmp_path, decay_trace):
    _, _, tr = decay_trace
    out = export_trace(tr, tmp_path / "trace")
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["files"]) == len(tr.times)
    assert man["kernel"] == "constant(0)"
    back = C.read_snapshot(out / man["files"][5])
    assert np.allclose(back.values, tr.states[5].values, rtol=1e-14, atol=1e-300)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.0, 1.0))
def test_growth_bound_random_cutoff(p, delta):
    g = C.RadialGrid(1e-4, 1e2, 128)
    alpha = 0.4 * p
    cfg = SolverConfig(p=p, delta_p=delta, alpha=alpha, dt=0.1)
    tr = picard_solve_cutoff(C.make_charfn(C.Stable(min(2.0, p + 0.2), 1.0), g), K.constant(0.5),
                             cfg, 0.4)
    assert growth_monitor(tr, cfg).passed
