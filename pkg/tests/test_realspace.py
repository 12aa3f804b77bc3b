import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from fracboltz import charfn as C
from fracboltz import kernel as K
from fracboltz import realspace as R
from fracboltz.errors import DomainError, NotIntegrable
from fracboltz.evolve import SolverConfig, picard_solve_cutoff

INV_PI2 = 1 / math.pi ** 2
# mpmath, 30 digits
L_VALUES = {0.5: 0.047620226950680727339322478701, 1.0: 0.10132118364233777144387946321,
            1.5: 0.119050567376701818348306196752}


def gauss_density(v):
    return (4 * math.pi) ** -1.5 * np.exp(-np.asarray(v) ** 2 / 4)


def cauchy_density(v):
    return INV_PI2 * (1 + np.asarray(v) ** 2) ** -2


def test_wynn_epsilon_alternating_series():
    partial = np.cumsum([(-1) ** k / (k + 1) for k in range(12)])
    assert abs(partial[-1] - math.log(2)) > 1e-2
    assert R.wynn_epsilon(partial) == pytest.approx(math.log(2), abs=1e-8)


def test_oscillatory_engine_against_bessel():
    # int_0^inf x sin(kx) / (1 + x^2)^{3/2} dx = k K_0(k), slowly decaying integrand
    g = lambda x: (1 + x * x) ** -1.5
    for k in (0.5, 3.0, 20.0):
        assert R.oscillatory_integral(g, k) == pytest.approx(k * special.k0(k), rel=1e-8,
                                                              abs=1e-15)


@pytest.mark.parametrize("v", np.linspace(0.0, 12.0, 10))
def test_stable_density_closed_forms(v):
    assert R.stable_density(2.0, 1.0, v) == pytest.approx(gauss_density(v), abs=1e-8)
    assert R.stable_density(1.0, 1.0, v) == pytest.approx(cauchy_density(v), abs=1e-8)
    assert R.stable_density(1.0, 1.0, v) == pytest.approx(cauchy_density(v), rel=1e-8)


def test_stable_density_at_origin():
    assert R.stable_density(1.0, 1.0, 0.0) == pytest.approx(INV_PI2, rel=1e-14)
    with pytest.raises(DomainError):
        R.stable_density(2.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        R.stable_density(1.0, 0.0, 1.0)


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5, 2.0])
def test_stable_density_positive(p):
    vals = [R.stable_density(p, 1.0, v) for v in (0.0, 0.1, 1.0, 3.0, 10.0, 30.0)]
    assert min(vals) > 0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(0.2, 4.0), st.floats(0.0, 10.0))
def test_scaling_identity(p, t, v):
    lhs = R.stable_density(p, t, v)
    rhs = t ** (-3 / p) * R.stable_density(p, 1.0, t ** (-1 / p) * v)
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_tail_constant():
    for p, val in L_VALUES.items():
        assert R.tail_constant(p) == pytest.approx(val, rel=1e-12)
    assert R.tail_constant(1.0) == pytest.approx(INV_PI2, rel=1e-13)
    assert R.tail_constant(1.999) < 1e-2 * R.tail_constant(1.0)
    for p in (0.0, 2.0):
        with pytest.raises(DomainError):
            R.tail_constant(p)


def test_tail_check_cauchy():
    v = 30.0
    assert v ** 4 * R.stable_density(1.0, 1.0, v) == pytest.approx(INV_PI2, rel=5e-3)
    tc = R.tail_check(1.0)
    assert all(e <= 0.02 for e in tc["relative_error"])
    assert tc["relative_error"] == sorted(tc["relative_error"], reverse=True)


@pytest.mark.parametrize("p", [0.5, 1.5])
def test_tail_check_improves(p):
    # the next term of the expansion has relative size |v|^{-p}, so 2% at |v| = 20
    # is out of reach here; the approach to L(p) must still be monotone
    rel = R.tail_check(p)["relative_error"]
    assert rel[0] > rel[1] > rel[2]
    ratio = rel[1] / rel[2]
    assert ratio == pytest.approx(2 ** p, rel=0.25)


def test_moment_probe_examples():
    m = R.moment_probe(1.0, 0.5)
    assert m.kind == "convergent" and m.exponent == pytest.approx(-0.5, abs=0.05)
    m = R.moment_probe(1.0, 1.0)
    assert m.kind == "divergent-log" and abs(m.exponent) <= 0.05
    # increments per decade -> 4 pi L(1) log 10
    inc = m.M[-1] - m.M[-3]
    assert inc == pytest.approx(4 * math.pi * INV_PI2 * math.log(10), rel=0.02)
    m = R.moment_probe(2.0, 2.0)
    assert m.kind == "convergent" and m.limit == pytest.approx(6.0, abs=1e-6)


def test_invert_closed_forms():
    v = R.default_vgrid(1e-3, 20.0, 61)
    g = C.RadialGrid()
    d = R.invert_charfn(C.make_charfn(C.Stable(2.0, 1.0), g), v)
    assert np.max(np.abs(d.values - gauss_density(v))) <= 1e-8
    assert d.mass_estimate == pytest.approx(1.0, abs=1e-8)
    d = R.invert_charfn(C.make_charfn(C.Stable(1.0, 1.0), g), v)
    assert np.max(np.abs(d.values - cauchy_density(v))) <= 1e-6
    assert d.tail_model[0][1] == pytest.approx(4.0)


def test_invert_needs_decay():
    with pytest.raises(NotIntegrable):
        R.invert_charfn(C.constant_one(C.RadialGrid()))


def test_round_trip():
    g = C.RadialGrid()
    for fam in (C.Stable(1.5, 0.5), C.Mixture(((0.5, C.Gaussian(1.0)), (0.5, C.Stable(1.2, 1.0))))):
        phi = C.make_charfn(fam, g)
        d = R.invert_charfn(phi)
        r = np.array([0.05, 0.3, 1.0, 2.5])
        assert np.max(np.abs(R.forward_transform(d, r) - phi(r))) <= 1e-6


def test_write_density(tmp_path):
    v = np.array([0.1, 1.0, 10.0])
    d = R.RadialDensity(v, np.array([0.5, -1e-8, -1e-3]), 1.0, 4.0, -1e-3,
                        meta={"p": 1.0, "t": 0.5})
    R.write_density(tmp_path / "f.csv", d)
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "v,f"
    assert [float(x.split(",")[1]) for x in rows[1:]] == [0.5, 0.0, -1e-3]
    assert d.values[1] == -1e-8
    side = json.loads((tmp_path / "f.json").read_text())
    assert set(side) == {"p", "t", "mass", "min_value", "tail_exponent"}


@pytest.fixture(scope="module")
def evolved():
    g = C.RadialGrid(1e-4, 1e2, 256)
    cfg = SolverConfig(p=2.0, delta_p=0.5, alpha=1.2, dt=0.05)
    tr = picard_solve_cutoff(C.make_charfn(C.Stable(1.5, 1.0), g), K.constant(1.0), cfg, 0.5)
    idx = tr.subsample(5)
    v = R.default_vgrid(1e-3, 200.0, 301)
    return cfg, tr, idx, [R.invert_charfn(tr.states[k], v, p=cfg.p) for k in idx]


def test_evolved_density_properties(evolved):
    _, tr, idx, dens = evolved
    last = dens[-1]
    assert tr.times[idx[-1]] == pytest.approx(0.5)
    assert abs(last.mass_estimate - 1) <= 1e-4
    assert last.min_value >= -1e-6
    # tails inherit the stable(1.5) origin: f ~ v^{-4.5}
    assert last.tail_exponent_estimate == pytest.approx(4.5, abs=0.1)


def test_weak_continuity(evolved):
    cfg, tr, idx, dens = evolved
    rep = R.weak_continuity_check(dens, tr.times[idx], cfg.alpha, cfg.p,
                                  states=[tr.states[k] for k in idx])
    assert rep.passed
    assert np.allclose(rep.curves["one"], 1.0, atol=1e-4)
    assert rep.exponent == pytest.approx(0.6 * 0.9)
    with pytest.raises(DomainError):
        R.weak_continuity_check(dens, tr.times[idx], 1.0, cfg.p)
