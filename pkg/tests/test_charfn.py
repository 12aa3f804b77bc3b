import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from fracboltz import charfn as C
from fracboltz.errors import DomainError, GridMismatch, ModelMissing
from fracboltz.kernel import c_const

C21 = 4 * math.pi ** 1.5
# mpmath: 4 pi Gamma(1/3); max_r (1 - e^{-r^2}) / r
C151 = 33.6645344802258612083940460913
KSUP_GAUSS_BETA1 = 0.638172686338951480935369235329


def one(g):
    return C.constant_one(g)


def test_grid_invariants():
    g = C.RadialGrid()
    r = g.nodes
    q = r[1:] / r[:-1]
    assert np.all(np.abs(q / q[0] - 1) < 1e-12)
    assert (r[0], r[-1], len(r)) == (1e-4, 1e2, 512)
    for bad in ((1e-4, 1e2, 8), (0.0, 1.0, 64), (1e-2, 1e1, 64)):
        with pytest.raises(DomainError):
            C.RadialGrid(*bad)


def test_closed_forms(grid):
    g = C.make_charfn(C.Gaussian(1.0), grid)
    assert g(0.0) == 1.0
    assert g(1e-9) == pytest.approx(1.0, abs=1e-15)
    s = C.make_charfn(C.Stable(1.0, 1.0), grid)
    assert s(2.0) == pytest.approx(math.exp(-2.0), rel=1e-12)
    assert np.array_equal(s.values, np.exp(-grid.nodes))
    m = C.make_charfn(C.Mixture(((0.5, C.Stable(2.0, 1.0)), (0.5, C.Stable(1.0, 1.0)))), grid)
    x = np.array([0.3, 1.0, 3.0])
    assert np.allclose(m(x), 0.5 * np.exp(-x ** 2) + 0.5 * np.exp(-x), rtol=1e-9, atol=0)
    assert C.check_positive_definite(m).passed


def test_invalid_families():
    for fam in (C.Gaussian(-1.0), C.Stable(2.5, 1.0), C.Stable(1.0, 0.0), C.BKW(1.0, 0.5),
                C.Mixture(((0.3, C.Gaussian(1.0)), (0.3, C.Gaussian(2.0))))):
        with pytest.raises(DomainError):
            C.make_charfn(fam, C.RadialGrid(1e-4, 1e2, 64))


def test_kalpha(grid):
    g = C.make_charfn(C.Stable(2.0, 1.0), grid)
    assert C.norm_kalpha(g, g, 1.0) == 0.0
    assert C.norm_kalpha(g, one(grid), 2.0) == pytest.approx(1.0, abs=1e-8)
    assert math.isinf(C.norm_kalpha(C.make_charfn(C.Stable(1.0, 1.0), grid), one(grid), 2.0))


def test_malpha_closed_forms(grid):
    assert C.norm_malpha(C.make_charfn(C.Stable(2.0, 1.0), grid), one(grid), 1.0) == \
        pytest.approx(C21, rel=1e-6)
    s15 = C.make_charfn(C.Stable(1.5, 1.0), grid)
    assert C.norm_malpha(s15, one(grid), 1.0) == pytest.approx(C151, rel=1e-6)
    assert C.norm_malpha(s15, s15, 1.0) == 0.0


def test_malpha_against_scipy(grid):
    phi = C.make_charfn(C.Stable(1.5, 1.0), grid)
    psi = C.make_charfn(C.Gaussian(1.0), grid)
    # independent radial quadrature of |phi - psi| r^{-1-alpha}; kink at r = 4, and
    # r = x^10 on (0, 1) removes the r^{-0.3} endpoint singularity
    f = lambda r: 4 * math.pi * abs(math.exp(-r ** 1.5) - math.exp(-r * r / 2)) * r ** -1.8
    ref = integrate.quad(lambda x: f(x ** 10) * 10 * x ** 9, 0, 1, epsabs=1e-13)[0]
    ref += sum(integrate.quad(f, a, b, limit=400, epsabs=1e-13)[0]
               for a, b in ((1, 4), (4, 10), (10, np.inf)))
    assert C.norm_malpha(phi, psi, 0.8) == pytest.approx(ref, rel=1e-6)


def test_dis_metric(grid):
    g = C.make_charfn(C.Stable(2.0, 1.0), grid)
    res = optimize.minimize_scalar(lambda r: -(-math.expm1(-r * r)) / r, bounds=(0.5, 2),
                                   method="bounded", options={"xatol": 1e-10})
    assert -res.fun == pytest.approx(KSUP_GAUSS_BETA1, rel=1e-9)
    d = C.dis_metric(g, one(grid), 1.0, 1.0)
    assert d == pytest.approx(C21 + KSUP_GAUSS_BETA1, rel=1e-6)
    assert d == pytest.approx(22.9115, abs=1e-4)
    assert C.dis_metric(g, g, 1.0, 0.5) == 0.0
    with pytest.raises(DomainError):
        C.dis_metric(g, g, 1.0, 1.5)


def test_grid_mismatch(grid):
    a = C.make_charfn(C.Stable(1.0, 1.0), grid)
    b = C.make_charfn(C.Stable(1.0, 1.0), C.RadialGrid(1e-4, 1e2, 256))
    with pytest.raises(GridMismatch):
        C.norm_malpha(a, b, 1.0)


def test_positive_definite(grid):
    assert C.check_positive_definite(C.make_charfn(C.Gaussian(1.0), grid), m=32).passed
    for p in (0.5, 1.0, 1.5, 2.0):
        assert C.check_positive_definite(C.make_charfn(C.Stable(p, 1.0), grid), m=32).passed
    # 1 - r^2 clipped to [-1, 1] is not positive definite
    vals = np.clip(1 - grid.nodes ** 2, -1, 1)
    bad = C.from_values(grid, vals, origin_exponents_=(2.0,), tail_kind="constant")
    rep = C.check_positive_definite(bad, m=32, radius=2.0)
    assert not rep.passed and rep.min_eigenvalue < -rep.tol


def test_snapshot_round_trip(tmp_path, grid):
    phi = C.make_charfn(C.Mixture(((0.5, C.Gaussian(1.0)), (0.5, C.Stable(1.2, 1.0)))), grid)
    C.write_snapshot(tmp_path / "s.bfr", phi)
    head = (tmp_path / "s.bfr").read_text().splitlines()[0].split()
    assert head[0] == "bfr1" and int(head[1]) == grid.n
    back = C.read_snapshot(tmp_path / "s.bfr")
    assert np.allclose(back.values, phi.values, rtol=1e-14, atol=0)
    x = np.geomspace(1e-6, 50, 40)
    assert np.allclose(back(x), phi(x), rtol=1e-13, atol=1e-15)


def test_missing_tail_model(grid):
    with pytest.raises(ModelMissing):
        C.RadialCharFn(grid, np.ones(grid.n), envelope=(), tail_kind="decay")


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([0.5, 1.0, 1.5, 2.0]), st.floats(0.2, 3.0), st.floats(0.1, 0.9))
def test_malpha_stable_scaling_identity(p, a, frac):
    g = C.RadialGrid()
    alpha = frac * p
    val = C.norm_malpha(C.make_charfn(C.Stable(p, a), g), one(g), alpha)
    assert val == pytest.approx(c_const(p, alpha) * a ** (alpha / p), rel=1e-4)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.tuples(st.floats(0.8, 2.0), st.floats(0.3, 2.0)), min_size=3, max_size=3),
       st.floats(0.2, 0.7))
def test_dis_triangle_inequality(params, alpha):
    g = C.RadialGrid(1e-4, 1e2, 256)
    f = [C.make_charfn(C.Stable(p, t), g) for p, t in params]
    beta = alpha / 2
    d = lambda x, y: C.dis_metric(x, y, alpha, beta)
    assert d(f[0], f[2]) <= (d(f[0], f[1]) + d(f[1], f[2])) * (1 + 1e-9) + 1e-12


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_malpha_dilation(c, grid):
    # ||phi(c.) - psi(c.)|| = c^alpha ||phi - psi|| for stable laws: phi_t(c r) = phi_{t c^p}(r)
    alpha = 0.7
    a = C.norm_malpha(C.make_charfn(C.Stable(1.5, c ** 1.5), grid),
                      C.make_charfn(C.Stable(1.2, c ** 1.2 * 0.5), grid), alpha)
    b = C.norm_malpha(C.make_charfn(C.Stable(1.5, 1.0), grid),
                      C.make_charfn(C.Stable(1.2, 0.5), grid), alpha)
    assert a == pytest.approx(c ** alpha * b, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_stable_semigroup(p, t1, t2):
    g = C.RadialGrid(1e-4, 1e2, 64)
    prod = C.make_charfn(C.Stable(p, t1), g).values * C.make_charfn(C.Stable(p, t2), g).values
    joint = C.make_charfn(C.Stable(p, t1 + t2), g).values
    # exponent rounding grows with t r^p, so compare exponents
    live = (prod > 1e-300) & (joint > 1e-300)
    assert np.array_equal(prod > 1e-300, joint > 1e-300) or not np.any(prod[~live] > 1e-290)
    assert np.allclose(np.log(prod[live]), np.log(joint[live]), rtol=1e-13, atol=1e-15)
