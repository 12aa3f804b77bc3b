import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fracboltz import charfn as C
from fracboltz import collision as Co
from fracboltz import kernel as K
from fracboltz.errors import NonCutoffKernel

# mpmath at 30 digits, b = 1 and b = theta^{-2.5}, phi = e^{-r}, r = 1
G_STABLE1_R1 = 1.66279186854849971715156823685
B_STABLE1_R1_POWERLAW = -2.15125628695927741712354209893
R1 = 400


@pytest.fixture(scope="module")
def pl():
    return K.power_law(1.0, 0.25, 0.75)


@pytest.fixture(scope="module")
def one_k():
    return K.constant(1.0)


def test_gain_oracles(grid_unit, one_k):
    phi = C.make_charfn(C.Stable(1.0, 1.0), grid_unit)
    G = Co.gain_G(phi, one_k)
    assert G.output_values[R1] == pytest.approx(G_STABLE1_R1, abs=1e-8)
    ref, _ = integrate.quad(lambda t: 2 * math.pi * math.sin(t)
                            * math.exp(-(math.cos(t / 2) + math.sin(t / 2))), 0, math.pi / 2,
                            epsabs=1e-14)
    assert G.output_values[R1] == pytest.approx(ref, abs=1e-8)
    assert np.all(G.quad_error_estimate >= 0)


def test_gain_of_constants(grid, one_k):
    g2 = K.kernel_moments(one_k, 2.0).gamma_alpha
    G1 = Co.gain_G(C.constant_one(grid), one_k).output_values
    assert np.allclose(G1, g2, rtol=1e-12)
    gauss = C.make_charfn(C.Gaussian(1.0), grid)
    Gg = Co.gain_G(gauss, one_k).output_values
    assert np.max(np.abs(Gg - g2 * gauss.values)) <= 1e-12
    # bounded by gamma_2, and G(phi)(0) = gamma_2
    assert np.all(np.abs(Gg) <= g2 * (1 + 1e-12))
    assert Gg[0] == pytest.approx(g2, rel=1e-6)


def test_gain_rejects_noncutoff(grid, pl):
    with pytest.raises(NonCutoffKernel):
        Co.gain_G(C.constant_one(grid), pl)


def test_full_B_oracle(grid_unit, pl):
    phi = C.make_charfn(C.Stable(1.0, 1.0), grid_unit)
    B = Co.full_B(phi, pl)
    assert B.output_values[R1] < 0
    assert B.output_values[R1] == pytest.approx(B_STABLE1_R1_POWERLAW, rel=1e-6)


def test_full_B_annihilates(grid, pl, one_k):
    for cs in (pl, one_k, K.truncate(pl, 100.0)):
        assert np.max(np.abs(Co.full_B(C.constant_one(grid), cs).output_values)) <= 1e-10
        gauss = C.make_charfn(C.Gaussian(1.0), grid)
        assert np.max(np.abs(Co.full_B(gauss, cs).output_values)) <= 1e-10
    # B(phi)(r) -> 0 as r -> 0
    b = Co.full_B(C.make_charfn(C.Stable(1.5, 1.0), grid), pl).output_values
    assert abs(b[0]) < 1e-4 * np.max(np.abs(b))


def test_B_is_G_minus_loss_for_cutoff(grid):
    cs = K.tabulated([[0, 2], [0.5, 1.5], [1, 1], [math.pi / 2, 0.5]])
    g2 = K.kernel_moments(cs, 2.0).gamma_alpha
    for fam in (C.Stable(1.2, 1.0), C.BKW(0.5, -0.2)):
        phi = C.make_charfn(fam, grid)
        B = Co.full_B(phi, cs)
        G = Co.gain_G(phi, cs)
        tol = np.max(B.quad_error_estimate + G.quad_error_estimate) + 1e-12
        assert np.max(np.abs(B.output_values - (G.output_values - g2 * phi.values))) <= tol


def test_energy_identity_of_arguments(grid, pl):
    plan = Co.get_plan(grid, pl)
    lhs = plan.xp ** 2 + plan.xm ** 2
    assert np.allclose(lhs, grid.nodes[:, None] ** 2, rtol=1e-15, atol=0)


def test_B_truncation_converges(grid, pl):
    phi = C.make_charfn(C.Stable(1.0, 1.0), grid)
    full = Co.full_B(phi, pl).output_values
    gaps = [np.max(np.abs(Co.full_B(phi, K.truncate(pl, n)).output_values - full))
            for n in (1e2, 1e3, 1e4)]
    assert gaps[0] > gaps[1] > gaps[2]
    # |B_n - B| ~ n^{-(alpha_loc - 2s)/(2 + 2s)} = n^{-0.2}
    rate = math.log(gaps[1] / gaps[2]) / math.log(10.0)
    assert rate == pytest.approx(0.2, abs=0.02)


def test_lipschitz_examples(grid, one_k):
    g1 = K.kernel_moments(one_k, 1.0).gamma_alpha
    assert g1 == pytest.approx(8 * math.pi / 3, rel=1e-12)
    rep = Co.lipschitz_check_G(C.make_charfn(C.Gaussian(1.0), grid), C.constant_one(grid),
                               one_k, 1.0)
    assert rep.passed and rep.ratio <= g1
    rep = Co.lipschitz_check_G(C.make_charfn(C.Stable(1.5, 1.0), grid),
                               C.make_charfn(C.Stable(1.5, 2.0), grid), one_k, 1.2)
    assert rep.passed
    same = C.make_charfn(C.Stable(1.5, 1.0), grid)
    assert Co.lipschitz_check_G(same, same, one_k, 1.0).ratio == 0.0


def test_bound_check_examples(grid, pl, one_k):
    assert Co.bound_check_B(C.make_charfn(C.Gaussian(1.0), grid), one_k, 1.0).ratio <= 1e-9
    assert Co.bound_check_B(C.constant_one(grid), one_k, 1.0).ratio == 0.0
    rep = Co.bound_check_B(C.make_charfn(C.Stable(1.0, 1.0), grid), pl, 0.8)
    assert rep.passed and 0 < rep.ratio < math.inf


@settings(max_examples=8, deadline=None)
@given(st.floats(0.6, 2.0), st.floats(0.3, 3.0), st.floats(0.6, 2.0), st.floats(0.3, 3.0),
       st.floats(0.2, 1.0, exclude_max=True))
def test_lipschitz_property(p1, t1, p2, t2, frac):
    g = C.RadialGrid(1e-4, 1e2, 256)
    # alpha = p makes both distances log-divergent
    alpha = frac * min(p1, p2)
    rep = Co.lipschitz_check_G(C.make_charfn(C.Stable(p1, t1), g),
                               C.make_charfn(C.Stable(p2, t2), g), K.constant(1.0), alpha)
    assert rep.passed
