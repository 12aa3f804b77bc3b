"""Gain operator G and full collision operator B on radial characteristic functions.

With |xi+| = r cos(theta/2) and |xi-| = r sin(theta/2),

    G(phi)(r) = 2 pi int_0^{pi/2} b sin(theta) phi(r C) phi(r S) d theta
    B(phi)(r) = 2 pi int_0^{pi/2} b sin(theta) [phi(r C) phi(r S) - phi(r)] d theta

Both are evaluated on the envelope-scaled representation (see ``charfn``):
the returned ``scaled_values`` are G(phi) e^{E(r)} and B(phi) e^{E(r)}.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .charfn import (STENCIL, RadialCharFn, array_profile, constant_one, difference_profile,
                     envelope_exponent, interp_matrix, profile_malpha)
from .errors import GridMismatch, ModelMissing, NonCutoffKernel
from .kernel import HALF_PI, N_PANELS, eval_b, kernel_moments
from .quadrature import graded_edges, panel_rule

MAX_PANEL_WIDTH = 0.2
# cutoff integrands are O(theta) at 0, so the head panel below pi/2 * 2**-30 is harmless
CUTOFF_PANELS = 30
# beyond this e^{E(r) - E(rC)} the cancellation form is not used
_CANCEL_EXP_CAP = 30.0


def _taylor_tables(grid):
    """Coefficient rows T_k so that psi(s_i + d) - psi_i = sum_k (T_k psi)_i d^k.

    Exact for -1 <= d < 0, where the interpolant at s_i + d uses the
    stencil of interval i - 1.  Row 0 is unused (node 0 has no left interval).
    """
    n = grid.n
    i = np.arange(1, n)
    start = np.clip(i - 1 - (STENCIL // 2 - 1), 0, n - STENCIL)
    sigma = (i - start).astype(float)
    polys = []
    for j in range(STENCIL):
        roots = [k for k in range(STENCIL) if k != j]
        c = np.poly1d(roots, r=True)
        polys.append(c / np.prod([j - k for k in roots]))
    tables = []
    for k in range(1, STENCIL):
        w = np.empty((len(i), STENCIL))
        for j in range(STENCIL):
            w[:, j] = polys[j].deriv(k)(sigma) / math.factorial(k)
        rows = np.repeat(i, STENCIL)
        cols = (start[:, None] + np.arange(STENCIL)).ravel()
        tables.append(sparse.csr_matrix((w.ravel(), (rows, cols)), shape=(n, n)))
    return tables


class OperatorPlan:
    """Precomputed angular rule and interpolation operators for one grid and kernel.

    The angular rule is the composite G7/K15 rule on panels graded toward
    theta = 0 (plus an analytic head for power-law kernels).  Values at the
    collision arguments are obtained from node values by sparse matrices.
    """

    def __init__(self, grid, cs, n_panels=None, max_width=MAX_PANEL_WIDTH):
        self.grid = grid
        self.cs = cs
        if n_panels is None:
            n_panels = N_PANELS if not cs.is_cutoff else CUTOFF_PANELS
        edges = graded_edges(0.0, HALF_PI, n_panels, breakpoints=cs.quad_breakpoints(),
                             head=cs.is_cutoff)
        pieces = [edges[:1]]
        for a, b in zip(edges[:-1], edges[1:]):
            m = max(1, int(math.ceil((b - a) / max_width)))
            pieces.append(np.linspace(a, b, m + 1)[1:])
        edges = np.concatenate(pieces)
        self.theta_min = float(edges[0])
        rule = panel_rule(edges)
        th = rule.x
        base = 2.0 * math.pi * eval_b(cs, th) * np.sin(th)
        self.theta = th
        self.w = base * rule.wk
        self.w_err = base * (rule.wk - rule.wg)
        self.gamma2 = float(self.w.sum()) if cs.is_cutoff else math.inf

        r = grid.nodes
        self.r = r
        half = 0.5 * th
        self.S = np.sin(half)
        self.C = np.cos(half)
        self.logC = 0.5 * np.log1p(-self.S ** 2)
        xp = np.outer(r, self.C)
        xm = np.outer(r, self.S)
        self.xp, self.xm = xp, xm
        self.low_p = xp < grid.r_min
        self.low_m = xm < grid.r_min
        self.n_low_p = int(self.low_p.sum())
        self.n_low_m = int(self.low_m.sum())
        self.Mp = interp_matrix(grid, np.where(self.low_p, grid.r_min, xp))
        self.Mm = interp_matrix(grid, np.where(self.low_m, grid.r_min, xm))

        # cancellation region: same stencil interval, node above r_min
        d = self.logC[None, :] / grid.h * np.ones((grid.n, 1))
        self.d = d
        self.cancel = (d >= -1.0) & (np.arange(grid.n)[:, None] >= 1) & ~self.low_p
        self.taylor = _taylor_tables(grid)
        self._cache = {}

    # -- envelope helpers ------------------------------------------------------
    def _pow_tables(self, p):
        key = round(float(p), 12)
        if key not in self._cache:
            rp = self.r ** p
            cp = np.exp(p * self.logC)
            sp = self.S ** p
            # C^p + S^p - 1 >= 0 for p <= 2, computed without cancellation
            direct = np.outer(rp, np.expm1(p * self.logC) + sp)
            plus = np.outer(rp, np.expm1(p * self.logC))
            self._cache[key] = (direct, plus, rp, cp, sp)
        return self._cache[key]

    def _delta_E(self, env):
        """E(rC) + E(rS) - E(r) and E(rC) - E(r) on the (node, theta) array."""
        dE = np.zeros_like(self.xp)
        dEp = np.zeros_like(self.xp)
        for a, p in env:
            direct, plus, *_ = self._pow_tables(p)
            dE += a * direct
            dEp += a * plus
        return dE, dEp

    def _low_powers(self, which, exps):
        """x^a on the below-r_min entries of the r C or r S arrays, cached."""
        key = (which, tuple(round(float(a), 12) for a in exps))
        if key not in self._cache:
            x = (self.xp[self.low_p] if which == "p" else self.xm[self.low_m])
            lx = np.log(x)
            self._cache[key] = [np.exp(a * lx) for a in exps]
        return self._cache[key]

    def _low_values(self, phi, which):
        terms = phi.origin.terms
        pw = self._low_powers(which, [a for a, _ in terms])
        out = np.ones(int((self.low_p if which == "p" else self.low_m).sum()))
        for (_, c), xa in zip(terms, pw):
            out -= c * xa
        if phi.envelope:
            epw = self._low_powers(which, [q for _, q in phi.envelope])
            out *= np.exp(sum(a * xq for (a, _), xq in zip(phi.envelope, epw)))
        return out

    def _scaled_args(self, phi):
        """psi at r C and r S, using the origin model below r_min."""
        psp = (self.Mp @ phi.scaled).reshape(self.xp.shape)
        psm = (self.Mm @ phi.scaled).reshape(self.xm.shape)
        if self.n_low_p:
            psp[self.low_p] = self._low_values(phi, "p")
        if self.n_low_m:
            psm[self.low_m] = self._low_values(phi, "m")
        return psp, psm

    def _check(self, phi):
        if phi.grid != self.grid:
            raise GridMismatch("operator plan built for a different grid")

    # -- operators -------------------------------------------------------------
    def gain_scaled(self, phi):
        """(G(phi) e^{E}, error estimate) at the nodes; cutoff kernels only."""
        if not self.cs.is_cutoff:
            raise NonCutoffKernel("gain operator needs a cutoff kernel (gamma_2 finite)")
        self._check(phi)
        psp, psm = self._scaled_args(phi)
        dE, _ = self._delta_E(phi.envelope)
        integrand = psp * psm * np.exp(-dE)
        return integrand @ self.w, np.abs(integrand @ self.w_err)

    def collision_scaled(self, phi):
        """(B(phi) e^{E}, error estimate) at the nodes, in cancellation form."""
        self._check(phi)
        cs = self.cs
        psp, psm = self._scaled_args(phi)
        dE, dEp = self._delta_E(phi.envelope)
        psi_r = phi.scaled[:, None]
        with np.errstate(over="ignore", invalid="ignore"):
            direct = psp * psm * np.exp(-dE) - psi_r

        # phi(rS) - 1 without cancellation
        Em = dE - dEp  # E(rS)
        phim_minus_1 = psm * np.exp(-Em) - 1.0
        if self.n_low_m:
            low = self._low_powers("m", [a for a, _ in phi.origin.terms])
            phim_minus_1[self.low_m] = -sum(
                (c * xa for (_, c), xa in zip(phi.origin.terms, low)), np.zeros(self.n_low_m))
        # psi(rC) - psi(r) from the exact Taylor form of the interpolant
        dpsi = np.zeros_like(direct)
        dk = np.ones_like(self.d)
        for T in self.taylor:
            dk = dk * self.d
            dpsi += (T @ phi.scaled)[:, None] * dk
        use = self.cancel & (-dEp < _CANCEL_EXP_CAP)
        with np.errstate(over="ignore", invalid="ignore"):
            g = np.exp(-dEp)
            cancel = psp * g * phim_minus_1 + dpsi * g + psi_r * np.expm1(-dEp)
        integrand = np.where(use, cancel, direct)

        # node 0 (and any row whose r C falls below r_min) from the origin model
        rows = np.nonzero(self.low_p.any(axis=1) & ~self.cancel.any(axis=1))[0]
        if len(rows):
            integrand[rows] = self._origin_bracket(phi, rows)

        val = integrand @ self.w
        err = np.abs(integrand @ self.w_err)
        if not cs.is_cutoff:
            val = val + self._head(phi)
        return val, err

    def _origin_bracket(self, phi, rows):
        """Scaled bracket for small r, all three factors from the origin model."""
        om = phi.origin
        r = self.r[rows][:, None]
        xp = self.xp[rows]
        xm = self.xm[rows]
        m_r = om.one_minus(r)
        m_p = om.one_minus(xp)
        m_m = om.one_minus(xm)
        # m(r) - m(rC) = -sum c r^a (C^a - 1)
        diff = np.zeros_like(xp)
        for a, c in om.terms:
            diff -= c * r ** a * np.expm1(a * self.logC)[None, :]
        bracket = diff - m_m + m_p * m_m

        return bracket * np.exp(envelope_exponent(phi.envelope, r))

    def _head(self, phi):
        """Analytic contribution of (0, theta_min) for a power-law kernel."""
        cs = self.cs
        two_s = 2.0 * cs.s
        tm = self.theta_min
        acc = np.zeros_like(self.r)
        for a, c in phi.origin.terms:
            if c == 0.0:
                continue
            if a <= two_s:
                raise ModelMissing(
                    f"origin order {a} does not exceed the kernel singularity 2s = {two_s}")
            acc += c * (self.r / 2.0) ** a * tm ** (a - two_s) / (a - two_s)
        return -2.0 * math.pi * cs.K * phi.scaled * acc


@lru_cache(maxsize=8)
def get_plan(grid, cs):
    return OperatorPlan(grid, cs)


@dataclass(frozen=True, eq=False)
class CollisionEvaluation:
    input: RadialCharFn
    kernel: object
    output_values: np.ndarray
    quad_error_estimate: np.ndarray
    scaled_values: np.ndarray


def _unscale(phi, scaled):
    return scaled * np.exp(-phi.node_exponent)


def gain_G(phi, cs, plan=None):
    """G(phi) at the grid nodes for a cutoff kernel."""
    if not cs.is_cutoff:
        raise NonCutoffKernel("gain operator needs a cutoff kernel (gamma_2 finite)")
    plan = plan or get_plan(phi.grid, cs)
    sc, err = plan.gain_scaled(phi)
    e = np.exp(-phi.node_exponent)
    return CollisionEvaluation(phi, cs, sc * e, err * e, sc)


def full_B(phi, cs, plan=None):
    """B(phi) at the grid nodes, any admissible kernel."""
    plan = plan or get_plan(phi.grid, cs)
    sc, err = plan.collision_scaled(phi)
    e = np.exp(-phi.node_exponent)
    return CollisionEvaluation(phi, cs, sc * e, err * e, sc)


@dataclass(frozen=True)
class RatioReport:
    ratio: float
    bound: float
    numerator: float
    denominator: float
    passed: bool


def _origin_exps(*phis):
    exps = set()
    for phi in phis:
        exps.update(a for a, c in phi.origin.terms if c != 0.0)
    return tuple(sorted(exps))[:3] or (2.0,)


def lipschitz_check_G(phi, psi, cs, alpha, tol=1e-3, plan=None):
    """||G(phi) - G(psi)||_{M^alpha} / ||phi - psi||_{M^alpha} against gamma_alpha."""
    plan = plan or get_plan(phi.grid, cs)
    den = profile_malpha(difference_profile(phi, psi), alpha)
    gam = kernel_moments(cs, alpha).gamma_alpha
    if den == 0.0:
        return RatioReport(0.0, gam, 0.0, 0.0, True)
    g1 = gain_G(phi, cs, plan).output_values
    g2 = gain_G(psi, cs, plan).output_values
    num = profile_malpha(array_profile(phi.grid, g1 - g2, _origin_exps(phi, psi)), alpha)
    ratio = num / den
    return RatioReport(ratio, gam, num, den, ratio <= gam * (1 + tol))


def bound_check_B(phi, cs, alpha, plan=None):
    """int |B(phi)| / |xi|^{3+alpha} divided by mu_alpha ||phi - 1||_{M^alpha}.

    The ratio is an empirical lower bound for the unspecified constant of the
    B estimate; ``passed`` only asserts finiteness.
    """

    plan = plan or get_plan(phi.grid, cs)
    one = constant_one(phi.grid)
    den_norm = profile_malpha(difference_profile(phi, one), alpha)
    mu = kernel_moments(cs, alpha).mu_alpha
    if den_norm == 0.0:
        return RatioReport(0.0, math.inf, 0.0, 0.0, True)
    b = full_B(phi, cs, plan).output_values
    num = profile_malpha(array_profile(phi.grid, b, _origin_exps(phi), tail="zero"), alpha)
    ratio = num / (mu * den_norm)
    return RatioReport(ratio, math.inf, num, mu * den_norm, bool(np.isfinite(ratio)))
