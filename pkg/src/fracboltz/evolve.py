"""Time evolution of (d_t + delta |xi|^p) phi = B(phi) and its estimate monitors.

States are advanced in the envelope-scaled variable psi = phi e^{E(r, t)} with
E(r, t) = E_0(r) + delta t r^p, which removes the diffusion term exactly:

    cutoff kernels:  d_t psi = -gamma_2 psi + G~(psi, t)    (Picard on windows)
    any kernel:      d_t psi = B~(psi, t)                    (embedded Runge-Kutta)

The small-|xi| expansion 1 - phi = sum_a c_a(t) r^a that continues each state
below the grid obeys a closed system of ODEs, integrated alongside.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .charfn import (OriginModel, Profile, RadialCharFn, constant_one, difference_profile,
                     envelope_exponent, merge_envelope, norm_malpha, profile_ksup,
                     profile_malpha, write_snapshot)
from .collision import bound_check_B, get_plan
from .errors import (ConfigMismatch, DomainError, NoContraction, NonCutoffKernel, NotCauchy,
                     ToleranceNotMet)
from .kernel import (angular_moment, c_const, kernel_moments, lambda_general, truncate)
from .quadrature import adaptive_gk

LOG2 = math.log(2.0)
# Picard residuals below this are rounding noise; their ratios are not recorded
RATIO_FLOOR = 1e-11
# level distances below this count as already converged
CAUCHY_FLOOR = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    p: float = 2.0
    delta_p: float = 0.0
    alpha: float = 1.0
    beta: float = None
    dt: float = 0.02
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    window_fraction: float = 0.5
    n_schedule: tuple = (1e2, 1e3, 1e4)
    mode: str = "continuation"
    diagnostic: bool = False
    tol_growth: float = 1e-3
    tol_stab: float = 1e-3
    origin_span: float = 2.0
    origin_terms: int = 8

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", 0.5 * self.alpha)
        object.__setattr__(self, "n_schedule", tuple(float(n) for n in self.n_schedule))

    def validate(self):
        if not 0.0 < self.p <= 2.0:
            raise DomainError(f"p must lie in (0, 2], got {self.p}")
        if self.delta_p < 0:
            raise DomainError(f"delta_p must be nonnegative, got {self.delta_p}")
        if not 0.0 < self.beta <= self.alpha < 2.0:
            raise DomainError(f"need 0 < beta <= alpha < 2 (alpha={self.alpha}, beta={self.beta})")
        if self.alpha >= self.p and not self.diagnostic:
            raise DomainError(
                f"alpha = {self.alpha} >= p = {self.p}: no solution exists in this regime; "
                "set diagnostic=True to run anyway")
        if not self.dt > 0 or not 0 < self.window_fraction < 1:
            raise DomainError("dt must be positive and window_fraction in (0, 1)")
        if self.picard_max_iter < 1 or not self.picard_tol > 0:
            raise DomainError("picard_max_iter >= 1 and picard_tol > 0 required")
        if self.mode not in ("continuation", "direct"):
            raise DomainError(f"unknown non-cutoff mode {self.mode!r}")
        if list(self.n_schedule) != sorted(self.n_schedule) or not self.n_schedule:
            raise DomainError("n_schedule must be a nonempty increasing sequence")
        return self

    def to_dict(self):
        d = dict(self.__dict__)
        d["n_schedule"] = list(self.n_schedule)
        return d


# --------------------------------------------------------------------------
# small-|xi| expansion
# --------------------------------------------------------------------------

def _key(a):
    return round(float(a), 9)


class OriginDynamics:
    """ODEs for the coefficients of 1 - phi = sum c_a r^a near the origin.

    With m = 1 - phi, d_t m = delta r^p (1 - m) - B(1 - m), and B maps
    monomials to monomials: the linear part gives lambda_a c_a, the product
    m(rC) m(rS) gives -c_i c_j J(a_i, a_j) on the exponent a_i + a_j.
    Exponents are closed under sums and truncated at alpha_loc + span.
    """

    def __init__(self, cs, terms, p, delta, span=2.0, max_terms=8):
        seeds = {_key(a) for a, c in terms if c != 0.0}
        if delta > 0:
            seeds.add(_key(p))
        self.exps = ()
        if not seeds:
            return
        lead = min(seeds)
        cap = lead + span + 1e-9
        pool = set(seeds)
        grew = True
        while grew:
            grew = False
            for a in list(pool):
                for b in list(pool):
                    s = _key(a + b)
                    if s <= cap and s not in pool:
                        pool.add(s)
                        grew = True
        exps = sorted(a for a in pool if a <= cap)[:max_terms]
        if not cs.is_cutoff and exps[0] <= 2.0 * cs.s:
            raise DomainError(
                f"origin order {exps[0]} must exceed the kernel singularity 2s = {2 * cs.s}")
        self.exps = tuple(exps)
        idx = {a: k for k, a in enumerate(exps)}
        self.c0 = np.zeros(len(exps))
        for a, c in terms:
            if _key(a) in idx:
                self.c0[idx[_key(a)]] += c
        self.lam = np.array([lambda_general(cs, a) for a in exps])
        self.pairs = []
        for i, a in enumerate(exps):
            for j, b in enumerate(exps):
                k = idx.get(_key(a + b))
                if k is not None:
                    self.pairs.append((k, i, j, angular_moment(cs, a, b)))
        self.shift = []  # delta r^p * m feeds exponent a + p
        self.source = None
        if delta > 0:
            self.source = idx[_key(p)]
            for i, a in enumerate(exps):
                k = idx.get(_key(a + p))
                if k is not None:
                    self.shift.append((k, i))
        self.delta = delta

    def rhs(self, t, c):
        out = self.lam * c
        for k, i, j, J in self.pairs:
            out[k] -= c[i] * c[j] * J
        if self.source is not None:
            out[self.source] += self.delta
            for k, i in self.shift:
                out[k] -= self.delta * c[i]
        return out

    def solve(self, times):
        """OriginModel at each requested time."""
        times = np.asarray(times, dtype=float)
        if not self.exps:
            return [OriginModel(()) for _ in times]
        if times[-1] == times[0]:
            return [OriginModel(tuple(zip(self.exps, self.c0.tolist()))) for _ in times]
        sol = solve_ivp(self.rhs, (times[0], times[-1]), self.c0, method="DOP853",
                        t_eval=times, rtol=1e-12, atol=1e-15)
        if not sol.success:
            raise DomainError(f"origin expansion failed: {sol.message}")
        return [OriginModel(tuple(zip(self.exps, sol.y[:, k].tolist())))
                for k in range(len(times))]

    def dense(self, T):
        """Callable tau -> OriginModel on [0, T]."""
        if not self.exps:
            return lambda tau: OriginModel(())
        sol = solve_ivp(self.rhs, (0.0, T), self.c0, method="DOP853", dense_output=True,
                        rtol=1e-12, atol=1e-15)
        if not sol.success:
            raise DomainError(f"origin expansion failed: {sol.message}")
        return lambda tau: OriginModel(tuple(zip(self.exps, sol.sol(tau).tolist())))


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

@dataclass(eq=False)
class EvolutionTrace:
    times: np.ndarray
    states: list
    kernel: object
    cfg: SolverConfig
    growth_margin: np.ndarray = None
    m_norm_to_one: np.ndarray = None
    apriori_bound: np.ndarray = None
    step_error_estimate: np.ndarray = None
    windows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        n = len(self.times)
        if self.step_error_estimate is None:
            self.step_error_estimate = np.zeros(n)
        if self.apriori_bound is None:
            self.apriori_bound = np.full(n, np.nan)
        if self.growth_margin is None:
            self.growth_margin = np.array([_margin(s, self.cfg) for s in self.states])
        if self.m_norm_to_one is None:
            one = constant_one(self.states[0].grid)
            self.m_norm_to_one = np.array(
                [norm_malpha(s, one, self.cfg.alpha) for s in self.states])

    @property
    def grid(self):
        return self.states[0].grid

    def contraction_ratios(self):
        return [r for w in self.windows for r in w["ratios"]]

    def subsample(self, max_times):
        """Indices of at most ``max_times`` roughly evenly spaced stored times."""
        n = len(self.times)
        if n <= max_times:
            return np.arange(n)
        return np.unique(np.round(np.linspace(0, n - 1, max_times)).astype(int))


def _margin(state, cfg):
    """sup_r e^{delta t r^p} |phi(r, t)| over nodes, with the r -> 0 limit 1."""
    r = state.grid.nodes
    expo = cfg.delta_p * state.t * r ** cfg.p - state.node_exponent
    vals = np.abs(state.scaled) * np.exp(np.minimum(expo, 700.0))
    return max(1.0, float(np.max(vals)))


def _tail_kind(env):
    return "decay" if any(a > 0 for a, _ in env) else "constant"


class _Stepper:
    """Shared state construction for the time integrators."""

    def __init__(self, phi0, cs, cfg, T):
        cfg.validate()
        if T <= 0:
            raise DomainError(f"final time must be positive, got {T}")
        if phi0.tail_kind is None:
            raise DomainError("initial datum needs a tail model")
        self.phi0 = phi0
        self.cs = cs
        self.cfg = cfg
        self.T = float(T)
        self.grid = phi0.grid
        self.env0 = phi0.envelope
        # shift the datum to t = 0 (snapshots may carry their own time)
        self.origin = OriginDynamics(cs, phi0.origin.terms, cfg.p, cfg.delta_p,
                                     cfg.origin_span, cfg.origin_terms)

    def envelope(self, tau):
        if self.cfg.delta_p > 0 and tau > 0:
            return merge_envelope(self.env0, ((self.cfg.delta_p * tau, self.cfg.p),))
        return self.env0

    def state(self, tau, scaled, origin):
        env = self.envelope(tau)
        tail = _tail_kind(env) if self.phi0.tail_kind == "decay" or env else "constant"
        return RadialCharFn(self.grid, scaled, env, origin, tail, float(tau))

    def diff_profile(self, tau, a, b):
        """Profile of phi_a - phi_b for scaled arrays sharing envelope and origin."""
        env = self.envelope(tau)
        d = np.asarray(a) - np.asarray(b)
        vals = d * np.exp(-envelope_exponent(env, self.grid.nodes))
        last = float(d[-1])
        if _tail_kind(env) == "decay":
            return Profile(self.grid, vals, (), lambda x: last * np.exp(-envelope_exponent(env, x)),
                           0.0)
        return Profile(self.grid, vals, (), lambda x: np.full_like(x, last), last)

    def dis(self, prof):
        return profile_malpha(prof, self.cfg.alpha) + profile_ksup(prof, self.cfg.beta)


def _etd_weights(z, h):
    """Weights (e^{-z}, w0, w1) of the exact integral of a linear interpolant."""
    if z < 0.1:
        # phi1 = (1 - e^{-z})/z, phi2 = (z - 1 + e^{-z})/z^2 by their series
        phi1 = phi2 = 0.0
        term1, term2 = 1.0, 0.5
        for k in range(12):
            phi1 += term1
            phi2 += term2
            term1 *= -z / (k + 2)
            term2 *= -z / (k + 3)
    else:
        phi1 = -math.expm1(-z) / z
        phi2 = (z + math.expm1(-z)) / (z * z)
    return math.exp(-z), h * (phi1 - phi2), h * phi2


def window_length(gamma2, T, fraction=0.5):
    """Largest T_0 <= fraction * log 2 / gamma_2 that tiles [0, T]."""
    if gamma2 <= 0:
        return T
    n = max(1, math.ceil(T / (fraction * LOG2 / gamma2) - 1e-12))
    return T / n


def _trapezoid_error(g_hist, k, k_last, h):
    """h^3 |G''| / 12 on the sub-interval ending at index k, from a second difference."""
    if k >= 2:
        lo = k - 2
    elif k + 1 <= k_last:
        lo = k - 1
    else:
        return 0.5 * h * float(np.max(np.abs(g_hist[k] - g_hist[k - 1])))
    d2 = g_hist[lo + 2] - 2.0 * g_hist[lo + 1] + g_hist[lo]
    return h / 12.0 * float(np.max(np.abs(d2)))


def picard_solve_cutoff(phi0, cs, cfg, T, window=None, substeps=None):
    """Solve the cutoff Duhamel equation by Picard iteration on short windows.

    Each window [t0, t0 + T0] carries ``substeps`` uniform sub-intervals; the
    Duhamel integral of G is integrated exactly against a piecewise-linear
    interpolant in tau.  Iterates are compared in max_t dis_{alpha, beta}.
    """
    if not cs.is_cutoff:
        raise NonCutoffKernel("picard_solve_cutoff needs a cutoff kernel")
    st = _Stepper(phi0, cs, cfg, T)
    plan = get_plan(st.grid, cs)
    gamma2 = plan.gamma2
    T0 = window if window is not None else window_length(gamma2, st.T, cfg.window_fraction)
    n_win = max(1, int(round(st.T / T0)))
    T0 = st.T / n_win
    if gamma2 > 0 and T0 >= LOG2 / gamma2:
        raise DomainError(f"window {T0} violates T0 < log 2 / gamma_2 = {LOG2 / gamma2}")
    m = substeps or max(1, math.ceil(T0 / cfg.dt - 1e-9))
    h = T0 / m
    times = np.linspace(0.0, st.T, n_win * m + 1)
    origins = st.origin.solve(times)
    decay, w0, w1 = _etd_weights(gamma2 * h, h)
    bound = 2.0 * (1.0 - math.exp(-gamma2 * T0))

    def gain(k, psi):
        val, err = plan.gain_scaled(st.state(times[k], psi, origins[k]))
        return val, float(np.max(err))

    states = [phi0]
    step_err = [0.0]
    windows = []
    psi_start = np.array(phi0.scaled)
    acc_err = 0.0
    g_hist = {}
    for w in range(n_win):
        ks = list(range(w * m, (w + 1) * m + 1))
        # exponential Heun predictor, substep by substep
        cur = [psi_start]
        g, e = gain(ks[0], psi_start)
        gs, qerr = [g], [e]
        for j in range(m):
            trial = decay * cur[j] + (w0 + w1) * gs[j]
            g_trial, _ = gain(ks[j + 1], trial)
            cur.append(decay * cur[j] + w0 * gs[j] + w1 * g_trial)
            g, e = gain(ks[j + 1], cur[j + 1])
            gs.append(g)
            qerr.append(e)
        residuals, ratios = [], []
        strikes = 0
        for it in range(1, cfg.picard_max_iter + 1):
            new = [psi_start]
            for j in range(m):
                new.append(decay * new[j] + w0 * gs[j] + w1 * gs[j + 1])
            res = max(st.dis(st.diff_profile(times[ks[j]], new[j], cur[j]))
                      for j in range(1, m + 1))
            if residuals and residuals[-1] > RATIO_FLOOR and res > RATIO_FLOOR:
                ratio = res / residuals[-1]
                ratios.append(ratio)
                strikes = strikes + 1 if ratio > bound * (1 + 1e-2) else 0
                if strikes >= 2:
                    raise NoContraction(
                        f"window {w}: residual ratio {ratio:.3g} exceeds 2(1-e^(-gamma2 T0)) "
                        f"= {bound:.3g}")
            residuals.append(res)
            cur = new
            if res <= cfg.picard_tol:
                break
            gs, qerr = [], []
            for j in range(m + 1):
                g, e = gain(ks[j], cur[j])
                gs.append(g)
                qerr.append(e)
        else:
            raise ToleranceNotMet(
                f"window {w}: residual {residuals[-1]:.3e} > {cfg.picard_tol:.1e} after "
                f"{cfg.picard_max_iter} iterations")
        for j in range(m + 1):
            g_hist[ks[j]] = gs[j]
        for j in range(1, m + 1):
            # |G(phi) - G(psi)| <= gamma_2 sup|phi - psi| offsets the decay factor
            acc_err = (acc_err + (w0 + w1) * qerr[j]
                       + _trapezoid_error(g_hist, ks[j], ks[-1], h))
            states.append(st.state(times[ks[j]], cur[j], origins[ks[j]]))
            step_err.append(acc_err + residuals[-1])
        psi_start = cur[m]
        windows.append({"t0": float(times[ks[0]]), "T0": T0, "iterations": len(residuals),
                        "residuals": residuals, "ratios": ratios, "bound": bound})
    return EvolutionTrace(times, states, cs, cfg, step_error_estimate=np.array(step_err),
                          windows=windows,
                          meta={"gamma2": gamma2, "T0": T0, "substeps": m, "windows": n_win,
                                "mode": "picard"})


def solve_direct(phi0, cs, cfg, T, rtol=1e-9, atol=1e-11, times=None):
    """Embedded Runge-Kutta (5(4)) on d_t psi = B~(psi), dense output at the dt grid.

    The cancellation form of B has no exact linear part to split off, and its
    stiffness grows like r_max^{2s}; step-size control keeps the explicit
    scheme stable.  The error estimate adds the tolerance-level error to the
    accumulated quadrature error of B.  ``times`` overrides the output grid.
    """
    st = _Stepper(phi0, cs, cfg, T)
    plan = get_plan(st.grid, cs)
    if times is None:
        n_steps = max(1, math.ceil(st.T / cfg.dt - 1e-9))
        times = np.linspace(0.0, st.T, n_steps + 1)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or abs(times[-1] - st.T) > 1e-12 or np.any(np.diff(times) <= 0):
        raise DomainError("output times must increase from 0 to T")
    origin_at = st.origin.dense(st.T)
    qerrs = []

    def rhs(tau, psi):
        val, err = plan.collision_scaled(st.state(tau, psi, origin_at(tau)))
        qerrs.append(float(np.max(err)))
        return np.array(val)

    sol = solve_ivp(rhs, (0.0, st.T), np.array(phi0.scaled), method="RK45", t_eval=times,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise ToleranceNotMet(f"direct integration failed: {sol.message}")
    origins = st.origin.solve(times)
    states = [phi0] + [st.state(times[k], sol.y[:, k], origins[k]) for k in range(1, len(times))]
    scale = float(np.max(np.abs(sol.y)))
    q = max(qerrs) if qerrs else 0.0
    step_err = times * q + (rtol * scale + atol) * np.sqrt(np.arange(len(times)) + 1.0)
    step_err[0] = 0.0
    return EvolutionTrace(times, states, cs, cfg, step_error_estimate=step_err,
                          meta={"mode": "direct", "rhs_evaluations": int(sol.nfev)})


def trace_distance(a, b, alpha, beta):
    """max over common stored times of dis_{alpha, beta}."""
    if a.grid != b.grid or len(a.times) != len(b.times) or not np.allclose(a.times, b.times):
        raise ConfigMismatch("traces do not share grid and time stamps")
    out = 0.0
    for sa, sb in zip(a.states, b.states):
        prof = difference_profile(sa, sb)
        out = max(out, profile_malpha(prof, alpha) + profile_ksup(prof, beta))
    return out


def solve_noncutoff(phi0, cs, cfg, T):
    """Non-cutoff evolution, by truncation continuation (default) or directly.

    Continuation runs the Picard solver for b_n = min(b, n) on every level of
    ``cfg.n_schedule`` with a common window (that of the finest level), checks
    that successive level distances decrease, and returns the finest trace
    with the level distances and an extrapolated truncation error in ``meta``.
    """
    if cs.is_cutoff:
        raise DomainError("solve_noncutoff expects a power-law kernel")
    cfg.validate()
    if not cfg.diagnostic and cfg.alpha < cs.alpha0:
        raise DomainError(f"need alpha0 <= alpha (alpha0={cs.alpha0}, alpha={cfg.alpha})")
    if not math.isfinite(norm_malpha(phi0, constant_one(phi0.grid), cfg.alpha)):
        raise DomainError("initial datum is not in M^alpha")
    if cfg.mode == "direct":
        return solve_direct(phi0, cs, cfg, T)
    levels = [truncate(cs, n) for n in cfg.n_schedule]
    g_fine = get_plan(phi0.grid, levels[-1]).gamma2
    T0 = window_length(g_fine, T, cfg.window_fraction)
    m = max(1, math.ceil(T0 / cfg.dt - 1e-9))
    traces = [picard_solve_cutoff(phi0, k, cfg, T, window=T0, substeps=m) for k in levels]
    dists = [trace_distance(a, b, cfg.alpha, cfg.beta) for a, b in zip(traces, traces[1:])]
    big = [d for d in dists if d > CAUCHY_FLOOR]
    if any(d2 >= d1 for d1, d2 in zip(dists, dists[1:]) if d1 > CAUCHY_FLOOR):
        raise NotCauchy(f"level distances do not decrease: {dists}")
    extrap = 0.0
    if len(big) >= 2:
        q = big[-1] / big[-2]
        extrap = big[-1] * q / (1 - q)
    elif big:
        extrap = big[-1]
    fine = traces[-1]
    fine.meta.update({"mode": "continuation", "n_schedule": list(cfg.n_schedule),
                      "level_distances": dists, "extrapolated_error": extrap,
                      "target_kernel": cs, "levels": traces})
    return fine


# --------------------------------------------------------------------------
# monitors
# --------------------------------------------------------------------------

@dataclass
class MonitorReport:
    name: str
    passed: bool
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "times": [float(t) for t in self.times],
                "lhs": [float(x) for x in self.lhs], "rhs": [float(x) for x in self.rhs],
                "details": _jsonable(self.details)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    return repr(obj)


def growth_monitor(trace, cfg=None):
    """sup_r e^{delta t r^p} |phi(r, t)| <= 1 + tol_growth at every stored time."""
    cfg = cfg or trace.cfg
    margins = np.array([_margin(s, cfg) for s in trace.states])
    bound = np.full_like(margins, 1.0 + cfg.tol_growth)
    return MonitorReport("growth", bool(np.all(margins <= bound)), trace.times, margins, bound,
                         {"max_margin": float(margins.max())})


def _weighted_profile(sa, sb, cfg):
    """Profile of e^{delta t r^p} (phi_a - phi_b) at a common time t."""
    t = sa.t
    dp = cfg.delta_p
    r = sa.grid.nodes
    wa = sa.scaled * np.exp(dp * t * r ** cfg.p - sa.node_exponent)
    wb = sb.scaled * np.exp(dp * t * r ** cfg.p - sb.node_exponent)
    terms = {}
    for a, d in sa.origin.minus(sb.origin):
        fac = 1.0
        for k in range(4):
            key = a + k * cfg.p
            terms[key] = terms.get(key, 0.0) + d * fac
            fac *= dp * t / (k + 1)
            if dp == 0:
                break

    def tail(x):
        w = dp * t * x ** cfg.p
        return (sa.tail_value(x) - sb.tail_value(x)) * np.exp(np.minimum(w, 700.0))

    lim = float(sa.tail_limit - sb.tail_limit) if dp == 0 else 0.0
    return Profile(sa.grid, wa - wb, tuple(sorted(terms.items())), tail, lim)


def stability_compare(trace_a, trace_b, cfg=None, tol=None):
    """V(t) = ||e^{delta t r^p}(phi - psi)||_{M^alpha} against e^{lambda_alpha t} V(0)."""
    cfg = cfg or trace_a.cfg
    tol = cfg.tol_stab if tol is None else tol
    if (trace_a.grid != trace_b.grid or trace_a.kernel != trace_b.kernel
            or trace_a.cfg != trace_b.cfg or len(trace_a.times) != len(trace_b.times)
            or not np.allclose(trace_a.times, trace_b.times)):
        raise ConfigMismatch("stability comparison needs traces with the same grid, kernel, "
                             "configuration and times")
    lam = kernel_moments(trace_a.kernel, cfg.alpha).lambda_alpha
    V = np.array([profile_malpha(_weighted_profile(a, b, cfg), cfg.alpha)
                  for a, b in zip(trace_a.states, trace_b.states)])
    bound = np.exp(lam * trace_a.times) * V[0] * (1 + tol)
    ratio = V / V[0] if V[0] > 0 else np.zeros_like(V)
    return MonitorReport("stability", bool(np.all(V <= bound)), trace_a.times, V, bound,
                         {"lambda_alpha": lam, "ratio": ratio, "V0": V[0]})


def _mu(trace, alpha):
    k = trace.meta.get("target_kernel", trace.kernel)
    return kernel_moments(k, alpha).mu_alpha


def estimate_C0(cs, alpha, grid, extra_states=()):
    """Empirical constant of the B estimate: max ratio over a catalog and given states."""
    from .charfn import Gaussian, Mixture, Stable, make_charfn
    cat = []
    for q in (alpha + 0.5 * (2.0 - alpha), 2.0):
        for t in (0.5, 1.0, 2.0):
            cat.append(Stable(q, t))
    cat.append(Mixture(((0.5, Gaussian(1.0)), (0.5, Stable(min(2.0, alpha + 0.3), 1.0)))))
    ratios = [bound_check_B(make_charfn(f, grid), cs, alpha).ratio for f in cat]
    one = constant_one(grid)
    for s in extra_states:
        if math.isfinite(norm_malpha(s, one, alpha)):
            ratios.append(bound_check_B(s, cs, alpha).ratio)
    return max(ratios)


def apriori_check(trace, cfg=None, C0_hat=1.0, tol=1e-3):
    """||phi(t) - 1||_{M^alpha} <= e^{C0 mu t}[||phi0 - 1|| + C_{p,alpha}(delta t)^{alpha/p}]."""
    cfg = cfg or trace.cfg
    a = cfg.alpha
    mu = _mu(trace, a)
    lhs = trace.m_norm_to_one
    cpa = c_const(cfg.p, a) if a < cfg.p else math.inf
    diff = cpa * (cfg.delta_p * trace.times) ** (a / cfg.p) if cfg.delta_p > 0 else 0.0
    rhs = np.exp(C0_hat * mu * trace.times) * (lhs[0] + diff)
    trace.apriori_bound = rhs
    return MonitorReport("apriori", bool(np.all(lhs <= rhs * (1 + tol))), trace.times, lhs,
                         rhs, {"C0_hat": C0_hat, "mu_alpha": mu})


def holder_time_check(trace, cfg=None, C0_hat=1.0, max_times=16, tol=1e-3):
    """||phi(t) - phi(s)||_{M^alpha} <= C' |t - s|^{alpha/p} over stored pairs."""
    cfg = cfg or trace.cfg
    if len(trace.times) < 8:
        raise DomainError("Hoelder check needs at least 8 stored times")
    a, p = cfg.alpha, cfg.p
    T = float(trace.times[-1])
    mu = _mu(trace, a)
    cpa = c_const(p, a)
    dT = (cfg.delta_p * T) ** (a / p) if cfg.delta_p > 0 else 0.0
    c0 = C0_hat * mu
    c0_tilde = c0 * math.exp(c0 * T) * (trace.m_norm_to_one[0] + cpa * dT)
    cprime = (cpa * cfg.delta_p ** (a / p) if cfg.delta_p > 0 else 0.0) \
        + (1 + 1 / (1 - a / p)) * c0_tilde * T ** (1 - a / p)
    idx = trace.subsample(max_times)
    pairs, lhs, rhs = [], [], []
    for i in idx:
        for j in idx:
            if j <= i:
                continue
            d = norm_malpha(trace.states[j], trace.states[i], a)
            pairs.append((float(trace.times[i]), float(trace.times[j])))
            lhs.append(d)
            rhs.append(cprime * (trace.times[j] - trace.times[i]) ** (a / p))
    lhs, rhs = np.array(lhs), np.array(rhs)
    quot = lhs / np.maximum(rhs, 1e-300) * cprime
    return MonitorReport("holder", bool(np.all(lhs <= rhs * (1 + tol))), np.array(pairs), lhs,
                         rhs, {"C_prime": cprime, "max_quotient": float(quot.max()),
                               "C0_hat": C0_hat})


# --------------------------------------------------------------------------
# non-existence diagnostic
# --------------------------------------------------------------------------

def truncated_diffusion_integral(p, alpha, a, eps):
    """4 pi int_eps^inf (1 - e^{-a r^p}) r^{-1-alpha} dr."""
    if not (a > 0 and eps > 0):
        raise DomainError("need a > 0 and eps > 0")
    u_lo = math.log(eps)
    u_hi = max(u_lo + 1.0, math.log((50.0 / a) ** (1.0 / p)))
    edges = np.linspace(u_lo, u_hi, max(8, int(4 * (u_hi - u_lo)) + 1))
    val, _ = adaptive_gk(lambda u: -np.expm1(-a * np.exp(p * u)) * np.exp(-alpha * u),
                         edges, 1e-14, 1e-12)
    return 4.0 * math.pi * (val + math.exp(-alpha * u_hi) / alpha)


@dataclass
class DivergenceReport:
    p: float
    alpha: float
    eps: np.ndarray
    integrals: np.ndarray
    exponent: float
    log_slope: float
    kind: str
    passed: bool

    def to_dict(self):
        return _jsonable(self.__dict__)


def nonexistence_probe(p, alpha, delta_p, t, eps_schedule=(1e-2, 1e-4, 1e-6), tol=0.05):
    """Fit the blow-up of the truncated M^alpha integral of 1 - e^{-delta t r^p}.

    ``exponent`` is e in I(eps) ~ eps^e, measured from successive increments
    (p - alpha for alpha > p, 0 for the logarithmic case alpha = p);
    ``log_slope`` is the increment per unit log(1/eps) divided by 4 pi delta t.
    """
    if alpha < p:
        raise DomainError(f"alpha = {alpha} < p = {p}: the integral is finite (C_(p,alpha))")
    eps = np.asarray(sorted(eps_schedule, reverse=True), dtype=float)
    if len(eps) < 3:
        raise DomainError("need at least three epsilon values")
    a = delta_p * t
    vals = np.array([truncated_diffusion_integral(p, alpha, a, e) for e in eps])
    inc = np.diff(vals)
    logs = np.log(eps)
    # for a geometric schedule the increment ratio is (eps ratio)^e
    exps = [math.log(inc[k + 1] / inc[k]) / math.log(eps[k + 1] / eps[k])
            for k in range(len(inc) - 1)]
    e = float(exps[-1])
    slope = float(inc[-1] / (logs[-2] - logs[-1]) / (4 * math.pi * a))
    if abs(alpha - p) < 1e-12:
        kind = "log"
        passed = abs(e) <= tol and abs(slope - 1.0) <= tol
    else:
        kind = "power"
        passed = abs(e - (p - alpha)) <= tol
    return DivergenceReport(p, alpha, eps, vals, e, slope, kind, passed)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def export_trace(trace, directory, extra=None):
    """Snapshots ``state_XXXX.bfr`` plus ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, s in enumerate(trace.states):
        name = f"state_{k:04d}.bfr"
        write_snapshot(out / name, s)
        files.append(name)
    manifest = {
        "times": trace.times,
        "files": files,
        "diagnostics": {
            "growth_margin": trace.growth_margin,
            "m_norm_to_one": trace.m_norm_to_one,
            "apriori_bound": [None if not np.isfinite(x) else float(x)
                              for x in trace.apriori_bound],
            "step_error_estimate": trace.step_error_estimate,
        },
        "config": trace.cfg.to_dict(),
        "kernel": trace.kernel.describe(),
        "windows": [{k: v for k, v in w.items()} for w in trace.windows],
        "meta": {k: v for k, v in trace.meta.items() if k not in ("levels", "target_kernel")},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2))
    return out
