"""Real-space side: stable densities, radial Fourier inversion, weak continuity.

All transforms reduce to one-dimensional integrals of the form

    int_lo^hi g(x) x sin(k x) dx,

which are integrated between consecutive zeros of sin(k x).  When too many
lobes remain before the integrand has decayed, the alternating partial sums
are extrapolated with Wynn's epsilon algorithm (its second column is
Aitken's delta-squared).
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .charfn import envelope_exponent, require_decay
from .errors import ConvergenceError, DomainError
from .quadrature import adaptive_gk, graded_edges, panel_rule
from .special import gamma

TWO_PI2 = 2.0 * math.pi ** 2
# integrand cut where e^{-E} drops below e^{-DECAY_CUT}
DECAY_CUT = 60.0
MAX_DIRECT_LOBES = 400
LOBE_BLOCK = 40
MAX_LOBES = 200000
ABS_TOL = 1e-15
REL_TOL = 1e-12
# rounding floor relative to int |integrand|, reached when lobes cancel heavily
L1_TOL = 1e-13


# --------------------------------------------------------------------------
# oscillatory engine
# --------------------------------------------------------------------------

def wynn_epsilon(seq):
    """Wynn epsilon extrapolation of a sequence of partial sums."""
    prev = [0.0] * (len(seq) + 1)
    cur = [float(s) for s in seq]
    best = cur[-1]
    k = 0
    while len(cur) > 1:
        nxt = []
        for i in range(len(cur) - 1):
            d = cur[i + 1] - cur[i]
            if d == 0.0:
                return cur[i + 1] if k % 2 == 0 else best
            nxt.append(prev[i + 1] + 1.0 / d)
        prev, cur = cur, nxt
        k += 1
        if k % 2 == 0:
            best = cur[-1]
    return best


def _lobe_sums(g, k, edges):
    """int g(x) x sin(kx) over each interval of ``edges`` (two K15 panels per lobe)."""
    mids = 0.5 * (edges[:-1] + edges[1:])
    split = np.empty(2 * len(mids) + 1)
    split[0::2] = edges
    split[1::2] = mids
    rule = panel_rule(split)
    vals = g(rule.x) * rule.x * np.sin(k * rule.x)
    w = (rule.wk.reshape(-1, 2 * 15) * vals.reshape(-1, 2 * 15)).sum(axis=1)
    return w


def oscillatory_integral(g, k, lo=0.0, hi=math.inf, kinks=(), abs_tol=ABS_TOL, rel_tol=REL_TOL,
                         return_error=False):
    """int_lo^hi g(x) x sin(k x) dx for a vectorised, eventually decaying g.

    ``hi`` may be infinite when g decays (at least) like a power; ``kinks``
    are interior points where g is not smooth.  The region near ``lo = 0`` is
    graded geometrically since g may behave like a fractional power there.
    With ``return_error`` the pair (value, noise floor) is returned.
    """
    val, err = _oscillatory(g, k, lo, hi, kinks, abs_tol, rel_tol)
    return (val, err) if return_error else val


def _oscillatory(g, k, lo, hi, kinks, abs_tol, rel_tol):
    if k <= 0:
        raise DomainError("frequency must be positive")
    period = math.pi / k
    first = period * (math.floor(lo / period) + 1)
    finite_hi = math.isfinite(hi)
    if finite_hi and hi <= first + period:
        edges = _head_edges(lo, hi, kinks)
        return adaptive_gk(lambda x: g(x) * x * np.sin(k * x), edges, abs_tol, rel_tol)
    n_total = math.ceil((hi - first) / period) if finite_hi else MAX_LOBES + 1
    n_direct = min(n_total, MAX_DIRECT_LOBES)
    stop = first + n_direct * period
    if finite_hi:
        stop = min(stop, hi)
    zeros = first + period * np.arange(n_direct + 1)
    zeros = zeros[zeros < stop]
    edges = np.unique(np.concatenate([_head_edges(lo, first, kinks),
                                      zeros, [stop],
                                      [c for c in kinks if first < c < stop]]))
    f = lambda x: g(x) * x * np.sin(k * x)
    rule = panel_rule(edges)
    l1 = float(np.abs(f(rule.x)) @ rule.wk)
    floor = max(abs_tol, L1_TOL * l1)
    head, herr = adaptive_gk(f, edges, floor, rel_tol)
    floor = max(floor, herr)
    if finite_hi and stop >= hi:
        return head, floor
    # remaining lobes: partial sums, extrapolated once they stop decaying fast
    partial = [head]
    estimates = []
    start = stop
    scale = max(abs(head), L1_TOL / REL_TOL * l1)
    while True:
        n_next = LOBE_BLOCK
        lobe_edges = start + period * np.arange(n_next + 1)
        if finite_hi and lobe_edges[-1] >= hi:
            lobe_edges = lobe_edges[lobe_edges < hi]
            lobe_edges = np.append(lobe_edges, hi)
        terms = _lobe_sums(g, k, lobe_edges)
        for a in terms:
            partial.append(partial[-1] + a)
        start = lobe_edges[-1]
        scale = max(scale, abs(partial[-1]))
        tol = max(abs_tol, rel_tol * scale)
        if finite_hi and start >= hi:
            return partial[-1], floor
        if abs(terms[-1]) <= tol and abs(terms[-2]) <= tol:
            return partial[-1], max(floor, tol)
        est = wynn_epsilon(partial[-(LOBE_BLOCK + 1):])
        estimates.append(est)
        if len(estimates) >= 2 and abs(estimates[-1] - estimates[-2]) <= 10 * tol:
            return est, max(floor, abs(estimates[-1] - estimates[-2]))
        if len(partial) > MAX_LOBES:
            raise ConvergenceError(
                f"lobe acceleration did not settle at frequency {k} "
                f"(last estimates {estimates[-2:]})")


def _head_edges(lo, hi, kinks):
    if lo == 0.0:
        edges = graded_edges(0.0, hi, n_panels=30, ratio=0.5)
    else:
        edges = np.linspace(lo, hi, 5)
    extra = [c for c in kinks if lo < c < hi]
    return np.unique(np.concatenate([edges, extra]))


def radial_inverse(g, v, r_end=math.inf, kinks=(), return_error=False):
    """(1/2 pi^2) int_0^r_end g(r) r^2 sinc(r v) dr (optionally with its noise floor)."""
    if v < 0:
        raise DomainError("|v| must be nonnegative")
    if v == 0.0 or (math.isfinite(r_end) and v * r_end <= math.pi):
        if not math.isfinite(r_end):
            raise DomainError("plain quadrature needs a finite cut")
        edges = _head_edges(0.0, r_end, kinks)
        if v == 0.0:
            f = lambda r: g(r) * r * r
        else:
            f = lambda r: g(r) * r * np.sin(v * r) / v
        val, err = adaptive_gk(f, edges, ABS_TOL, REL_TOL)
        val, err = val / TWO_PI2, err / TWO_PI2
    else:
        val, err = _oscillatory(g, v, 0.0, r_end, kinks, ABS_TOL, REL_TOL)
        val, err = val / (v * TWO_PI2), err / (v * TWO_PI2)
    return (val, err) if return_error else val


# --------------------------------------------------------------------------
# stable densities
# --------------------------------------------------------------------------

def _check_p(p, lo_open=True):
    if not (0.0 < p <= 2.0):
        raise DomainError(f"p must lie in (0, 2], got {p}")


def stable_density(p, t, vmag, return_error=False):
    """f_p(v, t) = (1/2 pi^2) int_0^inf e^{-t r^p} r^2 sinc(r |v|) dr."""
    _check_p(p)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    vmag = float(vmag)
    if vmag < 0:
        raise DomainError("|v| must be nonnegative")
    if vmag == 0.0:
        val = gamma(3.0 / p) / (p * t ** (3.0 / p)) / TWO_PI2
        return (val, 0.0) if return_error else val
    r_end = (DECAY_CUT / t) ** (1.0 / p)
    return radial_inverse(lambda r: np.exp(-t * r ** p), vmag, r_end, return_error=return_error)


def tail_coefficient(a):
    """C(a) with 1 - phi ~ c r^a  <->  f(v) ~ c C(a) |v|^{-3-a} (zero for even a)."""
    if a <= 0:
        raise DomainError("exponent must be positive")
    if abs(a / 2.0 - round(a / 2.0)) < 1e-12:
        return 0.0
    return (a * 2.0 ** (a - 1) / math.pi ** 2.5 * math.sin(a * math.pi / 2)
            * gamma((3.0 + a) / 2.0) * gamma(a / 2.0))


def tail_constant(p):
    """L(p) = lim |v|^{3+p} f_p(v, 1)."""
    if not 0.0 < p < 2.0:
        raise DomainError(f"tail constant needs 0 < p < 2, got {p}")
    return tail_coefficient(p)


def tail_check(p, radii=(20.0, 40.0, 80.0), t=1.0):
    """Empirical |v|^{3+p} f_p(v, t) / t against L(p), per radius."""
    L = tail_constant(p)
    emp = [v ** (3 + p) * stable_density(p, t, v) / t for v in radii]
    rel = [abs(e / L - 1.0) for e in emp]
    return {"L": L, "radii": list(radii), "empirical": emp, "relative_error": rel}


@dataclass
class MomentCurve:
    p: float
    alpha: float
    R: np.ndarray
    M: np.ndarray
    increments: np.ndarray
    exponent: float
    kind: str
    limit: float

    def to_dict(self):
        return {"p": self.p, "alpha": self.alpha, "R": self.R.tolist(), "M": self.M.tolist(),
                "increments": self.increments.tolist(), "exponent": self.exponent,
                "kind": self.kind, "limit": self.limit}


def moment_probe(p, alpha, R_schedule=(10.0, 31.6227766, 100.0, 316.227766, 1000.0), t=1.0,
                 v_min=1e-3, panel_width=0.5, order=10, tol=0.05):
    """Partial moments M(R) = 4 pi int_0^R v^{2+alpha} f_p(v, t) dv on a geometric schedule.

    The increment exponent e (increments ~ R^e) is fitted from the last two
    increments; e < -tol is classified convergent, |e| <= tol logarithmic.
    """
    _check_p(p)
    R = np.asarray(R_schedule, dtype=float)
    if len(R) < 3 or np.any(np.diff(R) <= 0) or R[0] <= v_min:
        raise DomainError("need at least three increasing radii above v_min")
    ratios = R[1:] / R[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise DomainError("moment probe needs a geometric radius schedule")
    xg, wg = np.polynomial.legendre.leggauss(order)
    # small-v head: f is smooth and even, f(v) ~ f(0)
    f0 = stable_density(p, t, 0.0)
    head = 4 * math.pi * f0 * v_min ** (3 + alpha) / (3 + alpha)
    bounds = np.concatenate([[v_min], R])
    pieces = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        ul, uh = math.log(lo), math.log(hi)
        n = max(1, math.ceil((uh - ul) / panel_width))
        e = np.linspace(ul, uh, n + 1)
        s = 0.0
        for a, b in zip(e[:-1], e[1:]):
            u = 0.5 * (a + b) + 0.5 * (b - a) * xg
            v = np.exp(u)
            fe = np.array([stable_density(p, t, x, return_error=True) for x in v])
            # values within their own noise floor are unresolved
            fv = np.where(np.abs(fe[:, 0]) > 10 * fe[:, 1], fe[:, 0], 0.0)
            s += 0.5 * (b - a) * np.sum(wg * fv * v ** (3 + alpha))
        pieces.append(4 * math.pi * s)
    M = head + np.cumsum(pieces)
    inc = np.array(pieces[1:])
    if inc[-1] <= 1e-14 * M[-1] or inc[-2] <= 0:
        expo = -math.inf
    else:
        expo = math.log(inc[-1] / inc[-2]) / math.log(ratios[0])
    if expo < -tol:
        kind = "convergent"
        q = ratios[0] ** expo
        limit = float(M[-1] + inc[-1] * q / (1 - q)) if math.isfinite(expo) else float(M[-1])
    elif abs(expo) <= tol:
        kind, limit = "divergent-log", math.inf
    else:
        kind, limit = "divergent-power", math.inf
    return MomentCurve(p, alpha, R, M, inc, float(expo), kind, limit)


# --------------------------------------------------------------------------
# inversion of states
# --------------------------------------------------------------------------

@dataclass
class RadialDensity:
    vgrid: np.ndarray
    values: np.ndarray
    mass_estimate: float
    tail_exponent_estimate: float
    min_value: float
    tail_model: tuple = ()
    meta: dict = field(default_factory=dict)

    def _spline(self):
        # v^3 f as a function of log v is smooth and bounded
        if getattr(self, "_spl", None) is None:
            self._spl = CubicSpline(np.log(self.vgrid), self.values * self.vgrid ** 3)
        return self._spl

    def pairing(self, psi, tail_psi=None):
        """4 pi int psi(v) f(v) v^2 dv; ``tail_psi(V)`` adds the part beyond the grid."""
        return _pair(self, psi, tail_psi)


def default_vgrid(v_min=1e-3, v_max=200.0, n=601):
    return np.geomspace(v_min, v_max, n)


def _cut_radius(phi):
    """Radius beyond which |phi| < e^{-DECAY_CUT} by the envelope alone."""
    env = phi.envelope
    base = math.log(max(abs(float(phi.scaled[-1])), float(np.max(np.abs(phi.scaled))), 1e-300))
    lo, hi = 0.0, 1.0
    while envelope_exponent(env, np.array([hi]))[0] < DECAY_CUT + base:
        hi *= 2.0
        if hi > 1e12:
            raise ConvergenceError("envelope decays too slowly to cut the transform")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if envelope_exponent(env, np.array([mid]))[0] < DECAY_CUT + base:
            lo = mid
        else:
            hi = mid
    return hi


def _tail_model(origin):
    """(coefficient, exponent) pairs of f(v) ~ sum coef v^{-exponent} from 1 - phi."""
    out = []
    for a, c in origin.terms:
        C = tail_coefficient(a)
        if C != 0.0 and c != 0.0:
            out.append((c * C, 3.0 + a))
    return tuple(out)


def _fit_tail_exponent(v, f, decades=1.0):
    sel = (v >= v[-1] / 10 ** decades) & (f > 1e-12 * np.max(np.abs(f)))
    if sel.sum() < 4:
        return math.nan
    slope = np.polyfit(np.log(v[sel]), np.log(f[sel]), 1)[0]
    return float(-slope)


def invert_charfn(phi, vgrid=None, p=None):
    """Density f(v) = (1/2 pi^2) int_0^inf phi(r) r^2 sinc(r v) dr on ``vgrid``."""
    require_decay(phi)
    v = default_vgrid() if vgrid is None else np.asarray(vgrid, dtype=float)
    if v.ndim != 1 or np.any(v <= 0) or np.any(np.diff(v) <= 0):
        raise DomainError("vgrid must be increasing and positive")
    r_end = _cut_radius(phi)
    kinks = tuple(x for x in (phi.grid.r_min, phi.grid.r_max) if x < r_end)
    g = lambda r: phi(r)
    vals = np.array([radial_inverse(g, float(x), r_end, kinks) for x in v])
    model = _tail_model(phi.origin)
    dens = RadialDensity(v, vals, math.nan, _fit_tail_exponent(v, vals), float(vals.min()),
                         model, {"t": float(phi.t), "p": p, "r_cut": r_end})
    dens.mass_estimate = float(_pair(dens, lambda x: np.ones_like(x), _power_tail(model, 0.0)))
    return dens


def _power_tail(model, k):
    """int_V^inf 4 pi v^{2+k} sum c v^{-e} dv for the tail model."""
    def tail(V):
        out = 0.0
        for c, e in model:
            if e - 3.0 - k <= 0:
                return math.inf
            out += 4 * math.pi * c * V ** (3.0 + k - e) / (e - 3.0 - k)
        return out
    return tail


def _pair(dens, psi, tail_psi=None):
    v, f = dens.vgrid, dens.values
    u = np.log(v)
    spl = dens._spline()
    body = 4 * math.pi * adaptive_gk(lambda x: psi(np.exp(x)) * spl(x), u, 1e-14, 1e-12,
                                     max_panels=200000)[0]
    # below v_min: f ~ f(v_min), psi ~ psi(v_min)
    head = 4 * math.pi * float(psi(v[:1])[0] * f[0]) * v[0] ** 3 / 3.0
    tail = tail_psi(float(v[-1])) if tail_psi is not None else 0.0
    return body + head + tail


def forward_transform(dens, r):
    """phi(r) = 4 pi int f(v) v^2 sinc(r v) dv from the sampled density."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = []
    for x in r:
        psi = (lambda vv, x=x: np.sinc(x * vv / math.pi))
        tail = _oscillating_tail(dens.tail_model, x)
        out.append(_pair(dens, psi, tail))
    return np.array(out)


def _oscillating_tail(model, r):
    """int_V^inf 4 pi v^2 sinc(r v) sum c v^{-e} dv, by the oscillatory engine."""
    if not model:
        return None

    def tail(V):
        g = lambda v: sum(c * v ** (-e) for c, e in model) / r
        if r == 0.0:
            return _power_tail(model, 0.0)(V)
        return 4 * math.pi * oscillatory_integral(g, r, V, math.inf)
    return tail


def write_density(path, dens, tol_pos=1e-6):
    """CSV ``v,f`` (noise-level negatives clamped to 0) plus a JSON sidecar."""
    path = Path(path)
    f = np.where((dens.values < 0) & (dens.values > -tol_pos), 0.0, dens.values)
    lines = ["v,f"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(dens.vgrid, f)]
    path.write_text("\n".join(lines) + "\n")
    side = {"p": dens.meta.get("p"), "t": dens.meta.get("t"), "mass": dens.mass_estimate,
            "min_value": dens.min_value, "tail_exponent": dens.tail_exponent_estimate}
    path.with_suffix(".json").write_text(json.dumps(side, indent=2))
    return path


# --------------------------------------------------------------------------
# weak continuity in time
# --------------------------------------------------------------------------

def testfn_catalog(alpha, M=10.0):
    """Radial test functions with |psi(v)| <= C (1 + |v|^2)^{alpha/2}."""
    return {
        "one": (lambda v: np.ones_like(v), lambda model: _power_tail(model, 0.0)),
        "truncated_power": (lambda v: np.minimum(v ** alpha, M),
                            lambda model: (lambda V: M * _power_tail(model, 0.0)(V))),
        "japanese_power": (lambda v: (1 + v * v) ** (alpha / 2),
                           lambda model: _power_tail(model, alpha)),
        "cos": (lambda v: np.cos(v), lambda model: _cos_tail(model)),
    }


def _cos_tail(model):
    # int_V^inf cos(v) v^{-b} dv = -sin(V) V^{-b} + O(V^{-b-1})
    def tail(V):
        return sum(-4 * math.pi * c * math.sin(V) * V ** (2.0 - e) for c, e in model)
    return tail


@dataclass
class ContinuityReport:
    passed: bool
    exponent: float
    curves: dict
    constants: dict
    fine_vs_coarse: dict
    parseval: dict

    def to_dict(self):
        return {"passed": self.passed, "exponent": self.exponent,
                "curves": {k: [float(x) for x in v] for k, v in self.curves.items()},
                "constants": self.constants, "fine_vs_coarse": self.fine_vs_coarse,
                "parseval": self.parseval}


def weak_continuity_check(densities, times, alpha, p, states=None, eps=0.1, growth=2.0,
                          floor=1e-9, tol_mass=1e-4, tol_parseval=1e-5):
    """Discrete Hoelder continuity of t -> int psi f(t) over the test catalog.

    For each psi the quotient |P(t) - P(s)| / |t - s|^kappa, with
    kappa = min(alpha/p, 1)(1 - eps), must not grow as the gap shrinks: its
    maximum over adjacent pairs may exceed the maximum over wider pairs by
    at most ``growth``.  Differences below ``floor`` count as zero.  With
    ``states`` the cos curve is checked against phi(1) + phi'(1).
    """
    if abs(alpha - 1.0) < 1e-12:
        raise DomainError("real-space mode excludes alpha = 1")
    times = np.asarray(times, dtype=float)
    if len(times) != len(densities) or len(times) < 3:
        raise DomainError("need one density per time and at least three times")
    kappa = min(alpha / p, 1.0) * (1.0 - eps)
    curves, consts, fvc = {}, {}, {}
    ok = True
    for name, (psi, tail_fn) in testfn_catalog(alpha).items():
        P = np.array([d.pairing(psi, tail_fn(d.tail_model)) for d in densities])
        curves[name] = P
        gaps = np.abs(times[None, :] - times[:, None])
        diff = np.abs(P[None, :] - P[:, None])
        diff = np.where(diff < floor, 0.0, diff)
        iu = np.triu_indices(len(times), 1)
        q = diff[iu] / gaps[iu] ** kappa
        g = gaps[iu]
        dmin = g.min()
        fine = q[g <= dmin * 1.5].max()
        wide = q[g > dmin * 1.5].max() if np.any(g > dmin * 1.5) else fine
        consts[name] = float(q.max())
        fvc[name] = {"fine": float(fine), "wide": float(wide)}
        good = np.isfinite(q).all() and (fine <= growth * wide or fine == 0.0)
        if name == "one":
            good = good and float(np.max(np.abs(P - 1.0))) <= tol_mass
        ok = ok and bool(good)
    parseval = {}
    if states is not None:
        errs = []
        for s, pc in zip(states, curves["cos"]):
            h = 1e-4
            val = float(s(np.array([1.0]))[0])
            der = float((s(np.array([1.0 + h]))[0] - s(np.array([1.0 - h]))[0]) / (2 * h))
            errs.append(abs(pc - (val + der)))
        parseval = {"max_error": float(max(errs)), "errors": errs}
        ok = ok and parseval["max_error"] <= tol_parseval
    return ContinuityReport(ok, kappa, curves, consts, fvc, parseval)
