"""Angular cross sections b(cos theta) and the scalar constants built from them.

Three kernel families are supported on the symmetrised range [0, pi/2]:

* ``powerlaw``   b = K theta**(-2-2s), the non-cutoff model kernel;
* ``bounded``    any finite nonnegative callable (constants, tables, ...);
* ``truncated``  min(base, n), the cutoff approximations of a non-cutoff kernel.
"""

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SingularityError
from .quadrature import adaptive_gk, graded_edges
from .special import gamma

HALF_PI = 0.5 * math.pi
# innermost graded edge is HALF_PI * 2**-N_PANELS
N_PANELS = 40
QUAD_TOL = 1e-10


@dataclass(frozen=True)
class CrossSection:
    """Immutable description of a Maxwellian-molecule angular kernel."""

    kind: str
    K: float = 1.0
    s: float = 0.0
    bounded_eval: Optional[Callable] = field(default=None, compare=False)
    base: Optional["CrossSection"] = None
    n: Optional[float] = None
    alpha0: float = 2.0
    label: str = ""
    breakpoints: tuple = ()

    @property
    def is_cutoff(self):
        return self.kind != "powerlaw"

    @property
    def singular_order(self):
        """Exponent 2+2s of the angular singularity (0 for cutoff kernels)."""
        return 2.0 + 2.0 * self.s if self.kind == "powerlaw" else 0.0

    def critical_angle(self):
        """Angle where a truncated power law meets its cap, or None."""
        if self.kind != "truncated" or self.base.kind != "powerlaw":
            return None
        th = (self.base.K / self.n) ** (1.0 / self.base.singular_order)
        return th if th < HALF_PI else None

    def quad_breakpoints(self):
        pts = list(self.breakpoints)
        if self.base is not None:
            pts.extend(self.base.quad_breakpoints())
        th = self.critical_angle()
        if th is not None:
            pts.append(th)
        return tuple(sorted(p for p in set(pts) if 0.0 < p < HALF_PI))

    def describe(self):
        if self.label:
            return self.label
        if self.kind == "powerlaw":
            return f"powerlaw(K={self.K:g}, s={self.s:g})"
        if self.kind == "truncated":
            return f"truncated({self.base.describe()}, n={self.n:g})"
        return "bounded"

    def to_config(self):
        """Flat dictionary in the configuration vocabulary."""
        if self.kind == "powerlaw":
            return {"kind": "powerlaw", "K": self.K, "s": self.s, "alpha0": self.alpha0}
        if self.kind == "truncated":
            cfg = {f"base.{k}": v for k, v in self.base.to_config().items()}
            cfg.update(kind="truncated", n=self.n, alpha0=self.alpha0)
            return cfg
        return {"kind": "bounded", "label": self.describe(), "alpha0": self.alpha0}

    def __call__(self, theta):
        return eval_b(self, theta)


@dataclass(frozen=True)
class KernelMoments:
    """gamma_alpha, lambda_alpha, mu_alpha for one kernel and order.

    ``gamma_const`` is 2 pi int b sin(theta) d theta (= gamma_2).  Entries that
    diverge are +inf and listed in ``divergent``.
    """

    alpha: float
    gamma_alpha: float
    lambda_alpha: float
    mu_alpha: float
    gamma_const: float
    divergent: frozenset = frozenset()
    errors: dict = field(default_factory=dict, compare=False)


def power_law(K=1.0, s=0.25, alpha0=None):
    if K <= 0:
        raise DomainError(f"power law needs K > 0, got {K}")
    if not 0.0 < s < 1.0:
        raise DomainError(f"power law needs 0 < s < 1, got {s}")
    if alpha0 is None:
        alpha0 = min(2.0, 2.0 * s + 0.25)
    if not 2.0 * s < alpha0 <= 2.0:
        raise DomainError(f"weak integrability needs 2s < alpha0 <= 2 (s={s}, alpha0={alpha0})")
    return CrossSection("powerlaw", K=float(K), s=float(s), alpha0=float(alpha0))


def bounded(fn, alpha0=1e-3, label="", breakpoints=()):
    """Cutoff kernel from a vectorised callable of theta."""
    if not 0.0 < alpha0 <= 2.0:
        raise DomainError(f"alpha0 must lie in (0, 2], got {alpha0}")
    # kernels compare by label, so anonymous callables get a unique one
    label = label or f"bounded@{id(fn):x}"
    return CrossSection("bounded", bounded_eval=fn, alpha0=float(alpha0), label=label,
                        breakpoints=tuple(breakpoints))


def constant(value=1.0, alpha0=1e-3):
    if value < 0:
        raise DomainError(f"kernel must be nonnegative, got {value}")
    value = float(value)
    return bounded(lambda th: np.full(np.shape(th), value), alpha0=alpha0,
                   label=f"constant({value:g})")


def tabulated(table, alpha0=1e-3):
    """Piecewise-linear kernel through ``[(theta, b), ...]`` pairs."""
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise DomainError("table must be a list of at least two [theta, b] pairs")
    th, bv = arr[:, 0], arr[:, 1]
    if np.any(np.diff(th) <= 0) or th[0] > 0 or th[-1] < HALF_PI - 1e-12:
        raise DomainError("table angles must increase and span [0, pi/2]")
    if np.any(bv < 0):
        raise DomainError("tabulated kernel must be nonnegative")
    return bounded(lambda x: np.interp(x, th, bv), alpha0=alpha0,
                   label="tabulated:" + hashlib.sha1(arr.tobytes()).hexdigest()[:12],
                   breakpoints=tuple(th[1:-1]))


def truncate(cs, n):
    """The cutoff kernel b_n = min(b, n)."""
    if not n > 0:
        raise DomainError(f"truncation level must be positive, got {n}")
    if cs.kind == "truncated":
        # min(min(b, n0), n) = min(b, min(n0, n))
        return truncate(cs.base, min(cs.n, n))
    return CrossSection("truncated", base=cs, n=float(n), alpha0=cs.alpha0)


def eval_b(cs, theta):
    """Evaluate b(cos theta) for theta in [0, pi/2] (array or scalar)."""
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0.0) or np.any(th > HALF_PI * (1 + 1e-14)) or np.any(np.isnan(th)):
        raise DomainError("theta must lie in [0, pi/2]")
    if cs.kind == "powerlaw":
        if np.any(th == 0.0):
            raise SingularityError("power-law kernel is singular at theta = 0")
        out = cs.K * th ** (-cs.singular_order)
    elif cs.kind == "truncated":
        if cs.base.kind == "powerlaw":
            with np.errstate(divide="ignore"):
                raw = np.where(th > 0, cs.base.K * np.where(th > 0, th, 1.0)
                               ** (-cs.base.singular_order), np.inf)
        else:
            raw = eval_b(cs.base, th)
        out = np.minimum(raw, cs.n)
    else:
        out = np.asarray(cs.bounded_eval(th), dtype=float)
    return out if np.ndim(theta) else float(out)


def _excess_power(x, alpha):
    """x^a - x^2 = x^2 expm1((a - 2) log x), zero at x = 0."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, safe * safe * np.expm1((alpha - 2.0) * np.log(safe)), 0.0)


def _loss_factor(theta, alpha):
    """cos^a(t/2) + sin^a(t/2) - 1 as (C^a - C^2) + (S^a - S^2): same-signed terms."""
    return _excess_power(np.cos(0.5 * theta), alpha) + _excess_power(np.sin(0.5 * theta), alpha)


def kernel_moments(cs, alpha, tol=QUAD_TOL):
    """Compute gamma_alpha, lambda_alpha and mu_alpha by graded quadrature."""
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    bps = cs.quad_breakpoints()
    errs = {}
    divergent = set()

    def lam_integrand(th):
        return 2 * math.pi * eval_b(cs, th) * np.sin(th) * _loss_factor(th, alpha)

    def mu_integrand(th):
        return 2 * math.pi * eval_b(cs, th) * np.sin(th) * np.sin(0.5 * th) ** alpha

    if cs.is_cutoff:
        edges = graded_edges(0.0, HALF_PI, N_PANELS, breakpoints=bps, head=True)
        g0, errs["gamma_const"] = adaptive_gk(
            lambda th: 2 * math.pi * eval_b(cs, th) * np.sin(th), edges, tol, tol)
        lam, errs["lambda"] = adaptive_gk(lam_integrand, edges, tol, tol)
        mu, errs["mu"] = adaptive_gk(mu_integrand, edges, tol, tol)
        gam = lam + g0
        errs["gamma"] = errs["lambda"] + errs["gamma_const"]
    else:
        gam = g0 = math.inf
        divergent.update({"gamma", "gamma_const"})
        excess = alpha - 2.0 * cs.s
        if excess <= 0:
            lam = mu = math.inf
            divergent.update({"lambda", "mu"})
        else:
            edges = graded_edges(0.0, HALF_PI, N_PANELS, breakpoints=bps, head=False)
            tm = edges[0]
            # head on (0, tm): b sin(t) ~ K t**(-1-2s), sin^a(t/2) ~ (t/2)^a,
            # cos^a(t/2) - 1 ~ -a t^2 / 8
            two_s = 2.0 * cs.s
            mu_head = 2 * math.pi * cs.K * 2.0 ** -alpha * tm ** excess / excess
            lam_head = mu_head - 2 * math.pi * cs.K * alpha / 8 * tm ** (2 - two_s) / (2 - two_s)
            lam, errs["lambda"] = adaptive_gk(lam_integrand, edges, tol, tol)
            mu, errs["mu"] = adaptive_gk(mu_integrand, edges, tol, tol)
            lam += lam_head
            mu += mu_head
    return KernelMoments(alpha=float(alpha), gamma_alpha=float(gam), lambda_alpha=float(lam),
                         mu_alpha=float(mu), gamma_const=float(g0),
                         divergent=frozenset(divergent), errors=errs)


@lru_cache(maxsize=4096)
def lambda_general(cs, a, tol=QUAD_TOL):
    """2 pi int b sin(theta) (C^a + S^a - 1) for any a > 0 (a > 2s for power laws).

    Negative for a > 2; used by the small-|xi| expansion of evolving states.
    """
    if a <= 0:
        raise DomainError(f"exponent must be positive, got {a}")
    if cs.is_cutoff:
        edges = graded_edges(0.0, HALF_PI, N_PANELS, breakpoints=cs.quad_breakpoints())
        head = 0.0
    else:
        excess = a - 2.0 * cs.s
        if excess <= 0:
            raise DomainError(f"lambda_{a} diverges for the power law with s = {cs.s}")
        edges = graded_edges(0.0, HALF_PI, N_PANELS, breakpoints=cs.quad_breakpoints(), head=False)
        tm = edges[0]
        two_s = 2.0 * cs.s
        head = 2 * math.pi * cs.K * (2.0 ** -a * tm ** excess / excess
                                     - a / 8 * tm ** (2 - two_s) / (2 - two_s))

    def f(th):
        return 2 * math.pi * eval_b(cs, th) * np.sin(th) * _loss_factor(th, a)

    val, _ = adaptive_gk(f, edges, tol, tol)
    return val + head


@lru_cache(maxsize=4096)
def angular_moment(cs, a_plus, a_minus, tol=QUAD_TOL):
    """2 pi int b sin(theta) cos^{a_plus}(theta/2) sin^{a_minus}(theta/2) d theta."""
    if cs.is_cutoff:
        edges = graded_edges(0.0, HALF_PI, N_PANELS, breakpoints=cs.quad_breakpoints())
        head = 0.0
    else:
        excess = a_minus - 2.0 * cs.s
        if excess <= 0:
            raise DomainError(f"moment diverges for sin exponent {a_minus} and s = {cs.s}")
        edges = graded_edges(0.0, HALF_PI, N_PANELS, breakpoints=cs.quad_breakpoints(), head=False)
        head = 2 * math.pi * cs.K * 2.0 ** -a_minus * edges[0] ** excess / excess

    def f(th):
        return (2 * math.pi * eval_b(cs, th) * np.sin(th)
                * np.cos(0.5 * th) ** a_plus * np.sin(0.5 * th) ** a_minus)

    val, _ = adaptive_gk(f, edges, tol, tol)
    return val + head


def c_const(p, alpha):
    """C_{p,alpha} = (4 pi / alpha) Gamma(1 - alpha/p)."""
    if not 0.0 < p <= 2.0:
        raise DomainError(f"p must lie in (0, 2], got {p}")
    if not 0.0 < alpha < p:
        raise DomainError(f"C_(p,alpha) is finite only for 0 < alpha < p (p={p}, alpha={alpha})")
    return 4.0 * math.pi / alpha * gamma(1.0 - alpha / p)


def c_const_scaled(p, alpha, a):
    """int (1 - exp(-a|xi|^p)) / |xi|^(3+alpha) d xi = C_{p,alpha} a^(alpha/p)."""
    if a < 0:
        raise DomainError(f"scale must be nonnegative, got {a}")
    return c_const(p, alpha) * a ** (alpha / p)


def c_const_quadrature(p, alpha, a=1.0, tol=1e-12):
    """The same integral evaluated by radial quadrature instead of Gamma.

    4 pi int_0^inf (1 - e^{-a r^p}) r^{-1-alpha} dr, split at r = 1 after
    rescaling to a = 1.
    """
    if not 0.0 < alpha < p <= 2.0:
        raise DomainError(f"need 0 < alpha < p <= 2 (p={p}, alpha={alpha})")
    edges = graded_edges(0.0, 1.0, 60, head=False)
    xm = edges[0]
    inner, _ = adaptive_gk(lambda x: -np.expm1(-x ** p) * x ** (-1.0 - alpha), edges, tol, tol)
    # (1 - e^{-x^p}) = x^p - x^{2p}/2 + ... on (0, xm)
    inner += xm ** (p - alpha) / (p - alpha) - 0.5 * xm ** (2 * p - alpha) / (2 * p - alpha)
    # int_1^inf = 1/alpha - int_1^inf e^{-x^p} x^{-1-alpha} dx, the latter in u = log x
    upper = math.log(50.0) / p
    decay, _ = adaptive_gk(lambda u: np.exp(-np.exp(p * u) - alpha * u),
                           np.linspace(0.0, upper, 17), tol, tol)
    outer = 1.0 / alpha - decay
    return 4.0 * math.pi * (inner + outer) * a ** (alpha / p)


def from_config(cfg):
    """Build a cross section from a flat dict (keys: kind, K, s, n, alpha0, table)."""
    cfg = dict(cfg)
    kind = str(cfg.get("kind", "")).lower()
    alpha0 = cfg.get("alpha0")
    if kind == "powerlaw":
        return power_law(float(cfg.get("K", 1.0)), float(cfg.get("s", 0.25)),
                         None if alpha0 is None else float(alpha0))
    a0 = 1e-3 if alpha0 is None else float(alpha0)
    if kind == "constant":
        return constant(float(cfg.get("K", 1.0)), alpha0=a0)
    if kind == "tabulated":
        if "table" not in cfg:
            raise DomainError("tabulated kernel needs a 'table' entry")
        return tabulated(cfg["table"], alpha0=a0)
    if kind == "truncated":
        base_cfg = {k[5:]: v for k, v in cfg.items() if k.startswith("base.")}
        base_cfg.setdefault("kind", cfg.get("base", "powerlaw"))
        for key in ("K", "s", "table"):
            if key in cfg and key not in base_cfg:
                base_cfg[key] = cfg[key]
        if alpha0 is not None:
            base_cfg.setdefault("alpha0", alpha0)
        if "n" not in cfg:
            raise DomainError("truncated kernel needs a cap 'n'")
        return truncate(from_config(base_cfg), float(cfg["n"]))
    raise DomainError(f"unknown kernel kind {kind!r}")
