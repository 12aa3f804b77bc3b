"""Radial characteristic functions on geometric grids, and their metrics.

A state phi(r) is stored as *scaled* node values ``psi_i = phi(r_i) e^{E(r_i)}``
where ``E(r) = sum_j a_j r^{p_j}`` is a decay envelope (for instance the
factor e^{-delta t r^p} produced by fractional diffusion).  Interpolation
works on the scaled values, which stay O(1) and smooth even when phi itself
underflows; it is Lagrange interpolation of order ``STENCIL`` in log r.

Below ``r_min`` the function is continued by an origin model
``1 - phi(r) = sum_k c_k r^{a_k}`` (leading term: ``c_loc r^{alpha_loc}``);
above ``r_max`` by the tail model (``decay``: psi held constant, i.e. the
envelope supplies the decay; ``constant``: phi held constant).
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import (DomainError, GridMismatch, InterpolationOutOfRange, ModelMissing,
                     NotIntegrable)

STENCIL = 8
_EXP_CAP = 700.0
_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)
_GL4_X = 0.5 * (_GL4_X + 1.0)
_GL4_W = 0.5 * _GL4_W
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


# --------------------------------------------------------------------------
# grid and interpolation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    """Geometric nodes r_i = r_min * q**i, i = 0..n-1, with r_{n-1} = r_max."""

    r_min: float = 1e-4
    r_max: float = 1e2
    n: int = 512

    def __post_init__(self):
        if self.n < 16:
            raise DomainError(f"grid needs at least 16 nodes, got {self.n}")
        if not 0.0 < self.r_min < self.r_max:
            raise DomainError("grid needs 0 < r_min < r_max")
        if self.r_max / self.r_min < 1e4 * (1 - 1e-12):
            raise DomainError("grid must span at least four decades (r_max/r_min >= 1e4)")

    @property
    def h(self):
        """Spacing in u = log r."""
        return math.log(self.r_max / self.r_min) / (self.n - 1)

    @property
    def u(self):
        return math.log(self.r_min) + self.h * np.arange(self.n)

    @property
    def nodes(self):
        r = np.exp(self.u)
        r[0], r[-1] = self.r_min, self.r_max
        return r

    def refined(self, factor=2):
        return RadialGrid(self.r_min, self.r_max, factor * (self.n - 1) + 1)


_DENOM = np.array([np.prod([j - k for k in range(STENCIL) if k != j]) for j in range(STENCIL)],
                  dtype=float)


def lagrange_weights(n, s):
    """Stencil start indices and weights for fractional node positions ``s``."""
    s = np.asarray(s, dtype=float)
    i0 = np.clip(np.floor(s).astype(np.int64) - (STENCIL // 2 - 1), 0, n - STENCIL)
    loc = s - i0
    diff = loc[..., None] - np.arange(STENCIL)
    pre = np.ones_like(diff)
    suf = np.ones_like(diff)
    for j in range(1, STENCIL):
        pre[..., j] = pre[..., j - 1] * diff[..., j - 1]
        suf[..., STENCIL - 1 - j] = suf[..., STENCIL - j] * diff[..., STENCIL - j]
    return i0, pre * suf / _DENOM


def fractional_index(grid, x):
    return (np.log(x) - math.log(grid.r_min)) / grid.h


def interp_nodes(grid, values, x):
    """Interpolate node values at radii inside [r_min, r_max]."""
    s = np.clip(fractional_index(grid, x), 0.0, grid.n - 1.0)
    i0, w = lagrange_weights(grid.n, s)
    idx = i0[..., None] + np.arange(STENCIL)
    return np.sum(np.asarray(values)[idx] * w, axis=-1)


def interp_matrix(grid, x):
    """Sparse matrix mapping node values to interpolated values at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    s = np.clip(fractional_index(grid, x), 0.0, grid.n - 1.0)
    i0, w = lagrange_weights(grid.n, s)
    rows = np.repeat(np.arange(len(x)), STENCIL)
    cols = (i0[:, None] + np.arange(STENCIL)).ravel()
    return sparse.csr_matrix((w.ravel(), (rows, cols)), shape=(len(x), grid.n))


# --------------------------------------------------------------------------
# envelope and origin model
# --------------------------------------------------------------------------

def merge_envelope(*envs):
    """Sum envelopes given as tuples of (a, p) pairs, combining equal p."""
    acc = {}
    for env in envs:
        for a, p in env:
            key = round(float(p), 12)
            acc[key] = acc.get(key, 0.0) + float(a)
    return tuple((a, p) for p, a in sorted(acc.items()) if a != 0.0)


def envelope_exponent(env, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a, p in env:
        out = out + a * x ** p
    return out


@dataclass(frozen=True)
class OriginModel:
    """1 - phi(r) = sum_k coef_k r^{exponent_k} for r below r_min."""

    terms: tuple = ()

    @property
    def alpha_loc(self):
        nz = [a for a, c in self.terms if c != 0.0]
        return min(nz) if nz else 2.0

    @property
    def c_loc(self):
        nz = [(a, c) for a, c in self.terms if c != 0.0]
        return min(nz)[1] if nz else 0.0

    @property
    def exponents(self):
        return tuple(a for a, _ in self.terms)

    def one_minus(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, c in self.terms:
            out = out + c * x ** a
        return out

    def __call__(self, x):
        return 1.0 - self.one_minus(x)

    def minus(self, other):
        """Terms of (1 - other) - (1 - self), i.e. of self(r) - other(r)."""
        acc = {}
        for a, c in other.terms:
            acc[a] = acc.get(a, 0.0) + c
        for a, c in self.terms:
            acc[a] = acc.get(a, 0.0) - c
        return tuple(sorted(acc.items()))

    @classmethod
    def fit(cls, grid, one_minus_values, exponents, n_fit=None):
        """Least-squares fit of the given exponents on the first grid nodes."""
        exps = tuple(sorted(set(float(a) for a in exponents)))
        if not exps:
            return cls(())
        if n_fit is None:
            n_fit = max(3 * len(exps), int(round(1.0 / (grid.h / math.log(10.0)))) // 2)
        n_fit = min(n_fit, grid.n)
        x = grid.nodes[:n_fit] / grid.r_min
        A = np.stack([x ** a for a in exps], axis=1)
        y = np.asarray(one_minus_values[:n_fit], dtype=float)
        scale = np.max(np.abs(A), axis=0)
        coef, *_ = np.linalg.lstsq(A / scale, y, rcond=None)
        coef = coef / scale / grid.r_min ** np.array(exps)
        return cls(tuple((a, float(c)) for a, c in zip(exps, coef)))


def origin_exponents(leading, extra=(), max_terms=3, min_gap=0.05, cap=4.0):
    """Exponent set for origin fits: sums of the seeds, thinned and truncated."""
    seeds = sorted({float(a) for a in tuple(leading) + tuple(extra) if a > 0})
    if not seeds:
        return ()
    pool = set(seeds)
    for a in seeds:
        for b in seeds:
            pool.add(a + b)
    out = []
    for a in sorted(pool):
        if a > cap:
            break
        if out and a - out[-1] < min_gap:
            continue
        out.append(a)
        if len(out) == max_terms:
            break
    return tuple(out)


# --------------------------------------------------------------------------
# closed-form families
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    """Characteristic function exp(-sigma^2 r^2 / 2) of N(0, sigma^2 I)."""

    sigma: float = 1.0

    def validate(self):
        if not self.sigma > 0:
            raise DomainError(f"gaussian needs sigma > 0, got {self.sigma}")

    def __call__(self, r):
        return np.exp(-0.5 * self.sigma ** 2 * np.asarray(r, dtype=float) ** 2)

    def one_minus(self, r):
        return -np.expm1(-0.5 * self.sigma ** 2 * np.asarray(r, dtype=float) ** 2)

    def envelope(self):
        return ((0.5 * self.sigma ** 2, 2.0),)

    def origin_terms(self):
        a = 0.5 * self.sigma ** 2
        return ((2.0, a), (4.0, -a * a / 2), (6.0, a ** 3 / 6))

    def describe(self):
        return {"family": "gaussian", "sigma": self.sigma}


@dataclass(frozen=True)
class Stable:
    """exp(-t r^p), the isotropic p-stable law at time t."""

    p: float
    t: float = 1.0

    def validate(self):
        if not 0.0 < self.p <= 2.0:
            raise DomainError(f"stable law needs 0 < p <= 2, got {self.p}")
        if not self.t > 0:
            raise DomainError(f"stable law needs t > 0, got {self.t}")

    def __call__(self, r):
        return np.exp(-self.t * np.asarray(r, dtype=float) ** self.p)

    def one_minus(self, r):
        return -np.expm1(-self.t * np.asarray(r, dtype=float) ** self.p)

    def envelope(self):
        return ((self.t, self.p),)

    def origin_terms(self):
        p, t = self.p, self.t
        return ((p, t), (2 * p, -t * t / 2), (3 * p, t ** 3 / 6))

    def describe(self):
        return {"family": "stable", "p": self.p, "t": self.t}


@dataclass(frozen=True)
class BKW:
    """exp(-a r^2) (1 + c r^2); a characteristic function for -2a/3 <= c <= 0."""

    a: float
    c: float

    def validate(self):
        if not self.a > 0 or not -2.0 * self.a / 3.0 <= self.c <= 0.0:
            raise DomainError(f"BKW profile needs a > 0 and -2a/3 <= c <= 0 (a={self.a}, c={self.c})")

    def __call__(self, r):
        r2 = np.asarray(r, dtype=float) ** 2
        return np.exp(-self.a * r2) * (1.0 + self.c * r2)

    def one_minus(self, r):
        r2 = np.asarray(r, dtype=float) ** 2
        return -np.expm1(-self.a * r2) - self.c * r2 * np.exp(-self.a * r2)

    def envelope(self):
        return ((0.5 * self.a, 2.0),)

    def origin_terms(self):
        a, c = self.a, self.c
        return ((2.0, a - c), (4.0, a * c - a * a / 2), (6.0, a ** 3 / 6 - a * a * c / 2))

    def describe(self):
        return {"family": "bkw", "a": self.a, "c": self.c}


@dataclass(frozen=True)
class Delta:
    """phi = 1, the point mass at the origin."""

    def validate(self):
        pass

    def __call__(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def one_minus(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def envelope(self):
        return ()

    def origin_terms(self):
        return ()

    def describe(self):
        return {"family": "delta"}


# bound on log of the scaled mixture values
MIXTURE_EXCESS = 30.0


@dataclass(frozen=True)
class Mixture:
    """Convex combination of closed-form characteristic functions."""

    components: tuple  # ((weight, family), ...)

    def validate(self):
        w = np.array([c[0] for c in self.components], dtype=float)
        if len(w) == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must be nonnegative and sum to 1")
        for _, fam in self.components:
            fam.validate()

    def __call__(self, r):
        return sum(w * fam(r) for w, fam in self.components)

    def one_minus(self, r):
        return sum(w * fam.one_minus(r) for w, fam in self.components)

    def envelope(self, r_max=1e2):
        """Component envelope E* minimising max_i sup_{r <= r_max} (E* - E_i).

        The scaled mixture e^{E*} phi then stays below e^{MIXTURE_EXCESS};
        if no component achieves that, the mixture carries no envelope.
        """
        envs = [fam.envelope() for _, fam in self.components]
        if any(not e for e in envs):
            return ()
        r = np.concatenate([[0.0], np.geomspace(1e-3, r_max, 400)])
        ex = [envelope_exponent(e, r) for e in envs]
        excess = [max(float(np.max(ec - ei)) for ei in ex) for ec in ex]
        k = int(np.argmin(excess))
        return envs[k] if excess[k] <= MIXTURE_EXCESS else ()

    def origin_terms(self):
        acc = {}
        for w, fam in self.components:
            for a, c in fam.origin_terms():
                acc[a] = acc.get(a, 0.0) + w * c
        return tuple(sorted((a, c) for a, c in acc.items() if c != 0.0))

    def describe(self):
        return {"family": "mixture",
                "components": [[w, fam.describe()] for w, fam in self.components]}


def family_from_dict(d):
    """Inverse of ``describe()`` for the closed-form families."""
    kind = str(d.get("family", "")).lower()
    if kind == "gaussian":
        return Gaussian(float(d.get("sigma", 1.0)))
    if kind == "stable":
        return Stable(float(d["p"]), float(d.get("t", 1.0)))
    if kind == "bkw":
        return BKW(float(d["a"]), float(d["c"]))
    if kind == "delta":
        return Delta()
    if kind == "mixture":
        return Mixture(tuple((float(w), family_from_dict(c)) for w, c in d["components"]))
    raise DomainError(f"unknown characteristic-function family {kind!r}")


# --------------------------------------------------------------------------
# the state type
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialCharFn:
    """A radial characteristic function sampled on a geometric grid."""

    grid: RadialGrid
    scaled: np.ndarray
    envelope: tuple = ()
    origin: OriginModel = field(default_factory=OriginModel)
    tail_kind: str = "decay"
    t: float = 0.0
    closed_form: object = None

    def __post_init__(self):
        sc = np.array(self.scaled, dtype=float)
        if sc.shape != (self.grid.n,):
            raise DomainError("scaled values must have one entry per grid node")
        sc.setflags(write=False)
        object.__setattr__(self, "scaled", sc)
        if self.tail_kind not in ("decay", "constant", None):
            raise DomainError(f"unknown tail model {self.tail_kind!r}")
        if self.tail_kind == "decay" and not any(a > 0 for a, _ in self.envelope):
            raise ModelMissing("decay tail needs an envelope with positive rate")
        if self.tail_kind == "constant" and self.envelope:
            raise DomainError("constant tail is incompatible with a decay envelope")

    # -- basic views -------------------------------------------------------
    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def node_exponent(self):
        return envelope_exponent(self.envelope, self.grid.nodes)

    @property
    def values(self):
        """phi at the grid nodes."""
        return self.scaled * np.exp(-self.node_exponent)

    @property
    def alpha_loc(self):
        return self.origin.alpha_loc

    @property
    def c_loc(self):
        return self.origin.c_loc

    def with_time(self, t):
        return replace(self, t=float(t))

    # -- evaluation ----------------------------------------------------------
    def scaled_at(self, x):
        """psi(x) = phi(x) e^{E(x)} at arbitrary radii."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        lo = x < self.grid.r_min
        hi = x > self.grid.r_max
        mid = ~(lo | hi)
        if mid.any():
            out[mid] = interp_nodes(self.grid, self.scaled, x[mid])
        if lo.any():
            xl = x[lo]
            out[lo] = self.origin(xl) * np.exp(envelope_exponent(self.envelope, xl))
        if hi.any():
            if self.tail_kind == "decay":
                out[hi] = self.scaled[-1]
            elif self.tail_kind == "constant":
                out[hi] = self.scaled[-1]
            else:
                raise InterpolationOutOfRange("radius beyond r_max and no tail model")
        return out

    def __call__(self, x):
        """phi(x); phi(0) = 1."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("radii must be nonnegative")
        out = np.empty_like(x)
        lo = x < self.grid.r_min
        out[lo] = self.origin(x[lo])
        rest = ~lo
        if rest.any():
            xr = x[rest]
            out[rest] = self.scaled_at(xr) * np.exp(-envelope_exponent(self.envelope, xr))
        return out if out.ndim else float(out)

    def one_minus(self, x):
        """1 - phi(x), accurate for small x."""
        x = np.asarray(x, dtype=float)
        lo = x < self.grid.r_min
        out = np.empty_like(x)
        out[lo] = self.origin.one_minus(x[lo])
        out[~lo] = 1.0 - self(x[~lo])
        return out

    def tail_value(self, x):
        """phi on (r_max, inf) according to the tail model."""
        x = np.asarray(x, dtype=float)
        if self.tail_kind == "decay":
            return self.scaled[-1] * np.exp(-envelope_exponent(self.envelope, x))
        if self.tail_kind == "constant":
            return np.full_like(x, self.scaled[-1])
        raise InterpolationOutOfRange("no tail model")

    @property
    def tail_limit(self):
        return self.scaled[-1] if self.tail_kind == "constant" else 0.0

    def origin_consistency(self, decades=1.0):
        """max |1 - phi - model| / (c_loc r^alpha_loc) over the first decade."""
        r = self.grid.nodes
        sel = r <= self.grid.r_min * 10 ** decades
        lead = self.c_loc * r[sel] ** self.alpha_loc
        if self.c_loc == 0.0:
            return float(np.max(np.abs(1.0 - self.values[sel])))
        return float(np.max(np.abs((1.0 - self.values[sel]) - lead) / lead))


def from_values(grid, values, origin_exponents_=None, envelope=(), tail_kind=None, t=0.0,
                origin=None, closed_form=None):
    """Build a state from phi values at the nodes, fitting the origin model."""
    values = np.asarray(values, dtype=float)
    e = envelope_exponent(envelope, grid.nodes)
    if tail_kind is None:
        tail_kind = "decay" if any(a > 0 for a, _ in envelope) else "constant"
    if origin is None:
        exps = origin_exponents_ if origin_exponents_ is not None else (2.0,)
        origin = OriginModel.fit(grid, 1.0 - values, exps)
    with np.errstate(over="ignore"):
        scaled = np.where(values == 0.0, 0.0, values * np.exp(np.minimum(e, _EXP_CAP)))
    return RadialCharFn(grid, scaled, tuple(envelope), origin, tail_kind, t, closed_form)


def make_charfn(family, grid=None):
    """Sample a closed-form family on a grid, with matching origin/tail models."""
    grid = grid or RadialGrid()
    family.validate()
    env = merge_envelope(family.envelope())
    r = grid.nodes
    e = envelope_exponent(env, r)
    # exp(E) * phi evaluated as exp(E + log phi) where phi is a pure envelope
    phi = family(r)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        scaled = phi * np.exp(np.minimum(e, _EXP_CAP))
    if isinstance(family, Stable) or (isinstance(family, Gaussian)):
        scaled = np.ones_like(r)
    scaled = np.where(np.isfinite(scaled), scaled, 0.0)
    tail = "decay" if env else "constant"
    return RadialCharFn(grid, scaled, env, OriginModel(family.origin_terms()), tail, 0.0,
                        family)


def constant_one(grid=None):
    return make_charfn(Delta(), grid)


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

@dataclass
class Profile:
    """A real function on (0, inf) described piecewise for norm integrals.

    ``node_values`` on the grid, ``origin_terms`` (a, d) with
    f(r) = sum d r^a below r_min, and ``tail`` a callable for r > r_max with
    constant limit ``tail_limit``.
    """

    grid: RadialGrid
    node_values: np.ndarray
    origin_terms: tuple
    tail: object
    tail_limit: float = 0.0


def _check_pair(phi, psi):
    if phi.grid != psi.grid:
        raise GridMismatch("characteristic functions live on different grids")


def difference_profile(phi, psi):
    _check_pair(phi, psi)
    if phi.tail_kind is None or psi.tail_kind is None:
        raise ModelMissing("norms need tail models on both arguments")
    return Profile(
        phi.grid,
        phi.values - psi.values,
        phi.origin.minus(psi.origin),
        lambda x: phi.tail_value(x) - psi.tail_value(x),
        float(phi.tail_limit - psi.tail_limit),
    )


def array_profile(grid, values, exponents, tail="constant"):
    """Profile for a bare array whose small-r behaviour is ~ sum d r^a."""
    values = np.asarray(values, dtype=float)
    terms = OriginModel.fit(grid, values, exponents).terms if exponents else ()
    last = float(values[-1])
    if tail == "zero":
        return Profile(grid, values, terms, lambda x: np.zeros_like(x), 0.0)
    return Profile(grid, values, terms, lambda x: np.full_like(x, last), last)


def _interval_points(grid, values):
    """Values at 4 Gauss points per interval plus splitting at sign changes.

    Returns (u, |f|, weights) for a quadrature of |f| in u over [u_min, u_max].
    """
    n = grid.n
    v = np.asarray(values, dtype=float)
    i = np.arange(n - 1)
    sgn_change = v[:-1] * v[1:] < 0
    # plain intervals
    s_plain = (i[~sgn_change, None] + _GL4_X[None, :]).ravel()
    w_plain = np.tile(_GL4_W, int((~sgn_change).sum())) * grid.h
    parts_s = [s_plain]
    parts_w = [w_plain]
    if sgn_change.any():
        ia = i[sgn_change].astype(float)
        lo, hi = ia.copy(), ia + 1.0
        flo = v[:-1][sgn_change]
        for _ in range(6):
            mid = 0.5 * (lo + hi)
            fm = _interp_frac(v, mid)
            left = np.sign(fm) == np.sign(flo)
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
        # safeguarded secant steps on the now well-bracketed polynomial root
        flo, fhi = _interp_frac(v, lo), _interp_frac(v, hi)
        for _ in range(4):
            denom = np.where(fhi != flo, fhi - flo, 1.0)
            root = np.clip(lo - flo * (hi - lo) / denom, lo, hi)
            fr = _interp_frac(v, root)
            left = np.sign(fr) == np.sign(flo)
            lo, flo = np.where(left, root, lo), np.where(left, fr, flo)
            hi, fhi = np.where(left, hi, root), np.where(left, fhi, fr)
        root = np.where(np.abs(flo) < np.abs(fhi), lo, hi)
        for a, b in ((ia, root), (root, ia + 1.0)):
            parts_s.append((a[:, None] + (b - a)[:, None] * _GL4_X[None, :]).ravel())
            parts_w.append(((b - a)[:, None] * _GL4_W[None, :]).ravel() * grid.h)
    s = np.concatenate(parts_s)
    w = np.concatenate(parts_w)
    f = _interp_frac(v, s)
    u = math.log(grid.r_min) + s * grid.h
    return u, np.abs(f), w


def _interp_frac(values, s):
    i0, w = lagrange_weights(len(values), s)
    idx = i0[..., None] + np.arange(STENCIL)
    return np.sum(values[idx] * w, axis=-1)


def _origin_parts(terms, r_min, alpha):
    """(int_0^{r_min} |f| r^{-1-alpha} dr, sup_{r<r_min} |f| r^{-alpha})."""
    terms = sorted((a, d) for a, d in terms if d != 0.0 and abs(d) > 1e-300)
    if not terms:
        return 0.0, 0.0
    a0, d0 = terms[0]
    if a0 < alpha:
        return math.inf, math.inf
    lim = abs(d0) if a0 == alpha else 0.0
    if a0 == alpha:
        return math.inf, max(lim, float(np.max(np.abs(OriginModel(tuple(terms)).one_minus(r_min)))
                                       * r_min ** -alpha))
    umin = math.log(r_min)
    if len(terms) == 1:
        return abs(d0) * r_min ** (a0 - alpha) / (a0 - alpha), abs(d0) * r_min ** (a0 - alpha)
    gap = terms[1][0] - a0
    span = min(40.0 / gap, 4000.0)
    # panels growing away from u_min
    widths = [0.25]
    while sum(widths) < span:
        widths.append(min(widths[-1] * 1.3, 8.0))
    edges = umin - np.concatenate([[0.0], np.cumsum(widths)])
    a_, b_ = edges[1:], edges[:-1]
    half = 0.5 * (b_ - a_)
    mid = 0.5 * (b_ + a_)
    u = (mid[:, None] + half[:, None] * _GL8_X[None, :]).ravel()
    w = (half[:, None] * _GL8_W[None, :]).ravel()
    model = OriginModel(tuple(terms))
    # |sum d r^a| r^-alpha, with r^(a - alpha) formed directly (a > alpha)
    f = np.abs(sum(d * np.exp((a - alpha) * u) for a, d in terms))
    u_end = edges[-1]
    far = abs(d0) * math.exp((a0 - alpha) * u_end) / (a0 - alpha)
    sup = max(float(np.max(f)), float(abs(model.one_minus(r_min))) * r_min ** -alpha, lim)
    return float(f @ w) + far, sup


def _tail_parts(prof, alpha):
    umax = math.log(prof.grid.r_max)
    span = 15.0
    edges = umax + np.linspace(0.0, span, 61)
    a_, b_ = edges[:-1], edges[1:]
    half = 0.5 * (b_ - a_)
    mid = 0.5 * (b_ + a_)
    u = (mid[:, None] + half[:, None] * _GL8_X[None, :]).ravel()
    w = (half[:, None] * _GL8_W[None, :]).ravel()
    f = np.abs(prof.tail(np.exp(u))) * np.exp(-alpha * u)
    far = abs(prof.tail_limit) * math.exp(-alpha * (umax + span)) / alpha
    sup = float(np.max(f)) if len(f) else 0.0
    return float(f @ w) + far, sup


def profile_malpha(prof, alpha, dim_factor=4.0 * math.pi):
    """4 pi int_0^inf |f(r)| r^{-1-alpha} dr."""
    head, _ = _origin_parts(prof.origin_terms, prof.grid.r_min, alpha)
    if math.isinf(head):
        return math.inf
    u, f, w = _interval_points(prof.grid, prof.node_values)
    body = float((f * np.exp(-alpha * u)) @ w)
    tail, _ = _tail_parts(prof, alpha)
    return dim_factor * (head + body + tail)


def profile_ksup(prof, alpha):
    """sup_r |f(r)| / r^alpha."""
    _, head = _origin_parts(prof.origin_terms, prof.grid.r_min, alpha)
    if math.isinf(head):
        return math.inf
    u, f, _ = _interval_points(prof.grid, prof.node_values)
    body = float(np.max(f * np.exp(-alpha * u)))
    nodes = float(np.max(np.abs(prof.node_values) * prof.grid.nodes ** -alpha))
    _, tail = _tail_parts(prof, alpha)
    return max(head, body, nodes, tail)


def norm_kalpha(phi, psi, alpha):
    """sup |phi - psi| / r^alpha, including the r -> 0 limit."""
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    return profile_ksup(difference_profile(phi, psi), alpha)


def norm_malpha(phi, psi, alpha):
    """int_{R^3} |phi - psi| / |xi|^{3+alpha} d xi."""
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    return profile_malpha(difference_profile(phi, psi), alpha)


def dis_metric(phi, psi, alpha, beta):
    """M^alpha norm plus K^beta norm of the difference."""
    if not 0.0 < beta <= alpha < 2.0:
        raise DomainError(f"need 0 < beta <= alpha < 2 (alpha={alpha}, beta={beta})")
    prof = difference_profile(phi, psi)
    return profile_malpha(prof, alpha) + profile_ksup(prof, beta)


# --------------------------------------------------------------------------
# positive definiteness
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PDReport:
    min_eigenvalue: float
    tol: float
    passed: bool


def check_positive_definite(phi, m=32, radius=2.0, seed=0, tol_pd=1e-8):
    """Smallest eigenvalue of [phi(|xi_j - xi_k|)] for seeded points in a ball."""
    if m < 2:
        raise DomainError("need at least two sample points")
    if phi.tail_kind is None and 2 * radius > phi.grid.r_max:
        raise InterpolationOutOfRange("sample distances exceed the grid and no tail model")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(m, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    rad = radius * rng.random(m) ** (1.0 / 3.0)
    pts = direction * rad[:, None]
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    mat = phi(dist)
    mat = 0.5 * (mat + mat.T)
    lam = float(np.linalg.eigvalsh(mat)[0])
    return PDReport(lam, tol_pd, lam >= -tol_pd)


# --------------------------------------------------------------------------
# snapshot files
# --------------------------------------------------------------------------

def _fmt_pairs(pairs):
    return ";".join(f"{a!r}:{b!r}" for a, b in pairs) if pairs else "-"


def _parse_pairs(tok):
    if tok in ("-", ""):
        return ()
    out = []
    for item in tok.split(";"):
        a, b = item.split(":")
        out.append((float(a), float(b)))
    return tuple(out)


def write_snapshot(path, phi):
    """Header ``bfr1 N r_min r_max alpha_loc c_loc tail_kind tail_params t``
    plus an ``origin=`` token, then one ``r value`` line per node."""
    g = phi.grid
    header = (f"bfr1 {g.n} {g.r_min!r} {g.r_max!r} {phi.alpha_loc!r} {phi.c_loc!r} "
              f"{phi.tail_kind or 'none'} {_fmt_pairs(phi.envelope)} {phi.t!r} "
              f"origin={_fmt_pairs(phi.origin.terms)}")
    lines = [header]
    for r, v in zip(g.nodes, phi.values):
        lines.append(f"{float(r)!r} {float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path):
    text = Path(path).read_text().splitlines()
    head = text[0].split()
    if head[0] != "bfr1" or len(head) < 9:
        raise DomainError(f"{path}: not a bfr1 snapshot")
    n, r_min, r_max = int(head[1]), float(head[2]), float(head[3])
    alpha_loc, c_loc = float(head[4]), float(head[5])
    tail_kind = None if head[6] == "none" else head[6]
    env = _parse_pairs(head[7])
    t = float(head[8])
    grid = RadialGrid(r_min, r_max, n)
    data = np.array([[float(x) for x in line.split()] for line in text[1:1 + n]])
    if data.shape != (n, 2):
        raise DomainError(f"{path}: expected {n} data lines")
    origin = None
    for tok in head[9:]:
        if tok.startswith("origin="):
            origin = OriginModel(_parse_pairs(tok[len("origin="):]))
    if origin is None:
        exps = origin_exponents((alpha_loc,), tuple(p for _, p in env))
        origin = OriginModel.fit(grid, 1.0 - data[:, 1], exps)
    return from_values(grid, data[:, 1], envelope=env, tail_kind=tail_kind, t=t, origin=origin)


def require_decay(phi):
    if phi.tail_kind != "decay":
        raise NotIntegrable("characteristic function has no decaying tail model")
