"""Stabilising 1-forms for suspended Hamiltonians, and the two reparametrisation tools.

The suspension stabiliser is ``lambda = f(p_t) pi^*alpha + g(p_t) dt`` where
``f`` is an even plateau bump, ``r(s)`` is the value of ``alpha(X_H)`` on the
level ``k - s^2/2`` and ``g(s) = -int_0^s r(u) f'(u) / u du``.  With these
choices ``i_X d lambda = -(r f' + p_t g') dp_t = 0`` and
``lambda(X) = f r + g p_t > 0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.interpolate import BPoly, CubicSpline
from scipy.optimize import brentq

from .errors import (ConvexityCheckFailed, MonotonicityViolation, NotLevelConstant,
                     ParameterChainInvalid)
from .forms import OneFormField, exterior_derivative
from .geometry import make_rng, sample_level_set, split_state

LEVEL_SPREAD_TOL = 1e-6
CONTRACTION_THRESHOLD = 1e-4


# ---------------------------------------------------------------------------
# smooth step profiles

def _psi(t):
    safe = np.where(t > 1e-3, t, 1.0)
    return np.where(t > 1e-3, np.exp(-1.0 / safe), 0.0), safe


def _psi_derivs(t):
    v, s = _psi(t)
    return v, v / s ** 2, v * (1.0 - 2.0 * s) / s ** 4


def flat_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1; returns value, d/dt, d2/dt2."""
    t = np.asarray(t, dtype=float)
    a, a1, a2 = _psi_derivs(t)
    b, b1, b2 = _psi_derivs(1.0 - t)
    b1, b2 = -b1, b2          # chain rule for the reflected argument
    D = a + b
    N = a1 * b - a * b1
    S = a / D
    S1 = N / D ** 2
    S2 = (a2 * b - a * b2) / D ** 2 - 2.0 * N * (a1 + b1) / D ** 3
    return S, S1, S2


# degree-7 smoothstep, C^3 at both ends
SMOOTHSTEP = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
SMOOTHSTEP_INT = SMOOTHSTEP.integ()


def _clip01(t):
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True)
class BumpFunction:
    """Even bump: 1 on ``|s| <= eps/2``, 0 on ``|s| >= eps``, monotone between."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def _parts(self, s):
        s = np.asarray(s, dtype=float)
        t = (self.eps - np.abs(s)) / (0.5 * self.eps)
        return s, flat_step(t)

    def __call__(self, s):
        return self._parts(s)[1][0]

    def derivative(self, s, order=1):
        s, (S, S1, S2) = self._parts(s)
        k = 2.0 / self.eps
        if order == 1:
            return -np.sign(s) * k * S1
        if order == 2:
            return k * k * S2
        raise ValueError("order must be 1 or 2")


# ---------------------------------------------------------------------------
# r-profile and g

@dataclass
class Profile:
    """Even spline ``s -> r(s)`` tabulated on ``|s| <= s_max``."""

    spline: CubicSpline
    s_max: float
    k: float
    spread: float

    def __call__(self, s):
        return self.spline(np.abs(np.asarray(s, dtype=float)))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * self.spline(np.abs(s), 1)

    def scaled(self, c):
        return Profile(CubicSpline(self.spline.x, c * self.spline(self.spline.x)),
                       self.s_max, self.k, abs(c) * self.spread)


def r_profile(alpha, H, k, delta, samples=32, levels=161, seed=0):
    """Tabulate ``r(s) = alpha(X_H)`` on the level ``k - s^2/2``.

    ``alpha(X_H)`` must be constant on each sampled level (spread below
    ``1e-6``), otherwise :class:`NotLevelConstant` is raised.
    """
    s_max = np.sqrt(2.0 * delta) * (1.0 - 1e-3)
    s = np.linspace(0.0, s_max, levels)
    r = np.empty(levels)
    worst = 0.0
    ss = np.random.SeedSequence(seed).spawn(levels)
    for i, si in enumerate(s):
        level = k - 0.5 * si * si
        z = sample_level_set(H, level, samples, ss[i])
        vals = alpha(z, H.vector_field(z))
        spread = float(np.max(vals) - np.min(vals))
        if spread > LEVEL_SPREAD_TOL * max(1.0, abs(np.mean(vals))):
            raise NotLevelConstant(f"alpha(X_H) varies by {spread:.3e} on level {level:.6g}")
        worst = max(worst, spread)
        r[i] = np.mean(vals)
    # mirror so the spline is even with zero slope at s = 0
    xs = np.concatenate([-s[:0:-1], s])
    ys = np.concatenate([r[:0:-1], r])
    spline = CubicSpline(xs, ys)
    return Profile(CubicSpline(s, spline(s), bc_type=((1, 0.0), "not-a-knot")), s_max, k, worst)


@dataclass
class GFunction:
    """Odd, non-decreasing ``g`` with ``g(0) = 0``, constant beyond ``eps``."""

    poly: BPoly
    eps: float
    r: object
    f: BumpFunction

    @property
    def plateau(self):
        return float(self.poly(self.eps))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        a = np.clip(np.abs(s), 0.5 * self.eps, self.eps)
        return np.sign(s) * np.where(np.abs(s) <= 0.5 * self.eps, 0.0, self.poly(a))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        inside = (a > 0.5 * self.eps) & (a < self.eps)
        return np.where(inside, self.poly(np.clip(a, 0.5 * self.eps, self.eps), 1), 0.0)

    def integrand(self, s):
        """``-r(s) f'(s) / s``, extended by 0 where ``f'`` vanishes."""
        s = np.asarray(s, dtype=float)
        safe = np.where(np.abs(s) > 0.25 * self.eps, s, 1.0)
        return np.where(np.abs(s) > 0.25 * self.eps,
                        -self.r(s) * self.f.derivative(s) / safe, 0.0)


def g_from_integral(r, f, nodes=401):
    """Build ``g(s) = -int_0^s r(u) f'(u)/u du`` by adaptive quadrature.

    ``g`` is tabulated on ``[eps/2, eps]`` and interpolated by a quintic
    Hermite spline through the exact values of ``g``, ``g'`` and ``g''``.
    """
    eps = f.eps
    if eps >= r.s_max:
        raise ValueError(f"eps={eps} must be below sqrt(2 delta) ~ {r.s_max:.6g}")
    s = np.linspace(0.5 * eps, eps, nodes)
    fp, fpp = f.derivative(s, 1), f.derivative(s, 2)
    rr, rp = r(s), r.derivative(s)
    d1 = -rr * fp / s
    d2 = -(rp * fp + rr * fpp) / s + rr * fp / s ** 2

    def integrand(u):
        return float(-r(u) * f.derivative(u) / u)

    vals = np.zeros(nodes)
    for i in range(1, nodes):
        piece, _ = quad(integrand, s[i - 1], s[i], epsabs=1e-15, epsrel=1e-10)
        vals[i] = vals[i - 1] + piece
    poly = BPoly.from_derivatives(s, np.stack([vals, d1, d2], -1))
    return GFunction(poly, eps, r, f)


def suspension_stabilizer(alpha, f, g):
    """``lambda = f(p_t) pi^*alpha + g(p_t) dt`` on the suspension.

    States of the suspension are ``(x, t, p, p_t)``.  ``alpha`` is only
    evaluated where ``f(p_t) != 0``, so it may be undefined elsewhere.
    """
    n = alpha.dim

    def lam(z, v):
        z, v = np.broadcast_arrays(z, v)
        lead = z.shape[:-1]
        z2 = z.reshape(-1, z.shape[-1])
        v2 = v.reshape(-1, v.shape[-1])
        pt = z2[:, 2 * n + 1]
        out = g(pt) * v2[:, n]
        fv = f(pt)
        m = fv != 0
        if np.any(m):
            zb = np.concatenate([z2[m, :n], z2[m, n + 1:2 * n + 1]], -1)
            vb = np.concatenate([v2[m, :n], v2[m, n + 1:2 * n + 1]], -1)
            out[m] += fv[m] * alpha(zb, vb)
        return out.reshape(lead)

    return OneFormField(lam, n + 1, name="lambda")


@dataclass
class StabilityCertificate:
    level: float
    samples: int
    min_lambda_X: float
    max_contraction: float
    eps: float = None
    delta: float = None
    thresholds: dict = field(default_factory=lambda: {"min_lambda_X": 0.0,
                                                      "max_contraction": CONTRACTION_THRESHOLD})

    def __post_init__(self):
        if not (np.isfinite(self.min_lambda_X) and np.isfinite(self.max_contraction)):
            raise ValueError("certificate statistics must be finite")

    @property
    def passed(self):
        return (self.min_lambda_X > self.thresholds["min_lambda_X"]
                and self.max_contraction <= self.thresholds["max_contraction"])

    def report(self):
        return {
            "level": self.level,
            "samples": self.samples,
            "min_lambda_X": self.min_lambda_X,
            "max_contraction": self.max_contraction,
            "eps": self.eps,
            "delta": self.delta,
            "pass": self.passed,
            "thresholds": self.thresholds,
        }

    def to_json(self):
        return json.dumps(self.report(), sort_keys=True)


def verify_stability(lam, Hbar, k, n_samples=10_000, seed=0, directions=8,
                     eps=None, delta=None, batch=2048):
    """Sample ``Hbar = k`` and measure ``min lambda(X)`` and ``max |i_X d lambda|``.

    Contraction is tested against random unit vectors of the ambient phase
    space, so a form whose ``i_X d lambda`` is a multiple of ``dH`` fails.
    """
    seeds = np.random.SeedSequence(seed).spawn(2)
    z = sample_level_set(Hbar, k, n_samples, seeds[0])
    rng = make_rng(seeds[1])
    dlam = exterior_derivative(lam)
    lam_min = np.inf
    contraction = 0.0
    for start in range(0, n_samples, batch):
        zb = z[start:start + batch]
        X = Hbar.vector_field(zb)
        lam_min = min(lam_min, float(np.min(lam(zb, X))))
        for _ in range(directions):
            v = rng.standard_normal(zb.shape)
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            contraction = max(contraction, float(np.max(np.abs(dlam(zb, X, v)))))
    return StabilityCertificate(float(k), int(n_samples), float(lam_min), contraction,
                                eps, delta)


# ---------------------------------------------------------------------------
# blending family

@dataclass(frozen=True)
class _Aux:
    """Auxiliary profiles ``alpha``, ``beta0``, ``beta1`` with first derivatives."""

    delta1: float
    delta: float
    eps2: float
    eps1: float

    @property
    def beta0_plateau(self):
        return 0.5 * (self.eps1 + self.eps2)

    @property
    def beta1_plateau(self):
        return 0.5 * (self.delta1 + self.delta)

    def alpha(self, r):
        w = self.eps1 - self.delta1
        t = _clip01((np.abs(r) - self.delta1) / w)
        return SMOOTHSTEP(t), np.sign(r) * SMOOTHSTEP.deriv()(t) / w

    def beta0(self, r):
        a = np.abs(r)
        c0, d1, e2, e1 = self.beta0_plateau, self.delta1, self.eps2, self.eps1
        t_in = _clip01(a / d1)
        t_mid = _clip01((a - e2) / (e1 - e2))
        val = np.where(a < d1, c0 * SMOOTHSTEP(t_in),
                       np.where(a <= e2, c0,
                                np.where(a < e1, c0 + (e1 - e2) * SMOOTHSTEP_INT(t_mid), a)))
        der = np.where(a < d1, c0 * SMOOTHSTEP.deriv()(t_in) / d1,
                       np.where(a <= e2, 0.0, np.where(a < e1, SMOOTHSTEP(t_mid), 1.0)))
        return np.sign(r) * val, der

    def beta1(self, r):
        a = np.abs(r)
        d1, d = self.delta1, self.delta
        t = _clip01((a - d1) / (d - d1))
        val = np.where(a <= d1, a, d1 + (d - d1) * (t - SMOOTHSTEP_INT(t)))
        der = np.where(a <= d1, 1.0, 1.0 - SMOOTHSTEP(t))
        return np.sign(r) * val, der


@dataclass
class BlendFamily:
    """``g_r(x) = alpha(r) beta0(r) + (1 - alpha(r)) f_{beta1(r)}(x)``."""

    f: object
    df: object
    aux: _Aux
    eps: float

    def __call__(self, x, r):
        x, r = np.broadcast_arrays(np.asarray(x, float), np.asarray(r, float))
        a, _ = self.aux.alpha(r)
        b0, _ = self.aux.beta0(r)
        b1, _ = self.aux.beta1(r)
        return a * b0 + (1 - a) * self.f(x, b1)

    def dr(self, x, r):
        """Closed-form ``d g_r / d r``."""
        x, r = np.broadcast_arrays(np.asarray(x, float), np.asarray(r, float))
        a, da = self.aux.alpha(r)
        b0, db0 = self.aux.beta0(r)
        b1, db1 = self.aux.beta1(r)
        return da * (b0 - self.f(x, b1)) + (1 - a) * db1 * self.df(x, b1) + a * db0


def blend_families(f, df, eps, delta, delta1, eps1, eps2, xs=None, rs=None):
    """Blend a family ``f_r`` (``|r| < delta``) into ``g_r`` on ``|r| < eps``.

    ``g_r = f_r`` for ``|r| <= delta1`` and ``g_r = r`` for ``|r| >= eps1``.
    Monotonicity ``d g_r / d r > 0`` is checked on the ``(xs, rs)`` grid.
    """
    if not (0 < delta1 < delta < eps2 < eps1 < eps):
        raise ParameterChainInvalid(
            f"need 0 < delta1 < delta < eps2 < eps1 < eps, got "
            f"{delta1}, {delta}, {eps2}, {eps1}, {eps}")
    fam = BlendFamily(f, df, _Aux(delta1, delta, eps2, eps1), eps)
    xs = np.linspace(0.0, 1.0, 32, endpoint=False) if xs is None else np.asarray(xs)
    rs = np.linspace(-eps, eps, 1001) if rs is None else np.asarray(rs)
    X, R = np.meshgrid(xs, rs, indexing="ij")
    d = fam.dr(X, R)
    if not np.all(d > 0):
        i = np.unravel_index(np.argmin(d), d.shape)
        raise MonotonicityViolation(
            f"d g_r/dr = {d[i]:.3e} at x={X[i]:.6g}, r={R[i]:.6g}")
    return fam


# ---------------------------------------------------------------------------
# convexifying reparametrisation

@dataclass
class ReparamFunction:
    """``h(r) = r`` below ``k - eps``, ``exp(A r) + B`` above ``k - eps1``.

    Between the two, ``h''`` is a non-negative polynomial spline chosen so
    that ``h`` is C^2 at both matching points.
    """

    k: float
    eps: float
    eps1: float
    A: float
    B: float
    knots: tuple
    pieces: tuple       # (h, h', h'') per knot interval, in the local variable
    ratio_max: float = 0.0

    @property
    def r0(self):
        return self.k - self.eps

    @property
    def r1(self):
        return self.k - self.eps1

    def derivative(self, r, order=0):
        r = np.asarray(r, dtype=float)
        ell = self.r1 - self.r0
        tau = (r - self.r0) / ell
        mid = np.zeros(r.shape)
        for lo, hi, polys in zip(self.knots[:-1], self.knots[1:], self.pieces):
            sel = (tau >= lo) & (tau <= hi)
            sigma = np.clip((tau - lo) / (hi - lo), 0.0, 1.0)
            mid = np.where(sel, polys[order](sigma), mid)
        e = np.exp(self.A * r)
        top = (e + self.B, self.A * e, self.A ** 2 * e)[order]
        low = (r, np.ones(r.shape), np.zeros(r.shape))[order]
        return np.where(r <= self.r0, low, np.where(r >= self.r1, top, mid))

    def __call__(self, r):
        return self.derivative(r, 0)

    def compose(self, H):
        return lambda q, p: self(H.value(q, p))


def _reparam_polys(r0, r1, A, front=0.5):
    """Piecewise polynomials (in ``tau = (r - r0)/(r1 - r0)``) for ``h`` on the gap.

    ``h''`` is a bump on ``[0, front]`` carrying most of the growth of ``h'``,
    then zero, then a smoothstep ramp reaching ``A^2 exp(A r1)`` at ``tau = 1``.
    Returns knots, pieces and ``B``.
    """
    ell = r1 - r0
    D1 = A * np.exp(A * r1)
    D2 = A * D1
    if D1 <= 1.0:
        raise ValueError("h'(k - eps1) = A exp(A (k - eps1)) must exceed 1")
    width = min(1.0 - front, (1.0 - 1.0 / D1) / (A * ell))
    tau0 = 1.0 - width
    K = max((D1 - 1.0) / ell - D2 * width / 2.0, 0.0)
    bump = Polynomial([0, 0, 30, -60, 30])          # unit mass on [0, 1]
    knots = (0.0, front, tau0, 1.0)
    # each piece is a polynomial in its local variable sigma in [0, 1]
    h2s = (K / front * bump, Polynomial([0.0]), D2 * SMOOTHSTEP)
    pieces = []
    h1_start, h0_start = 1.0, r0
    for lo, hi, h2 in zip(knots[:-1], knots[1:], h2s):
        w = ell * (hi - lo)
        h1 = h1_start + w * h2.integ()
        h0 = h0_start + w * h1.integ()
        pieces.append((h0, h1, h2))
        h1_start, h0_start = h1(1.0), h0(1.0)
    return knots, tuple(pieces), h0_start - np.exp(A * r1)


def fiber_hessian_fd(fun, q, p, h=1e-4):
    """Central-difference Hessian of ``p -> fun(q, p)``, batched over rows."""
    n = p.shape[-1]
    Hs = np.empty(p.shape + (n,))
    f0 = fun(q, p)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        Hs[..., i, i] = (fun(q, p + ei) - 2 * f0 + fun(q, p - ei)) / h ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            v = (fun(q, p + ei + ej) - fun(q, p + ei - ej)
                 - fun(q, p - ei + ej) + fun(q, p - ei - ej)) / (4 * h * h)
            Hs[..., i, j] = Hs[..., j, i] = v
    return Hs


def convexify_reparam(H, k, eps, eps1, n_samples=1000, seed=0, safety=1.1):
    """Choose ``A``, ``B`` and the C^2 spline so that ``h o H`` is fibrewise convex.

    ``A`` exceeds ``safety`` times the band maximum of
    ``|d2H(grad H, grad H)| / dH(grad H)`` (fibre derivatives, flat metric)
    and is large enough that ``h' >= 1``.  Convexity of ``h o H`` is then
    re-checked with finite-difference fibre Hessians at random points with
    ``H`` in ``[k - eps, k + eps1]``.
    """
    if not 0 < eps1 < eps:
        raise ValueError("need 0 < eps1 < eps")
    r0, r1 = k - eps, k - eps1
    seeds = np.random.SeedSequence(seed).spawn(3)
    lv = make_rng(seeds[0]).uniform(k - eps1, k + eps1, n_samples)
    z = sample_level_set(H, lv, n_samples, seeds[1])
    q, p = split_state(z)
    g = H.grad_p(q, p)
    quad_form = np.einsum("...i,...ij,...j->...", g, H.hess_pp(q, p), g)
    ratio_max = float(np.max(np.abs(quad_form) / np.sum(g * g, axis=-1)))
    A = safety * ratio_max
    if r1 <= 0:
        raise ValueError("the exponential branch needs k - eps1 > 0")
    A_floor = brentq(lambda a: a * np.exp(a * r1) - 1.0, 0.0, 1.0 / r1 + 50.0)
    A = max(A, safety * A_floor)
    knots, pieces, B = _reparam_polys(r0, r1, A)
    for _ in range(200):
        if B > 0:
            break
        A *= 1.25
        knots, pieces, B = _reparam_polys(r0, r1, A)
    else:
        raise ValueError("no positive B found; widen the gap eps - eps1")
    h = ReparamFunction(k, eps, eps1, A, float(B), knots, pieces, ratio_max)

    lv = make_rng(seeds[2]).uniform(k - eps, k + eps1, n_samples)
    z = sample_level_set(H, lv, n_samples, np.random.SeedSequence(seed + 1))
    q, p = split_state(z)
    Hs = fiber_hessian_fd(h.compose(H), q, p)
    eig = np.linalg.eigvalsh(Hs)
    if not np.all(eig[..., 0] > 0):
        i = int(np.argmin(eig[..., 0]))
        raise ConvexityCheckFailed(
            f"fibre Hessian eigenvalue {eig[i, 0]:.3e} at {z[i].tolist()}")
    h.min_eigenvalue = float(np.min(eig[..., 0]))
    return h
