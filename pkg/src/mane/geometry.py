"""Charts and point reduction for the flat torus and the Sol 3-manifold.

Phase-space states are stored as flat arrays ``(q_1..q_n, p_1..p_n)`` with
any number of leading batch axes.  The small :class:`ChartPoint` and
:class:`PhasePoint` containers exist for single-point public calls.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LevelEmpty

BISECTION_TOL = 1e-12
BISECTION_MAXITER = 200


def make_rng(seed):
    """Counter-based generator; ``seed`` may be an int or a ``SeedSequence``."""
    return np.random.Generator(np.random.Philox(seed))


def split_state(state):
    state = np.asarray(state, dtype=float)
    n = state.shape[-1] // 2
    return state[..., :n], state[..., n:]


def join_state(q, p):
    return np.concatenate(np.broadcast_arrays(q, p), axis=-1)


@dataclass(frozen=True)
class ChartPoint:
    coords: np.ndarray

    def __post_init__(self):
        coords = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if coords.ndim != 1 or not np.all(np.isfinite(coords)):
            raise ValueError("chart point must be a finite 1-d vector")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self):
        return self.coords.size


@dataclass(frozen=True)
class PhasePoint:
    q: ChartPoint
    p: np.ndarray

    def __post_init__(self):
        q = self.q if isinstance(self.q, ChartPoint) else ChartPoint(self.q)
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if p.shape != q.coords.shape:
            raise ValueError(f"momentum has dimension {p.size}, position {q.dim}")
        if not np.all(np.isfinite(p)):
            raise ValueError("momentum must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def state(self):
        return np.concatenate([self.q.coords, self.p])

    @classmethod
    def from_state(cls, state):
        q, p = split_state(state)
        return cls(ChartPoint(q), p)


def as_state(pt):
    """Flat state array from a :class:`PhasePoint` or anything array-like."""
    if isinstance(pt, PhasePoint):
        return pt.state
    return np.asarray(pt, dtype=float)


@dataclass(frozen=True)
class TorusChart:
    """Standard angle coordinates on ``R^n / (period * Z^n)``."""

    dim: int
    period: np.ndarray = field(default=None)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("torus dimension must be positive")
        period = np.ones(self.dim) if self.period is None else self.period
        period = np.broadcast_to(np.asarray(period, dtype=float), (self.dim,)).copy()
        if np.any(period <= 0):
            raise ValueError("periods must be positive")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "period", period)

    def wrap(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {q.shape[-1]}")
        w = np.mod(q, self.period)
        # mod can round up to the period itself for tiny negative inputs
        return np.where(w >= self.period, w - self.period, w)

    def reduce(self, state):
        q, p = split_state(state)
        return join_state(self.wrap(q), p)

    def difference(self, q1, q0):
        """Minimal-image displacement ``q1 - q0``."""
        d = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
        return d - self.period * np.round(d / self.period)

    def sample(self, rng, n):
        return rng.uniform(0.0, 1.0, size=(n, self.dim)) * self.period

    def closed_forms(self):
        """Constant coefficients of the harmonic basis ``dq_1..dq_n``."""
        return np.eye(self.dim)


def wrap_torus(q, chart):
    """Reduce ``q`` into the fundamental domain ``[0, period)`` of ``chart``."""
    if isinstance(q, ChartPoint):
        return ChartPoint(chart.wrap(q.coords))
    return chart.wrap(q)


@dataclass(frozen=True)
class SolLattice:
    """Cocompact lattice in Sol built from a hyperbolic ``A`` in SL(2, Z).

    ``P`` diagonalises ``A`` as ``P A P^-1 = diag(lam, 1/lam)``; the lattice is
    the image of ``(m, n, l) -> (P (m, n), l log(lam))``.
    """

    A: np.ndarray
    P: np.ndarray
    lam: float

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.shape != (2, 2) or not np.issubdtype(A.dtype, np.integer):
            raise ValueError("A must be a 2x2 integer matrix")
        det = int(A[0, 0]) * int(A[1, 1]) - int(A[0, 1]) * int(A[1, 0])
        if det != 1:
            raise ValueError(f"det A = {det}, expected 1")
        if int(A[0, 0]) + int(A[1, 1]) <= 2:
            raise ValueError("A must have trace > 2")
        if not self.lam > 1:
            raise ValueError("lam must exceed 1")
        P = np.asarray(self.P, dtype=float)
        err = np.abs(P @ A @ np.linalg.inv(P) - np.diag([self.lam, 1.0 / self.lam])).max()
        if err > 1e-12:
            raise ValueError(f"P does not diagonalise A (error {err:.2e})")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "P", P)

    @classmethod
    def from_matrix(cls, A=((2, 1), (1, 1))):
        A = np.asarray(A, dtype=np.int64)
        # rows of P are left eigenvectors of A
        w, V = np.linalg.eig(A.T.astype(float))
        order = np.argsort(-w.real)
        w, V = w.real[order], V.real[:, order]
        P = V.T / np.linalg.norm(V.T, axis=1, keepdims=True)
        P *= np.sign(P[np.arange(2), np.argmax(np.abs(P), axis=1)])[:, None]
        return cls(A, P, float(w[0]))

    @property
    def height(self):
        """Length ``log(lam)`` of the fundamental domain in ``z``."""
        return float(np.log(self.lam))

    @property
    def P_inv(self):
        return np.linalg.inv(self.P)


@dataclass(frozen=True)
class SolChart:
    lattice: SolLattice = field(default_factory=SolLattice.from_matrix)
    dim: int = 3

    def reduce(self, state):
        return reduce_sol(state, self.lattice)

    def sample(self, rng, n):
        s = rng.uniform(0.0, 1.0, size=(n, 2))
        z = rng.uniform(0.0, self.lattice.height, size=(n, 1))
        return np.concatenate([s @ self.lattice.P.T, z], axis=1)

    def closed_forms(self):
        # dz generates H^1 of the torus bundle
        return np.array([[0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ProductChart:
    """``base x S^1``; the circle coordinate ``t`` is appended last."""

    base: object
    period: float = 1.0

    @property
    def dim(self):
        return self.base.dim + 1

    def _split(self, state):
        q, p = split_state(state)
        return q[..., :-1], q[..., -1:], p[..., :-1], p[..., -1:]

    def reduce(self, state):
        x, t, px, pt = self._split(state)
        xr, pr = split_state(self.base.reduce(join_state(x, px)))
        t = np.mod(t, self.period)
        return join_state(np.concatenate([xr, t], -1), np.concatenate([pr, pt], -1))

    def difference(self, q1, q0):
        d = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
        base = self.base.difference(q1[..., :-1], q0[..., :-1])
        dt = d[..., -1:] - self.period * np.round(d[..., -1:] / self.period)
        return np.concatenate([base, dt], -1)

    def sample(self, rng, n):
        x = self.base.sample(rng, n)
        return np.concatenate([x, rng.uniform(0.0, self.period, size=(n, 1))], axis=1)

    def closed_forms(self):
        base = self.base.closed_forms()
        top = np.concatenate([base, np.zeros((base.shape[0], 1))], axis=1)
        dt = np.zeros((1, self.dim))
        dt[0, -1] = 1.0
        return np.concatenate([top, dt], axis=0)


def reduce_sol(pt, lat):
    """Move a Sol phase point into the fundamental domain of ``lat``.

    ``z`` is brought into ``[0, log lam)`` with the deck map
    ``(x, y, z) -> (lam^-l x, lam^l y, z - l log lam)`` (momenta transform by
    the inverse transpose of its differential), then ``(x, y)`` is reduced
    modulo ``P Z^2``.  Left-invariant momenta are unchanged.
    """
    state = as_state(pt)
    if state.shape[-1] != 6:
        raise ValueError("a Sol phase point has 3 position and 3 momentum coordinates")
    x, y, z, px, py, pz = np.moveaxis(state, -1, 0)
    L = lat.height
    shift = np.floor(z / L)
    z = z - shift * L
    # guard round-off leaving z == L
    over = z >= L
    shift, z = np.where(over, shift + 1, shift), np.where(over, z - L, z)
    e = np.exp(shift * L)
    x, y, px, py = x / e, y * e, px * e, py / e
    s = np.stack([x, y], -1) @ lat.P_inv.T
    s = s - np.floor(s)
    s = np.where(s >= 1.0, s - 1.0, s)
    xy = s @ lat.P.T
    out = np.stack([xy[..., 0], xy[..., 1], z, px, py, pz], -1)
    return PhasePoint.from_state(out) if isinstance(pt, PhasePoint) else out


def sample_level_set(H, k, n, seed=0):
    """Sample ``n`` points of the level set ``H = k``.

    Base points are uniform on the chart's fundamental domain.  On each fibre
    the momentum is found by bisection along a random ray from the fibrewise
    minimiser; convexity makes the root unique.

    Returns an ``(n, 2 dim)`` array of states.
    """
    rng = make_rng(seed)
    q = H.chart.sample(rng, n)
    p0 = H.fiber_minimizer(q)
    fmin = H.value(q, p0)
    if np.any(fmin >= k):
        i = int(np.argmax(fmin))
        raise LevelEmpty(
            f"fibre minimum {fmin[i]:.6g} >= level {k} at base point {q[i].tolist()}"
        )
    d = rng.standard_normal(size=(n, H.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)

    def excess(t):
        return H.value(q, p0 + t[:, None] * d) - k

    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(200):
        bad = excess(hi) <= 0
        if not bad.any():
            break
        lo = np.where(bad, hi, lo)
        hi = np.where(bad, 2 * hi, hi)
    for _ in range(BISECTION_MAXITER):
        mid = 0.5 * (lo + hi)
        above = excess(mid) > 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.max(hi - lo) < BISECTION_TOL:
            break
    t = 0.5 * (lo + hi)
    # one secant-free Newton polish along the ray
    p = p0 + t[:, None] * d
    slope = np.einsum("ij,ij->i", H.grad_p(q, p), d)
    t = t - excess(t) / slope
    return join_state(q, p0 + t[:, None] * d)
