"""Numerical estimation of the strict critical value ``c_0``.

``c_0(H) = inf over closed 1-forms theta of max_x H(x, theta_x)``.  Closed
forms are parametrised as a constant harmonic part plus ``du`` for a
potential ``u`` sampled on a periodic grid.  The inner max is smoothed by
log-sum-exp at an increasing inverse temperature and minimised by gradient
descent with Armijo backtracking; the reported value is always the exact
(unsmoothed) grid max at a visited form, so smoothing never over-claims.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import fft
from scipy.special import logsumexp, softmax

from .errors import Diverged, NonZeroHomology
from .geometry import SolLattice, TorusChart
from .hamiltonian import lagrangian_eval, suspend

DEFAULT_SCHEDULE = (10.0, 100.0, 1000.0, 10000.0)
ITERATIONS_PER_STAGE = 500
ARMIJO_C = 1e-4


def _spectral_derivative(u, axis, period):
    n = u.shape[axis]
    k = fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0  # drop Nyquist so the operator stays real and skew
    shape = [1] * u.ndim
    shape[axis] = n
    mult = (2j * np.pi / period) * k.reshape(shape)
    return fft.ifft(mult * fft.fft(u, axis=axis), axis=axis).real


class TorusGrid:
    """Uniform grid on a flat torus with spectral derivatives."""

    def __init__(self, shape, chart=None):
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        self.chart = TorusChart(len(shape)) if chart is None else chart
        if len(shape) != self.chart.dim:
            raise ValueError("grid shape does not match chart dimension")
        if min(shape) < 2:
            raise ValueError("grid needs at least two points per axis")
        self.shape = shape
        axes = [np.arange(n) * (P / n) for n, P in zip(shape, self.chart.period)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], -1)
        self.harmonic = self.chart.closed_forms()

    @property
    def base_ndim(self):
        return len(self.shape)

    def partials(self, u):
        """Coordinate partials of ``u`` (extra trailing axes allowed)."""
        return [_spectral_derivative(u, j, P) for j, P in enumerate(self.chart.period)]

    def partials_adjoint(self, parts):
        return -sum(_spectral_derivative(g, j, P)
                    for j, (g, P) in enumerate(zip(parts, self.chart.period)))

    def gradient(self, u):
        return np.stack([d.ravel() for d in self.partials(u)], -1)

    def gradient_adjoint(self, G):
        parts = [G[:, j].reshape(self.shape) for j in range(G.shape[1])]
        return self.partials_adjoint(parts)


class SolGrid:
    """Grid on the torus bundle ``Gamma \\ Sol`` with twisted periodicity.

    Nodes are ``(x, y) = P s``, ``z = w log(lam)`` with ``s`` on an ``n x n``
    grid of the unit square and ``w`` on ``nz`` levels.  Crossing ``w = 1``
    maps ``s`` to ``A^-1 s``, which permutes grid nodes exactly.
    Derivatives are centred differences.
    """

    def __init__(self, n, nz=None, lattice=None):
        self.lattice = SolLattice.from_matrix() if lattice is None else lattice
        nz = n if nz is None else nz
        self.shape = (int(n), int(n), int(nz))
        if min(self.shape) < 3:
            raise ValueError("grid needs at least three points per axis")
        i, j, k = np.meshgrid(*(np.arange(m) for m in self.shape), indexing="ij")
        s = np.stack([i, j], -1) / n
        xy = s @ self.lattice.P.T
        z = k * (self.lattice.height / nz)
        self.points = np.concatenate([xy, z[..., None]], -1).reshape(-1, 3)
        self.harmonic = np.array([[0.0, 0.0, 1.0]])
        A = self.lattice.A
        Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])
        ij = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), -1)
        self._up = np.mod(ij @ Ainv.T, n)   # neighbour above the top layer
        self._down = np.mod(ij @ A.T, n)    # neighbour below the bottom layer
        self._Pinv = self.lattice.P_inv

    @property
    def base_ndim(self):
        return 3

    def _dw(self, u):
        n, _, nz = self.shape
        up = np.roll(u, -1, axis=2)
        down = np.roll(u, 1, axis=2)
        up[:, :, nz - 1] = u[self._up[..., 0], self._up[..., 1], 0]
        down[:, :, 0] = u[self._down[..., 0], self._down[..., 1], nz - 1]
        return (up - down) * (nz / 2.0)

    def _ds(self, u, axis):
        n = self.shape[axis]
        return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) * (n / 2.0)

    def partials(self, u):
        d1, d2 = self._ds(u, 0), self._ds(u, 1)
        # d/d(x, y) = P^-T d/ds
        Pi = self._Pinv
        dx = Pi[0, 0] * d1 + Pi[1, 0] * d2
        dy = Pi[0, 1] * d1 + Pi[1, 1] * d2
        dz = self._dw(u) / self.lattice.height
        return [dx, dy, dz]

    def partials_adjoint(self, parts):
        gx, gy, gz = parts
        Pi = self._Pinv
        g1 = Pi[0, 0] * gx + Pi[0, 1] * gy
        g2 = Pi[1, 0] * gx + Pi[1, 1] * gy
        return -(self._ds(g1, 0) + self._ds(g2, 1) + self._dw(gz / self.lattice.height))

    def gradient(self, u):
        return np.stack([d.ravel() for d in self.partials(u)], -1)

    def gradient_adjoint(self, G):
        return self.partials_adjoint([G[:, j].reshape(self.shape) for j in range(3)])


class SuspendedGrid:
    """``base x S^1`` with ``nt`` spectral points on the unit circle."""

    def __init__(self, base, nt=16):
        self.base = base
        self.nt = int(nt)
        self.shape = tuple(base.shape) + (self.nt,)
        t = np.arange(self.nt) / self.nt
        nb = base.points.shape[0]
        self.points = np.concatenate(
            [np.repeat(base.points, self.nt, axis=0), np.tile(t, nb)[:, None]], -1)
        hb = base.harmonic
        top = np.concatenate([hb, np.zeros((hb.shape[0], 1))], 1)
        dt = np.zeros((1, hb.shape[1] + 1))
        dt[0, -1] = 1.0
        self.harmonic = np.concatenate([top, dt], 0)

    @property
    def base_ndim(self):
        return len(self.shape)

    def partials(self, u):
        return self.base.partials(u) + [_spectral_derivative(u, len(self.shape) - 1, 1.0)]

    def partials_adjoint(self, parts):
        return (self.base.partials_adjoint(parts[:-1])
                - _spectral_derivative(parts[-1], len(self.shape) - 1, 1.0))

    def gradient(self, u):
        return np.stack([d.ravel() for d in self.partials(u)], -1)

    def gradient_adjoint(self, G):
        return self.partials_adjoint([G[:, j].reshape(self.shape) for j in range(G.shape[1])])


@dataclass
class ClosedOneFormParam:
    """``theta = sum_i harmonic[i] h_i + du`` with zero-mean ``u``."""

    harmonic: np.ndarray
    potential: np.ndarray

    def __post_init__(self):
        self.harmonic = np.asarray(self.harmonic, dtype=float)
        self.potential = np.asarray(self.potential, dtype=float)
        if self.potential.size == 0:
            raise ValueError("potential grid is empty")
        self.potential = self.potential - self.potential.mean()

    def covectors(self, grid):
        return self.harmonic @ grid.harmonic + grid.gradient(self.potential)


@dataclass
class CriticalEstimate:
    value: float
    minimizing_form: ClosedOneFormParam
    upper_bound: float
    grid: tuple
    history: list = field(default_factory=list)
    iterations: int = 0
    lower_bound: Optional[float] = None

    def report(self):
        return {
            "value": self.value,
            "upper_bound": self.upper_bound,
            "lower_bound": self.lower_bound,
            "grid": list(self.grid),
            "iterations": self.iterations,
            "harmonic_coefficients": self.minimizing_form.harmonic.tolist(),
        }

    def to_json(self):
        return json.dumps(self.report(), sort_keys=True)


def grid_max(H, grid, form):
    return float(np.max(H.value(grid.points, form.covectors(grid))))


def estimate_e(H, grid):
    """``e = max_x min_p H(x, p)`` over the grid nodes."""
    q = grid.points
    return float(np.max(H.value(q, H.fiber_minimizer(q))))


def estimate_c0(H, grid, schedule=DEFAULT_SCHEDULE, iterations=ITERATIONS_PER_STAGE,
                initial=None):
    """Min-max estimate of ``c_0`` on ``grid``.

    Each stage minimises ``logsumexp(beta H(x_i, theta(x_i))) / beta`` over
    the harmonic coefficients and the potential.  The smoothed objective is
    non-increasing in ``beta``, so the concatenated ``history`` is too.
    """
    if min(grid.shape[: grid.base_ndim]) < 16 and not isinstance(grid, SuspendedGrid):
        raise ValueError("estimate_c0 needs at least 16 grid points per axis")
    q = grid.points
    k = grid.harmonic.shape[0]
    if initial is None:
        a, u = np.zeros(k), np.zeros(grid.shape)
    else:
        a, u = np.array(initial.harmonic, dtype=float), np.array(initial.potential, dtype=float)

    def values(a, u):
        return H.value(q, a @ grid.harmonic + grid.gradient(u))

    best = ClosedOneFormParam(a.copy(), u.copy())
    best_max = float(np.max(values(a, u)))
    history = []
    total = 0
    for beta in schedule:
        step = 1.0
        Hv = values(a, u)
        F = logsumexp(beta * Hv) / beta
        F_start = F
        for _ in range(iterations):
            theta = a @ grid.harmonic + grid.gradient(u)
            w = softmax(beta * Hv)
            G = w[:, None] * H.grad_p(q, theta)
            ga = grid.harmonic @ G.sum(axis=0)
            gu = grid.gradient_adjoint(G)
            gu -= gu.mean()
            gnorm2 = float(ga @ ga + np.sum(gu * gu))
            if gnorm2 <= 1e-28:
                break
            while True:
                a_t, u_t = a - step * ga, u - step * gu
                Hv_t = values(a_t, u_t)
                F_t = logsumexp(beta * Hv_t) / beta
                if F_t <= F - ARMIJO_C * step * gnorm2:
                    break
                step *= 0.5
                if step < 1e-16:
                    break
            if step < 1e-16:
                break
            a, u, Hv, F = a_t, u_t, Hv_t, F_t
            step *= 2.0
            total += 1
            history.append(float(F))
            m = float(np.max(Hv))
            if m < best_max:
                best_max = m
                best = ClosedOneFormParam(a.copy(), u.copy())
        if not math.isfinite(F) or F > F_start + 1e-12 * max(1.0, abs(F_start)):
            raise Diverged(f"objective rose from {F_start} to {F} at beta={beta}")
    return CriticalEstimate(best_max, best, best_max, tuple(grid.shape), history, total)


def orbit_homology(H, orbits):
    """Weighted time-averaged integrals of the chart's closed-form basis."""
    basis = H.chart.closed_forms()
    total = np.zeros(basis.shape[0])
    for traj, w in orbits:
        vals = traj.qdot @ basis.T
        span = traj.times[-1] - traj.times[0]
        total += w * np.trapezoid(vals, traj.times, axis=0) / span
    return total


def lower_bound_from_measure(H, orbits, tol=1e-6):
    """``-sum_i w_i <L>_i`` for an invariant measure with zero homology.

    ``orbits`` is a list of ``(Trajectory, weight)``.  For any such measure
    ``int (L + c_0) >= 0``, so the result bounds ``c_0`` from below.
    """
    weights = np.array([w for _, w in orbits], dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be positive and sum to one")
    hom = orbit_homology(H, orbits)
    if np.any(np.abs(hom) > tol):
        i = int(np.argmax(np.abs(hom)))
        raise NonZeroHomology(f"basis form {i} has weighted integral {hom[i]:.3e}")
    bound = 0.0
    for traj, w in orbits:
        n = H.dim
        L = lagrangian_eval(H, traj.states[:, :n], traj.qdot)
        span = traj.times[-1] - traj.times[0]
        avg = np.trapezoid(L, traj.times) / span if span > 0 else float(L[0])
        bound -= w * avg
    return float(bound)


class SuspensionCheck(NamedTuple):
    c0: float
    c0_suspended: float
    gap: float
    estimate: CriticalEstimate
    estimate_suspended: CriticalEstimate


def suspension_critical_check(H, grid, nt=16, **kwargs):
    """Compare ``c_0(H)`` with ``c_0`` of ``H + p_t^2 / 2`` on ``grid x S^1``."""
    est = estimate_c0(H, grid, **kwargs)
    est_bar = estimate_c0(suspend(H), SuspendedGrid(grid, nt), **kwargs)
    return SuspensionCheck(est.value, est_bar.value, abs(est.value - est_bar.value), est, est_bar)
