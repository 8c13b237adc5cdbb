"""Tonelli Hamiltonians: interface, built-in instances, Legendre transform.

Every callable here is vectorised over leading axes: ``q`` and ``p`` have
shape ``(..., n)`` and scalar quantities come back with shape ``(...)``.
"""
from __future__ import annotations

import numpy as np

from .errors import NewtonDivergence, NonPositiveConformal
from .geometry import ProductChart, SolChart, TorusChart, join_state, split_state

FD_STEP = 1e-6
NEWTON_TOL = 1e-12
# fibre Newton target when grad_p itself comes from central differences
FD_NEWTON_TOL = 1e-8
NEWTON_MAXITER = 100


def _fd_gradient(fun, x, h=FD_STEP):
    """Central-difference gradient of a scalar field, vectorised over rows."""
    x = np.asarray(x, dtype=float)
    g = np.empty(x.shape)
    step = h * np.maximum(1.0, np.abs(x))
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape)
        e[..., i] = step[..., i]
        g[..., i] = (fun(x + e) - fun(x - e)) / (2 * step[..., i])
    return g


def _fd_jacobian(fun, x, h=FD_STEP):
    """``J[..., i, j] = d fun_i / d x_j`` by central differences."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def complex_step_jacobian(fun, x, h=1e-30):
    """Jacobian to machine precision for functions analytic in ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1j * h
        cols.append(np.imag(fun(x + e)) / h)
    return np.stack(cols, axis=-1)


class TonelliHamiltonian:
    """Fibrewise strictly convex, superlinear ``H(q, p)`` on a chart.

    Any of ``grad_p``, ``grad_q`` and ``hess_pp`` may be omitted; central
    differences are used in their place.
    """

    def __init__(self, value, chart, grad_p=None, grad_q=None, hess_pp=None,
                 name="custom"):
        self._value = value
        self._grad_p = grad_p
        self._grad_q = grad_q
        self._hess_pp = hess_pp
        self.chart = chart
        self.name = name

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dim={self.dim})"

    @property
    def dim(self):
        return self.chart.dim

    def value(self, q, p):
        return self._value(np.asarray(q, dtype=float), np.asarray(p, dtype=float))

    def __call__(self, state):
        q, p = split_state(state)
        return self.value(q, p)

    energy = __call__

    def grad_p(self, q, p):
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        if self._grad_p is not None:
            return self._grad_p(q, p)
        return _fd_gradient(lambda pp: self._value(q, pp), p)

    def grad_q(self, q, p):
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        if self._grad_q is not None:
            return self._grad_q(q, p)
        return _fd_gradient(lambda qq: self._value(qq, p), q)

    def hess_pp(self, q, p):
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        if self._hess_pp is not None:
            return self._hess_pp(q, p)
        return _fd_jacobian(lambda pp: self.grad_p(q, pp), p)

    def vector_field(self, state):
        """``X_H = (dH/dp, -dH/dq)`` for the form ``sum dq_i ^ dp_i``."""
        q, p = split_state(state)
        return join_state(self.grad_p(q, p), -self.grad_q(q, p))

    def reduce(self, state):
        return self.chart.reduce(state)

    def solve_fiber(self, q, v, p0=None):
        """Solve ``grad_p H(q, p) = v`` for ``p`` by damped Newton.

        The tolerance is ``1e-12 (1 + |v|)``, relaxed to ``1e-8 (1 + |v|)``
        when ``grad_p`` is a finite-difference fallback.
        """
        tol = NEWTON_TOL if self._grad_p is not None else FD_NEWTON_TOL
        q = np.asarray(q, dtype=float)
        v = np.broadcast_to(np.asarray(v, dtype=float), q.shape)
        p = np.zeros(q.shape) if p0 is None else np.array(np.broadcast_to(p0, q.shape), dtype=float)
        res = self.grad_p(q, p) - v
        norm = np.linalg.norm(res, axis=-1)
        for _ in range(NEWTON_MAXITER):
            scale = 1.0 + np.linalg.norm(v, axis=-1)
            if np.all(norm <= tol * scale):
                return p
            step = np.linalg.solve(self.hess_pp(q, p), res[..., None])[..., 0]
            damp = np.ones(norm.shape)
            for _ in range(30):
                trial = p - damp[..., None] * step
                tres = self.grad_p(q, trial) - v
                tnorm = np.linalg.norm(tres, axis=-1)
                worse = ~(tnorm <= norm) & (norm > tol * scale)
                if not worse.any():
                    break
                damp = np.where(worse, 0.5 * damp, damp)
            p, res, norm = trial, tres, tnorm
        raise NewtonDivergence(
            f"fibre Newton did not reach {tol:g} in {NEWTON_MAXITER} steps "
            f"(max residual {np.max(norm):.3e})"
        )

    def fiber_minimizer(self, q):
        q = np.asarray(q, dtype=float)
        return self.solve_fiber(q, np.zeros(q.shape))


class SolHamiltonian(TonelliHamiltonian):
    """``2H = e^{2z}(p_x + e^{-z})^2 + e^{-2z} p_y^2 + p_z^2`` on T*Sol.

    In the left-invariant momenta ``M = (e^z p_x, e^{-z} p_y, p_z)`` this is
    ``((M_x + 1)^2 + M_y^2 + M_z^2) / 2``.
    """

    def __init__(self, lattice=None):
        chart = SolChart() if lattice is None else SolChart(lattice)
        super().__init__(self._h, chart, self._gp, self._gq, self._hpp, name="sol")

    @staticmethod
    def momenta(q, p):
        z = q[..., 2]
        return np.stack([np.exp(z) * p[..., 0], np.exp(-z) * p[..., 1], p[..., 2]], -1)

    @staticmethod
    def _h(q, p):
        z = q[..., 2]
        return 0.5 * (np.exp(2 * z) * (p[..., 0] + np.exp(-z)) ** 2
                      + np.exp(-2 * z) * p[..., 1] ** 2 + p[..., 2] ** 2)

    @classmethod
    def _gp(cls, q, p):
        z = q[..., 2]
        M = cls.momenta(q, p)
        return np.stack([np.exp(z) * (M[..., 0] + 1), np.exp(-z) * M[..., 1], M[..., 2]], -1)

    @classmethod
    def _gq(cls, q, p):
        M = cls.momenta(q, p)
        dz = (M[..., 0] + 1) * M[..., 0] - M[..., 1] ** 2
        zero = np.zeros(dz.shape)
        return np.stack([zero, zero, dz], -1)

    @staticmethod
    def _hpp(q, p):
        z = q[..., 2]
        d = np.stack([np.exp(2 * z), np.exp(-2 * z), np.ones(z.shape)], -1)
        return d[..., :, None] * np.eye(3)


class SuspensionHamiltonian(TonelliHamiltonian):
    """``H(x, p) + p_t^2 / 2`` on ``T*(M x S^1)``; ``(t, p_t)`` come last."""

    def __init__(self, base):
        self.base = base
        super().__init__(self._h, ProductChart(base.chart), self._gp, self._gq,
                         self._hpp, name=f"suspension({base.name})")

    def _h(self, q, p):
        return self.base.value(q[..., :-1], p[..., :-1]) + 0.5 * p[..., -1] ** 2

    def _gp(self, q, p):
        return np.concatenate([self.base.grad_p(q[..., :-1], p[..., :-1]), p[..., -1:]], -1)

    def _gq(self, q, p):
        g = self.base.grad_q(q[..., :-1], p[..., :-1])
        return np.concatenate([g, np.zeros(g.shape[:-1] + (1,))], -1)

    def _hpp(self, q, p):
        hb = self.base.hess_pp(q[..., :-1], p[..., :-1])
        n = hb.shape[-1]
        out = np.zeros(hb.shape[:-2] + (n + 1, n + 1))
        out[..., :n, :n] = hb
        out[..., n, n] = 1.0
        return out


def suspend(H):
    return SuspensionHamiltonian(H)


def kinetic_flat(chart=None):
    """``|p|^2 / 2`` for the flat metric; defaults to the 2-torus."""
    chart = TorusChart(2) if chart is None else chart
    return TonelliHamiltonian(
        lambda q, p: 0.5 * np.sum(p * p, axis=-1),
        chart,
        grad_p=lambda q, p: p.copy(),
        grad_q=lambda q, p: np.zeros(p.shape),
        hess_pp=lambda q, p: np.broadcast_to(np.eye(p.shape[-1]), p.shape + (p.shape[-1],)).copy(),
        name="kinetic",
    )


class BaseCovector:
    """A 1-form ``theta`` on the base, given by its components at ``q``.

    ``jacobian(q)[..., i, j]`` is ``d theta_i / d q_j``; it falls back to
    central differences when not supplied.
    """

    def __init__(self, components, jacobian=None, closed=False, name="theta"):
        self.components = components
        self._jacobian = jacobian
        self.closed = closed
        self.name = name

    def __call__(self, q):
        return self.components(np.asarray(q))

    def jacobian(self, q):
        if self._jacobian is not None:
            return self._jacobian(np.asarray(q))
        return _fd_jacobian(self.components, q)


def rotating_theta():
    """``cos(2 pi y) dx + sin(2 pi y) dy`` on the 2-torus: unit length, not closed."""
    tau = 2 * np.pi

    def comp(q):
        y = q[..., 1]
        return np.stack([np.cos(tau * y), np.sin(tau * y)], -1)

    def jac(q):
        y = q[..., 1]
        J = np.zeros(q.shape + (2,))
        J[..., 0, 1] = -tau * np.sin(tau * y)
        J[..., 1, 1] = tau * np.cos(tau * y)
        return J

    return BaseCovector(comp, jac, name="rotating")


def constant_theta(c, dim=2, axis=0):
    """The closed form ``c dq_axis``."""
    vec = np.zeros(dim)
    vec[axis] = c
    return BaseCovector(lambda q: np.broadcast_to(vec, q.shape).copy(),
                        lambda q: np.zeros(q.shape + (dim,)), closed=True, name="constant")


def magnetic_flat(theta, phi=None, chart=None, grad_phi=None, name="magnetic"):
    """``|p + theta_q|^2 / (2 phi(q))``.

    With ``phi = 1`` this is the magnetic Hamiltonian of ``theta``; for general
    positive ``phi`` it is the convex dual of
    ``L(q, v) = phi(q) |v|^2 / 2 - theta_q(v)``.
    """
    chart = TorusChart(2) if chart is None else chart
    if phi is None:
        phi_f = lambda q: np.ones(q.shape[:-1])
        grad_phi = lambda q: np.zeros(q.shape)
    elif np.isscalar(phi):
        if phi <= 0:
            raise NonPositiveConformal(f"conformal factor {phi} is not positive")
        c = float(phi)
        phi_f = lambda q: np.full(q.shape[:-1], c)
        grad_phi = lambda q: np.zeros(q.shape)
    else:
        phi_f = phi
        if grad_phi is None:
            grad_phi = lambda q: _fd_gradient(phi, q)

    def checked_phi(q):
        f = phi_f(q)
        if np.any(f <= 0):
            raise NonPositiveConformal(f"conformal factor min {np.min(f):.3g} <= 0")
        return f

    def value(q, p):
        w = p + theta(q)
        return 0.5 * np.sum(w * w, axis=-1) / checked_phi(q)

    def gp(q, p):
        return (p + theta(q)) / checked_phi(q)[..., None]

    def gq(q, p):
        w = p + theta(q)
        f = checked_phi(q)[..., None]
        return (np.einsum("...i,...ij->...j", w, theta.jacobian(q)) / f
                - 0.5 * np.sum(w * w, axis=-1)[..., None] / f ** 2 * grad_phi(q))

    def hpp(q, p):
        f = checked_phi(q)
        return (1.0 / f)[..., None, None] * np.eye(p.shape[-1])

    H = TonelliHamiltonian(value, chart, gp, gq, hpp, name=name)
    H.theta = theta
    H.phi = phi_f
    return H


class Remark3Data:
    """Ingredients ``Z``, ``psi``, ``phi`` of the minimising-loop example on T^2.

    ``F`` is a smooth periodic squared distance to ``center``; the loop
    ``gamma = {F = radius^2}`` is a simple contractible closed curve, ``Z`` is
    tangent to it with unit speed there, and ``psi = (F - radius^2)^2``
    vanishes exactly on ``gamma``.
    """

    def __init__(self, center=(0.5, 0.5), radius=0.2, kappa=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.kappa = float(kappa)

    def F(self, q):
        d = q - self.center
        return np.sum(np.sin(np.pi * d) ** 2, axis=-1) / np.pi ** 2

    def grad_F(self, q):
        d = q - self.center
        return np.sin(2 * np.pi * d) / np.pi

    def Z(self, q):
        g = self.grad_F(q)
        gap = self.F(q) - self.radius ** 2
        norm = np.sqrt(np.sum(g * g, axis=-1) + self.kappa * gap * gap)
        return np.stack([-g[..., 1], g[..., 0]], -1) / norm[..., None]

    def psi(self, q):
        return (self.F(q) - self.radius ** 2) ** 2

    def phi(self, q):
        Z = self.Z(q)
        return np.sum(Z * Z, axis=-1) + 2 * self.psi(q)

    def loop(self, n):
        """``n`` points on ``gamma`` (radial root-finding along rays)."""
        ang = 2 * np.pi * np.arange(n) / n
        u = np.stack([np.cos(ang), np.sin(ang)], -1)
        lo, hi = np.zeros(n), np.full(n, 0.45)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            inside = self.F(self.center + mid[:, None] * u) < self.radius ** 2
            lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
        return self.center + (0.5 * (lo + hi))[:, None] * u

    def lagrangian(self, q, v):
        return 0.5 * self.phi(q) * np.sum(v * v, axis=-1) - np.sum(self.Z(q) * v, axis=-1)


def remark3_hamiltonian(data=None):
    """Convex dual of ``phi |v|^2 / 2 - <Z, v>`` with ``phi = |Z|^2 + 2 psi``."""
    data = Remark3Data() if data is None else data
    theta = BaseCovector(data.Z, lambda q: complex_step_jacobian(data.Z, q), name="Z")
    H = magnetic_flat(theta, data.phi,
                      grad_phi=lambda q: complex_step_jacobian(lambda x: data.phi(x)[..., None], q)[..., 0, :],
                      name="remark3")
    H.data = data
    return H


def sol_hamiltonian(lattice=None):
    return SolHamiltonian(lattice)


def legendre_velocity(H, pt):
    q, p = split_state(pt)
    return H.grad_p(q, p)


def lagrangian_eval(H, q, v):
    """``L(q, v) = p.v - H(q, p)`` where ``grad_p H(q, p) = v``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    q, v = np.broadcast_arrays(q, v)
    p = H.solve_fiber(q, v, p0=H.fiber_minimizer(q))
    return np.sum(p * v, axis=-1) - H.value(q, p)


def hamiltonian_vector_field(H):
    return H.vector_field
