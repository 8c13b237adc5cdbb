"""Implicit-midpoint integration, closed-orbit shooting and orbit integrals."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (NoConvergence, NonFiniteState, OffLevel, SectionNotTransverse,
                     StepSolverDiverged)
from .geometry import split_state
from .hamiltonian import lagrangian_eval

SOLVER_TOL = 1e-13
FIXED_POINT_MAXITER = 60
NEWTON_MAXITER = 20
CLOSED_ORBIT_TOL = 1e-8

# triple-jump weights lifting a symmetric 2nd-order step to 4th order
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = -(2.0 ** (1.0 / 3.0)) * _W1


@dataclass
class Trajectory:
    """Time-sampled orbit.

    ``qdot`` holds base velocities at the samples (for the reduced Sol system
    these are ``(x', y', z')`` even though ``x`` and ``y`` are not stored).
    ``monitors`` maps a first-integral name to its sampled values.
    """

    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    qdot: np.ndarray
    monitors: dict = field(default_factory=dict)
    labels: tuple = ()

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise NonFiniteState("trajectory contains non-finite states")

    @property
    def energy_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @property
    def monitor_drifts(self):
        return {k: float(np.max(np.abs(v - v[0]))) for k, v in self.monitors.items()}

    def relative_drift(self, name):
        v = self.energy if name == "H" else self.monitors[name]
        return float(np.max(np.abs(v - v[0])) / max(abs(v[0]), np.finfo(float).tiny))

    def to_csv(self, path_or_file):
        """Write ``t, <state labels>, H, <monitors>`` rows."""
        names = sorted(self.monitors)
        header = ["t", *self.labels, "H", *names]
        cols = [self.times, *self.states.T, self.energy, *(self.monitors[k] for k in names)]
        rows = np.column_stack(cols)
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) for x in r])
        finally:
            if own:
                fh.close()


def _fd_jacobian(f, y, eps=1e-7):
    n = y.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps * max(1.0, abs(y[j]))
        J[:, j] = (f(y + e) - f(y - e)) / (2 * e[j])
    return J


def midpoint_step(f, y, h, tol=SOLVER_TOL):
    """One implicit-midpoint step ``y1 = y + h f((y + y1) / 2)``."""
    y1 = y + h * f(y)
    scale = tol * max(1.0, float(np.max(np.abs(y))))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(FIXED_POINT_MAXITER):
            new = y + h * f(0.5 * (y + y1))
            err = np.max(np.abs(new - y1))
            y1 = new
            if err <= scale:
                return y1
            if not np.isfinite(err):
                break
    # fixed point too slow (stiff step): fall back to Newton
    if not np.all(np.isfinite(y1)):
        y1 = y + h * f(y)
    eye = np.eye(y.size)
    for _ in range(NEWTON_MAXITER):
        mid = 0.5 * (y + y1)
        G = y1 - y - h * f(mid)
        if np.max(np.abs(G)) <= scale:
            return y1
        J = eye - 0.5 * h * _fd_jacobian(f, mid)
        y1 = y1 - np.linalg.solve(J, G)
        if not np.all(np.isfinite(y1)):
            break
    raise StepSolverDiverged(f"implicit midpoint step failed at h={h:g}")


def _composed_step(f, y, h, order):
    if order == 2:
        return midpoint_step(f, y, h)
    if order == 4:
        y = midpoint_step(f, y, _W1 * h)
        y = midpoint_step(f, y, _W0 * h)
        return midpoint_step(f, y, _W1 * h)
    raise ValueError("order must be 2 or 4")


def _steps(T, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T > 0:
        raise ValueError("T must be positive")
    n = max(1, math.ceil(T / dt - 1e-9))
    return n, T / n


def _state_labels(n, base=("q", "p")):
    return tuple(f"{base[0]}{i}" for i in range(n)) + tuple(f"{base[1]}{i}" for i in range(n))


def propagate(f, y0, T, n_steps, order=2):
    """All ``n_steps + 1`` states of the composed midpoint map."""
    h = T / n_steps
    out = np.empty((n_steps + 1, y0.size))
    out[0] = y = np.asarray(y0, dtype=float)
    for i in range(n_steps):
        y = _composed_step(f, y, h, order)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"state became non-finite at step {i + 1}")
        out[i + 1] = y
    return out


def integrate(H, x0, T, dt, monitors=None, order=2):
    """Integrate ``X_H`` from ``x0`` over ``[0, T]``.

    ``monitors`` maps names to vectorised functions of the state array.
    ``order=4`` composes three midpoint substeps (still symplectic).
    """
    from .geometry import as_state
    y0 = as_state(x0)
    n, h = _steps(T, dt)
    states = propagate(H.vector_field, y0, T, n, order)
    q, p = split_state(states)
    mon = {k: np.asarray(g(states), dtype=float) for k, g in (monitors or {}).items()}
    return Trajectory(np.arange(n + 1) * h, states, H(states), H.grad_p(q, p), mon,
                      _state_labels(H.dim))


# ---------------------------------------------------------------------------
# reduced Sol system in (z, M_x, M_y, M_z)

def reduced_sol_field(s):
    z, a, b, c = s
    return np.array([c, a * c, -b * c, b * b - a * (a + 1.0)])


def reduced_energy(states):
    a, b, c = states[..., 1], states[..., 2], states[..., 3]
    return 0.5 * ((a + 1.0) ** 2 + b * b + c * c)


def reduced_first_integral(states):
    return states[..., 1] * states[..., 2]


def _reduced_kernel(s, h, n, tol=SOLVER_TOL):
    # scalar loop; numpy overhead dominates for a 4-vector
    z, a, b, c = (float(x) for x in s)
    out = np.empty((n + 1, 4))
    out[0] = z, a, b, c
    for i in range(n):
        z1, a1, b1, c1 = z + h * c, a + h * a * c, b - h * b * c, c + h * (b * b - a * (a + 1.0))
        ok = False
        for _ in range(FIXED_POINT_MAXITER):
            am, bm, cm = 0.5 * (a + a1), 0.5 * (b + b1), 0.5 * (c + c1)
            nz = z + h * cm
            na = a + h * am * cm
            nb = b - h * bm * cm
            nc = c + h * (bm * bm - am * (am + 1.0))
            err = max(abs(nz - z1), abs(na - a1), abs(nb - b1), abs(nc - c1))
            z1, a1, b1, c1 = nz, na, nb, nc
            if err <= tol * max(1.0, abs(z1)):
                ok = True
                break
            if not math.isfinite(err):
                break
        if not ok:
            y = midpoint_step(reduced_sol_field, np.array([z, a, b, c]), h, tol)
            z1, a1, b1, c1 = (float(v) for v in y)
        z, a, b, c = z1, a1, b1, c1
        out[i + 1] = z, a, b, c
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("reduced Sol state became non-finite")
    return out


class ReducedSolSystem:
    """Self-contained flow of ``(z, M_x, M_y, M_z)`` from Hamilton's equations on Sol.

    ``z' = M_z``, ``M_x' = M_x M_z``, ``M_y' = -M_y M_z``,
    ``M_z' = M_y^2 - M_x (M_x + 1)``.
    """

    dim = 4
    labels = ("z", "Mx", "My", "Mz")

    vector_field = staticmethod(reduced_sol_field)

    def energy(self, s):
        return reduced_energy(s)

    def reduce(self, s):
        return np.asarray(s, dtype=float)

    def difference(self, s1, s0):
        return np.asarray(s1, dtype=float) - np.asarray(s0, dtype=float)

    def propagate(self, s0, T, n_steps, order=2):
        if order != 2:
            return propagate(self.vector_field, np.asarray(s0, dtype=float), T, n_steps, order)
        return _reduced_kernel(s0, T / n_steps, n_steps)


REDUCED_SOL = ReducedSolSystem()


def _reduced_trajectory(states, h):
    z, a, b, c = states.T
    qdot = np.stack([(a + 1.0) * np.exp(z), b * np.exp(-z), c], -1)
    mon = {"m": reduced_first_integral(states)}
    return Trajectory(np.arange(len(states)) * h, states, reduced_energy(states), qdot, mon,
                      ReducedSolSystem.labels)


def integrate_reduced_sol(state, T, dt, order=2):
    """Integrate the reduced Sol system; monitors ``H_M`` and ``m = M_x M_y``."""
    n, h = _steps(T, dt)
    return _reduced_trajectory(REDUCED_SOL.propagate(state, T, n, order), h)


# ---------------------------------------------------------------------------
# closed orbits

@dataclass
class ClosedOrbit:
    initial: np.ndarray
    period: float
    residual: float
    system: object
    n_steps: int
    coords: tuple

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")

    def trajectory(self):
        if isinstance(self.system, ReducedSolSystem):
            states = self.system.propagate(self.initial, self.period, self.n_steps)
            return _reduced_trajectory(states, self.period / self.n_steps)
        return integrate(self.system, self.initial, self.period, self.period / self.n_steps)


def _flow_end(system, x0, T, n_steps):
    if hasattr(system, "propagate"):
        return system.propagate(x0, T, n_steps)[-1]
    return propagate(system.vector_field, x0, T, n_steps)[-1]


def _displacement(system, x1, x0):
    if hasattr(system, "difference"):
        return system.difference(x1, x0)
    chart = system.chart
    q1, p1 = split_state(x1)
    q0, p0 = split_state(x0)
    if hasattr(chart, "difference"):
        return np.concatenate([chart.difference(q1, q0), p1 - p0])
    return system.reduce(x1) - system.reduce(x0)


def closest_return(system, x0, T_max, dt, coords=None, scan_stride=10, rel_tol=0.05):
    """First time in ``(0, T_max]`` at which the orbit comes back near ``x0``.

    Distances are sampled every ``scan_stride`` steps.  A return is a local
    minimum of the distance below ``rel_tol`` times the largest distance seen
    so far.  Returns ``None`` if there is none.
    """
    x0 = np.asarray(x0, dtype=float)
    idx = slice(None) if coords is None else list(coords)
    n, h = _steps(T_max, dt)
    if hasattr(system, "propagate"):
        states = system.propagate(x0, T_max, n)
    else:
        states = propagate(system.vector_field, x0, T_max, n)
    samples = states[::scan_stride]
    d = np.array([np.linalg.norm(_displacement(system, s, x0)[idx]) for s in samples])
    far = np.maximum.accumulate(d)
    for i in range(1, len(d) - 1):
        if d[i] <= d[i - 1] and d[i] <= d[i + 1] and d[i] < rel_tol * far[i] and far[i] > 0:
            return i * scan_stride * h
    return None


def find_closed_orbit(system, guess, guess_T, section=None, coords=None, dt=None,
                      free=None, energy=None, tol=1e-10, maxiter=30, max_step=0.1):
    """Newton shooting for a periodic orbit.

    ``section = (index, value)`` pins one coordinate of the initial point
    (the orbit must cross it transversally).  ``coords`` lists the state
    components that must close; by default all of them.  ``free`` lists the
    initial-state components Newton may move (default: all except the section
    coordinate); with ``free=()`` only the period is adjusted, which is the
    right choice when the integrator preserves the integrals that label the
    orbit family.  ``energy = (E, k)``
    adds the constraint ``E(x0) = k``.  The step count is frozen from
    ``guess_T / dt`` so the discrete flow map is smooth in ``T``.

    Periodic orbits come in families, so the shooting Jacobian is singular;
    steps are truncated-SVD least-squares solutions capped at ``max_step``.
    """
    x = np.array(guess, dtype=float)
    dim = x.size
    coords = tuple(range(dim)) if coords is None else tuple(coords)
    dt = guess_T / 1000 if dt is None else dt
    n_steps = max(1, math.ceil(guess_T / dt - 1e-9))
    fixed = set()
    if section is not None:
        i, val = section
        x[i] = val
        if abs(np.asarray(system.vector_field(x))[i]) < 1e-8:
            raise SectionNotTransverse(f"flow is tangent to section q[{i}]={val} at the guess")
        fixed.add(i)
    if coords != tuple(range(dim)):
        fixed |= set(range(dim)) - set(coords)
    if free is None:
        free = [j for j in range(dim) if j not in fixed]
    else:
        free = [j for j in free if j not in fixed]

    def residual(y):
        xx = x.copy()
        xx[free] = y[:-1]
        end = _flow_end(system, xx, y[-1], n_steps)
        r = _displacement(system, end, xx)[list(coords)]
        if energy is not None:
            r = np.append(r, energy[0](xx) - energy[1])
        return r

    y = np.concatenate([x[free], [guess_T]])
    R = residual(y)
    rn = np.linalg.norm(R)
    for _ in range(maxiter):
        if rn <= tol:
            break
        J = np.empty((R.size, y.size))
        for j in range(y.size):
            e = np.zeros(y.size)
            e[j] = 1e-7 * max(1.0, abs(y[j]))
            J[:, j] = (residual(y + e) - residual(y - e)) / (2 * e[j])
        step = np.linalg.lstsq(J, -R, rcond=1e-6)[0]
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        lam = 1.0
        for _ in range(20):
            trial = y + lam * step
            if trial[-1] > 0:
                Rt = residual(trial)
                if np.linalg.norm(Rt) < rn:
                    break
            lam *= 0.5
        else:
            break
        y, R, rn = trial, Rt, float(np.linalg.norm(Rt))
    if rn > CLOSED_ORBIT_TOL:
        raise NoConvergence(f"shooting stalled at residual {rn:.3e}")
    x[free] = y[:-1]
    speed = np.linalg.norm(np.asarray(system.vector_field(x)))
    if speed < 1e-8 or (section is not None
                        and abs(np.asarray(system.vector_field(x))[section[0]]) < 1e-8):
        raise SectionNotTransverse("shooting converged onto an equilibrium or tangency")
    return ClosedOrbit(x, float(y[-1]), float(rn), system, n_steps, coords)


# ---------------------------------------------------------------------------
# integrals along orbits

def _as_trajectory(obj):
    return obj.trajectory() if isinstance(obj, ClosedOrbit) else obj


def homology_integral(orbit, omega):
    """Trapezoidal ``int omega(q')`` along the projected orbit.

    ``omega`` is either an integer ``i`` (the closed form ``dq_i``) or a
    function ``(states, qdot) -> values`` evaluated at the samples.
    """
    traj = _as_trajectory(orbit)
    if isinstance(omega, (int, np.integer)):
        vals = traj.qdot[:, omega]
    else:
        vals = omega(traj.states, traj.qdot)
    return float(np.trapezoid(vals, traj.times))


def winding_number(orbit, axis, period=1.0):
    """Rounded winding number of a closed orbit and its distance to an integer."""
    w = homology_integral(orbit, axis) / period
    k = round(w)
    return int(k), abs(w - k)


def time_average(values, times):
    return float(np.trapezoid(values, times) / (times[-1] - times[0]))


def action_identity_residual(H, traj, c, level_tol=1e-8):
    """Max over samples of ``|p.q' - (L(q, q') + c)|`` with ``q' = grad_p H``."""
    off = np.max(np.abs(traj.energy - c))
    if off > level_tol:
        raise OffLevel(f"trajectory is {off:.3e} off the level H = {c}")
    q, p = split_state(traj.states)
    qdot = H.grad_p(q, p)
    L = lagrangian_eval(H, q, qdot)
    return float(np.max(np.abs(np.sum(p * qdot, axis=-1) - (L + c))))


# ---------------------------------------------------------------------------
# closed orbits of the reduced Sol system on the energy-1/2 sphere

def sol_section_point(phi):
    """Point of ``H_M = 1/2`` on the section ``M_z = 0``, ``z = 0``.

    ``M_x = cos(phi) - 1``, ``M_y = sin(phi)``; ``phi = 0`` is the origin and
    ``phi = 2 pi/3, 4 pi/3`` are the other equilibria.
    """
    return np.array([0.0, np.cos(phi) - 1.0, np.sin(phi), 0.0])


@dataclass
class SolOrbitRecord:
    phi: float
    period: float
    m: float
    residual: float
    integral_Mz: float
    log_ratio: float

    @property
    def log_identity_residual(self):
        return abs(self.integral_Mz - self.log_ratio)

    def report(self):
        return {
            "phi": self.phi,
            "period": self.period,
            "m": self.m,
            "residual": self.residual,
            "integral_Mz": self.integral_Mz,
            "integral_Mz_over_T": self.integral_Mz / self.period,
            "log_ratio": self.log_ratio,
            "log_identity_residual": self.log_identity_residual,
        }


def scan_sol_orbits(phis, T_max=200.0, dt=1e-2):
    """Seed, detect and refine periodic orbits of the reduced Sol system.

    Each ``phi`` gives a start on the ``M_z = 0`` section; a closest-return
    scan over ``(0, T_max]`` seeds shooting in the ``M`` coordinates.  Seeds
    with no detected return are skipped.  Returns ``(records, skipped)``.
    """
    records, skipped = [], []
    for phi in phis:
        x0 = sol_section_point(phi)
        try:
            T = closest_return(REDUCED_SOL, x0, T_max, dt, coords=(1, 2, 3))
            if T is None:
                skipped.append(float(phi))
                continue
            orb = find_closed_orbit(REDUCED_SOL, x0, T, section=(3, 0.0), coords=(1, 2, 3),
                                    dt=dt, free=())
        except (NoConvergence, SectionNotTransverse):
            skipped.append(float(phi))
            continue
        traj = orb.trajectory()
        mx = traj.states[:, 1]
        log_ratio = float(np.log(mx[-1] / mx[0])) if mx[0] != 0 else float("nan")
        records.append(SolOrbitRecord(float(phi), orb.period,
                                      float(reduced_first_integral(orb.initial)),
                                      orb.residual, homology_integral(traj, 2), log_ratio))
    return records, skipped
