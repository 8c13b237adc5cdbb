"""Differential 1- and 2-forms on phase space, represented by evaluators.

A 1-form is a function ``(z, v) -> alpha_z(v)`` and a 2-form a function
``(z, v, w) -> beta_z(v, w)``, where ``z``, ``v``, ``w`` are flat phase-space
arrays ``(dq, dp)`` with arbitrary leading batch axes.  The symplectic form is
``omega = sum dq_i ^ dp_i`` so that ``i_{X_H} omega = dH``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainViolation

FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class EnergyBand:
    """Open band ``lo < H < hi`` on which a form is declared."""

    H: object
    lo: float
    hi: float

    def contains(self, z):
        e = self.H(z)
        return (e > self.lo) & (e < self.hi)


@dataclass(frozen=True)
class OneFormField:
    evaluator: Callable
    dim: int
    band: Optional[EnergyBand] = None
    name: str = "alpha"

    def __call__(self, z, v):
        return self.evaluator(np.asarray(z, dtype=float), np.asarray(v, dtype=float))

    def __add__(self, other):
        return OneFormField(lambda z, v: self(z, v) + other(z, v), self.dim,
                            self.band or other.band, f"{self.name}+{other.name}")

    def scale(self, c):
        return OneFormField(lambda z, v: c * self(z, v), self.dim, self.band,
                            f"{c}*{self.name}")


@dataclass(frozen=True)
class TwoFormField:
    evaluator: Callable
    dim: int
    name: str = "beta"

    def __call__(self, z, v, w):
        z, v, w = (np.asarray(a, dtype=float) for a in (z, v, w))
        return self.evaluator(z, v, w)


def liouville_form(dim):
    """Tautological form ``xi = sum p_i dq_i`` on ``T*R^dim``."""
    if dim < 1:
        raise ValueError("dimension must be positive")

    def xi(z, v):
        return np.sum(z[..., dim:] * v[..., :dim], axis=-1)

    return OneFormField(xi, dim, name="liouville")


def differential(f, dim, grad=None, name="df"):
    """Exact 1-form ``df`` of a scalar phase-space function.

    ``grad(z)`` returns the full phase-space gradient; without it a
    central-difference directional derivative is used.
    """
    if grad is not None:
        return OneFormField(lambda z, v: np.sum(grad(z) * v, axis=-1), dim, name=name)

    def df(z, v):
        h = FD_REL_STEP * np.maximum(1.0, np.max(np.abs(z), axis=-1))[..., None]
        return (f(z + h * v) - f(z - h * v)) / (2 * h[..., 0])

    return OneFormField(df, dim, name=name)


def _step(z):
    return FD_REL_STEP * np.maximum(1.0, np.max(np.abs(z), axis=-1))


def exterior_derivative(alpha, h=None):
    """Finite-difference ``d alpha``.

    ``d alpha(v, w) = D_v[alpha(., w)] - D_w[alpha(., v)]`` with central
    differences; the result is exactly antisymmetric.  The default step is
    ``1e-5 * max(1, |z|_inf)``.
    """

    def check(z):
        if alpha.band is not None and not np.all(alpha.band.contains(z)):
            raise DomainViolation(
                f"stencil of d{alpha.name} leaves the band "
                f"({alpha.band.lo}, {alpha.band.hi})"
            )

    def d_alpha(z, v, w):
        hh = _step(z) if h is None else np.broadcast_to(float(h), z.shape[:-1])
        hv = hh[..., None]
        pts = (z + hv * v, z - hv * v, z + hv * w, z - hv * w)
        for p in pts:
            check(p)
        dv = (alpha(pts[0], w) - alpha(pts[1], w)) / (2 * hh)
        dw = (alpha(pts[2], v) - alpha(pts[3], v)) / (2 * hh)
        return dv - dw

    return TwoFormField(d_alpha, alpha.dim, name=f"d{alpha.name}")


def interior_product(beta, X):
    """``(i_X beta)(v) = beta(X, v)`` for a vector field ``X(z)``."""
    return OneFormField(lambda z, v: beta(z, X(z), v), beta.dim, name=f"i_X{beta.name}")


def canonical_symplectic(dim):
    """``omega = sum dq_i ^ dp_i``."""

    def omega(z, v, w):
        return np.sum(v[..., :dim] * w[..., dim:] - w[..., :dim] * v[..., dim:], axis=-1)

    return TwoFormField(omega, dim, name="omega")


def pullback_projection(alpha):
    """``pi^* alpha`` along ``T*(M x S^1) -> T*M``.

    Suspension states are laid out ``(x, t, p, p_t)``; the ``t`` and ``p_t``
    slots of both the point and the tangent vector are dropped.
    """
    n = alpha.dim

    def drop(a):
        return np.concatenate([a[..., :n], a[..., n + 1:2 * n + 1]], axis=-1)

    band = None
    if alpha.band is not None:
        band = EnergyBand(lambda z: alpha.band.H(drop(z)), alpha.band.lo, alpha.band.hi)
    return OneFormField(lambda z, v: alpha(drop(z), drop(v)), n + 1, band,
                        name=f"pi*{alpha.name}")


def coordinate_form(index, dim, name=None):
    """``dq_index`` (``index < dim``) or ``dp_{index-dim}`` on ``T*R^dim``."""
    return OneFormField(lambda z, v: v[..., index] * np.ones(z.shape[:-1]), dim,
                        name=name or f"d{index}")


def unit_momentum_form(dim):
    """``alpha = p.dq / |p|`` on ``T*T^dim`` minus the zero section.

    For ``H = |p|^2 / 2`` one has ``alpha(X_H) = |p|`` and ``i_{X_H} d alpha = 0``.
    """

    def alpha(z, v):
        p = z[..., dim:]
        return np.sum(p * v[..., :dim], axis=-1) / np.linalg.norm(p, axis=-1)

    return OneFormField(alpha, dim, name="p.dq/|p|")
