"""Mañé critical values, stable energy levels and their numerical verification.

Modules
-------
geometry     charts (tori, Sol quotients, suspensions) and level-set sampling
hamiltonian  Tonelli Hamiltonians, Legendre duality and the built-in instances
forms        1- and 2-forms as evaluators, finite-difference exterior derivative
flow         implicit-midpoint integration, closed orbits, homology integrals
critical     min-max estimation of the critical value over closed 1-forms
stability    suspension stabiliser, blending families, convexifying reparametrisation
cli          batch front end (``mane``)
"""
from .errors import *  # noqa: F401,F403
from .geometry import (PhasePoint, SolChart, SolLattice, TorusChart, make_rng,
                       sample_level_set)
from .hamiltonian import (TonelliHamiltonian, kinetic_flat, lagrangian_eval, magnetic_flat,
                          remark3_hamiltonian, rotating_theta, sol_hamiltonian, suspend)
from .flow import (Trajectory, find_closed_orbit, homology_integral, integrate,
                   integrate_reduced_sol)
from .critical import CriticalEstimate, estimate_c0, estimate_e, lower_bound_from_measure
from .stability import (BumpFunction, StabilityCertificate, g_from_integral, r_profile,
                        suspension_stabilizer, verify_stability)

__version__ = "0.1.0"
