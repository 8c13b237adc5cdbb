"""Critical values of three Hamiltonians on the 2-torus.

The kinetic Hamiltonian and a magnetic one with a closed potential both have
critical value 0: subtracting a closed form cancels the potential exactly.  The
rotating potential ``cos(2 pi y) dx + sin(2 pi y) dy`` is not closed and lifts
the critical value to 1/2.  The optimiser gives an upper bound.  The measure
carried by the circles ``y = 0`` and ``y = 1/2`` has zero homology and gives a
matching lower bound.

Run:  python demos/critical_value_tour.py
"""
import numpy as np

from mane.critical import TorusGrid, estimate_c0, estimate_e, lower_bound_from_measure
from mane.flow import integrate
from mane.hamiltonian import constant_theta, kinetic_flat, magnetic_flat, rotating_theta


def main():
    grid = TorusGrid((64, 64))
    cases = {
        "kinetic": kinetic_flat(),
        "closed theta (0.7 dx)": magnetic_flat(constant_theta(0.7)),
        "rotating theta": magnetic_flat(rotating_theta()),
    }
    print(f"{'hamiltonian':24s} {'e':>10s} {'c0 upper':>12s}")
    for name, H in cases.items():
        est = estimate_c0(H, grid)
        print(f"{name:24s} {estimate_e(H, grid):10.2e} {est.upper_bound:12.8f}")

    # two circles at rest in opposite fibres; their homologies cancel
    H = cases["rotating theta"]
    circles = [integrate(H, np.array([0.0, y, 0.0, 0.0]), 1.0, 0.01) for y in (0.0, 0.5)]
    lower = lower_bound_from_measure(H, [(c, 0.5) for c in circles])
    upper = estimate_c0(H, grid).upper_bound
    print(f"\nrotating theta bracket: {lower:.8f} <= c0 <= {upper:.8f}")


if __name__ == "__main__":
    main()
