"""A stabilising form on the suspension of the flat torus.

``lambda = f(p_t) pi^*alpha + g(p_t) dt`` with ``alpha = p.dq / |p|`` is checked
on the level ``k = 1/2`` of the suspended kinetic Hamiltonian.  It should
satisfy ``lambda(X) > 0`` and ``i_X d lambda = 0``.  The Liouville form fails
the second condition and serves as the control.  The convexifying
reparametrisation is built for the same Hamiltonian.

Run:  python demos/stable_suspension.py
"""
from mane.forms import liouville_form, unit_momentum_form
from mane.hamiltonian import kinetic_flat, suspend
from mane.stability import (BumpFunction, convexify_reparam, g_from_integral, r_profile,
                            suspension_stabilizer, verify_stability)

K, DELTA, EPS = 0.5, 0.45, 0.5


def main():
    H = kinetic_flat()
    alpha = unit_momentum_form(2)
    r = r_profile(alpha, H, K, DELTA)
    f = BumpFunction(EPS)
    g = g_from_integral(r, f)
    print(f"g plateau g(eps) = {g.plateau:.6f}")

    lam = suspension_stabilizer(alpha, f, g)
    for name, form in (("stabiliser", lam), ("liouville", liouville_form(3))):
        cert = verify_stability(form, suspend(H), K, 10_000, seed=0)
        print(f"{name:11s} min lambda(X) = {cert.min_lambda_X:8.4f}  "
              f"max |i_X d lambda| = {cert.max_contraction:.1e}  pass = {cert.passed}")

    h = convexify_reparam(H, 1.0, 0.5, 0.25)
    print(f"\nreparametrisation: h(r) = r below {h.r0:g}, exp({h.A:.4f} r) + {h.B:.4f} "
          f"above {h.r1:g}")


if __name__ == "__main__":
    main()
