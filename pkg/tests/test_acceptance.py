"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines are written
straight to the terminal, so ``-s`` is not needed).  Every test times the work
it checks and asserts the runtime budget alongside the numerical thresholds.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from mane import cli
from mane.critical import (TorusGrid, estimate_c0, lower_bound_from_measure,
                           suspension_critical_check)
from mane.errors import ParameterChainInvalid
from mane.flow import (action_identity_residual, integrate, integrate_reduced_sol,
                       reduced_first_integral, sol_section_point)
from mane.forms import liouville_form, unit_momentum_form
from mane.geometry import sample_level_set
from mane.hamiltonian import (constant_theta, kinetic_flat, magnetic_flat, remark3_hamiltonian,
                              rotating_theta, sol_hamiltonian, suspend)
from mane.stability import (BumpFunction, blend_families, convexify_reparam, fiber_hessian_fd,
                            g_from_integral, r_profile, suspension_stabilizer, verify_stability)

PRESETS = Path(__file__).resolve().parents[1] / "presets"


@pytest.fixture
def verdict(capsys):
    """Print one ``[criterion N] PASS|FAIL`` line and return the verdict."""

    def emit(n, checks, runtime, budget, detail):
        ok = all(checks.values()) and runtime < budget
        failed = [k for k, v in checks.items() if not v]
        if runtime >= budget:
            failed.append("runtime")
        tail = f"; failed: {', '.join(failed)}" if failed else ""
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'} "
                  f"({runtime:.2f} s < {budget:g} s) {detail}{tail}")
        return ok

    return emit


def test_criterion_01_sol_first_integral(verdict):
    x0 = sol_section_point(1.0)
    t0 = time.perf_counter()
    tr = integrate_reduced_sol(x0, 1000.0, 1e-2)
    runtime = time.perf_counter() - t0
    m0 = reduced_first_integral(x0)
    m_drift = float(np.max(np.abs(tr.monitors["m"] - m0)) / abs(m0))
    h_drift = float(np.max(np.abs(tr.energy - tr.energy[0])) / abs(tr.energy[0]))
    checks = {"m drift": m_drift <= 1e-8, "H drift": h_drift <= 1e-6}
    assert verdict(1, checks, runtime, 10.0,
                   f"relative drift m={m_drift:.1e}, H={h_drift:.1e} over T=1e3")


def test_criterion_02_sol_claim(verdict, tmp_path):
    out = tmp_path / "claim.json"
    t0 = time.perf_counter()
    code, _ = cli.run("sol-claim", PRESETS / "sol_claim.cfg", [], out)
    runtime = time.perf_counter() - t0
    orbits = json.loads(out.read_text())["result"]["orbits"]
    claim = max(abs(o["integral_Mz"]) / o["period"] for o in orbits)
    ident = max(o["log_identity_residual"] for o in orbits if o["m"] != 0)
    checks = {"exit code": code == cli.EXIT_PASS, "orbits found": len(orbits) > 0,
              "int M_z": claim <= 1e-6, "log identity": ident <= 1e-8}
    assert verdict(2, checks, runtime, 60.0,
                   f"{len(orbits)} orbits, max |int M_z|/T={claim:.1e}, "
                   f"max identity residual={ident:.1e}")


def test_criterion_03_rotating_field_bracket(verdict):
    H = magnetic_flat(rotating_theta())
    t0 = time.perf_counter()
    upper = estimate_c0(H, TorusGrid((64, 64))).upper_bound
    circles = [integrate(H, np.array([0.0, y, 0.0, 0.0]), 1.0, 0.01) for y in (0.0, 0.5)]
    lower = lower_bound_from_measure(H, [(c, 0.5) for c in circles])
    runtime = time.perf_counter() - t0
    checks = {"bracket": lower <= 0.5 <= upper, "gap": upper - lower <= 0.04,
              "upper near 1/2": abs(upper - 0.5) <= 0.02,
              "lower near 1/2": abs(lower - 0.5) <= 0.02}
    assert verdict(3, checks, runtime, 120.0,
                   f"lower={lower:.6f} upper={upper:.6f} gap={upper - lower:.1e}")


def test_criterion_04_vanishing_critical_values(verdict):
    grid = TorusGrid((32, 32))
    t0 = time.perf_counter()
    kin = estimate_c0(kinetic_flat(), grid).value
    closed = estimate_c0(magnetic_flat(constant_theta(0.7)), grid).value
    runtime = time.perf_counter() - t0
    checks = {"kinetic": abs(kin) <= 1e-6, "closed theta": abs(closed) <= 1e-6}
    assert verdict(4, checks, runtime, 30.0, f"kinetic={kin:.1e} closed theta={closed:.1e}")


def test_criterion_05_suspension_preserves_critical_value(verdict):
    t0 = time.perf_counter()
    mag = suspension_critical_check(magnetic_flat(rotating_theta()), TorusGrid((64, 64)), nt=16)
    kin = suspension_critical_check(kinetic_flat(), TorusGrid((32, 32)), nt=16)
    runtime = time.perf_counter() - t0
    checks = {"magnetic": mag.gap <= 0.02, "kinetic": kin.gap <= 1e-6}
    assert verdict(5, checks, runtime, 240.0,
                   f"gap magnetic={mag.gap:.1e} kinetic={kin.gap:.1e}")


def test_criterion_06_stability_certificate(verdict):
    k, delta, eps = 0.5, 0.45, 0.5
    t0 = time.perf_counter()
    H = kinetic_flat()
    Hb = suspend(H)
    alpha = unit_momentum_form(2)
    r = r_profile(alpha, H, k, delta)
    f = BumpFunction(eps)
    lam = suspension_stabilizer(alpha, f, g_from_integral(r, f))
    cert = verify_stability(lam, Hb, k, 10_000, seed=0, eps=eps, delta=delta)
    control = verify_stability(liouville_form(3), Hb, k, 10_000, seed=0)
    runtime = time.perf_counter() - t0
    checks = {"samples": cert.samples >= 10_000, "lambda(X) > 0": cert.min_lambda_X > 0,
              "contraction": cert.max_contraction <= 1e-4,
              "control fails 10x": control.max_contraction >= 10 * 1e-4}
    assert verdict(6, checks, runtime, 60.0,
                   f"min lambda(X)={cert.min_lambda_X:.3f} contraction="
                   f"{cert.max_contraction:.1e} control={control.max_contraction:.2f}")


def test_criterion_07_g_function(verdict):
    eps = 0.5
    t0 = time.perf_counter()
    r = r_profile(unit_momentum_form(2), kinetic_flat(), 0.5, 0.45)
    f = BumpFunction(eps)
    g = g_from_integral(r, f)
    s = np.linspace(-1.0, 1.0, 4001)
    gs, dg = g(s), g.derivative(s)
    odd = float(np.max(np.abs(gs + g(-s))))
    ident = float(np.max(np.abs(-dg * s - r(s) * f.derivative(s))))
    runtime = time.perf_counter() - t0
    checks = {"g(0)=0": float(g(0.0)) == 0.0, "odd": odd <= 1e-10,
              "monotone": float(np.min(dg)) >= -1e-12,
              "inner zero": bool(np.all(gs[np.abs(s) <= eps / 2] == 0)),
              "outer constant": bool(np.all(gs[s >= eps] == g.plateau)
                                     and np.all(gs[s <= -eps] == -g.plateau)),
              "identity": ident <= 1e-9}
    assert verdict(7, checks, runtime, 1.0,
                   f"oddness={odd:.1e} identity residual={ident:.1e} plateau={g.plateau:.4f}")


def test_criterion_08_blend_families(verdict):
    def fam(x, r):
        return r * (1 + 0.1 * np.sin(2 * np.pi * x))

    def fam_dr(x, r):
        return (1 + 0.1 * np.sin(2 * np.pi * x)) + 0 * r

    chain = dict(eps=1.0, delta=0.5, delta1=0.45, eps1=0.9, eps2=0.8)
    bad_chains = [dict(chain, delta1=0.6), dict(chain, eps2=0.95), dict(chain, eps1=1.2),
                  dict(chain, delta=0.85)]
    t0 = time.perf_counter()
    g = blend_families(fam, fam_dr, **chain)
    x = np.linspace(0, 1, 40)[:, None]
    r_in = np.linspace(-0.45, 0.45, 1000)
    r_out = np.concatenate([np.linspace(-1.2, -0.9, 500), np.linspace(0.9, 1.2, 500)])
    r_all = np.linspace(-1.2, 1.2, 1000)
    inner = bool(np.array_equal(g(x, r_in), fam(x, r_in)))
    outer = bool(np.array_equal(g(x, r_out), np.broadcast_to(r_out, (40, 1000))))
    min_dr = float(np.min(g.dr(x, r_all)))
    rejected = 0
    for c in bad_chains:
        try:
            blend_families(fam, fam_dr, **c)
        except ParameterChainInvalid:
            rejected += 1
    runtime = time.perf_counter() - t0
    checks = {"inner = f_r": inner, "outer = r": outer, "d_r g > 0": min_dr > 0,
              "bad chains rejected": rejected == len(bad_chains)}
    assert verdict(8, checks, runtime, 1.0,
                   f"min d_r g={min_dr:.3f}, {rejected}/{len(bad_chains)} bad chains rejected")


@pytest.mark.parametrize("name", ["sol", "magnetic"])
def test_criterion_09_convexify(verdict, name):
    k, eps, eps1 = 1.0, 0.5, 0.25
    make = {"sol": sol_hamiltonian, "magnetic": lambda: magnetic_flat(rotating_theta())}[name]
    t0 = time.perf_counter()
    H = make()
    h = convexify_reparam(H, k, eps, eps1, n_samples=1000)
    rng = np.random.default_rng(2024)
    z = sample_level_set(H, rng.uniform(k - eps, k + eps1, 1000), 1000, seed=2024)
    n = H.dim
    hess = fiber_hessian_fd(h.compose(H), z[:, :n], z[:, n:])
    min_eig = float(np.min(np.linalg.eigvalsh(hess)[:, 0]))
    low = np.linspace(-1.0, h.r0, 200)
    top = np.linspace(h.r1, 3.0, 200)
    runtime = time.perf_counter() - t0
    checks = {"positive definite": min_eig > 0,
              "h = r below": bool(np.array_equal(h(low), low)),
              "h = e^Ar + B above": bool(np.array_equal(h(top), np.exp(h.A * top) + h.B))}
    assert verdict(9, checks, runtime, 30.0,
                   f"{name}: A={h.A:.3f} B={h.B:.3f} min Hessian eigenvalue={min_eig:.3e}")


def test_criterion_10_action_identity(verdict):
    t0 = time.perf_counter()
    kin = kinetic_flat()
    res_kin = action_identity_residual(
        kin, integrate(kin, np.array([0.0, 0.0, 0.6, 0.8]), 1.0, 0.01), 0.5)
    mag = magnetic_flat(rotating_theta())
    x0 = sample_level_set(mag, 0.5, 1, seed=11)[0]
    res_mag = action_identity_residual(mag, integrate(mag, x0, 1.0, 0.002, order=4), 0.5)
    r3 = remark3_hamiltonian()
    loop = np.concatenate([r3.data.loop(1)[0], np.zeros(2)])
    res_r3 = action_identity_residual(r3, integrate(r3, loop, 1.0, 0.01), 0.5)
    runtime = time.perf_counter() - t0
    checks = {"kinetic": res_kin <= 1e-8, "magnetic": res_mag <= 1e-8, "remark3": res_r3 <= 1e-8}
    assert verdict(10, checks, runtime, 10.0,
                   f"residual kinetic={res_kin:.1e} magnetic={res_mag:.1e} "
                   f"remark3={res_r3:.1e}")
