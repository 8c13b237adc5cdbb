import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mane.errors import NewtonDivergence, NonPositiveConformal
from mane.geometry import TorusChart, join_state
from mane.hamiltonian import (TonelliHamiltonian, constant_theta, kinetic_flat, lagrangian_eval,
                              legendre_velocity, magnetic_flat, remark3_hamiltonian,
                              rotating_theta, sol_hamiltonian, suspend)

BUILTINS = {
    "kinetic": kinetic_flat,
    "magnetic": lambda: magnetic_flat(rotating_theta()),
    "closed": lambda: magnetic_flat(constant_theta(0.7)),
    "sol": sol_hamiltonian,
    "remark3": remark3_hamiltonian,
    "suspended-sol": lambda: suspend(sol_hamiltonian()),
}


def random_points(H, rng, n, scale=1.5):
    q = H.chart.sample(rng, n)
    p = rng.normal(scale=scale, size=q.shape)
    return q, p


@pytest.fixture(params=sorted(BUILTINS))
def builtin(request):
    return BUILTINS[request.param]()


def test_fibrewise_convexity(builtin, rng):
    q, p1 = random_points(builtin, rng, 500)
    p2 = rng.normal(scale=1.5, size=p1.shape)
    mid = builtin.value(q, 0.5 * (p1 + p2))
    avg = 0.5 * (builtin.value(q, p1) + builtin.value(q, p2))
    assert np.all(mid <= avg + 1e-12)
    assert np.all(np.linalg.eigvalsh(builtin.hess_pp(q, p1))[..., 0] > 0)


def test_superlinearity_probe(builtin, rng):
    q, p = random_points(builtin, rng, 100)
    p /= np.linalg.norm(p, axis=-1, keepdims=True)
    ratios = [builtin.value(q, s * p) / s for s in (1.0, 10.0, 100.0)]
    assert np.all(ratios[1] > ratios[0]) and np.all(ratios[2] > 5 * ratios[1])


def test_gradients_match_differences(builtin, rng):
    q, p = random_points(builtin, rng, 50)
    h = 1e-6
    for grad, arg in ((builtin.grad_p, "p"), (builtin.grad_q, "q")):
        g = grad(q, p)
        fd = np.empty_like(g)
        for i in range(g.shape[-1]):
            e = np.zeros(g.shape[-1])
            e[i] = h
            if arg == "p":
                fd[:, i] = (builtin.value(q, p + e) - builtin.value(q, p - e)) / (2 * h)
            else:
                fd[:, i] = (builtin.value(q + e, p) - builtin.value(q - e, p)) / (2 * h)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_energy_is_conserved_by_the_field(builtin, rng):
    q, p = random_points(builtin, rng, 200)
    X = builtin.vector_field(join_state(q, p))
    dH = np.concatenate([builtin.grad_q(q, p), builtin.grad_p(q, p)], -1)
    assert np.max(np.abs(np.sum(dH * X, axis=-1))) <= 1e-10 * max(1.0, np.max(np.abs(dH)) ** 2)


def test_kinetic_examples():
    H = kinetic_flat()
    assert H.value(np.zeros(2), np.array([1.0, 0.0])) == 0.5
    assert H.value(np.zeros(2), np.zeros(2)) == 0.0
    q, p = np.array([[0.2, 0.4]]), np.array([[0.3, -1.1]])
    np.testing.assert_array_equal(H.grad_p(q, p), p)
    np.testing.assert_array_equal(H.grad_q(q, p), 0.0)
    np.testing.assert_array_equal(H.vector_field(join_state(q, p)), [[0.3, -1.1, 0.0, 0.0]])


def test_magnetic_examples(rng):
    zero = magnetic_flat(constant_theta(0.0))
    assert zero.value(np.zeros(2), np.array([0.0, 1.0])) == 0.5
    H = magnetic_flat(rotating_theta())
    q = rng.uniform(size=(100, 2))
    assert np.max(np.abs(H.value(q, -H.theta(q)))) <= 1e-15


def test_conformal_factor_must_be_positive():
    with pytest.raises(NonPositiveConformal):
        magnetic_flat(rotating_theta(), phi=0.0)
    H = magnetic_flat(rotating_theta(), phi=lambda q: np.cos(2 * np.pi * q[..., 0]))
    with pytest.raises(NonPositiveConformal):
        H.value(np.array([0.5, 0.0]), np.zeros(2))


def test_remark3_dual_pair(rng):
    H = remark3_hamiltonian()
    d = H.data
    q, p = random_points(H, rng, 300)
    v = (p + d.Z(q)) / d.phi(q)[:, None]
    np.testing.assert_allclose(legendre_velocity(H, join_state(q, p)), v, atol=1e-12)
    lhs = np.sum(p * v, axis=-1) - d.lagrangian(q, v)
    assert np.max(np.abs(lhs - H.value(q, p))) <= 1e-10


def test_remark3_loop_is_unit_speed_and_positive_phi():
    d = remark3_hamiltonian().data
    g = d.loop(64)
    assert np.max(np.abs(np.linalg.norm(d.Z(g), axis=-1) - 1)) <= 1e-10
    assert np.max(d.psi(g)) <= 1e-20
    q = np.stack(np.meshgrid(np.linspace(0, 1, 64), np.linspace(0, 1, 64)), -1).reshape(-1, 2)
    assert d.phi(q).min() > 0


def test_remark3_lagrangian_bound(rng):
    H = remark3_hamiltonian()
    d = H.data
    q = H.chart.sample(rng, 400)
    v = rng.normal(size=q.shape)
    assert np.all(lagrangian_eval(H, q, v) + 0.5 >= -1e-12)
    g = d.loop(32)
    np.testing.assert_allclose(lagrangian_eval(H, g, d.Z(g)) + 0.5, 0.0, atol=1e-10)
    # off the loop the bound is strict, even for the best velocity
    off = d.center + np.array([[0.05, 0.0], [0.3, 0.1]])
    best = d.Z(off) / d.phi(off)[:, None]
    assert np.all(lagrangian_eval(H, off, best) + 0.5 > 1e-4)


def test_sol_examples():
    H = sol_hamiltonian()
    assert H.value(np.zeros(3), np.zeros(3)) == 0.5
    for z in (-1.0, 0.0, 0.7):
        q = np.array([0.2, 0.3, z])
        assert abs(H.value(q, np.array([-np.exp(-z), 0.0, 0.0]))) <= 1e-15


def test_sol_momentum_form(rng):
    H = sol_hamiltonian()
    q = np.concatenate([rng.uniform(-1, 1, (1000, 2)), rng.uniform(-2, 2, (1000, 1))], 1)
    p = rng.normal(size=(1000, 3))
    M = H.momenta(q, p)
    ref = 0.5 * ((M[:, 0] + 1) ** 2 + M[:, 1] ** 2 + M[:, 2] ** 2)
    assert np.max(np.abs(H.value(q, p) - ref) / np.maximum(1, ref)) <= 1e-12


def test_sol_hamilton_equations_in_momenta(rng):
    H = sol_hamiltonian()
    q = rng.uniform(-1, 1, (200, 3))
    p = rng.normal(size=(200, 3))
    X = H.vector_field(join_state(q, p))
    Mx, My, Mz = H.momenta(q, p).T
    z = q[:, 2]
    qdot, pdot = X[:, :3], X[:, 3:]
    np.testing.assert_allclose(qdot[:, 0], np.exp(z) * (Mx + 1), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(qdot[:, 1], np.exp(-z) * My, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(qdot[:, 2], Mz, rtol=1e-10, atol=1e-10)
    # M' = d/dt (e^z p_x, e^-z p_y, p_z)
    dMx = Mz * np.exp(z) * p[:, 0] + np.exp(z) * pdot[:, 0]
    dMy = -Mz * np.exp(-z) * p[:, 1] + np.exp(-z) * pdot[:, 1]
    np.testing.assert_allclose(dMx, Mx * Mz, atol=1e-10)
    np.testing.assert_allclose(dMy, -My * Mz, atol=1e-10)
    np.testing.assert_allclose(pdot[:, 2], My ** 2 - Mx * (Mx + 1), atol=1e-10)
    # m = Mx My has zero Lie derivative
    assert np.max(np.abs(dMx * My + Mx * dMy)) <= 1e-10


def test_suspension_is_exact_sum(rng):
    base = magnetic_flat(rotating_theta())
    Hb = suspend(base)
    q, p = random_points(Hb, rng, 100)
    expect = base.value(q[:, :2], p[:, :2]) + 0.5 * p[:, 2] ** 2
    np.testing.assert_array_equal(Hb.value(q, p), expect)
    p[:, 2] = 0.0
    np.testing.assert_array_equal(Hb.value(q, p), base.value(q[:, :2], p[:, :2]))


def test_suspension_level_slices(rng):
    from mane.geometry import sample_level_set
    base = kinetic_flat()
    Hb = suspend(base)
    x = sample_level_set(Hb, 0.5, 500, seed=2)
    s = x[:, 5]
    slice_energy = base.value(x[:, :2], x[:, 3:5])
    np.testing.assert_allclose(slice_energy, 0.5 - s ** 2 / 2, atol=1e-10)


@given(arrays(float, 2, elements=st.floats(-3, 3)), arrays(float, 2, elements=st.floats(0, 1)))
def test_kinetic_lagrangian_self_dual(v, q):
    assert abs(lagrangian_eval(kinetic_flat(), q, v) - 0.5 * v @ v) <= 1e-12 * max(1, v @ v)


@given(arrays(float, 2, elements=st.floats(-3, 3)), arrays(float, 2, elements=st.floats(0, 1)))
def test_magnetic_lagrangian(v, q):
    H = magnetic_flat(rotating_theta())
    L = 0.5 * v @ v - H.theta(q) @ v
    assert abs(lagrangian_eval(H, q, v) - L) <= 1e-10


def test_custom_hamiltonian_uses_differences(rng):
    H = TonelliHamiltonian(lambda q, p: 0.25 * np.sum(p ** 4, -1) + 0.5 * np.sum(p ** 2, -1)
                           + 0.1 * np.cos(2 * np.pi * q[..., 0]), TorusChart(2))
    q, p = random_points(H, rng, 20)
    np.testing.assert_allclose(H.grad_p(q, p), p ** 3 + p, rtol=1e-6, atol=1e-7)
    gq = H.grad_q(q, p)
    np.testing.assert_allclose(gq[:, 0], -0.2 * np.pi * np.sin(2 * np.pi * q[:, 0]), atol=1e-7)
    v = H.grad_p(q, p)
    np.testing.assert_allclose(H.solve_fiber(q, v), p, atol=1e-8)


def test_fibre_newton_reports_failure():
    # grad_p of this non-convex function has no root for v = 5
    H = TonelliHamiltonian(lambda q, p: np.sum(np.cos(p), -1), TorusChart(1))
    with pytest.raises(NewtonDivergence):
        H.solve_fiber(np.zeros((1, 1)), np.full((1, 1), 5.0))
