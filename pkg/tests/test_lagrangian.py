import numpy as np
import pytest

from nhcartan.geometry import Chart, FrameQ, TangentState, VectorFieldQ, lie_bracket
from nhcartan.lagrangian import (
    GeneralLagrangian,
    MechanicalLagrangian,
    RegularityError,
    UnsupportedOperationError,
    cartan_forms,
    christoffels,
    complete_lift_L,
    covariant_derivative,
    energy,
    grad_potential,
    hessian_metric,
    vertical_lift_L,
)

CH = Chart(3)
FLAT = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


def V(*c):
    return VectorFieldQ(CH, list(c))


def free():
    return GeneralLagrangian(CH, "0.5*(u_1^2 + u_2^2 + u_3^2)")


def polar():
    return MechanicalLagrangian(CH, [[1, 0, 0], [0, "q_1^2", 0], [0, 0, 1]], "0")


def test_vertical_lift_examples():
    st = TangentState([0, 1, 0], [1, 1, 1])
    assert vertical_lift_L(free(), V(0, 1, 0), st) == 1
    assert vertical_lift_L(free(), V(0, 0, 0), st) == 0
    mech = MechanicalLagrangian(CH, FLAT)
    assert vertical_lift_L(mech, V(1, 0, "q_2"), st) == 2


def test_vertical_lift_is_metric_pairing(rng):
    L = MechanicalLagrangian(CH, [["1 + q_2^2", "q_1", 0], ["q_1", 3, 0], [0, 0, "2 + sin(q_3)"]], "q_1")
    X = V("q_3", 1, "q_1*q_2")
    for _ in range(20):
        st = TangentState(rng.uniform(-0.5, 0.5, 3), rng.normal(size=3))
        assert abs(vertical_lift_L(L, X, st) - X(st.q) @ L.metric(st.q) @ st.u) <= 1e-12


def test_complete_lift_examples(rng):
    for _ in range(5):
        st = TangentState(rng.uniform(-2, 2, 3), rng.normal(size=3))
        assert complete_lift_L(free(), V(1, 2, -1), st) == 0
        assert complete_lift_L(free(), V(1, 0, "q_2"), st) == pytest.approx(st.u[1] * st.u[2], abs=1e-15)
        grav = MechanicalLagrangian(CH, FLAT, "q_2^2 + q_1")
        assert complete_lift_L(grav, V(0, 1, 0), st) == pytest.approx(-2 * st.q[1], abs=1e-15)


def test_hessian_examples():
    st = TangentState([0.3, 0.1, -1], [1, 2, 3])
    np.testing.assert_array_equal(hessian_metric(free(), st).g, np.eye(3))
    L = GeneralLagrangian(CH, "0.5*(1 + q_1^2)*u_1^2")
    g = hessian_metric(L, st).g
    assert g[0, 0] == pytest.approx(1 + 0.09) and np.count_nonzero(g) == 1


def test_hessian_frame_blocks():
    L = MechanicalLagrangian(CH, FLAT)
    q2 = 0.8
    frame = FrameQ([V(1, 0, "q_2"), V(0, 1, 0), V("-q_2", 0, 1)], m=2)
    s = hessian_metric(L, TangentState([0, q2, 0], [0, 0, 0]), frame)
    assert np.max(np.abs(s.g_a_alpha)) <= 1e-12
    assert s.g_alpha_beta[0, 0] == pytest.approx(1 + q2 ** 2)
    with pytest.raises(RegularityError):
        hessian_metric(L, TangentState([0, 0, 0], [0, 0, 0]), FrameQ([V(1, 0, 0), V(1, 0, 0), V(0, 0, 1)], m=2))


def test_mechanical_hessian_velocity_independent(rng):
    L = MechanicalLagrangian(CH, [["1 + q_2^2", 0, 0], [0, 1, 0], [0, 0, 1]], "q_3")
    q = rng.uniform(-1, 1, 3)
    g1 = hessian_metric(L, TangentState(q, rng.normal(size=3))).g
    g2 = hessian_metric(L, TangentState(q, rng.normal(size=3))).g
    assert np.max(np.abs(g1 - g2)) <= 1e-12
    np.testing.assert_array_equal(g1, L.metric(q))


def test_metric_checks():
    with pytest.raises(RegularityError):
        MechanicalLagrangian(CH, [[1, 0, 0], [0, -1, 0], [0, 0, 1]]).check_metric([0, 0, 0])
    with pytest.raises(RegularityError):
        MechanicalLagrangian(CH, [[1, "q_1", 0], [0, 1, 0], [0, 0, 1]]).check_metric([1, 0, 0])
    with pytest.raises(RegularityError):
        GeneralLagrangian(CH, "u_1^2 + u_2^2").check_regular(TangentState([0, 0, 0], [1, 1, 1]))


def test_energy_examples(rng):
    L = MechanicalLagrangian(CH, FLAT, "q_3^2")
    st = TangentState([0.1, 0.2, 0.5], [1, -1, 2])
    assert energy(L, st) == pytest.approx(0.5 * 6 + 0.25)
    assert energy(L, TangentState([0, 0, 1.5], [0, 0, 0])) == pytest.approx(2.25)
    quartic = GeneralLagrangian(CH, "0.25*(u_1^2 + u_2^2 + u_3^2)^2")
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    assert energy(quartic, TangentState([0, 0, 0], u)) == pytest.approx(0.75, abs=1e-14)


def test_cartan_forms_structure(rng):
    L = GeneralLagrangian(CH, "0.5*(1 + q_2^2)*u_1^2 + q_1*u_2*u_3 + 0.1*u_3^4 + cos(q_3)*u_2^2 + u_1")
    for _ in range(10):
        st = TangentState(rng.uniform(-1, 1, 3), rng.normal(size=3))
        cf = cartan_forms(L, st)
        assert np.all(cf.omega == -cf.omega.T)
        assert np.all(cf.omega[3:, 3:] == 0)
        assert np.all(cf.theta[3:] == 0)
        np.testing.assert_array_equal(cf.omega[3:, :3], L.derivatives(st).g)


def test_cartan_canonical_for_free_particle():
    cf = cartan_forms(free(), TangentState([0, 0, 0], [1, 2, 3]))
    np.testing.assert_array_equal(cf.theta[:3], [1, 2, 3])
    expected = np.zeros((6, 6))
    expected[3:, :3] = np.eye(3)
    expected[:3, 3:] = -np.eye(3)
    np.testing.assert_array_equal(cf.omega, expected)


def test_cartan_pairing_of_lifts():
    L = MechanicalLagrangian(CH, FLAT)
    q2 = 0.6
    st = TangentState([0, q2, 0], [1, q2, 0])
    X = V(1, 0, "q_2")
    xv = np.concatenate([np.zeros(3), X(st.q)])
    xc = np.concatenate([X(st.q), X.jacobian(st.q) @ st.u])
    assert xv @ cartan_forms(L, st).omega @ xc == pytest.approx(1 + q2 ** 2)


def test_cartan_closed_by_finite_differences(rng):
    L = GeneralLagrangian(CH, "0.5*(1 + q_2^2)*u_1^2 + q_1*u_2*u_3 + 0.5*u_3^2 + 0.5*u_2^2 + sin(q_3)*u_1")

    def omega(x):
        return cartan_forms(L, TangentState(x[:3], x[3:])).omega

    x = np.concatenate([rng.uniform(-1, 1, 3), rng.normal(size=3)])
    h = 1e-5
    dW = np.empty((6, 6, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        dW[k] = (omega(x + e) - omega(x - e)) / (2 * h)
    # d omega_{ijk} = d_i w_jk + d_j w_ki + d_k w_ij
    cyc = dW + np.einsum("jki->ijk", dW) + np.einsum("kij->ijk", dW)
    assert np.max(np.abs(cyc)) <= 1e-8


def test_christoffels_flat_and_polar():
    flat = MechanicalLagrangian(CH, FLAT)
    assert np.all(christoffels(flat, [0.4, 1, 2]) == 0)
    q1 = 1.7
    G = christoffels(polar(), [q1, 0.2, 0.3])
    expected = np.zeros((3, 3, 3))
    expected[1, 0, 1] = expected[1, 1, 0] = 1 / q1
    expected[0, 1, 1] = -q1
    np.testing.assert_allclose(G, expected, atol=1e-15)
    Y = V("q_2", "q_1*q_3", 1)
    x = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(covariant_derivative(flat, x, Y, [0.1, 0.2, 0.3]), Y.jacobian([0.1, 0.2, 0.3]) @ x)


def test_grad_potential():
    assert grad_potential(MechanicalLagrangian(CH, FLAT, "q_3"), [0, 0, 0]).tolist() == [0, 0, 1]
    L = MechanicalLagrangian(CH, [[2, 0, 0], [0, 1, 0], [0, 0, 1]], "q_1^2")
    np.testing.assert_allclose(grad_potential(L, [1.0, 0, 0]), [1.0, 0, 0])


def test_non_mechanical_rejected():
    with pytest.raises(UnsupportedOperationError):
        christoffels(free(), [0, 0, 0])
    with pytest.raises(UnsupportedOperationError):
        grad_potential(free(), [0, 0, 0])


def _curved():
    return MechanicalLagrangian(CH, [["1 + q_2^2", "0.3*q_3", 0], ["0.3*q_3", "2 + sin(q_1)", 0], [0, 0, "1 + q_1^2"]])


def test_torsion_free(rng):
    L = _curved()
    X, Y = V("q_2", "q_1*q_3", 1), V("sin(q_3)", 1, "q_2^2")
    for q in rng.uniform(-1, 1, size=(20, 3)):
        lhs = covariant_derivative(L, X(q), Y, q) - covariant_derivative(L, Y(q), X, q)
        np.testing.assert_allclose(lhs, lie_bracket(X, Y, q), atol=1e-9)


def test_metric_compatible(rng):
    L = _curved()
    X, Y, Z = V("q_2", 1, 0), V(1, "q_3", "q_1"), V(0, "cos(q_1)", 1)
    h = 1e-6

    def gYZ(q):
        return Y(q) @ L.metric(q) @ Z(q)

    for q in rng.uniform(-1, 1, size=(20, 3)):
        x = X(q)
        lhs = (gYZ(q + h * x) - gYZ(q - h * x)) / (2 * h)
        G = L.metric(q)
        rhs = covariant_derivative(L, x, Y, q) @ G @ Z(q) + Y(q) @ G @ covariant_derivative(L, x, Z, q)
        assert abs(lhs - rhs) <= 1e-8


def test_mechanical_matches_expression_form(rng):
    L = _curved()
    Lg = L.as_general()
    for _ in range(10):
        st = TangentState(rng.uniform(-1, 1, 3), rng.normal(size=3))
        a, b = L.derivatives(st), Lg.derivatives(st)
        for name in ("dq", "du", "g", "M"):
            np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12)
        assert a.value == pytest.approx(b.value, abs=1e-12)
