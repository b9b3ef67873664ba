"""Forward/adjoint solves and the adjoint-method gradient."""

import numpy as np
import pytest

import biaffine_design as bd
from biaffine_design.errors import DimensionMismatch, NotInDomain


def scalar_problem(a=2.0, t=0.0, mu=1.0, L=1.0):
    sys = bd.PhysicalSystem(A=[[a]], b=[1.0])
    return bd.DesignProblem(system=sys, c=np.array([1.0]), cost=bd.CostSpec(t=t, mu=mu, L=L))


def test_assemble_identity():
    sys = bd.PhysicalSystem(A=np.eye(2), b=np.zeros(2))
    sm = bd.assemble_system(sys, np.zeros(2))
    assert np.array_equal(sm.K, np.eye(2))
    assert sm.rcond_estimate == pytest.approx(1.0)


def test_assemble_exact_singularity():
    sys = bd.PhysicalSystem(A=[[1.0]], b=[0.0])
    sm = bd.assemble_system(sys, [-1.0])
    assert sm.K[0, 0] == 0.0
    assert sm.rcond_estimate == 0.0


def test_assemble_matches_elementwise_recomputation():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((5, 5))
    B = rng.standard_normal((5, 3))
    theta = rng.standard_normal(3)
    sys = bd.PhysicalSystem(A=A, b=rng.standard_normal(5), B=B)
    sm = bd.assemble_system(sys, theta)
    expected = A + np.diag(B @ theta)
    tol = 1e-14 * (1.0 + np.max(np.abs(A)))
    assert np.max(np.abs(sm.K - expected)) <= tol


def test_assemble_dimension_mismatch():
    sys = bd.PhysicalSystem(A=np.eye(2), b=np.zeros(2))
    with pytest.raises(DimensionMismatch):
        bd.assemble_system(sys, np.zeros(3))


def test_forward_solve_identity():
    sys = bd.PhysicalSystem(A=np.eye(2), b=np.array([1.0, 0.0]))
    state = bd.forward_solve(sys, np.zeros(2))
    assert np.allclose(state.x, [1.0, 0.0])


def test_forward_solve_scaled_identity():
    sys = bd.PhysicalSystem(A=2 * np.eye(2), b=np.array([1.0, 1.0]))
    state = bd.forward_solve(sys, np.zeros(2))
    assert np.allclose(state.x, [0.5, 0.5])


def test_forward_solve_scalar_formula():
    sys = bd.PhysicalSystem(A=[[2.0]], b=[1.0])
    state = bd.forward_solve(sys, [1.0])
    assert state.x[0] == pytest.approx(1.0 / 3.0, rel=1e-14)


def test_forward_solve_not_in_domain():
    sys = bd.PhysicalSystem(A=[[1.0]], b=[1.0])
    with pytest.raises(NotInDomain):
        bd.forward_solve(sys, [-1.0])


def test_forward_solve_zero_theta_matches_direct_solve():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    b = rng.standard_normal(6)
    sys = bd.PhysicalSystem(A=A, b=b)
    state = bd.forward_solve(sys, np.zeros(6))
    assert np.allclose(state.x, np.linalg.solve(A, b), rtol=1e-12, atol=1e-14)


def test_adjoint_solve_identity():
    sys = bd.PhysicalSystem(A=np.eye(2), b=np.zeros(2))
    a = bd.adjoint_solve(sys, np.zeros(2), np.array([0.0, 1.0]))
    assert np.allclose(a, [0.0, 1.0])


def test_adjoint_solve_upper_triangular():
    # A^T a = c with A = [[1,1],[0,1]], c = (1,0)  =>  a = (1,-1)
    sys = bd.PhysicalSystem(A=[[1.0, 1.0], [0.0, 1.0]], b=np.zeros(2))
    a = bd.adjoint_solve(sys, np.zeros(2), np.array([1.0, 0.0]))
    assert np.allclose(a, [1.0, -1.0])
    oracle = np.linalg.solve(np.array([[1.0, 1.0], [0.0, 1.0]]).T, [1.0, 0.0])
    assert np.allclose(a, oracle)


def test_reciprocity_random_instance():
    rng = np.random.default_rng(8)
    n = 8
    A = rng.standard_normal((n, n)) + 4 * np.eye(n)
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    theta = 0.1 * rng.standard_normal(n)
    sys = bd.PhysicalSystem(A=A, b=b)
    x = bd.forward_solve(sys, theta).x
    a = bd.adjoint_solve(sys, theta, c)
    assert abs(a @ b - c @ x) <= 1e-10 * (1.0 + abs(c @ x))


def test_solve_residual_invariants():
    rng = np.random.default_rng(21)
    for n in (4, 16, 64):
        A = rng.standard_normal((n, n))
        b = rng.standard_normal(n)
        c = rng.standard_normal(n)
        sys = bd.PhysicalSystem(A=A, b=b)
        theta = 0.05 * rng.standard_normal(n)
        sm = bd.assemble_system(sys, theta)
        if sm.rcond_estimate <= 1e-8:
            continue
        x = bd.forward_solve(sys, theta, sysmat=sm).x
        a = bd.adjoint_solve(sys, theta, c, sysmat=sm)
        bound_x = 1e-9 * (1.0 + np.max(np.abs(b))) / sm.rcond_estimate
        bound_a = 1e-9 * (1.0 + np.max(np.abs(c))) / sm.rcond_estimate
        assert np.max(np.abs(sm.K @ x - b)) <= bound_x
        assert np.max(np.abs(sm.K.T @ a - c)) <= bound_a


def test_cost_gradient_scalar_analytic():
    # d/dtheta (1/2) (2 + theta)^(-2) = -(2 + theta)^(-3) = -1/8 at theta = 0
    problem = scalar_problem(a=2.0, t=0.0)
    g, cost = bd.cost_gradient(problem, np.zeros(1))
    assert g[0] == pytest.approx(-0.125, rel=1e-12)
    assert cost == pytest.approx(0.125, rel=1e-12)


def test_cost_gradient_zero_at_stationary_cost():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    b = rng.standard_normal(4)
    c = rng.standard_normal(4)
    sys = bd.PhysicalSystem(A=A, b=b)
    target = float(c @ np.linalg.solve(A, b))
    problem = bd.DesignProblem(system=sys, c=c, cost=bd.CostSpec(t=target))
    g, cost = bd.cost_gradient(problem, np.zeros(4))
    assert np.allclose(g, 0.0, atol=1e-12)
    assert cost == pytest.approx(0.0, abs=1e-18)


def test_cost_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    n = m = 5
    A = rng.standard_normal((n, n)) + 3 * np.eye(n)
    B = rng.standard_normal((n, m))
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    sys = bd.PhysicalSystem(A=A, b=b, B=B)
    problem = bd.DesignProblem(system=sys, c=c, cost=bd.CostSpec(t=1.0, mu=1.0, L=2.5))
    theta = 0.1 * rng.standard_normal(m)
    g, _ = bd.cost_gradient(problem, theta)
    g_fd = bd.finite_difference_gradient(problem, theta, h=1e-5)
    assert np.linalg.norm(g - g_fd) <= 1e-6 * np.linalg.norm(g)


def test_finite_difference_second_order():
    problem = scalar_problem(a=2.0, t=0.0)
    exact = -0.125
    err_h = abs(bd.finite_difference_gradient(problem, np.zeros(1), h=1e-3)[0] - exact)
    err_h2 = abs(bd.finite_difference_gradient(problem, np.zeros(1), h=5e-4)[0] - exact)
    assert err_h2 <= err_h / 3.0  # ~4x reduction for a second-order stencil


def test_finite_difference_zero_slope():
    problem = scalar_problem(a=2.0, t=0.5)  # overlap at theta=0 is exactly the target
    g = bd.finite_difference_gradient(problem, np.zeros(1), h=1e-5)
    assert np.max(np.abs(g)) <= 1e-10


def test_domain_check_cases():
    sys_id = bd.PhysicalSystem(A=np.eye(3), b=np.zeros(3))
    ok, rcond = bd.domain_check(sys_id, np.zeros(3))
    assert ok and rcond == pytest.approx(1.0)

    sys_sing = bd.PhysicalSystem(A=[[1.0]], b=[0.0])
    ok, rcond = bd.domain_check(sys_sing, [-1.0])
    assert not ok and rcond == 0.0

    sys_near = bd.PhysicalSystem(A=np.diag([1.0, 1e-13]), b=np.zeros(2))
    ok, rcond = bd.domain_check(sys_near, np.zeros(2))
    assert not ok
    assert rcond == pytest.approx(1e-13, rel=0.5)


def test_identity_selection_tag():
    sys = bd.PhysicalSystem(A=np.eye(3), b=np.ones(3))
    assert sys.identity_B and sys.m == 3
    theta = np.array([1.0, 2.0, 3.0])
    assert bd.assemble_system(sys, theta).K[1, 1] == 3.0
    with pytest.raises(DimensionMismatch):
        bd.PhysicalSystem(A=np.eye(3), b=np.ones(3), m=2)


def test_physical_system_rejects_nonfinite():
    with pytest.raises(DimensionMismatch):
        bd.PhysicalSystem(A=[[np.nan]], b=[0.0])
    with pytest.raises(DimensionMismatch):
        bd.PhysicalSystem(A=np.eye(2), b=[np.inf, 0.0])


def test_gradient_oracle_agreement_seeded_instances():
    # smaller version of the acceptance sweep: 20 instances with n, m <= 24
    rng = np.random.default_rng(1000)
    checked = 0
    while checked < 20:
        n = int(rng.integers(2, 25))
        m = int(rng.integers(1, 25))
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m)) / np.sqrt(m)
        b = rng.standard_normal(n)
        c = rng.standard_normal(n)
        sys = bd.PhysicalSystem(A=A, b=b, B=B)
        theta = 0.01 * rng.standard_normal(m)
        sm = bd.assemble_system(sys, theta)
        if sm.rcond_estimate <= 1e-8:
            continue
        x = sm.solve(b)
        problem = bd.DesignProblem(
            system=sys, c=c, cost=bd.CostSpec(t=float(c @ x) + 1.0, mu=1.0, L=3.0)
        )
        g, _ = bd.cost_gradient(problem, theta)
        g_fd = bd.finite_difference_gradient(problem, theta, h=1e-5)
        assert np.linalg.norm(g - g_fd) <= 1e-6 * max(np.linalg.norm(g), 1e-12)
        a = bd.adjoint_solve(sys, theta, c, sysmat=sm)
        assert abs(a @ b - c @ x) <= 1e-9 * (1.0 + abs(c @ x))
        checked += 1
