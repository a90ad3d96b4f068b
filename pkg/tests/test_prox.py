import numpy as np
import pytest

from isobench.homotopy import eval_path, homotopy_solve
from isobench.operators import CostCounter, Operator, gen_gaussian
from isobench.prox import (
    Problem,
    fixed_point_residual,
    functional_value,
    lambda_max,
    lambda_of_rho,
    project_l1,
    soft_threshold,
)

from oracles import naive_matvec, project_l1_bisection


def test_soft_threshold_piecewise():
    assert soft_threshold(np.array([2.0]), 1.0)[0] == 1.0
    assert soft_threshold(np.array([0.5]), 1.0)[0] == 0.0
    assert soft_threshold(np.array([-3.0]), 1.0)[0] == -2.0


def test_soft_threshold_zero_lam_is_identity(rng):
    u = rng.standard_normal(50)
    assert np.array_equal(soft_threshold(u, 0.0), u)


def test_soft_threshold_componentwise():
    out = soft_threshold(np.array([1.0, -0.2, -0.7]), 0.5)
    assert np.allclose(out, [0.5, 0.0, -0.2], atol=1e-15)


def test_soft_threshold_tie_maps_to_zero():
    assert soft_threshold(np.array([0.5, -0.5]), 0.5).tolist() == [0.0, 0.0]


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValueError):
        soft_threshold(np.ones(3), -0.1)


def test_soft_threshold_nonexpansive(rng):
    for _ in range(10_000):
        u = rng.standard_normal(20)
        v = rng.standard_normal(20)
        lam = abs(rng.standard_normal())
        assert (np.linalg.norm(soft_threshold(u, lam) - soft_threshold(v, lam))
                <= np.linalg.norm(u - v) + 1e-12)


def test_lambda_max_identity():
    op = Operator(np.eye(2))
    assert lambda_max(op, np.array([3.0, -1.0])) == 3.0


def test_lambda_max_zero_data():
    op = gen_gaussian(4, 6, seed=0)
    assert lambda_max(op, np.zeros(4)) == 0.0


def test_lambda_max_matches_naive_oracle(rng):
    op = gen_gaussian(50, 200, seed=5)
    y = rng.standard_normal(50)
    naive = np.max(np.abs(naive_matvec(op.entries, y, adjoint=True)))
    counter = CostCounter()
    assert lambda_max(op, y, counter=counter) == pytest.approx(naive, rel=1e-14)
    assert counter.units == 1


def test_project_l1_single_coordinate():
    assert np.allclose(project_l1(np.array([2.0, 0.0]), 1.0), [1.0, 0.0])


def test_project_l1_interior_point_unchanged(rng):
    x = rng.standard_normal(10)
    rho = np.abs(x).sum() + 1.0
    assert np.array_equal(project_l1(x, rho), x)


def test_project_l1_two_dim_hand_value():
    # (0.8 - theta) + (0.6 - theta) = 1  =>  theta = 0.2
    out = project_l1(np.array([0.8, 0.6]), 1.0)
    assert np.allclose(out, [0.6, 0.4], atol=1e-12)
    # dense sweep of the 2-d ball never beats the projected point
    x = np.array([0.8, 0.6])
    grid = np.linspace(-1.0, 1.0, 201)
    for a in grid:
        for b in grid:
            if abs(a) + abs(b) <= 1.0:
                assert (np.linalg.norm(x - out)
                        <= np.linalg.norm(x - np.array([a, b])) + 1e-9)


def test_project_l1_matches_bisection_oracle(rng):
    for _ in range(300):
        n = rng.integers(1, 5)
        x = 3.0 * rng.standard_normal(n)
        rho = float(2.0 * abs(rng.standard_normal())) + 1e-3
        assert np.max(np.abs(project_l1(x, rho) - project_l1_bisection(x, rho))) <= 1e-9


def test_project_l1_norm_contract(rng):
    for _ in range(300):
        x = 5.0 * rng.standard_normal(30)
        rho = float(abs(rng.standard_normal()) * 3.0) + 1e-6
        out = project_l1(x, rho)
        l1 = np.abs(out).sum()
        assert l1 <= rho + 1e-12 * max(1.0, rho)
        if np.abs(x).sum() > rho:
            assert l1 == pytest.approx(rho, abs=1e-9)


def test_project_l1_optimality_random_feasible(rng):
    for _ in range(50):
        x = 2.0 * rng.standard_normal(4)
        rho = 1.5
        out = project_l1(x, rho)
        d_out = np.linalg.norm(x - out)
        for _ in range(200):
            z = rng.standard_normal(4)
            z = z / np.abs(z).sum() * rho * rng.random()
            assert d_out <= np.linalg.norm(x - z) + 1e-9


def test_project_l1_rejects_negative_rho():
    with pytest.raises(ValueError):
        project_l1(np.ones(2), -1.0)


def test_fixed_point_residual_identity_case(rng):
    op = Operator(np.eye(6))
    y = rng.standard_normal(6)
    lam = 0.3
    prob = Problem(op, y, lam=lam)
    x = soft_threshold(y, lam)
    assert fixed_point_residual(prob, x) == 0.0


def test_fixed_point_residual_zero_above_lambda_max(rng):
    op = gen_gaussian(5, 8, seed=1)
    y = rng.standard_normal(5)
    lam = lambda_max(op, y)
    prob = Problem(op, y, lam=lam * 1.01)
    assert fixed_point_residual(prob, np.zeros(8)) == 0.0


def test_fixed_point_residual_at_path_minimizer(desk_instance):
    op, y = desk_instance
    lam_top = lambda_max(op, y)
    path = homotopy_solve(Problem(op, y, lam=0.0), lambda_stop=lam_top / 2 ** 4)
    lam = lam_top / 2 ** 4
    x_bar = eval_path(path, lam)
    counter = CostCounter()
    assert fixed_point_residual(Problem(op, y, lam=lam), x_bar, counter=counter) <= 1e-10
    assert counter.units == 2


def test_functional_value_at_zero(rng):
    op = gen_gaussian(4, 9, seed=2)
    y = rng.standard_normal(4)
    prob = Problem(op, y, lam=0.7)
    assert functional_value(prob, np.zeros(9)) == pytest.approx(float(y @ y), rel=1e-14)


def test_functional_value_hand_arithmetic():
    op = Operator(np.eye(1))
    prob = Problem(op, np.array([1.0]), lam=0.25)
    assert functional_value(prob, np.array([0.75])) == pytest.approx(0.4375, abs=1e-15)


def test_functional_minimum_under_perturbations(desk_instance, rng):
    op, y = desk_instance
    lam = lambda_max(op, y) / 2 ** 4
    prob = Problem(op, y, lam=lam)
    path = homotopy_solve(Problem(op, y, lam=0.0), lambda_stop=lam)
    x_bar = eval_path(path, lam)
    f_star = functional_value(prob, x_bar)
    for _ in range(100):
        delta = 1e-3 * rng.standard_normal(op.p)
        assert f_star <= functional_value(prob, x_bar + delta) + 1e-12


def test_lambda_of_rho_at_zero_is_lambda_max(desk_instance):
    op, y = desk_instance
    prob = Problem(op, y, rho=1.0)
    assert lambda_of_rho(prob, np.zeros(op.p)) == pytest.approx(
        lambda_max(op, y), rel=1e-14)


def test_lambda_of_rho_on_path_breakpoints(desk_instance):
    op, y = desk_instance
    lam_top = lambda_max(op, y)
    path = homotopy_solve(Problem(op, y, lam=0.0), lambda_stop=lam_top / 2 ** 4)
    prob = Problem(op, y, rho=1.0)
    for j in range(1, path.n_breakpoints):
        lam_j = float(path.lambdas[j])
        assert lambda_of_rho(prob, path.iterates[j]) == pytest.approx(lam_j, abs=1e-8)


def test_lambda_of_rho_past_least_squares_is_zero(rng):
    # full-rank square case: the unpenalized solution has zero residual
    op = gen_gaussian(6, 6, seed=3)
    y = rng.standard_normal(6)
    x_ls = np.linalg.solve(op.entries, y)
    prob = Problem(op, y, rho=float(np.abs(x_ls).sum()))
    assert lambda_of_rho(prob, x_ls) <= 1e-10


def test_problem_validation(desk_instance):
    op, y = desk_instance
    with pytest.raises(ValueError, match="exactly one"):
        Problem(op, y)
    with pytest.raises(ValueError, match="exactly one"):
        Problem(op, y, lam=1.0, rho=1.0)
    with pytest.raises(ValueError):
        Problem(op, y, lam=-1.0)
    with pytest.raises(ValueError):
        Problem(op, y[:-1], lam=1.0)
    assert Problem(op, y, lam=1.0).mode == "penalized"
    assert Problem(op, y, rho=1.0).mode == "constrained"
