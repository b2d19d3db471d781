from __future__ import annotations

import numpy as np
import pytest

from app.control.lift import (
    approx_step,
    build_affine_step,
    build_lift,
    chain_inverse,
    chain_matrix,
    controllability_matrix,
    continuous_chain,
    expected_remainder_orders,
    remainder_study,
    state_input_grid,
)
from app.control.plant import LinearDriftPlant, OperatingBox, equilibrium_input

T_LIST = (0.02, 0.01, 0.005, 0.0025)


def test_chain_matrix_entries():
    A = chain_matrix(3, 0.1)
    expected = np.array([[1.0, 0.1, 0.005], [0.0, 1.0, 0.1], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(A, expected, atol=1e-15)


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_chain_inverse(dim):
    np.testing.assert_allclose(chain_inverse(dim, 0.3) @ chain_matrix(dim, 0.3), np.eye(dim), atol=1e-12)


def test_build_lift_output_row():
    lift = build_lift(2, 0.1)
    np.testing.assert_array_equal(lift.C, [[1.0, 0.0, 0.0]])
    np.testing.assert_allclose(lift.A_inv @ lift.A, np.eye(3), atol=1e-12)
    with pytest.raises(ValueError):
        build_lift(0, 0.1)
    with pytest.raises(ValueError):
        build_lift(2, -0.1)


def test_affine_step_second_order_structure():
    T = 0.1
    step = build_affine_step(2, T)
    np.testing.assert_allclose(step.A_z, np.eye(2) + step.A1 * T)
    np.testing.assert_allclose(step.B_T, [T ** 2 / 2.0, T])
    np.testing.assert_allclose(step.B2, [0.5, 0.0], atol=1e-12)
    assert step.controllable()


def test_controllability_of_chain():
    A1, B1 = continuous_chain(3)
    C = controllability_matrix(A1, B1)
    assert np.linalg.matrix_rank(C) == 3


def test_approx_step_double_integrator(double_integrator):
    z = approx_step(double_integrator, [0.0, 0.0], 1.0, 0.1)
    np.testing.assert_allclose(z, [0.005, 0.1], atol=1e-15)


def test_closed_loop_under_cancelling_input(double_integrator):
    step = build_affine_step(2, 0.01)
    K = [-1.0, -2.0]
    z = np.array([0.3, -0.2])
    u = float(np.dot(K, z))
    np.testing.assert_allclose(step.closed_loop(K) @ z, approx_step(double_integrator, z, u, 0.01), atol=1e-14)


def test_expected_orders():
    assert expected_remainder_orders(1) == [2]
    assert expected_remainder_orders(2) == [3, 2]
    assert expected_remainder_orders(3) == [4, 3, 2]


def test_state_input_grid_size():
    grid = state_input_grid([-1.0, -1.0], [1.0, 1.0], [0.0, 0.5], points_per_axis=3)
    assert len(grid) == 18
    z, u = grid[0]
    np.testing.assert_array_equal(z, [-1.0, -1.0])
    assert u == 0.0


def test_remainder_exact_for_constant_plant(double_integrator):
    grid = state_input_grid([-1.0, -1.0], [1.0, 1.0], [-0.5, 0.0, 0.5], points_per_axis=3)
    rep = remainder_study(double_integrator, grid, T_LIST)
    assert rep.exact
    assert rep.slopes is None
    assert np.max(rep.max_err) < 1e-12


def test_remainder_slopes_drone(drone_plant):
    grid = state_input_grid(drone_plant.box.lower, drone_plant.box.upper, np.linspace(0.0, 0.9, 5))
    rep = remainder_study(drone_plant, grid, T_LIST)
    assert rep.grid_size == 125
    assert not rep.exact
    assert 2.8 <= rep.slopes[0] <= 3.2
    assert 1.8 <= rep.slopes[1] <= 2.2
    assert rep.fitted_M > 0.0


def test_remainder_slopes_linear_drift():
    plant = LinearDriftPlant(n=2, box=OperatingBox.symmetric([1.0, 1.0]), drift=(1.0,))
    grid = state_input_grid(plant.box.lower, plant.box.upper, [-0.5, 0.0, 0.5])
    rep = remainder_study(plant, grid, T_LIST)
    assert rep.slopes[0] == pytest.approx(3.0, abs=0.2)
    assert rep.slopes[1] == pytest.approx(2.0, abs=0.2)
    assert equilibrium_input(plant) == 0.0


def test_remainder_preconditions(double_integrator):
    grid = state_input_grid([-1.0, -1.0], [1.0, 1.0], [0.0], points_per_axis=2)
    with pytest.raises(ValueError):
        remainder_study(double_integrator, grid, (0.02, 0.01, 0.005))
    with pytest.raises(ValueError):
        remainder_study(double_integrator, grid, (0.01, 0.02, 0.005, 0.0025))
    with pytest.raises(ValueError):
        remainder_study(double_integrator, [(np.array([50.0, 0.0]), 0.0)], T_LIST)
