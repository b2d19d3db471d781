from __future__ import annotations

import math

import numpy as np
import pytest

from app.control.errors import BlowUp, SingularGain
from app.control.plant import (
    ChainPlant,
    ConstantPlant,
    DronePlant,
    FunctionPlant,
    LinearDriftPlant,
    OperatingBox,
    default_substeps,
    equilibrium_input,
    flow_exact,
)


def test_box_requires_origin_inside():
    with pytest.raises(ValueError):
        OperatingBox(lower=[0.0, -1.0], upper=[1.0, 1.0])
    with pytest.raises(ValueError):
        OperatingBox(lower=[-1.0], upper=[1.0, 1.0])


def test_box_contains_and_inflation():
    box = OperatingBox(lower=[-1.0, -2.0], upper=[1.0, 3.0])
    assert box.contains([0.5, 2.9])
    assert not box.contains([0.5, 3.1])
    assert not box.contains([math.nan, 0.0])
    big = box.inflated()
    np.testing.assert_allclose(big.lower, [-10.0, -20.0])
    np.testing.assert_allclose(big.upper, [10.0, 30.0])
    assert box.grid(3).shape == (9, 2)


def test_drone_nonlinearities(drone_plant):
    z = np.array([1.0, 0.0])
    assert drone_plant.alpha(z) == pytest.approx(-5.0 + 2.0 * math.sin(1.0))
    assert drone_plant.beta(z) == pytest.approx(17.5)
    assert drone_plant.lifted(z, 0.5) == pytest.approx(-5.0 + 2.0 * math.sin(1.0) + 8.75)
    np.testing.assert_allclose(drone_plant.vector_field(np.array([1.0, 2.0]), 0.0), [2.0, -5.0 + 2.0 * math.sin(1.0)])


def test_drone_sign_checked_on_box():
    # beta = 18 - 81/2 < 0 at z1 = 3
    with pytest.raises(ValueError):
        DronePlant(n=2, box=OperatingBox(lower=[-0.5, -3.0], upper=[3.0, 3.0]))


def test_declared_negative_sign():
    plant = ConstantPlant(n=1, box=OperatingBox.symmetric([1.0]), beta_sign=-1, beta0=-2.0)
    assert plant.beta(np.zeros(1)) == -2.0
    with pytest.raises(ValueError):
        ConstantPlant(n=1, box=OperatingBox.symmetric([1.0]), beta_sign=1, beta0=-2.0)


def test_box_dimension_must_match_order():
    with pytest.raises(ValueError):
        ChainPlant(n=3, box=OperatingBox.symmetric([1.0, 1.0]))


def test_beta_bounds(drone_plant):
    lo, hi = drone_plant.beta_bounds()
    assert 17.9 < hi <= 18.0
    assert lo == pytest.approx(18.0 - 0.5 * 2.3 ** 4)


def test_linear_drift_and_function_plants():
    box = OperatingBox.symmetric([1.0, 1.0])
    drift = LinearDriftPlant(n=2, box=box, drift=(1.0,))
    assert drift.alpha(np.array([0.3, 0.7])) == pytest.approx(0.3)
    fn = FunctionPlant(n=2, box=box, alpha_fn=lambda z: z[1], beta_fn=lambda z: 2.0)
    assert fn.lifted([0.0, 0.5], 1.0) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        FunctionPlant(n=2, box=box, alpha_fn=lambda z: 0.0)


def test_default_substeps():
    assert default_substeps(0.0028) == 4
    assert default_substeps(0.01) == 10
    assert default_substeps(0.0105) == 11


def test_flow_double_integrator_from_rest(double_integrator):
    z = flow_exact(double_integrator, [0.0, 0.0], 1.0, 1.0)
    np.testing.assert_allclose(z, [0.5, 1.0], atol=1e-12)


def test_flow_double_integrator_coasting(double_integrator):
    z = flow_exact(double_integrator, [1.0, 2.0], 0.0, 0.5)
    np.testing.assert_allclose(z, [2.0, 2.0], atol=1e-12)


def test_flow_matches_finer_substeps(drone_plant):
    u0 = equilibrium_input(drone_plant)
    z0 = [0.5, 0.0]
    coarse = flow_exact(drone_plant, z0, u0, 0.01)
    fine = flow_exact(drone_plant, z0, u0, 0.01, substeps=100)
    np.testing.assert_allclose(coarse, fine, atol=1e-9)


def test_flow_blowup_carries_state():
    plant = ConstantPlant(n=1, box=OperatingBox.symmetric([1.0]))
    with pytest.raises(BlowUp) as exc:
        flow_exact(plant, [0.0], 100.0, 1.0)
    assert abs(exc.value.state[0]) > 10.0


def test_flow_rejects_start_outside_inflated_box():
    plant = ConstantPlant(n=1, box=OperatingBox.symmetric([1.0]))
    with pytest.raises(BlowUp):
        flow_exact(plant, [20.0], 0.0, 0.1)


def test_flow_preconditions(double_integrator):
    with pytest.raises(ValueError):
        flow_exact(double_integrator, [0.0, 0.0], 0.0, 0.0)
    with pytest.raises(ValueError):
        flow_exact(double_integrator, [0.0, 0.0], 0.0, 0.1, substeps=0)
    with pytest.raises(ValueError):
        flow_exact(double_integrator, [0.0], 0.0, 0.1)
    with pytest.raises(BlowUp):
        flow_exact(double_integrator, [0.0, 0.0], math.nan, 0.1)


def test_equilibrium_input(drone_plant, double_integrator):
    assert equilibrium_input(drone_plant) == pytest.approx(5.0 / 18.0)
    assert equilibrium_input(double_integrator) == 0.0


def test_equilibrium_input_singular_gain():
    plant = ConstantPlant(n=1, box=OperatingBox.symmetric([1.0]), beta0=1e-13)
    with pytest.raises(SingularGain):
        equilibrium_input(plant)


def test_flow_semigroup_on_random_holds():
    plant = ChainPlant(n=2, box=OperatingBox.symmetric([5.0, 5.0]), name="chain-2")
    rng = np.random.default_rng(11)
    for _ in range(50):
        z = rng.uniform(-1.0, 1.0, size=2)
        u = float(rng.uniform(-1.0, 1.0))
        T1, T2 = (float(x) for x in rng.uniform(0.01, 0.2, size=2))
        composed = flow_exact(plant, flow_exact(plant, z, u, T1), u, T2)
        direct = flow_exact(plant, z, u, T1 + T2)
        np.testing.assert_allclose(composed, direct, atol=1e-9)


def test_rk4_global_error_is_fourth_order():
    from scipy.linalg import expm

    plant = LinearDriftPlant(n=2, box=OperatingBox.symmetric([5.0, 5.0]), drift=(-2.0, -1.0), beta0=1.0)
    u, T = 0.5, 0.5
    z0 = np.array([0.5, -0.3])
    augmented = np.array([[0.0, 1.0, 0.0], [-2.0, -1.0, u], [0.0, 0.0, 0.0]])
    exact = (expm(augmented * T) @ np.append(z0, 1.0))[:2]

    errors = [np.linalg.norm(flow_exact(plant, z0, u, T, substeps=m) - exact) for m in (16, 32, 64)]
    assert errors[-1] > 0.0
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine >= 15.0
