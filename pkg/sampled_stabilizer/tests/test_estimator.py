from __future__ import annotations

import itertools

import numpy as np
import pytest

from app.control.errors import IllConditioned, SingularSystem
from app.control.estimator import (
    NOT_READY,
    Estimate,
    EstimatorConfig,
    NotReady,
    OutputWindow,
    UniformNoise,
    WindowEstimator,
    build_stack,
    estimate,
    estimate_series,
    normalized_stack,
)


def test_config_preconditions():
    with pytest.raises(ValueError):
        EstimatorConfig(n=2, rho=2, T=0.01)
    with pytest.raises(ValueError):
        EstimatorConfig(n=2, rho=3, T=0.0)
    with pytest.raises(ValueError):
        EstimatorConfig(n=0, rho=3, T=0.01)


def test_normalized_stack_values():
    expected = np.array([[1.0, 0.0, 0.0], [1.0, -1.0, 0.5], [1.0, -2.0, 2.0]])
    np.testing.assert_array_equal(normalized_stack(2, 3), expected)


def test_stack_matches_chain_inverse_rows():
    T = 0.05
    stack = build_stack(EstimatorConfig(n=2, rho=3, T=T))
    expected = np.array([[1.0, 0.0, 0.0], [1.0, -T, T ** 2 / 2.0], [1.0, -2.0 * T, 2.0 * T ** 2]])
    np.testing.assert_allclose(stack.O, expected, atol=1e-15)


def test_first_order_pinv():
    stack = build_stack(EstimatorConfig(n=1, rho=2, T=1.0))
    np.testing.assert_allclose(stack.pinv, [[1.0, 0.0], [1.0, -1.0]], atol=1e-12)


def test_estimator_exact_on_model_outputs():
    rng = np.random.default_rng(11)
    zs = rng.normal(size=(1000, 3))
    for rho, T in itertools.product((3, 4, 6), (1.0, 0.01)):
        stack = build_stack(EstimatorConfig(n=2, rho=rho, T=T))
        for z in zs:
            est = estimate(stack, stack.O @ z)
            assert np.linalg.norm(est.full - z) <= 1e-9 * np.linalg.norm(z)


def test_estimate_preconditions():
    stack = build_stack(EstimatorConfig(n=1, rho=3, T=0.1))
    with pytest.raises(ValueError):
        estimate(stack, [1.0, 2.0])
    with pytest.raises(ValueError):
        estimate(stack, [1.0, np.nan, 2.0])


def test_tiny_sample_time_is_ill_conditioned():
    with pytest.raises(IllConditioned) as exc:
        build_stack(EstimatorConfig(n=3, rho=4, T=1e-5))
    assert exc.value.condition > 1e12
    assert isinstance(exc.value, SingularSystem)


def test_guard_applies_to_normalized_stack():
    with pytest.raises(IllConditioned):
        build_stack(EstimatorConfig(n=2, rho=3, T=1.0), cond_limit=1.0)


def test_chain3_preset_sample_time_passes_guard():
    stack = build_stack(EstimatorConfig(n=3, rho=4, T=0.0005))
    assert stack.pinv.shape == (4, 4)


def test_noise_gain_decreases_with_window():
    gains = [build_stack(EstimatorConfig(n=2, rho=rho, T=0.01)).noise_gain for rho in range(3, 13)]
    assert all(b < a for a, b in zip(gains, gains[1:]))


def test_output_window_order():
    window = OutputWindow(3)
    for y in (1.0, 2.0, 3.0, 4.0):
        window.push(y)
    assert window.ready
    np.testing.assert_array_equal(window.vector(), [4.0, 3.0, 2.0])
    np.testing.assert_array_equal(window.vector(offset=1.0), [3.0, 2.0, 1.0])


def test_window_estimator_fills_then_estimates():
    est = WindowEstimator(EstimatorConfig(n=2, rho=4, T=0.1))
    results = [est.step(k, 2.0) for k in range(5)]
    assert results[:3] == [NOT_READY] * 3
    assert isinstance(results[3], Estimate)
    np.testing.assert_allclose(results[4].full, [2.0, 0.0, 0.0], atol=1e-12)


def test_window_estimator_offset_shifts_position_only():
    est = WindowEstimator(EstimatorConfig(n=2, rho=3, T=0.1))
    out = None
    for k in range(3):
        out = est.step(k, 1.5, offset=1.0)
    np.testing.assert_allclose(out.full, [0.5, 0.0, 0.0], atol=1e-12)


def test_not_ready_is_a_singleton():
    assert NotReady() is NOT_READY
    assert repr(NOT_READY) == "NOT_READY"


def test_estimate_series_on_quadratic():
    T = 0.1
    t = np.arange(20) * T
    rows = estimate_series(t, t ** 2, n=2, rho=4)
    assert len(rows) == 17
    for tk, z in rows:
        np.testing.assert_allclose(z, [tk ** 2, 2.0 * tk, 2.0], atol=1e-9)


def test_estimate_series_rejects_uneven_sampling():
    with pytest.raises(ValueError):
        estimate_series([0.0, 0.1, 0.3, 0.4], [0.0, 0.0, 0.0, 0.0], n=1, rho=2)
    with pytest.raises(ValueError):
        estimate_series([0.0, 0.1], [0.0, 0.0], n=2, rho=3)


def test_uniform_noise_bounds_and_seed():
    first, second = UniformNoise(1e-3, seed=5), UniformNoise(1e-3, seed=5)
    draws = np.array([first.sample() for _ in range(1000)])
    assert np.all(np.abs(draws) <= 1e-3)
    np.testing.assert_array_equal(draws, [second.sample() for _ in range(1000)])
    assert UniformNoise(0.0, seed=5).sample() == 0.0
    with pytest.raises(ValueError):
        UniformNoise(-1.0, seed=0)


def test_estimate_is_linear_in_the_window():
    stack = build_stack(EstimatorConfig(n=2, rho=5, T=0.05))
    rng = np.random.default_rng(5)
    for _ in range(20):
        Y1, Y2 = rng.normal(size=5), rng.normal(size=5)
        a, b = (float(x) for x in rng.uniform(-3.0, 3.0, size=2))
        combined = estimate(stack, a * Y1 + b * Y2).full
        separate = a * estimate(stack, Y1).full + b * estimate(stack, Y2).full
        np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-6)


def test_pinv_rows_scale_as_inverse_powers_of_T():
    n, rho = 3, 6
    reference = np.max(np.abs(build_stack(EstimatorConfig(n=n, rho=rho, T=1.0)).pinv), axis=1)
    for T in np.geomspace(1e-3, 1e-2, 6):
        pinv = build_stack(EstimatorConfig(n=n, rho=rho, T=float(T))).pinv
        scaled = np.max(np.abs(pinv), axis=1) * np.array([T ** i for i in range(n + 1)])
        np.testing.assert_allclose(scaled, reference, rtol=1e-9)


def test_estimation_error_study_uses_mapper(di_loop):
    from app.control.estimator import estimation_error_study

    calls = []

    def mapper(fn, items):
        calls.append(len(items))
        return [fn(item) for item in items]

    T_list = (0.02, 0.01, 0.005, 0.002)
    mapped = estimation_error_study(di_loop, T_list, 1e-9, horizon=0.5, mapper=mapper)
    plain = estimation_error_study(di_loop, T_list, 1e-9, horizon=0.5)
    assert calls == [4]
    assert mapped.clean_errors == plain.clean_errors
    assert mapped.noisy_errors == plain.noisy_errors

    with pytest.raises(ValueError, match="decade"):
        estimation_error_study(di_loop, (0.02, 0.01, 0.005, 0.0025), 1e-9, horizon=0.5)
