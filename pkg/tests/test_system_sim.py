import numpy as np
import pytest

from opennmpc.errors import DimensionMismatchError, NonFiniteStateError
from opennmpc.system_sim.random_streams import MEASUREMENT_NOISE, PROCESS_NOISE, RandomStream, box_muller
from opennmpc.system_sim.sde_system import (
    NoiseSpec,
    SdeModel,
    central_difference,
    euler_maruyama_step,
    measure,
    simulate_interval,
)


def linear_model(a: float = -0.5, b: float = 1.0, s: float = 0.0) -> SdeModel:
    """dx = (a x + b u) dt + s dw, y = z = x"""
    return SdeModel(
        name="linear",
        n_x=1, n_u=1, n_d=0, n_y=1, n_z=1, n_w=1,
        drift=lambda t, x, u, d, p: a * x + b * u,
        diffusion=lambda t, x, u, d, p: np.array([[s]]),
        measurement=lambda t, x, p: x.copy(),
        output=lambda t, x, p: x.copy(),
    )


def brownian_model() -> SdeModel:
    return SdeModel(
        name="brownian",
        n_x=1, n_u=1, n_d=0, n_y=1, n_z=1, n_w=1,
        drift=lambda t, x, u, d, p: np.zeros(1),
        diffusion=lambda t, x, u, d, p: np.ones((1, 1)),
        measurement=lambda t, x, p: x.copy(),
        output=lambda t, x, p: x.copy(),
    )


def test_zero_drift_zero_noise_keeps_state():
    model = linear_model(a=0.0, b=0.0)
    x = simulate_interval(model, 0.0, 1.0, np.array([3.0]), np.zeros(1), np.zeros(0), 20, RandomStream(1, 0, PROCESS_NOISE))
    assert x[0] == 3.0


def test_constant_drift_is_integrated_exactly():
    model = linear_model(a=0.0, b=1.0)
    x = simulate_interval(model, 0.0, 1.0, np.zeros(1), np.array([2.0]), np.zeros(0), 20, None)
    assert x[0] == pytest.approx(2.0, abs=1e-14)


def test_euler_step_dimension_check():
    model = linear_model()
    with pytest.raises(DimensionMismatchError):
        euler_maruyama_step(model, 0.0, np.zeros(1), np.zeros(1), np.zeros(0), 0.1, np.zeros(2))


def test_non_finite_state_is_reported():
    model = SdeModel(
        name="blowup",
        n_x=1, n_u=1, n_d=0, n_y=1, n_z=1, n_w=1,
        drift=lambda t, x, u, d, p: x * 1e300,
        diffusion=lambda t, x, u, d, p: np.zeros((1, 1)),
        measurement=lambda t, x, p: x.copy(),
        output=lambda t, x, p: x.copy(),
    )
    with pytest.raises(NonFiniteStateError):
        simulate_interval(model, 0.0, 1.0, np.array([1e10]), np.zeros(1), np.zeros(0), 5, None)


def test_deterministic_part_is_first_order():
    # dx = -x dt, exact x(1) = e^-1; halving h halves the error
    model = linear_model(a=-1.0, b=0.0)
    exact = np.exp(-1.0)
    errors = [abs(simulate_interval(model, 0.0, 1.0, np.ones(1), np.zeros(1), np.zeros(0), n, None)[0] - exact)
              for n in (50, 100, 200)]
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    for r in ratios:
        assert r == pytest.approx(2.0, rel=0.1)


def test_brownian_marginal_statistics():
    model = brownian_model()
    n_paths, T = 20_000, 2.0
    finals = np.array([
        simulate_interval(model, 0.0, T, np.zeros(1), np.zeros(1), np.zeros(0), 4, RandomStream(99, i, PROCESS_NOISE))[0]
        for i in range(n_paths)
    ])
    assert abs(finals.mean()) < 4.0 * np.sqrt(T / n_paths)
    assert finals.var() == pytest.approx(T, rel=0.05)


def test_streams_are_reproducible_and_independent():
    a = RandomStream(7, 3, PROCESS_NOISE).standard_normal(5)
    b = RandomStream(7, 3, PROCESS_NOISE).standard_normal(5)
    c = RandomStream(7, 4, PROCESS_NOISE).standard_normal(5)
    d = RandomStream(7, 3, MEASUREMENT_NOISE).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_stream_draws_depend_only_on_draw_index():
    s = RandomStream(5, 0, PROCESS_NOISE)
    draws = [s.standard_normal(3) for _ in range(4)]
    jumped = RandomStream(5, 0, PROCESS_NOISE).jump_to(2)
    assert np.array_equal(jumped.standard_normal(3), draws[2])
    assert np.array_equal(s.normals_at(1, 3), draws[1])


def test_box_muller_is_standard_normal():
    rng = np.random.default_rng(0)
    z = box_muller(rng.random(100_000), rng.random(100_000))
    assert abs(z.mean()) < 0.01
    assert z.std() == pytest.approx(1.0, rel=0.01)


def test_measure_adds_scaled_noise():
    model = linear_model()
    noise = NoiseSpec(R=np.array([[4.0]]), n_w=1)
    x = np.array([10.0])
    y = measure(model, noise, 0.0, x, RandomStream(3, 0, MEASUREMENT_NOISE))
    zeta = RandomStream(3, 0, MEASUREMENT_NOISE).standard_normal(1)
    assert y[0] == pytest.approx(10.0 + 2.0 * zeta[0])


def test_measure_without_noise_is_exact():
    model = linear_model()
    y = measure(model, NoiseSpec(R=np.zeros((1, 1)), n_w=1), 0.0, np.array([2.5]), RandomStream(3, 0, 1))
    assert y[0] == 2.5


def test_noise_spec_rejects_non_square():
    with pytest.raises(DimensionMismatchError):
        NoiseSpec(R=np.zeros((1, 2)), n_w=1)


def test_central_difference_jacobian():
    J = central_difference(lambda x: np.array([x[0] ** 2, x[0] * x[1]]), np.array([3.0, 2.0]))
    np.testing.assert_allclose(J, [[6.0, 0.0], [2.0, 3.0]], rtol=1e-6)
