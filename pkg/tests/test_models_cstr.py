import numpy as np
import pytest

from opennmpc.errors import DomainError
from opennmpc.models.cstr import (
    ML_PER_MIN_TO_L_PER_S,
    CstrParams,
    CstrVariant,
    build_cstr_model,
    initial_state,
    reaction_rate,
    reduced_concentrations,
    stoich_config,
)
from opennmpc.system_sim.random_streams import PROCESS_NOISE, RandomStream
from opennmpc.system_sim.sde_system import central_difference, simulate_interval


@pytest.fixture
def params(default_config):
    return default_config.model.params


def test_flow_units_are_converted_once(params):
    assert params.u_min == 0.0
    assert params.u_max == pytest.approx(1000.0 * ML_PER_MIN_TO_L_PER_S)
    assert params.u_max == pytest.approx(1.0 / 60.0)


def test_zero_flow_three_state_drift_is_reaction_only(params):
    model = build_cstr_model(params, CstrVariant.THREE_STATE)
    n = initial_state(params, CstrVariant.THREE_STATE)
    f = model.f(0.0, n, np.zeros(1), np.zeros(0))
    r = reaction_rate(n / params.V, params, stoich_config(params, CstrVariant.THREE_STATE))
    np.testing.assert_allclose(f, np.array([-1.0, -2.0, params.beta]) * r * params.V, rtol=1e-14)


def test_inlet_state_with_no_reaction_is_an_equilibrium(params):
    # k0 -> tiny: no reaction, n = C_in V is a fixed point for every flow
    slow = CstrParams(**{**params.__dict__, "k0": 1e-300})
    model = build_cstr_model(slow, CstrVariant.THREE_STATE)
    n0 = initial_state(slow, CstrVariant.THREE_STATE)
    f = model.f(0.0, n0, np.array([0.01]), np.zeros(0))
    np.testing.assert_allclose(f, 0.0, atol=1e-15)


def test_analytic_jacobians_match_finite_differences(params):
    for variant in CstrVariant:
        model = build_cstr_model(params, variant)
        n = initial_state(params, variant) * 1.01
        if variant is CstrVariant.ONE_STATE:
            n = np.array([310.0 * params.V])
        else:
            n[-1] = 310.0 * params.V
        u = np.array([0.005])
        fd_x = central_difference(lambda x: model.f(0.0, x, u, np.zeros(0)), n)
        fd_u = central_difference(lambda uu: model.f(0.0, n, uu, np.zeros(0)), u)
        np.testing.assert_allclose(model.dfdx(0.0, n, u, np.zeros(0)), fd_x, rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(model.dfdu(0.0, n, u, np.zeros(0)), fd_u, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("c_T", np.linspace(275.0, 350.0, 16))
@pytest.mark.parametrize("flow", [0.0, 0.008, 1.0 / 60.0])
def test_one_state_model_matches_three_state_on_the_invariant_manifold(params, c_T, flow):
    three = build_cstr_model(params, CstrVariant.THREE_STATE)
    one = build_cstr_model(params, CstrVariant.ONE_STATE)
    c_A, c_B = reduced_concentrations(c_T, params)
    n3 = np.array([c_A, c_B, c_T]) * params.V
    n1 = np.array([c_T * params.V])
    u = np.array([flow])
    f3 = three.f(0.0, n3, u, np.zeros(0))
    f1 = one.f(0.0, n1, u, np.zeros(0))
    assert f1[0] == pytest.approx(f3[-1], rel=1e-10, abs=1e-10)


def test_deterministic_three_state_stays_on_manifold(params):
    model = build_cstr_model(params.with_noise_scale(0.0), CstrVariant.THREE_STATE)
    n = initial_state(params, CstrVariant.THREE_STATE)
    for i in range(20):
        n = simulate_interval(model, float(i), float(i + 1), n, np.array([0.01]), np.zeros(0), 20, None)
    c = n / params.V
    c_A, c_B = reduced_concentrations(c[2], params)
    assert c[0] == pytest.approx(c_A, rel=1e-9)
    assert c[1] == pytest.approx(c_B, rel=1e-9)


@pytest.mark.parametrize("c_T0", [273.65, 340.0])
def test_stochastic_mole_numbers_stay_nonnegative(params, c_T0):
    model = build_cstr_model(params, CstrVariant.THREE_STATE)
    c_A, c_B = reduced_concentrations(c_T0, params)
    n0 = np.array([c_A, c_B, c_T0]) * params.V
    violations = []
    for seed in range(100):
        rng = RandomStream(seed, 0, PROCESS_NOISE)
        n = n0
        for i, flow in enumerate([0.5, 1.0, 0.25] * 10):
            n = simulate_interval(model, float(i), float(i + 1), n, np.array([flow / 60.0]), np.zeros(0), 20, rng)
            if n[0] < 0.0 or n[1] < 0.0:
                violations.append((seed, i, n[0], n[1]))
    assert violations == []


def test_diffusion_scales_with_flow(params):
    model = build_cstr_model(params, CstrVariant.THREE_STATE)
    n = initial_state(params, CstrVariant.THREE_STATE)
    sig = model.sigma(0.0, n, np.array([0.002]), np.zeros(0))
    np.testing.assert_allclose(sig, 0.002 * np.diag([params.sigmaA, params.sigmaB, params.sigmaT]))
    assert not np.any(model.sigma(0.0, n, np.zeros(1), np.zeros(0)))


def test_measurement_is_temperature(params):
    for variant in CstrVariant:
        model = build_cstr_model(params, variant)
        n = initial_state(params, variant)
        assert model.g(0.0, n)[0] == pytest.approx(params.cT_in)
        assert model.h(0.0, n)[0] == pytest.approx(params.cT_in)


def test_non_positive_temperature_is_a_domain_error(params):
    model = build_cstr_model(params, CstrVariant.ONE_STATE)
    with pytest.raises(DomainError):
        model.f(0.0, np.array([-1.0]), np.zeros(1), np.zeros(0))


def test_params_validation():
    with pytest.raises(ValueError):
        CstrParams.from_ml_per_min((10.0, 0.0), V=1.0, k0=1.0, EaR=1.0, beta=1.0, cA_in=1.0, cB_in=1.0,
                                   cT_in=300.0, sigmaA=0.0, sigmaB=0.0, sigmaT=0.0)
