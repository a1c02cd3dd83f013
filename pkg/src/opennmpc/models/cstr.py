"""
Adiabatic CSTR with the exothermic reaction A + 2B -> C.

The mole-number state n evolves as the SDE

    dn = (C_in F - c F + S^T r(c) V) dt + F sigma_bar dw,   c = n / V,
    r(c) = k(c_T) c_A c_B,   k(c_T) = k0 exp(-EaR / c_T).

"c_T" is the temperature state written as a concentration-like quantity
(unit K), so the energy balance has the same form as the mass balances.

Variants:
    three_state  n = [n_A, n_B, n_T], S = [-1, -2, beta]
    one_state    n = [n_T],           S = [beta]

One-state reduction. For the three-state model the combinations
beta*n_A + n_T and beta*n_B + 2*n_T carry no reaction term and relax to their
inlet values at rate F/V. On that invariant manifold

    c_A = cA_in + (cT_in - c_T) / beta
    c_B = cB_in + 2 (cT_in - c_T) / beta

which is what the one-state model uses to evaluate r(c). The three-state
initial state n0 = C_in V lies on the manifold.

Units inside the package: L, s, mol, K; flows in L/s.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from opennmpc.errors import DomainError
from opennmpc.system_sim.sde_system import SdeModel

ML_PER_MIN_TO_L_PER_S = 1.0 / 60000.0


class CstrVariant(str, Enum):
    THREE_STATE = "three_state"
    ONE_STATE = "one_state"


@dataclass(frozen=True)
class CstrParams:
    """CSTR parameters in internal units (flows in L/s)"""
    V: float
    k0: float
    EaR: float
    beta: float
    cA_in: float
    cB_in: float
    cT_in: float
    sigmaA: float
    sigmaB: float
    sigmaT: float
    u_min: float
    u_max: float

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError(f"V must be positive, got {self.V}")
        if not self.k0 > 0:
            raise ValueError(f"k0 must be positive, got {self.k0}")
        if self.EaR < 0:
            raise ValueError(f"EaR must be non-negative, got {self.EaR}")
        if self.u_min > self.u_max:
            raise ValueError(f"u_min {self.u_min} exceeds u_max {self.u_max}")

    @classmethod
    def from_ml_per_min(cls, F_range: Tuple[float, float], **kwargs) -> 'CstrParams':
        """Build from config values with the flow range given in mL/min"""
        return cls(
            u_min=F_range[0] * ML_PER_MIN_TO_L_PER_S,
            u_max=F_range[1] * ML_PER_MIN_TO_L_PER_S,
            **kwargs,
        )

    def with_noise_scale(self, scale: float) -> 'CstrParams':
        return CstrParams(**{
            **self.__dict__,
            "sigmaA": self.sigmaA * scale,
            "sigmaB": self.sigmaB * scale,
            "sigmaT": self.sigmaT * scale,
        })


@dataclass(frozen=True)
class StoichConfig:
    variant: CstrVariant
    S: np.ndarray
    C_in: np.ndarray
    sigma_bar: np.ndarray


def stoich_config(params: CstrParams, variant: CstrVariant) -> StoichConfig:
    variant = CstrVariant(variant)
    if variant is CstrVariant.THREE_STATE:
        return StoichConfig(
            variant=variant,
            S=np.array([-1.0, -2.0, params.beta]),
            C_in=np.array([params.cA_in, params.cB_in, params.cT_in]),
            sigma_bar=np.diag([params.sigmaA, params.sigmaB, params.sigmaT]),
        )
    return StoichConfig(
        variant=variant,
        S=np.array([params.beta]),
        C_in=np.array([params.cT_in]),
        sigma_bar=np.array([[params.sigmaT]]),
    )


def reduced_concentrations(c_T: float, params: CstrParams) -> Tuple[float, float]:
    """(c_A, c_B) on the reaction-invariant manifold for temperature c_T"""
    shift = (params.cT_in - c_T) / params.beta
    return params.cA_in + shift, params.cB_in + 2.0 * shift


def _rate_constant(c_T: float, params: CstrParams) -> float:
    if not c_T > 0.0:
        raise DomainError(f"Temperature state must be positive, got c_T={c_T}")
    return params.k0 * np.exp(-params.EaR / c_T)


def _concentrations(c: np.ndarray, params: CstrParams, stoich: StoichConfig) -> Tuple[float, float, float]:
    if stoich.variant is CstrVariant.THREE_STATE:
        return float(c[0]), float(c[1]), float(c[2])
    c_T = float(c[0])
    c_A, c_B = reduced_concentrations(c_T, params)
    return c_A, c_B, c_T


def reaction_rate(c: np.ndarray, params: CstrParams, stoich: StoichConfig) -> float:
    """r = k0 exp(-EaR/c_T) c_A c_B"""
    c_A, c_B, c_T = _concentrations(np.asarray(c, dtype=np.float64), params, stoich)
    return _rate_constant(c_T, params) * c_A * c_B


def _rate_gradient(c: np.ndarray, params: CstrParams, stoich: StoichConfig) -> np.ndarray:
    """dr/dc with respect to the variant's own concentration vector"""
    c_A, c_B, c_T = _concentrations(c, params, stoich)
    k = _rate_constant(c_T, params)
    dk = k * params.EaR / (c_T * c_T)
    if stoich.variant is CstrVariant.THREE_STATE:
        return np.array([k * c_B, k * c_A, dk * c_A * c_B])
    return np.array([dk * c_A * c_B - k * c_B / params.beta - 2.0 * k * c_A / params.beta])


def _flow(u: np.ndarray) -> float:
    return float(np.asarray(u, dtype=np.float64).reshape(-1)[0])


def cstr_drift(t: float, n: np.ndarray, u: np.ndarray, params: CstrParams, stoich: StoichConfig) -> np.ndarray:
    """C_in F - (n/V) F + S^T r(n/V) V"""
    F = _flow(u)
    c = np.asarray(n, dtype=np.float64) / params.V
    r = reaction_rate(c, params, stoich)
    return stoich.C_in * F - c * F + stoich.S * (r * params.V)


def cstr_diffusion(t: float, n: np.ndarray, u: np.ndarray, params: CstrParams, stoich: StoichConfig) -> np.ndarray:
    """F sigma_bar"""
    return _flow(u) * stoich.sigma_bar


def cstr_drift_jacobian_x(t: float, n: np.ndarray, u: np.ndarray, params: CstrParams, stoich: StoichConfig) -> np.ndarray:
    F = _flow(u)
    c = np.asarray(n, dtype=np.float64) / params.V
    grad_c = _rate_gradient(c, params, stoich)
    # d(S r V)/dn = S (dr/dc)^T (dc/dn) V = outer(S, dr/dc)
    return -F / params.V * np.eye(c.size) + np.multiply.outer(stoich.S, grad_c)


def cstr_drift_jacobian_u(t: float, n: np.ndarray, u: np.ndarray, params: CstrParams, stoich: StoichConfig) -> np.ndarray:
    c = np.asarray(n, dtype=np.float64) / params.V
    return (stoich.C_in - c).reshape(-1, 1)


def build_cstr_model(params: CstrParams, variant: CstrVariant) -> SdeModel:
    """Wrap the CSTR as an SdeModel; measurement and output are both c_T"""
    stoich = stoich_config(params, variant)
    n_x = stoich.S.size
    inv_v = 1.0 / params.V
    selector = np.zeros((1, n_x))
    selector[0, -1] = inv_v

    def temperature(t, x, p):
        return np.array([x[-1] * inv_v])

    def temperature_jacobian(t, x, p):
        return selector

    return SdeModel(
        name=f"cstr_{stoich.variant.value}",
        n_x=n_x,
        n_u=1,
        n_d=0,
        n_y=1,
        n_z=1,
        n_w=n_x,
        drift=lambda t, x, u, d, p: cstr_drift(t, x, u, params, stoich),
        diffusion=lambda t, x, u, d, p: cstr_diffusion(t, x, u, params, stoich),
        measurement=temperature,
        output=temperature,
        drift_jacobian_x=lambda t, x, u, d, p: cstr_drift_jacobian_x(t, x, u, params, stoich),
        drift_jacobian_u=lambda t, x, u, d, p: cstr_drift_jacobian_u(t, x, u, params, stoich),
        measurement_jacobian_x=temperature_jacobian,
        output_jacobian_x=temperature_jacobian,
    )


def initial_state(params: CstrParams, variant: CstrVariant) -> np.ndarray:
    """n0 = C_in V (inlet composition at inlet temperature)"""
    return stoich_config(params, variant).C_in * params.V
