"""Optomechanical couplings, cooling floor and localization rates.

Localization rates Lambda are the coefficients of the ``-Lambda [x, [x, rho]]``
term in the free-fall master equation, in 1/(m^2 s).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import zeta

from levisim.params import (
    CONSTANTS,
    DerivedQuantities,
    EnvironmentParams,
    ExperimentConfig,
    PhysicalConstants,
    ProtocolParams,
    SphereParams,
    clausius_mossotti,
)

# Identifies the shape function implementation in run metadata.
CSL_SHAPE_MODE = "collett-pearle-closed-form"

# Literature prefactors for blackbody localization of a dielectric sphere:
#   scattering      8! 8 zeta(9) c R^6 / (9 pi) (k_B T_e / hbar c)^9 Re[cm]^2
#   emission/abs.   16 pi^5 c R^3 / 189 (k_B T / hbar c)^6 Im[cm]
BB_SCATTER_PREFACTOR = math.factorial(8) * 8.0 * float(zeta(9)) / (9.0 * math.pi)
BB_THERMAL_PREFACTOR = 16.0 * math.pi**5 / 189.0


def scattering_decay(eps_c: float, volume: float, k_c: float, mode_volume: float) -> float:
    """Cavity field decay caused by light scattered off the sphere."""
    return eps_c**2 * volume**2 * k_c**4 * CONSTANTS.c / (16.0 * math.pi * mode_volume)


def localization_per_photon(dq: DerivedQuantities) -> float:
    """Photon-scattering localization rate per intracavity photon."""
    return dq.eps_c**2 * CONSTANTS.c * dq.volume**2 * dq.k_c**6 / (6.0 * math.pi * dq.mode_volume)


def photon_scattering_rate(dq: DerivedQuantities, n_ph: float) -> tuple[float, float]:
    """Return ``(Lambda_sc, kappa_sc)`` for ``n_ph`` intracavity photons."""
    if n_ph < 0:
        raise ValueError("n_ph must be >= 0")
    return n_ph * localization_per_photon(dq), dq.kappa_sc


def linear_coupling(dq: DerivedQuantities, n_ph: float) -> float:
    return dq.x0 * math.sqrt(n_ph) * dq.eps_c * dq.k_c**2 * CONSTANTS.c * dq.volume / (4.0 * dq.mode_volume)


@dataclass(frozen=True)
class CouplingRates:
    g: float
    g_q: float
    g_q_enhanced: float
    kappa_sc: float
    C_l: float
    C_q_enhanced: float
    n_ph: float
    sigma: float
    Lambda_sc: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def coupling_rates(dq: DerivedQuantities, n_ph: float, sigma: float) -> CouplingRates:
    if n_ph <= 0:
        raise ValueError("n_ph must be > 0")
    if sigma < dq.x0 * (1 - 1e-12):
        raise ValueError("sigma must be >= x0")
    g = linear_coupling(dq, n_ph)
    lam_sc = n_ph * localization_per_photon(dq)
    gamma = lam_sc * dq.x0**2
    g_q = dq.k_c * dq.x0 * g
    g_q_bar = g_q * (sigma / dq.x0) ** 2
    return CouplingRates(
        g=g,
        g_q=g_q,
        g_q_enhanced=g_q_bar,
        kappa_sc=dq.kappa_sc,
        C_l=g**2 / (dq.kappa * gamma),
        C_q_enhanced=g_q_bar**2 / (dq.kappa * lam_sc * sigma**2),
        n_ph=n_ph,
        sigma=sigma,
        Lambda_sc=lam_sc,
    )


def linear_cooperativity(dq: DerivedQuantities) -> float:
    """C_l; the photon number cancels between g^2 and Lambda_sc."""
    return coupling_rates(dq, 1.0, dq.x0).C_l


def cooling_occupation(dq: DerivedQuantities, C_l: float) -> tuple[float, bool]:
    """Sideband-cooling floor and whether the resolved-sideband regime holds."""
    if C_l <= 0:
        raise ValueError("C_l must be > 0")
    kappa = dq.kappa
    return (kappa / (4.0 * dq.omega)) ** 2 + 1.0 / C_l, kappa < 4.0 * dq.omega


def air_rate(env: EnvironmentParams, radius: float) -> float:
    return (
        8.0 * math.sqrt(2.0 * math.pi) * env.molecule_mass * env.mean_velocity * env.pressure * radius**2
        / (3.0 * math.sqrt(3.0) * CONSTANTS.hbar**2)
    )


def blackbody_rates(sphere: SphereParams, env: EnvironmentParams) -> tuple[float, float, float]:
    """Blackbody ``(scattering, emission, absorption)`` localization rates.

    Emission uses the internal temperature of the sphere, absorption and
    scattering the environment temperature.
    """
    hc = CONSTANTS.hbar * CONSTANTS.c
    c = CONSTANTS.c
    R = sphere.radius
    cm = clausius_mossotti(sphere.eps_bb)
    k_e = CONSTANTS.k_B * env.temperature / hc
    k_i = CONSTANTS.k_B * sphere.internal_temperature / hc
    scatter = BB_SCATTER_PREFACTOR * c * R**6 * k_e**9 * cm.real**2
    emission = BB_THERMAL_PREFACTOR * c * R**3 * k_i**6 * cm.imag
    absorption = BB_THERMAL_PREFACTOR * c * R**3 * k_e**6 * cm.imag
    return scatter, emission, absorption


def _shape_series(y):
    # 6 * sum_{k>=3} (-1)^k (2-k) y^(k-3) / k!, accurate for y = x^2 < 0.5
    total = np.zeros_like(y)
    for k in range(3, 22):
        total = total + (-1) ** k * (2 - k) * y ** (k - 3) / math.factorial(k)
    return 6.0 * total


def csl_shape_function(x):
    """Form factor of CSL localization for a homogeneous sphere.

    ``x`` is the radius in units of the CSL length alpha^(-1/2). The closed
    form is f(x) = 6/x^4 [1 - 2/x^2 + (1 + 2/x^2) exp(-x^2)], which goes to 1
    for x << 1, 0.62 at x = 1 and 6/x^4 for x >> 1.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    y = x * x
    small = y < 0.5
    out = np.empty_like(y)
    out[small] = _shape_series(y[small])
    yl = y[~small]
    out[~small] = 6.0 / yl**2 * (1.0 - 2.0 / yl + (1.0 + 2.0 / yl) * np.exp(-yl))
    return out if out.ndim else float(out)


def csl_rate(sphere: SphereParams, protocol: ProtocolParams, consts: PhysicalConstants = CONSTANTS) -> float:
    mass = sphere.density * 4.0 / 3.0 * math.pi * sphere.radius**3
    alpha = protocol.csl_alpha
    f = csl_shape_function(math.sqrt(alpha) * sphere.radius)
    return (mass / consts.nucleon_mass) ** 2 * protocol.csl_rate * alpha * f / 2.0


@dataclass(frozen=True)
class LocalizationRates:
    Lambda_sc: float
    Lambda_air: float
    Lambda_bb_sc: float
    Lambda_bb_e: float
    Lambda_bb_a: float
    Lambda_csl: float

    @property
    def Lambda_bb(self) -> float:
        return self.Lambda_bb_sc + self.Lambda_bb_e + self.Lambda_bb_a

    @property
    def Lambda_sd(self) -> float:
        """Standard decoherence in the dark: blackbody plus gas collisions."""
        return self.Lambda_bb + self.Lambda_air

    def as_dict(self) -> dict[str, float]:
        out = asdict(self)
        out["Lambda_bb"] = self.Lambda_bb
        out["Lambda_sd"] = self.Lambda_sd
        return out


def localization_rates(config: ExperimentConfig, dq: DerivedQuantities, n_ph: float = 0.0) -> LocalizationRates:
    bb_sc, bb_e, bb_a = blackbody_rates(config.sphere, config.environment)
    return LocalizationRates(
        Lambda_sc=photon_scattering_rate(dq, n_ph)[0],
        Lambda_air=air_rate(config.environment, config.sphere.radius),
        Lambda_bb_sc=bb_sc,
        Lambda_bb_e=bb_e,
        Lambda_bb_a=bb_a,
        Lambda_csl=csl_rate(config.sphere, config.protocol),
    )


FORMULAS = {
    "g": "x0 sqrt(n_ph) eps_c k_c^2 c V / (4 V_c)",
    "g_q": "k_c x0 g",
    "g_q_enhanced": "g_q (sigma/x0)^2",
    "kappa_sc": "eps_c^2 V^2 k_c^4 c / (16 pi V_c)",
    "kappa_mirror": "pi c / (2 L F)",
    "C_l": "g^2 / (kappa Lambda_sc x0^2)",
    "C_q_enhanced": "g_q_enhanced^2 / (kappa Lambda_sc sigma^2) = C_l (k_c sigma)^2",
    "Lambda_sc": "eps_c^2 n_ph c V^2 k_c^6 / (6 pi V_c)",
    "Lambda_air": "8 sqrt(2 pi) m_a v P R^2 / (3 sqrt(3) hbar^2)",
    "Lambda_bb_sc": "8! 8 zeta(9) c R^6 / (9 pi) (k_B T_e/hbar c)^9 Re[cm_bb]^2",
    "Lambda_bb_e": "16 pi^5 c R^3 / 189 (k_B T_i/hbar c)^6 Im[cm_bb]",
    "Lambda_bb_a": "16 pi^5 c R^3 / 189 (k_B T_e/hbar c)^6 Im[cm_bb]",
    "Lambda_csl": "(m/m0)^2 lambda alpha f(sqrt(alpha) R) / 2",
    "n_bar_floor": "(kappa / 4 omega_t)^2 + 1/C_l",
}
