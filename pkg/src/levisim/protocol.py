"""Pulse planning, slit geometry and the operational (D, d) regime.

The pulse photon number and expansion time are fixed by demanding that the
classical phase of the pulse cancels the chirp built up during the expansion
and that the pulse lasts about one enhanced decoherence time and one cavity
period (tau ~ 1/Gamma_bar ~ 2 pi/kappa).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from levisim import gaussian
from levisim.gaussian import GaussianState
from levisim.params import CONSTANTS, DerivedQuantities, ExperimentConfig, derive
from levisim.rates import (
    LocalizationRates,
    coupling_rates,
    linear_cooperativity,
    localization_per_photon,
    localization_rates,
)

HBAR = CONSTANTS.hbar

# tau * Gamma_bar must fall in [1/TAU_GAMMA_BAND, TAU_GAMMA_BAND]
TAU_GAMMA_BAND = 3.0
# upper limit on omega_t tau / 4, the neglected kinetic phase during the pulse
MAX_KINETIC_PHASE = 0.05
# the t1 formula contains a bare "omega"; read as the trap frequency
OMEGA_READING = "trap"

DEFAULT_SCAN = (10e-9, 200e-9, 30)


class PlanningError(RuntimeError):
    """The cavity/sphere combination cannot meet the pulse conditions."""


@dataclass(frozen=True)
class PulsePlan:
    n_ph: float
    t1: float
    tau: float
    chi: float
    phi: float
    Gamma_bar: float
    t2: float
    sigma: float
    C_l: float
    C_q: float
    kappa: float
    state_t1: GaussianState
    state_pre: GaussianState
    problems: tuple[str, ...] = ()

    @property
    def tau_gamma(self) -> float:
        return self.tau * self.Gamma_bar

    @property
    def chirp_phase(self) -> float:
        """Phase <xp + px>/(4 hbar) picked up during the expansion."""
        return self.state_t1.cxp / (2 * HBAR)

    @property
    def phase_residual(self) -> float:
        """phi minus the expansion chirp it is meant to cancel."""
        return self.phi - self.chirp_phase

    def as_dict(self) -> dict[str, float]:
        return {
            "n_ph": self.n_ph,
            "t1": self.t1,
            "tau": self.tau,
            "chi": self.chi,
            "phi": self.phi,
            "Gamma_bar": self.Gamma_bar,
            "t2": self.t2,
            "sigma": self.sigma,
            "C_l": self.C_l,
            "C_q": self.C_q,
            "kappa": self.kappa,
            "tau_gamma": self.tau_gamma,
            "chirp_phase": self.chirp_phase,
            "phase_residual": self.phase_residual,
            "problems": list(self.problems),
        }


def plan_pulse(
    config: ExperimentConfig,
    dq: DerivedQuantities | None = None,
    rates: LocalizationRates | None = None,
    strict: bool = True,
) -> PulsePlan:
    """Fix n_ph, t1, tau and the measurement parameters for ``config``.

    With ``strict`` a violated consistency condition raises
    :class:`PlanningError`; otherwise it is listed in ``plan.problems``.
    """
    dq = dq or derive(config)
    rates = rates or localization_rates(config, dq)
    C_l = linear_cooperativity(dq)
    occ = 2 * config.trap.occupation + 1
    kx0 = dq.k_c * dq.x0
    lam_per_photon = localization_per_photon(dq)

    n_ph = occ / (32 * math.pi * C_l * kx0**2)
    t1 = math.sqrt(16 * dq.kappa * C_l * dq.k_c**2 / (dq.omega**2 * occ**2 * lam_per_photon))

    state_t1 = gaussian.evolve(gaussian.initial_state(dq, config.trap.occupation), t1, rates.Lambda_sd)
    sigma = state_t1.sigma
    tau = 2 * math.pi / dq.kappa
    cr = coupling_rates(dq, n_ph, sigma)
    Gamma_bar = cr.Lambda_sc * sigma**2
    chi = 2 * math.sqrt(cr.C_q_enhanced)
    phi = cr.g_q_enhanced * math.sqrt(n_ph) * tau
    t2 = dq.mass * sigma**2 / (HBAR * chi)
    state_pre = gaussian.evolve(state_t1, tau, rates.Lambda_sd + cr.Lambda_sc)

    problems = []
    if not 1 / TAU_GAMMA_BAND <= tau * Gamma_bar <= TAU_GAMMA_BAND:
        problems.append(f"tau*Gamma_bar = {tau * Gamma_bar:.3g} outside [1/{TAU_GAMMA_BAND:g}, {TAU_GAMMA_BAND:g}]")
    if dq.omega * tau / 4 >= MAX_KINETIC_PHASE:
        problems.append(f"omega_t*tau/4 = {dq.omega * tau / 4:.3g} not small")
    if strict and problems:
        raise PlanningError("; ".join(problems))

    return PulsePlan(
        n_ph=n_ph,
        t1=t1,
        tau=tau,
        chi=chi,
        phi=phi,
        Gamma_bar=Gamma_bar,
        t2=t2,
        sigma=sigma,
        C_l=C_l,
        C_q=cr.C_q_enhanced,
        kappa=dq.kappa,
        state_t1=state_t1,
        state_pre=state_pre,
        problems=tuple(problems),
    )


@dataclass(frozen=True)
class SlitGeometry:
    separation: float
    width: float
    p_L: float
    fringe_spacing: float


def outcome_for_separation(d: float, chi: float, sigma: float) -> float:
    return chi * (d / (2 * sigma)) ** 2


def slit_from_outcome(p_L: float, chi: float, sigma: float, t2: float, mass: float) -> SlitGeometry:
    if p_L <= 0:
        raise ValueError("p_L must be > 0 to prepare two separated packets")
    if chi <= 0:
        raise ValueError("chi must be > 0")
    d = 2 * sigma * math.sqrt(p_L / chi)
    return SlitGeometry(
        separation=d,
        width=sigma**2 / (2 * d * chi),
        p_L=p_L,
        fringe_spacing=fringe_spacing(t2, mass, d),
    )


def fringe_spacing(t2: float, mass: float, d: float) -> float:
    return 2 * math.pi * HBAR * t2 / (mass * d)


def outcome_distribution(state: GaussianState, chi: float, sigma: float | None = None) -> tuple[float, float]:
    """Mean and variance of the integrated phase quadrature p_L.

    ``sigma`` sets the length unit of the dimensionless position and defaults
    to the state's own spread. The coherent-drive shot noise contributes 1/2.
    """
    sigma = sigma or state.sigma
    u2 = state.vx / sigma**2
    # Gaussian fourth moment: <u^4> = 3 <u^2>^2
    return chi * u2, 0.5 + chi**2 * 2 * u2**2


@dataclass(frozen=True)
class RegimeBounds:
    d_min: float
    d_max_a: float
    d_max_b: float
    d_max_c: float
    d_max_d: float
    d_max_csl: float

    @property
    def d_upper(self) -> float:
        return min(self.d_max_a, self.d_max_b, self.d_max_c, self.d_max_d)

    @property
    def operational(self) -> bool:
        return self.d_min < self.d_upper

    def admits(self, d: float) -> bool:
        return self.d_min < d < self.d_upper

    def as_dict(self) -> dict[str, float | bool]:
        return {
            "d_min": self.d_min,
            "d_max_a": self.d_max_a,
            "d_max_b": self.d_max_b,
            "d_max_c": self.d_max_c,
            "d_max_d": self.d_max_d,
            "d_max_csl": self.d_max_csl,
            "operational": self.operational,
        }


def blur_bound(t2: float, Lambda: float) -> float:
    """Largest d whose fringes survive blurring by Lambda over t2 (inf if Lambda = 0)."""
    if Lambda <= 0:
        return math.inf
    return math.pi / 2 * math.sqrt(3 / (t2 * Lambda))


def regime_bounds(
    config: ExperimentConfig,
    plan: PulsePlan,
    rates: LocalizationRates,
    state: GaussianState | None = None,
) -> RegimeBounds:
    """Bounds on the slit separation; ``state`` defaults to the pre-measurement state."""
    state = state or plan.state_pre
    mass = state.mass
    return RegimeBounds(
        d_min=plan.sigma * math.sqrt(2 / plan.chi),
        d_max_a=plan.sigma,
        d_max_b=gaussian.coherence_length(state),
        d_max_c=2 * math.pi * HBAR * plan.t2 / (mass * config.protocol.resolution),
        d_max_d=blur_bound(plan.t2, rates.Lambda_sd),
        d_max_csl=blur_bound(plan.t2, rates.Lambda_csl),
    )


@dataclass(frozen=True)
class ScanRow:
    diameter: float
    bounds: RegimeBounds | None = None
    plan: PulsePlan | None = None
    error: str | None = None

    @property
    def operational(self) -> bool:
        return self.bounds is not None and self.error is None and self.bounds.operational

    def as_record(self) -> dict:
        rec: dict = {"D": self.diameter}
        nan = float("nan")
        if self.bounds is not None:
            rec.update(self.bounds.as_dict())
        else:
            rec.update(dict.fromkeys(("d_min", "d_max_a", "d_max_b", "d_max_c", "d_max_d", "d_max_csl"), nan))
        rec["operational"] = self.operational
        for key in ("n_ph", "t1", "t2", "chi"):
            rec[key] = getattr(self.plan, key) if self.plan is not None else nan
        rec["error"] = self.error or ""
        return rec


SCAN_COLUMNS = (
    "D", "d_min", "d_max_a", "d_max_b", "d_max_c", "d_max_d", "d_max_csl",
    "operational", "n_ph", "t1", "t2", "chi", "error",
)


def scan_row(config: ExperimentConfig, diameter: float) -> ScanRow:
    try:
        cfg = config.with_radius(diameter / 2)
        dq = derive(cfg)
        rates = localization_rates(cfg, dq)
        plan = plan_pulse(cfg, dq, rates, strict=False)
        bounds = regime_bounds(cfg, plan, rates)
    except Exception as exc:  # recorded per row, the scan goes on
        return ScanRow(diameter, error=f"{type(exc).__name__}: {exc}")
    return ScanRow(diameter, bounds, plan, "; ".join(plan.problems) or None)


def diameter_grid(d_lo: float = DEFAULT_SCAN[0], d_hi: float = DEFAULT_SCAN[1], points: int = DEFAULT_SCAN[2]):
    return np.geomspace(d_lo, d_hi, points) if points > 1 else np.array([d_lo])[:points]


def scan_regime(config: ExperimentConfig, diameters, jobs: int = 1) -> list[ScanRow]:
    diameters = [float(D) for D in diameters]
    if jobs > 1 and len(diameters) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(scan_row, [config] * len(diameters), diameters))
    return [scan_row(config, D) for D in diameters]
