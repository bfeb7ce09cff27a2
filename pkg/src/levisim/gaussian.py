"""Zero-mean Gaussian center-of-mass states under free fall with localization.

The master equation ``d rho/dt = i/(2 m hbar) [rho, p^2] - Lambda [x, [x, rho]]``
keeps Gaussian states Gaussian, so the three second moments are enough:

    d<x^2>/dt = 2 C / m,    dC/dt = <p^2> / m,    d<p^2>/dt = 2 hbar^2 Lambda

with ``C = <xp + px>/2``. They integrate in closed form. The determinant
``<x^2><p^2> - C^2`` obeys d det/dt = 2 hbar^2 Lambda <x^2> and is carried
along separately: after a long expansion the difference of products loses
all its digits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from levisim.params import CONSTANTS, DerivedQuantities

HBAR = CONSTANTS.hbar
PURITY_RTOL = 1e-9


@dataclass(frozen=True)
class GaussianState:
    vx: float
    vp: float
    cxp: float
    mass: float
    # vx vp - cxp^2, computed from the moments when not supplied
    det: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.vx > 0 and self.vp > 0):
            raise ValueError("variances must be positive")
        if self.det is None:
            object.__setattr__(self, "det", self.vx * self.vp - self.cxp**2)
        if self.det < HBAR**2 / 4 * (1 - PURITY_RTOL):
            raise ValueError("state violates the uncertainty bound")

    @property
    def determinant(self) -> float:
        """vx vp - cxp^2; hbar^2/4 for a pure state."""
        return self.det

    @property
    def sigma(self) -> float:
        return math.sqrt(self.vx)


def initial_state(dq: DerivedQuantities, n_bar: float) -> GaussianState:
    """Thermal state of the trap with mean occupation ``n_bar``."""
    if n_bar < 0:
        raise ValueError("n_bar must be >= 0")
    s = 2 * n_bar + 1
    return GaussianState(vx=s * dq.x0**2, vp=s * HBAR**2 / (4 * dq.x0**2), cxp=0.0, mass=dq.mass)


def evolve(state: GaussianState, t: float, Lambda: float) -> GaussianState:
    if t < 0 or Lambda < 0:
        raise ValueError("t and Lambda must be >= 0")
    m = state.mass
    d = HBAR**2 * Lambda
    vx_integral = state.vx * t + state.cxp * t**2 / m + state.vp * t**3 / (3 * m**2) + d * t**4 / (6 * m**2)
    return GaussianState(
        vx=state.vx + 2 * state.cxp * t / m + state.vp * t**2 / m**2 + 2 * d * t**3 / (3 * m**2),
        vp=state.vp + 2 * d * t,
        cxp=state.cxp + state.vp * t / m + d * t**2 / m,
        mass=m,
        det=state.determinant + 2 * d * vx_integral,
    )


def parity_expectation(state: GaussianState) -> float:
    """Mean of the parity operator, hbar / (2 sqrt(det))."""
    return min(1.0, HBAR / (2 * math.sqrt(state.determinant)))


def coherence_length(state: GaussianState) -> float:
    """Decay length xi of <-x/2|rho|x/2> ~ exp(-x^2/xi^2)."""
    return math.sqrt(8 * state.vx) * parity_expectation(state)


def trajectory(state: GaussianState, times, Lambda: float) -> list[tuple[float, GaussianState]]:
    return [(float(t), evolve(state, float(t), Lambda)) for t in times]
