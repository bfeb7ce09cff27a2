"""One-dimensional wave simulation of the measurement and free-fall stages.

Production path: Gaussian surrogate of the expanded state -> squared-position
measurement operator -> exact spectral free propagation -> Gaussian blurring
of the position distribution by the localization accumulated in the fall.

``oracle_evolve_density`` evolves a full density matrix under the
localization master equation without any of these shortcuts and is used to
check the blurring path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import argrelextrema

from levisim import protocol
from levisim.params import CONSTANTS, ExperimentConfig, derive
from levisim.rates import CSL_SHAPE_MODE, localization_rates

HBAR = CONSTANTS.hbar
NORM_TOL = 1e-8
MAX_POINTS = 2**22
EDGE_TOL = 1e-6
# detector resolution enters as a Gaussian smear of std resolution / 2
DETECTOR_KERNEL = "gaussian, std = resolution/2"


class GridError(RuntimeError):
    """Grid too small or too coarse for the requested operation."""


class MeasurementError(RuntimeError):
    """Outcome has (numerically) zero probability on the given state."""


@dataclass(frozen=True)
class Grid:
    n: int
    dx: float

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise GridError("grid size must be a power of two")
        if self.dx <= 0:
            raise GridError("grid spacing must be > 0")

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, self.dx)

    @property
    def span(self) -> float:
        return self.n * self.dx

    @classmethod
    def covering(cls, span: float, dx: float) -> "Grid":
        n = 1 << max(1, math.ceil(math.log2(span / dx)))
        if n > MAX_POINTS:
            raise GridError(f"{n} grid points needed, cap is {MAX_POINTS}")
        return cls(n, span / n)


@dataclass(frozen=True, eq=False)
class WaveState:
    grid: Grid
    psi: np.ndarray
    mass: float

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def normalized(self) -> "WaveState":
        return WaveState(self.grid, self.psi / math.sqrt(self.norm), self.mass)

    def distribution(self) -> "PositionDistribution":
        return PositionDistribution(self.grid, np.abs(self.psi) ** 2)

    def moment(self, power: int) -> float:
        return float(np.sum(self.grid.x**power * np.abs(self.psi) ** 2) * self.grid.dx)


@dataclass(frozen=True, eq=False)
class PositionDistribution:
    grid: Grid
    q: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.q) * self.grid.dx)

    def moment(self, power: int) -> float:
        return float(np.sum(self.grid.x**power * self.q) * self.grid.dx)


def gaussian_wavefunction(sigma: float, grid: Grid, mass: float, cxp: float = 0.0) -> WaveState:
    """Pure zero-mean Gaussian with <x^2> = sigma^2 and <xp + px>/2 = cxp."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if grid.span < 8 * sigma:
        raise GridError(f"grid spans {grid.span:.3g} m, need at least 8 sigma = {8 * sigma:.3g} m")
    x = grid.x
    phase = cxp * x**2 / (2 * HBAR * sigma**2)
    psi = np.exp(-(x**2) / (4 * sigma**2) + 1j * phase)
    return WaveState(grid, psi, mass).normalized()


def measurement_operator(x: np.ndarray, p_L: float, chi: float, phi: float, sigma: float) -> np.ndarray:
    u2 = (x / sigma) ** 2
    return np.exp(-1j * phi * u2 - (p_L - chi * u2) ** 2)


def apply_measurement(
    state: WaveState, p_L: float, chi: float, phi: float, sigma: float
) -> tuple[WaveState, float]:
    """Condition ``state`` on the phase-quadrature outcome ``p_L``.

    Returns the renormalized post-measurement state and the unnormalized
    weight ``int |M psi|^2 dx``. Multiplying the weight by sqrt(2/pi) gives
    the outcome probability density in p_L.
    """
    if chi <= 0:
        raise ValueError("chi must be > 0")
    psi = measurement_operator(state.grid.x, p_L, chi, phi, sigma) * state.psi
    out = WaveState(state.grid, psi, state.mass)
    weight = out.norm
    if weight < 1e-12:
        raise MeasurementError(f"outcome p_L = {p_L:g} has weight {weight:.3g}")
    return out.normalized(), weight


def outcome_density(state: WaveState, p_values, chi: float, sigma: float) -> np.ndarray:
    """Probability density of the measurement outcome over ``p_values``."""
    u2 = (state.grid.x / sigma) ** 2
    rho = np.abs(state.psi) ** 2 * state.grid.dx
    p = np.asarray(p_values, dtype=float)[:, None]
    return math.sqrt(2 / math.pi) * np.exp(-2 * (p - chi * u2[None, :]) ** 2) @ rho


def edge_mass(q: np.ndarray, dx: float, fraction: int = 16) -> float:
    """Probability held in the outer 1/``fraction`` of the grid on both sides."""
    w = max(1, len(q) // fraction)
    return float((np.sum(q[:w]) + np.sum(q[-w:])) * dx)


def free_propagate(state: WaveState, t: float, edge_tol: float = EDGE_TOL) -> WaveState:
    """Free Schroedinger evolution for time ``t`` in a single spectral step."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return state
    k = state.grid.k
    kinetic = np.exp(-1j * HBAR * k**2 * t / (2 * state.mass))
    psi = np.fft.ifft(np.fft.fft(state.psi) * kinetic)
    if edge_mass(np.abs(psi) ** 2, state.grid.dx) > edge_tol:
        raise GridError("wavefunction reached the grid boundary (wraparound)")
    return WaveState(state.grid, psi, state.mass)


def blur_width(t: float, Lambda: float, mass: float) -> float:
    """Width sigma_b = 2 hbar/m sqrt(t^3 Lambda / 3) of the blurring kernel."""
    return 2 * HBAR / mass * math.sqrt(t**3 * Lambda / 3)


def blur(dist: PositionDistribution, sigma_b: float) -> PositionDistribution:
    """Convolve with exp(-y^2/sigma_b^2) / (sigma_b sqrt(pi)) (variance sigma_b^2/2).

    The kernel is sampled on the grid and normalized to unit discrete sum, so
    total probability and positivity survive kernels narrower than a cell.
    """
    if sigma_b < 0:
        raise ValueError("sigma_b must be >= 0")
    grid = dist.grid
    # below dx/30 the sampled kernel is a delta to machine precision
    if sigma_b < grid.dx / 30:
        return dist
    if sigma_b > grid.span / 4:
        raise GridError("blurring kernel wider than the grid")
    offsets = np.fft.fftfreq(grid.n, 1.0 / grid.n) * grid.dx
    kernel = np.exp(-(offsets**2) / sigma_b**2)
    kernel /= kernel.sum()
    q = np.fft.irfft(np.fft.rfft(dist.q) * np.fft.rfft(kernel), n=grid.n)
    return PositionDistribution(grid, np.clip(q, 0.0, None))


def smear(dist: PositionDistribution, std: float) -> PositionDistribution:
    """Gaussian convolution with standard deviation ``std``."""
    return blur(dist, math.sqrt(2) * std)


def oracle_evolve_density(rho: np.ndarray, grid: Grid, t: float, Lambda: float, mass: float) -> np.ndarray:
    """Evolve a density matrix rho(x, x') under free motion plus localization.

    Works in the mixed representation rho~(k, r): Fourier transform over the
    center coordinate X = (x + x')/2 at fixed separation r = x - x'. There
    the master equation is a transport in r at speed hbar k / m plus damping
    Lambda r^2, solved exactly along characteristics:

        rho~(k, r, t) = rho~(k, r - v t, 0) exp(-Lambda (r^2 t - r v t^2 + v^2 t^3 / 3))

    The shift in r is done spectrally. Exact for states whose support stays
    inside the central half of the grid and whose momentum content stays
    below half the Nyquist limit. Memory is O(N^2), so N <= 1024.
    """
    n = grid.n
    if rho.shape != (n, n):
        raise ValueError("rho shape does not match grid")
    if n > 1024:
        raise GridError("oracle is limited to N <= 1024")
    dx = grid.dx
    ell = np.arange(-n // 2, n // 2)
    j = np.arange(n)
    rows = (j[None, :] + ell[:, None]) % n
    diag = rho[rows, j[None, :]]  # diag[l, j] = rho[j + l, j]

    k = grid.k
    x_first = grid.x[0]
    r = ell * dx
    centre_phase = np.exp(-1j * k[None, :] * (x_first + r[:, None] / 2))
    F = np.fft.fft(diag, axis=1) * centre_phase * dx

    v = HBAR * k / mass
    q = 2 * np.pi * np.fft.fftfreq(n, dx)
    # F is indexed by l = -n/2..n/2-1; move r = 0 to index 0 for the FFT
    F = np.fft.ifftshift(F, axes=0)
    F = np.fft.ifft(np.fft.fft(F, axis=0) * np.exp(-1j * q[:, None] * v[None, :] * t), axis=0)
    F = np.fft.fftshift(F, axes=0)
    damping = np.exp(-Lambda * (r[:, None] ** 2 * t - r[:, None] * v[None, :] * t**2 + v[None, :] ** 2 * t**3 / 3))
    F = F * damping

    diag_t = np.fft.ifft(F / centre_phase, axis=1) / dx
    out = np.empty_like(rho, dtype=complex)
    out[rows, j[None, :]] = diag_t
    return out


@dataclass(frozen=True)
class FringeReport:
    spacing: float
    visibility: float
    envelope_width: float
    detected: bool

    def as_dict(self) -> dict:
        return {
            "spacing": self.spacing,
            "visibility": self.visibility,
            "envelope_width": self.envelope_width,
            "detected": self.detected,
        }


def _spectral_spacing(q: np.ndarray, dx: float, noise_floor: float = 1e-6) -> float:
    """Period of the dominant nonzero spatial frequency beyond the zero-frequency lobe."""
    spectrum = np.abs(np.fft.rfft(q))
    spectrum[spectrum < noise_floor * spectrum[0]] = 0.0
    freqs = np.fft.rfftfreq(len(q), dx)
    i = 1
    while i + 1 < len(spectrum) and spectrum[i + 1] < spectrum[i]:
        i += 1
    if i + 2 >= len(spectrum):
        return math.nan
    peak = i + int(np.argmax(spectrum[i:-1]))
    if spectrum[peak] == 0.0:
        return math.nan
    a, b, c = np.log(spectrum[peak - 1 : peak + 2] + 1e-300)
    curv = a - 2 * b + c
    offset = 0.5 * (a - c) / curv if curv < 0 else 0.0
    return 1.0 / (freqs[peak] + offset * (freqs[1] - freqs[0]))


def _refine(x: np.ndarray, q: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex of the parabola through samples i-1, i, i+1."""
    a, b, c = q[i - 1], q[i], q[i + 1]
    curv = a - 2 * b + c
    off = 0.5 * (a - c) / curv if curv != 0 else 0.0
    dx = x[1] - x[0]
    return x[i] + off * dx, b - 0.25 * (a - c) * off


def extract_fringes(dist: PositionDistribution, noise_floor: float = 1e-6) -> FringeReport:
    """Fringe period and visibility of the central fringes.

    The central fringe is the local maximum nearest the centroid. The spacing
    is half the distance between its two neighbouring maxima and the
    visibility (max - min)/(max + min) uses the central maximum and the mean
    of the two flanking minima. Without neighbouring maxima no fringe is
    reported (visibility 0); the spacing then falls back to the dominant
    spatial frequency of the distribution, if any.
    """
    x, q, dx = dist.grid.x, dist.q, dist.grid.dx
    total = float(np.sum(q))
    if total <= 0:
        return FringeReport(math.nan, 0.0, 0.0, False)
    mean = float(np.sum(x * q) / total)
    envelope = math.sqrt(max(float(np.sum((x - mean) ** 2 * q) / total), 0.0))
    floor = noise_floor * float(q.max())
    maxima = [i for i in argrelextrema(q, np.greater)[0] if q[i] > floor]
    minima = [i for i in argrelextrema(q, np.less)[0] if q[i] > 0 or q[i - 1] > floor]
    if len(maxima) < 3:
        return FringeReport(_spectral_spacing(q, dx), 0.0, envelope, False)

    pos = np.array([x[i] for i in maxima])
    c = int(np.argmin(np.abs(pos - mean)))
    if c == 0 or c == len(maxima) - 1:
        return FringeReport(_spectral_spacing(q, dx), 0.0, envelope, False)
    x_left, _ = _refine(x, q, maxima[c - 1])
    x_right, _ = _refine(x, q, maxima[c + 1])
    q_max = _refine(x, q, maxima[c])[1]
    spacing = (x_right - x_left) / 2

    flank = [i for i in minima if maxima[c - 1] < i < maxima[c + 1]]
    left = [i for i in flank if i < maxima[c]]
    right = [i for i in flank if i > maxima[c]]
    if not left or not right:
        return FringeReport(float(spacing), 0.0, envelope, False)
    q_min = 0.5 * (_refine(x, q, left[-1])[1] + _refine(x, q, right[0])[1])
    q_min = max(q_min, 0.0)
    vis = (q_max - q_min) / (q_max + q_min)
    return FringeReport(float(spacing), float(min(max(vis, 0.0), 1.0)), envelope, True)


def auto_grid(sigma: float, d: float, width: float, t2: float, mass: float) -> Grid:
    """Grid resolving both the slit structure and the final fringe pattern."""
    spread = math.hypot(width, HBAR * t2 / (2 * mass * width))
    x_f = protocol.fringe_spacing(t2, mass, d)
    half = max(4 * sigma, d / 2 + 10 * spread)
    dx = min(width / 8, x_f / 8)
    return Grid.covering(2 * half, dx)


class NotOperational(protocol.PlanningError):
    """Requested slit separation lies outside the operational window."""


@dataclass(frozen=True, eq=False)
class SimulationResult:
    grid: Grid
    ideal: PositionDistribution
    standard: PositionDistribution
    csl: PositionDistribution
    reports: dict[str, FringeReport]
    plan: protocol.PulsePlan
    geometry: protocol.SlitGeometry
    bounds: protocol.RegimeBounds
    blur_widths: dict[str, float]
    metadata: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "fringes": {name: rep.as_dict() for name, rep in self.reports.items()},
            "geometry": {
                "d": self.geometry.separation,
                "sigma2": self.geometry.width,
                "p_L": self.geometry.p_L,
                "x_f": self.geometry.fringe_spacing,
            },
            "blur_widths": self.blur_widths,
            "plan": self.plan.as_dict(),
            "bounds": self.bounds.as_dict(),
            "grid": {"n": self.grid.n, "dx": self.grid.dx},
            "metadata": self.metadata,
        }


def simulate_protocol(
    config: ExperimentConfig,
    d_over_D: float | None = None,
    csl_factor: float | None = None,
    force: bool = False,
    detector: bool = True,
) -> SimulationResult:
    """Interference patterns without decoherence, with standard decoherence,
    and with standard decoherence plus CSL.

    The pre-measurement state is replaced by the pure Gaussian of the same
    width; the pulse phase is taken to cancel the expansion chirp up to the
    residual reported by the planner.
    """
    changes = {}
    if d_over_D is not None:
        changes.update(d_over_D=d_over_D, separation=None)
    if csl_factor is not None:
        changes["csl_factor"] = csl_factor
    cfg = config.with_protocol(**changes) if changes else config
    dq = derive(cfg)
    rates = localization_rates(cfg, dq)
    plan = protocol.plan_pulse(cfg, dq, rates, strict=not force)
    bounds = protocol.regime_bounds(cfg, plan, rates)
    d = cfg.protocol.slit_separation(cfg.sphere.diameter)
    if not force and not bounds.admits(d):
        raise NotOperational(
            f"d = {d:.3g} m outside ({bounds.d_min:.3g}, {bounds.d_upper:.3g}) m"
        )
    p_L = protocol.outcome_for_separation(d, plan.chi, plan.sigma)
    geometry = protocol.slit_from_outcome(p_L, plan.chi, plan.sigma, plan.t2, dq.mass)
    grid = auto_grid(plan.sigma, d, geometry.width, plan.t2, dq.mass)

    psi0 = gaussian_wavefunction(plan.sigma, grid, dq.mass)
    psi1, _ = apply_measurement(psi0, p_L, plan.chi, plan.phase_residual, plan.sigma)
    ideal = free_propagate(psi1, plan.t2).distribution()

    widths = {
        "ideal": 0.0,
        "standard": blur_width(plan.t2, rates.Lambda_sd, dq.mass),
        "csl": blur_width(plan.t2, rates.Lambda_sd + rates.Lambda_csl, dq.mass),
    }
    patterns = {name: blur(ideal, w) for name, w in widths.items()}
    if detector:
        patterns = {name: smear(p, cfg.protocol.resolution / 2) for name, p in patterns.items()}
    reports = {name: extract_fringes(p) for name, p in patterns.items()}
    metadata = {
        "detector_kernel": DETECTOR_KERNEL if detector else "none",
        "csl_shape": CSL_SHAPE_MODE,
        "omega_reading": protocol.OMEGA_READING,
        "surrogate": "pure Gaussian, <x^2> = sigma^2",
        "Lambda_sd": rates.Lambda_sd,
        "Lambda_csl": rates.Lambda_csl,
        "csl_factor": cfg.protocol.csl_factor,
        "d_over_D": d / cfg.sphere.diameter,
    }
    return SimulationResult(
        grid=grid,
        ideal=patterns["ideal"],
        standard=patterns["standard"],
        csl=patterns["csl"],
        reports=reports,
        plan=plan,
        geometry=geometry,
        bounds=bounds,
        blur_widths=widths,
        metadata=metadata,
    )
