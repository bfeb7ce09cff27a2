"""Experiment configuration, physical constants and static derived quantities.

All quantities are SI. The configuration is read from a TOML document with the
sections ``sphere``, ``cavity``, ``trap``, ``environment`` and ``protocol``.
Complex permittivities are written as ``[real, imag]`` pairs and the pressure
may carry a unit tag, e.g. ``pressure = { value = 1e-16, unit = "Torr" }``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import scipy.constants as const

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TORR = const.torr  # 133.322... Pa
PRESSURE_UNITS = {"pa": 1.0, "torr": TORR, "mbar": 100.0}


class ConfigError(ValueError):
    """Raised when a configuration cannot be parsed or violates an invariant.

    ``path`` is the dotted field path (``sphere.radius``) when the failure
    concerns one field.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = const.hbar
    c: float = const.c
    k_B: float = const.k
    amu: float = const.atomic_mass
    # CSL reference mass; the atomic mass unit is the usual choice
    nucleon_mass: float = const.atomic_mass


CONSTANTS = PhysicalConstants()


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(message, path)


@dataclass(frozen=True)
class SphereParams:
    radius: float
    density: float = 2201.0
    eps_r: complex = complex(2.1, 2.5e-10)
    eps_bb: complex = complex(2.3, 0.6296)
    internal_temperature: float = 206.0

    def validate(self) -> None:
        _check(self.radius > 0, "sphere.radius", "must be > 0")
        _check(self.density > 0, "sphere.density", "must be > 0")
        _check(self.eps_r.real > 1, "sphere.eps_r", "real part must be > 1")
        _check(self.eps_r.imag >= 0, "sphere.eps_r", "imaginary part must be >= 0")
        _check(self.eps_bb.imag >= 0, "sphere.eps_bb", "imaginary part must be >= 0")
        _check(self.internal_temperature > 0, "sphere.internal_temperature", "must be > 0")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


@dataclass(frozen=True)
class CavityParams:
    finesse: float = 1.3e5
    length: float = 2e-6
    waist: float = 1.5e-6
    wavelength: float = 1064e-9

    def validate(self) -> None:
        _check(self.finesse >= 1, "cavity.finesse", "must be >= 1")
        _check(self.length > 0, "cavity.length", "must be > 0")
        _check(self.waist > 0, "cavity.waist", "must be > 0")
        _check(self.wavelength > 0, "cavity.wavelength", "must be > 0")
        _check(
            self.length >= self.wavelength / 2,
            "cavity.length",
            "must be at least half a wavelength",
        )


@dataclass(frozen=True)
class EnvironmentParams:
    pressure: float = 1e-16 * TORR
    temperature: float = 4.5
    molecule_mass: float = 28.0 * const.atomic_mass
    # None -> sqrt(3 k_B T / m_a)
    thermal_velocity: float | None = None

    def validate(self) -> None:
        _check(self.pressure >= 0, "environment.pressure", "must be >= 0")
        _check(self.temperature > 0, "environment.temperature", "must be > 0")
        _check(self.molecule_mass > 0, "environment.molecule_mass", "must be > 0")
        if self.thermal_velocity is not None:
            _check(self.thermal_velocity > 0, "environment.thermal_velocity", "must be > 0")

    @property
    def mean_velocity(self) -> float:
        if self.thermal_velocity is not None:
            return self.thermal_velocity
        return math.sqrt(3.0 * const.k * self.temperature / self.molecule_mass)


@dataclass(frozen=True)
class TrapParams:
    omega: float = 2 * math.pi * 135e3
    occupation: float = 0.1

    def validate(self) -> None:
        _check(self.omega > 0, "trap.omega", "must be > 0")
        _check(self.occupation >= 0, "trap.occupation", "must be >= 0")


@dataclass(frozen=True)
class ProtocolParams:
    resolution: float = 10e-9
    d_over_D: float = 1.0
    separation: float | None = None
    csl_factor: float = 0.0
    csl_alpha: float = 1e14
    csl_lambda0: float = 2.2e-17

    def validate(self) -> None:
        _check(self.resolution > 0, "protocol.resolution", "must be > 0")
        _check(self.d_over_D > 0, "protocol.d_over_D", "must be > 0")
        if self.separation is not None:
            _check(self.separation > 0, "protocol.separation", "must be > 0")
        _check(self.csl_factor >= 0, "protocol.csl_factor", "must be >= 0")
        _check(self.csl_alpha > 0, "protocol.csl_alpha", "must be > 0")
        _check(self.csl_lambda0 >= 0, "protocol.csl_lambda0", "must be >= 0")

    @property
    def csl_rate(self) -> float:
        """Collapse rate lambda actually in force (enhancement times lambda_0)."""
        return self.csl_factor * self.csl_lambda0

    def slit_separation(self, diameter: float) -> float:
        if self.separation is not None:
            return self.separation
        return self.d_over_D * diameter


@dataclass(frozen=True)
class ExperimentConfig:
    sphere: SphereParams
    cavity: CavityParams = field(default_factory=CavityParams)
    trap: TrapParams = field(default_factory=TrapParams)
    environment: EnvironmentParams = field(default_factory=EnvironmentParams)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)

    def __post_init__(self):
        for part in (self.sphere, self.cavity, self.trap, self.environment, self.protocol):
            part.validate()

    def with_radius(self, radius: float) -> "ExperimentConfig":
        return dataclasses.replace(self, sphere=dataclasses.replace(self.sphere, radius=radius))

    def with_protocol(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, protocol=dataclasses.replace(self.protocol, **changes))

    def to_dict(self) -> dict[str, Any]:
        """Plain-data form that :func:`config_from_dict` maps back to an equal config."""
        out = {}
        for name in ("sphere", "cavity", "trap", "environment", "protocol"):
            section = {}
            for f in dataclasses.fields(getattr(self, name)):
                value = getattr(getattr(self, name), f.name)
                if value is None:
                    continue
                if isinstance(value, complex):
                    value = [value.real, value.imag]
                section[f.name] = value
            out[name] = section
        out["environment"]["pressure"] = {"value": self.environment.pressure, "unit": "Pa"}
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {
    "sphere": SphereParams,
    "cavity": CavityParams,
    "trap": TrapParams,
    "environment": EnvironmentParams,
    "protocol": ProtocolParams,
}
_COMPLEX_FIELDS = {("sphere", "eps_r"), ("sphere", "eps_bb")}


def clausius_mossotti(eps: complex) -> complex:
    return (eps - 1) / (eps + 2)


def eps_from_cm_imag(eps_real: float, cm_imag: float) -> complex:
    """Permittivity with the given real part whose Clausius-Mossotti factor
    has imaginary part ``cm_imag``.

    Im[(e-1)/(e+2)] = 3 y / ((a+2)^2 + y^2); the smaller root is returned.
    """
    a2 = (eps_real + 2.0) ** 2
    if cm_imag == 0:
        return complex(eps_real, 0.0)
    disc = 9.0 - 4.0 * cm_imag**2 * a2
    if disc < 0:
        raise ConfigError("no permittivity reaches this absorption", "sphere.cm_bb_imag")
    # (3 - sqrt(disc)) / (2 cm_imag) without the cancellation at small cm_imag
    y = 2.0 * cm_imag * a2 / (3.0 + math.sqrt(disc))
    return complex(eps_real, y)


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    return float(value)


def _as_complex(value: Any, path: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(float(value), 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(_as_float(value[0], path), _as_float(value[1], path))
    raise ConfigError(f"expected [real, imag], got {value!r}", path)


def _pressure(value: Any) -> float:
    path = "environment.pressure"
    if isinstance(value, Mapping):
        unit = str(value.get("unit", "Pa")).lower()
        if unit not in PRESSURE_UNITS:
            raise ConfigError(f"unknown pressure unit {value.get('unit')!r}", path)
        if "value" not in value:
            raise ConfigError("missing 'value'", path)
        return _as_float(value["value"], path) * PRESSURE_UNITS[unit]
    if isinstance(value, str):
        parts = value.split()
        if len(parts) != 2 or parts[1].lower() not in PRESSURE_UNITS:
            raise ConfigError(f"cannot read pressure {value!r}", path)
        try:
            number = float(parts[0])
        except ValueError:
            raise ConfigError(f"cannot read pressure {value!r}", path) from None
        return number * PRESSURE_UNITS[parts[1].lower()]
    return _as_float(value, path)


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build and validate a config from parsed TOML/JSON data."""
    if not isinstance(data, Mapping):
        raise ConfigError("top level must be a table")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    if "sphere" not in data:
        raise ConfigError("missing required section", "sphere")
    parts = {}
    for name, cls in _SECTIONS.items():
        raw = dict(data.get(name, {}))
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        if name == "sphere":
            if "diameter" in raw and "radius" not in raw:
                raw["radius"] = _as_float(raw.pop("diameter"), "sphere.diameter") / 2
            if "cm_bb_imag" in raw:
                re_part = _as_float(raw.pop("eps_bb_real", 2.3), "sphere.eps_bb_real")
                kwargs["eps_bb"] = eps_from_cm_imag(
                    re_part, _as_float(raw.pop("cm_bb_imag"), "sphere.cm_bb_imag")
                )
            if "radius" not in raw:
                raise ConfigError("missing required field", "sphere.radius")
        if name == "environment":
            if "pressure" in raw:
                kwargs["pressure"] = _pressure(raw.pop("pressure"))
            if "molecule_mass_amu" in raw:
                kwargs["molecule_mass"] = (
                    _as_float(raw.pop("molecule_mass_amu"), "environment.molecule_mass_amu")
                    * const.atomic_mass
                )
        if name == "trap" and "frequency_hz" in raw:
            kwargs["omega"] = 2 * math.pi * _as_float(raw.pop("frequency_hz"), "trap.frequency_hz")
        for key, value in raw.items():
            path = f"{name}.{key}"
            if key not in names:
                raise ConfigError("unknown field", path)
            if (name, key) in _COMPLEX_FIELDS:
                kwargs[key] = _as_complex(value, path)
            else:
                kwargs[key] = _as_float(value, path)
        try:
            parts[name] = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc), name) from None
    return ExperimentConfig(**parts)


def load_config(source: str | Path) -> ExperimentConfig:
    """Parse a TOML document (a string, or a :class:`~pathlib.Path` to read) into a validated config."""
    if isinstance(source, Path):
        try:
            text = source.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {source}: {exc.strerror}") from None
    else:
        text = source
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_dict(data)


def fig2_config(radius: float = 20e-9) -> ExperimentConfig:
    """The bundled parameter set (silica sphere, fiber cavity, 4.5 K, 1e-16 Torr)."""
    return load_config(Path(__file__).with_name("data") / "fig2.toml").with_radius(radius)


@dataclass(frozen=True)
class DerivedQuantities:
    mass: float
    volume: float
    x0: float
    mode_volume: float
    k_c: float
    eps_c: float
    kappa_mirror: float
    kappa_sc: float
    omega: float
    hbar: float = CONSTANTS.hbar

    @property
    def kappa(self) -> float:
        return self.kappa_mirror + self.kappa_sc

    def as_dict(self) -> dict[str, float]:
        out = dataclasses.asdict(self)
        out["kappa"] = self.kappa
        out["kappa_over_2pi_hz"] = self.kappa / (2 * math.pi)
        return out


def derive(config: ExperimentConfig) -> DerivedQuantities:
    from levisim.rates import scattering_decay

    s, cav = config.sphere, config.cavity
    volume = 4.0 / 3.0 * math.pi * s.radius**3
    mass = s.density * volume
    x0 = math.sqrt(CONSTANTS.hbar / (2.0 * mass * config.trap.omega))
    k_c = 2.0 * math.pi / cav.wavelength
    mode_volume = math.pi / 4.0 * cav.waist**2 * cav.length
    eps_c = 3.0 * clausius_mossotti(s.eps_r).real
    # amplitude decay: half the FSR linewidth, pi c / (2 L F)
    kappa_mirror = math.pi * CONSTANTS.c / (2.0 * cav.length * cav.finesse)
    return DerivedQuantities(
        mass=mass,
        volume=volume,
        x0=x0,
        mode_volume=mode_volume,
        k_c=k_c,
        eps_c=eps_c,
        kappa_mirror=kappa_mirror,
        kappa_sc=scattering_decay(eps_c, volume, k_c, mode_volume),
        omega=config.trap.omega,
    )
