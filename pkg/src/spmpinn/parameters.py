"""Physical parameters of the single-particle cell model.

Units are SI with amount of substance in kmol, so the Faraday constant is
C/kmol and the gas constant J/(kmol K).  Composite electrode volumes are per
unit cell cross-sectional area (m^3 per m^2, numerically the coated-layer
thickness); applied current densities are then A/m^2 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError
from .ocp import OcpCurve

FARADAY = 9.648533212e7     # C/kmol
GAS_CONST = 8.314462618e3   # J/(kmol K)


@dataclass(frozen=True)
class ElectrodeParameters:
    """Geometry, transport, and kinetic constants of one electrode."""

    particle_radius: float            # m
    solid_diffusivity: float          # m^2/s
    active_volume_fraction: float     # dimensionless
    composite_volume: float           # m^3 per m^2 of cell cross-section
    max_conc: float                   # kmol/m^3
    initial_conc: float               # kmol/m^3
    exchange_prefactor: float         # A m^-2 (kmol/m^3)^-3/2 for alpha_a = 0.5
    ocp: OcpCurve

    def __post_init__(self):
        if self.particle_radius <= 0 or self.solid_diffusivity <= 0:
            raise ConfigError("particle radius and diffusivity must be positive")
        if not 0 < self.active_volume_fraction < 1:
            raise ConfigError("active volume fraction must lie in (0, 1)")
        if self.composite_volume <= 0:
            raise ConfigError("composite volume must be positive")
        if not 0 < self.initial_conc < self.max_conc:
            raise ConfigError("initial concentration must lie in (0, max_conc)")
        if self.exchange_prefactor <= 0:
            raise ConfigError("exchange prefactor must be positive")

    @property
    def initial_stoich(self) -> float:
        return self.initial_conc / self.max_conc

    def with_initial_stoich(self, x0: float) -> "ElectrodeParameters":
        return replace(self, initial_conc=x0 * self.max_conc)


@dataclass(frozen=True)
class CellParameters:
    """Full parameter set of the cell; immutable after construction."""

    anode: ElectrodeParameters
    cathode: ElectrodeParameters
    temperature: float                         # K
    electrolyte_conc: float                    # kmol/m^3
    anodic_transfer_coeff: float = 0.5
    discharge_time_horizon: float = 1350.0     # s, 2 C reference scenario
    faraday_const: float = FARADAY             # C/kmol
    gas_const: float = GAS_CONST               # J/(kmol K)

    def __post_init__(self):
        if not 0 < self.anodic_transfer_coeff < 1:
            raise ConfigError("anodic transfer coefficient must lie in (0, 1)")
        if self.temperature <= 0 or self.electrolyte_conc <= 0:
            raise ConfigError("temperature and electrolyte concentration must be positive")
        if self.discharge_time_horizon <= 0:
            raise ConfigError("discharge time horizon must be positive")

    def electrode(self, name: str) -> ElectrodeParameters:
        if name == "anode":
            return self.anode
        if name == "cathode":
            return self.cathode
        raise ConfigError(f"unknown electrode {name!r}")

    @property
    def thermal_voltage(self) -> float:
        """R T / F in volts."""
        return self.gas_const * self.temperature / self.faraday_const

    @property
    def current_1c(self) -> float:
        """1 C current density, A/m^2, from full lithiation of the cathode in one hour."""
        ca = self.cathode
        return (self.faraday_const * ca.active_volume_fraction * ca.composite_volume
                * ca.max_conc) / 3600.0
