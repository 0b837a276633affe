"""Configuration loading: cell parameter files and current-profile declarations.

Cell files are YAML with the schema shipped in data/default_cell.yaml.  OCP
tables are referenced by path relative to the cell file (or to the packaged
data directory for the default set).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .ocp import OcpCurve
from .parameters import CellParameters, ElectrodeParameters
from .profiles import CurrentProfile

_ELECTRODE_KEYS = {
    "particle_radius", "solid_diffusivity", "active_volume_fraction",
    "composite_volume", "max_conc", "initial_stoich", "initial_conc",
    "exchange_prefactor", "ocp_table",
}


def _data_path(name: str) -> Path:
    return Path(str(resources.files("spmpinn").joinpath("data").joinpath(name)))


def _load_electrode(section: dict, base_dir: Path, name: str) -> ElectrodeParameters:
    unknown = set(section) - _ELECTRODE_KEYS
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        table = section["ocp_table"]
        ocp_path = base_dir / table
        if not ocp_path.exists():
            ocp_path = _data_path(table)
        ocp = OcpCurve.from_csv(ocp_path)
        max_conc = float(section["max_conc"])
        if "initial_conc" in section:
            c0 = float(section["initial_conc"])
        else:
            c0 = float(section["initial_stoich"]) * max_conc
        return ElectrodeParameters(
            particle_radius=float(section["particle_radius"]),
            solid_diffusivity=float(section["solid_diffusivity"]),
            active_volume_fraction=float(section["active_volume_fraction"]),
            composite_volume=float(section["composite_volume"]),
            max_conc=max_conc,
            initial_conc=c0,
            exchange_prefactor=float(section["exchange_prefactor"]),
            ocp=ocp,
        )
    except KeyError as exc:
        raise ConfigError(f"{name}: missing key {exc}") from exc


def load_cell(path) -> CellParameters:
    """Load a cell parameter file (YAML, SI units with kmol)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"cell file not found: {path}")
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"cell file {path} is not a mapping")
    try:
        kwargs = dict(
            anode=_load_electrode(doc["anode"], path.parent, "anode"),
            cathode=_load_electrode(doc["cathode"], path.parent, "cathode"),
            temperature=float(doc["temperature"]),
            electrolyte_conc=float(doc["electrolyte_conc"]),
        )
    except KeyError as exc:
        raise ConfigError(f"cell file {path}: missing key {exc}") from exc
    for opt in ("anodic_transfer_coeff", "discharge_time_horizon",
                "faraday_const", "gas_const"):
        if opt in doc:
            kwargs[opt] = float(doc[opt])
    return CellParameters(**kwargs)


def default_cell() -> CellParameters:
    """The packaged default parameter set."""
    return load_cell(_data_path("default_cell.yaml"))


def parse_profile(spec: dict | str, cell: CellParameters) -> CurrentProfile:
    """Build a CurrentProfile from a config mapping (or a CSV path for tabulated data).

    Mappings: {kind: constant, c_rate: -2, horizon: 1350} or
    {kind: sinusoidal, horizon: 1350, mean_c_rate: -2, amplitude_c_rate: 2, period: 1350}
    or {kind: tabulated, table: path.csv}.
    """
    if isinstance(spec, (str, Path)):
        return CurrentProfile.from_csv(spec)
    if not isinstance(spec, dict):
        raise ConfigError("profile spec must be a mapping or a CSV path")
    kind = spec.get("kind")
    horizon = float(spec.get("horizon", cell.discharge_time_horizon))
    if kind == "constant":
        return CurrentProfile.constant(float(spec["c_rate"]), horizon)
    if kind == "sinusoidal":
        return CurrentProfile.sinusoidal(
            horizon,
            mean_c_rate=float(spec.get("mean_c_rate", -2.0)),
            amplitude_c_rate=float(spec.get("amplitude_c_rate", 2.0)),
            period=float(spec["period"]) if "period" in spec else None,
        )
    if kind == "tabulated":
        table = spec.get("table")
        if table is None:
            raise ConfigError("tabulated profile needs a 'table' path")
        p = Path(table)
        if not p.exists():
            p = _data_path(str(table))
        return CurrentProfile.from_csv(p)
    raise ConfigError(f"unknown profile kind {kind!r}")
