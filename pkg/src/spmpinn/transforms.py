"""Output transforms: hard initial conditions and monotone concentration bounds.

Raw heads are mapped to physical state through xi = alpha * xi_raw * F(t) + xi0
with the ramp F(t) = 1 - exp(-t / tau).  F(0) = 0 pins the state to its initial
value for any network weights; the per-head scale alpha turns the sigmoid
concentration heads into excursions of the correct sign, which bounds the
anode in (0, c_s0] and the cathode in [c_s0, c_max) on discharge (mirrored on
charge).  Potential heads use alpha = 1 with xi0 at the t = 0 algebraic state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .kinetics import bv_invert, exchange_current, flux_from_current
from .network import CONC_HEADS, HEADS, EvalResult
from .parameters import CellParameters
from .profiles import CurrentProfile

DIRECTIONS = ("discharge", "charge")


def ramp_factors(t_hat, horizon: float, tau: float):
    """(F, dF/dt_hat) of the ramp F = 1 - exp(-t/tau) at scaled times t_hat."""
    t = np.asarray(t_hat, dtype=float) * horizon
    f = -np.expm1(-t / tau)
    df = np.exp(-t / tau) * (horizon / tau)
    return f, df


def infer_direction(profile: CurrentProfile, cell: CellParameters) -> str:
    """Discharge when the time-averaged applied current is negative."""
    t0 = profile.times[0] if profile.kind == "tabulated" else 0.0
    t = np.linspace(t0, profile.horizon, 2048)
    mean = np.trapezoid(profile.current_at(t, cell), t) / (profile.horizon - t0)
    return "discharge" if mean < 0.0 else "charge"


@dataclass(frozen=True)
class OutputTransform:
    """Per-head affine map applied on top of the ramped raw outputs."""

    tau: float
    horizon: float
    direction: str
    xi0: dict
    alpha: dict

    def __post_init__(self):
        if self.tau <= 0 or self.horizon <= 0:
            raise ConfigError("ramp time constant and horizon must be positive")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}")
        missing = [h for h in HEADS if h not in self.xi0 or h not in self.alpha]
        if missing:
            raise ConfigError(f"transform lacks xi0/alpha for heads {missing}")


def make_transform(cell: CellParameters, profile: CurrentProfile,
                   direction: str | None = None, tau: float = 1.0,
                   linearized: bool = False) -> OutputTransform:
    """Transform with concentration scales set by direction and potential
    offsets solved from the t = 0 algebraic state (initial concentrations,
    initial applied current)."""
    if direction is None:
        direction = infer_direction(profile, cell)
    an, ca = cell.anode, cell.cathode
    if direction == "discharge":
        alpha_an = -an.initial_conc
        alpha_ca = ca.max_conc - ca.initial_conc
    elif direction == "charge":
        alpha_an = an.max_conc - an.initial_conc
        alpha_ca = -ca.initial_conc
    else:
        raise ConfigError(f"direction must be one of {DIRECTIONS}")

    i_init = profile.current_at(profile.times[0] if profile.kind == "tabulated"
                                else 0.0, cell)
    rt = cell.gas_const * cell.temperature
    etas = {}
    for name, params in (("anode", an), ("cathode", ca)):
        j0 = flux_from_current(i_init, cell, name)
        i0 = exchange_current(params, cell, params.initial_conc)
        if linearized:
            etas[name] = j0 * rt / i0
        else:
            etas[name] = bv_invert(i0, j0, cell)
    phi_e0 = -etas["anode"] - an.ocp.value(an.initial_stoich)
    phi_s0 = etas["cathode"] + phi_e0 + ca.ocp.value(ca.initial_stoich)

    return OutputTransform(
        tau=tau, horizon=profile.horizon, direction=direction,
        xi0={"cs_an": an.initial_conc, "cs_ca": ca.initial_conc,
             "phie": phi_e0, "phis_ca": phi_s0},
        alpha={"cs_an": alpha_an, "cs_ca": alpha_ca, "phie": 1.0, "phis_ca": 1.0},
    )


def _scale(entry, factor, graph: bool):
    if graph:
        return entry * ad.constant(factor)
    return entry * factor


def apply_transform(raw: EvalResult, transform: OutputTransform, t_hat) -> EvalResult:
    """Transformed state (and scaled-input derivative channels, via the
    product rule with the ramp) from raw head outputs.

    Works on both plain ndarray results and graph Vars; t_hat is always the
    plain scaled-time array the batch was evaluated at.
    """
    f, df = ramp_factors(t_hat, transform.horizon, transform.tau)
    out = EvalResult(values={})
    for head, value in raw.values.items():
        graph = isinstance(value, ad.Var)
        if graph:
            fb, dfb = f.reshape(-1, 1), df.reshape(-1, 1)
        else:
            fb, dfb = f, df
        a = transform.alpha[head]
        out.values[head] = _scale(value, a * fb, graph) + transform.xi0[head]
        if head in raw.d_t:
            out.d_t[head] = (_scale(raw.d_t[head], a * fb, graph)
                             + _scale(value, a * dfb, graph))
        if head in raw.d_r:
            out.d_r[head] = _scale(raw.d_r[head], a * fb, graph)
        if head in raw.d_rr:
            out.d_rr[head] = _scale(raw.d_rr[head], a * fb, graph)
    return out


def concentration_bounds(transform: OutputTransform, cell: CellParameters,
                         electrode: str) -> tuple:
    """Open-closed physical bounds the transformed concentration lives in."""
    params = cell.electrode(electrode)
    head = "cs_an" if electrode == "anode" else "cs_ca"
    a = transform.alpha[head]
    c0 = params.initial_conc
    if a < 0:
        return (c0 + a, c0)  # excursion downward, bounded by c0 + alpha < c
    return (c0, c0 + a)
