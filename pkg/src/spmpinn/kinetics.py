"""Electrochemical closure functions: exchange current, Butler-Volmer, current-to-flux.

Sign conventions used throughout the package:
  * applied current density I < 0 means discharge;
  * surface molar flux J > 0 means lithium leaving the particle, which pairs
    with the boundary condition D dc/dr = -J at r = R.
With those choices a discharge drains the anode (J_an > 0) and fills the
cathode (J_ca < 0).
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NoConvergence, OverpotentialBlowup
from .parameters import CellParameters, ElectrodeParameters

# |F eta / (R T)| beyond this is treated as a diverged iterate, well inside
# the double-precision exp range
OVERFLOW_GUARD = 80.0


def exchange_current(params: ElectrodeParameters, cell: CellParameters, surface_conc):
    """Exchange current density i_0 (A/m^2) at the given surface concentration.

    i_0 = i0_ref * c_e^a * (c_max - c_surf)^a * c_surf^(1-a), a = anodic transfer coeff.
    """
    cs = np.asarray(surface_conc, dtype=float)
    if np.any(cs <= 0.0) or np.any(cs >= params.max_conc):
        raise DomainError("surface concentration outside (0, c_max): kinetics saturated")
    a = cell.anodic_transfer_coeff
    i0 = (params.exchange_prefactor * cell.electrolyte_conc ** a
          * (params.max_conc - cs) ** a * cs ** (1.0 - a))
    if np.ndim(surface_conc) == 0:
        return float(i0)
    return i0


def bv_flux(i_0, eta, cell: CellParameters, linearized: bool = False):
    """Butler-Volmer surface flux J (kmol m^-2 s^-1) from overpotential eta (V).

    Nonlinear: J = (i_0/F) [exp(a F eta / RT) - exp((a-1) F eta / RT)].
    Linearized: first-order Taylor expansion at eta = 0, J = i_0 eta / (R T).
    """
    i_0 = np.asarray(i_0, dtype=float)
    eta_arr = np.asarray(eta, dtype=float)
    f_rt = cell.faraday_const / (cell.gas_const * cell.temperature)
    x = f_rt * eta_arr
    if np.any(np.abs(x) > OVERFLOW_GUARD):
        raise OverpotentialBlowup(f"|F eta / RT| exceeded {OVERFLOW_GUARD}")
    if linearized:
        j = i_0 * eta_arr / (cell.gas_const * cell.temperature)
    else:
        a = cell.anodic_transfer_coeff
        j = (i_0 / cell.faraday_const) * (np.exp(a * x) - np.exp((a - 1.0) * x))
    if np.ndim(eta) == 0 and np.ndim(i_0) == 0:
        return float(j)
    return j


def bv_invert(i_0, j_target, cell: CellParameters) -> float:
    """Overpotential eta (V) such that bv_flux(i_0, eta) = j_target.

    Closed form for alpha_a = 0.5 (asinh); Newton iteration from eta = 0 otherwise.
    """
    i_0 = float(i_0)
    j_target = float(j_target)
    f = cell.faraday_const
    rt = cell.gas_const * cell.temperature
    a = cell.anodic_transfer_coeff
    if a == 0.5:
        return float(2.0 * rt / f * np.arcsinh(f * j_target / (2.0 * i_0)))
    eta = 0.0
    scale = max(abs(j_target), i_0 / f)
    for _ in range(100):
        x = f * eta / rt
        ja = np.exp(a * x)
        jc = np.exp((a - 1.0) * x)
        jval = (i_0 / f) * (ja - jc)
        resid = jval - j_target
        if abs(resid) <= 1e-10 * scale:
            return eta
        deriv = (i_0 / rt) * (a * ja + (1.0 - a) * jc)
        eta -= resid / deriv
    raise NoConvergence("Butler-Volmer inversion: Newton failed in 100 iterations")


def flux_from_current(current, cell: CellParameters, electrode: str):
    """Surface molar flux J_j (kmol m^-2 s^-1) produced by applied current density I (A/m^2).

    J_ca = (I/F) R_ca / (3 e_ca V_ca), J_an = (-I/F) R_an / (3 e_an V_an); the
    factor maps the cell-level current onto the per-particle surface area.
    """
    p = cell.electrode(electrode)
    sign = 1.0 if electrode == "cathode" else -1.0
    i = np.asarray(current, dtype=float)
    j = (sign * i / cell.faraday_const) * p.particle_radius / (
        3.0 * p.active_volume_fraction * p.composite_volume)
    if np.ndim(current) == 0:
        return float(j)
    return j
