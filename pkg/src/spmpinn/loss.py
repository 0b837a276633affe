"""Residual evaluation and weighted physics-loss assembly.

Every residual is formed in physical units and divided by an a-priori scale so
a well-trained network sees O(1) terms:

  interior conc:  [dc/dt - D (d2c/dr2 + (2/r) dc/dr)] / (3 |J_2C| / R)
  center flux:    [D dc/dr] / |J_2C|          at r = 0
  surface flux:   [D dc/dr + J(t)] / |J_2C|   at r = R
  potentials:     [J_bv(c_surf, phi) - J(t)] / |J_2C|

with |J_2C| the per-electrode surface-flux magnitude at a 2 C current.  The
loss is the weight-squared sum of per-term means of squared residuals; an
optional per-point attention map multiplies squared residuals before the mean.

The same graph code serves training (parameters as autodiff leaves) and
diagnostics (parameters as constants); array-in, array-out wrappers exist for
evaluating single residual formulas on externally supplied fields.
"""

from __future__ import annotations

from csv import writer as csv_writer
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .collocation import ELECTRODES, CollocationSet
from .errors import ConfigError, NonFiniteLoss
from .kinetics import OVERFLOW_GUARD, flux_from_current
from .network import (HEADS, NetworkSpec, ParameterVector, build_heads,
                      graph_eval_result, pack_gradients, param_vars)
from .parameters import CellParameters, ElectrodeParameters
from .profiles import CurrentProfile
from .transforms import OutputTransform, apply_transform

CONC_TERMS = ("cs_an_int", "cs_ca_int", "cs_an_rmin", "cs_ca_rmin",
              "cs_an_rmax", "cs_ca_rmax")
POT_TERMS = ("phie_int", "phis_ca_int")
TERMS = CONC_TERMS[:2] + POT_TERMS + CONC_TERMS[2:]

_HEAD_OF = {"anode": "cs_an", "cathode": "cs_ca"}


def default_residual_scales(cell: CellParameters) -> dict:
    """Per-term divisors anchored to the 2 C surface flux of each electrode."""
    scales = {}
    for elec in ELECTRODES:
        j_2c = abs(flux_from_current(-2.0 * cell.current_1c, cell, elec))
        radius = cell.electrode(elec).particle_radius
        head = _HEAD_OF[elec]
        scales[f"{head}_int"] = 3.0 * j_2c / radius
        scales[f"{head}_rmin"] = j_2c
        scales[f"{head}_rmax"] = j_2c
    scales["phie_int"] = scales["cs_an_rmax"]
    scales["phis_ca_int"] = scales["cs_ca_rmax"]
    return scales


@dataclass(frozen=True)
class LossWeights:
    """Term weights (applied squared) plus the residual scale table."""

    w_cs_int: float = 1.0
    w_cs_rmin: float = 1.0
    w_cs_rmax: float = 100.0
    residual_scales: dict | None = None

    def __post_init__(self):
        for w in (self.w_cs_int, self.w_cs_rmin, self.w_cs_rmax):
            if not np.isfinite(w) or w < 0.0:
                raise ConfigError("loss weights must be finite and >= 0")
        if self.residual_scales is not None:
            missing = [t for t in TERMS if t not in self.residual_scales]
            if missing:
                raise ConfigError(f"residual scales missing terms {missing}")
            if any(s <= 0 for s in self.residual_scales.values()):
                raise ConfigError("residual scales must be positive")

    def scales_for(self, cell: CellParameters) -> dict:
        if self.residual_scales is not None:
            return self.residual_scales
        return default_residual_scales(cell)

    def term_weight(self, term: str) -> float:
        if term.endswith("_rmin"):
            return self.w_cs_rmin ** 2
        if term.endswith("_rmax"):
            return self.w_cs_rmax ** 2
        if term in POT_TERMS:
            return 1.0
        return self.w_cs_int ** 2


# -- residual formulas (graph Vars in, graph Var out) -----------------------


def _as_graph(x):
    return x if isinstance(x, ad.Var) else ad.constant(np.asarray(x, dtype=float))


def _shape(x):
    return x.value.shape if isinstance(x, ad.Var) else np.shape(x)


def _array_route(fn):
    """Run a graph-formula function on plain arrays and return plain arrays."""

    def run(*args, **kwargs):
        out = fn(*args, **kwargs)
        if isinstance(out, tuple):
            return tuple(o.value for o in out)
        return out.value

    return run


def conc_interior_residual(d_t_hat, d_r_hat, d_rr_hat, r_hat,
                           params: ElectrodeParameters, horizon: float,
                           scale: float) -> ad.Var:
    """Scaled spherical-diffusion residual from scaled-input derivatives.

    The chain-rule factors 1/horizon and 1/R convert d/dt_hat and d/dr_hat to
    physical derivatives; r_hat > 0 is guaranteed by the collocation set.
    """
    radius = params.particle_radius
    d = params.solid_diffusivity
    ct = _as_graph(d_t_hat) * (1.0 / horizon)
    inv_r = 1.0 / (np.asarray(r_hat, dtype=float) * radius ** 2)
    lap = (_as_graph(d_rr_hat) * (1.0 / radius ** 2)
           + _as_graph(d_r_hat) * (2.0 * inv_r.reshape(_shape(d_rr_hat))))
    return (ct - d * lap) * (1.0 / scale)


def conc_center_residual(d_r_hat, params: ElectrodeParameters,
                         scale: float) -> ad.Var:
    """Scaled center-symmetry residual: the flux D dc/dr must vanish at r = 0."""
    factor = params.solid_diffusivity / (params.particle_radius * scale)
    return _as_graph(d_r_hat) * factor


def conc_surface_residual(d_r_hat, j_surf, params: ElectrodeParameters,
                          scale: float) -> ad.Var:
    """Scaled surface-flux residual (D dc/dr + J) / scale at r = R."""
    grad = _as_graph(d_r_hat) * (params.solid_diffusivity / params.particle_radius)
    return (grad + np.asarray(j_surf, dtype=float).reshape(_shape(d_r_hat))) \
        * (1.0 / scale)


def _exchange_current_graph(c_surf, params: ElectrodeParameters,
                            cell: CellParameters) -> ad.Var:
    a = cell.anodic_transfer_coeff
    pref = params.exchange_prefactor * cell.electrolyte_conc ** a
    return pref * ((params.max_conc - c_surf) ** a) * (c_surf ** (1.0 - a))


def _bv_flux_graph(i_0, eta, cell: CellParameters, linearized: bool,
                   clip_counter) -> ad.Var:
    rt = cell.gas_const * cell.temperature
    if linearized:
        return i_0 * eta * (1.0 / rt)
    a = cell.anodic_transfer_coeff
    x = eta * (cell.faraday_const / rt)
    pos = ad.exp_clipped(x * a, OVERFLOW_GUARD, clip_counter)
    neg = ad.exp_clipped(x * (a - 1.0), OVERFLOW_GUARD, clip_counter)
    return (pos - neg) * (1.0 / cell.faraday_const) * i_0


def _ocp_graph(c_surf, params: ElectrodeParameters) -> ad.Var:
    x = c_surf * (1.0 / params.max_conc)
    return ad.custom_unary(x, params.ocp.value, params.ocp.slope)


def potential_residuals(cs_an_surf, cs_ca_surf, phi_e, phi_s_ca, j_an, j_ca,
                        cell: CellParameters, scale_an: float, scale_ca: float,
                        linearized: bool = False, clip_counter=None):
    """Scaled kinetic residuals (res_phie, res_phis_ca) at matched times.

    With the anode solid potential as the zero reference, the anode
    overpotential is -phi_e - U_an(x_an) and the cathode's is
    phi_s_ca - phi_e - U_ca(x_ca); each Butler-Volmer flux must reproduce the
    applied surface flux.  Exponential arguments are clipped at the overflow
    guard (where the gradient is zeroed and the event counted) instead of
    raising, so a wild early-training iterate cannot kill the step.
    """
    cs_an_surf = _as_graph(cs_an_surf)
    cs_ca_surf = _as_graph(cs_ca_surf)
    phi_e = _as_graph(phi_e)
    phi_s_ca = _as_graph(phi_s_ca)
    shape = np.shape(phi_e.value)

    eta_an = -phi_e - _ocp_graph(cs_an_surf, cell.anode)
    i0_an = _exchange_current_graph(cs_an_surf, cell.anode, cell)
    flux_an = _bv_flux_graph(i0_an, eta_an, cell, linearized, clip_counter)
    res_e = (flux_an - np.asarray(j_an, dtype=float).reshape(shape)) \
        * (1.0 / scale_an)

    eta_ca = phi_s_ca - phi_e - _ocp_graph(cs_ca_surf, cell.cathode)
    i0_ca = _exchange_current_graph(cs_ca_surf, cell.cathode, cell)
    flux_ca = _bv_flux_graph(i0_ca, eta_ca, cell, linearized, clip_counter)
    res_s = (flux_ca - np.asarray(j_ca, dtype=float).reshape(shape)) \
        * (1.0 / scale_ca)
    return res_e, res_s


conc_interior_residual_arrays = _array_route(conc_interior_residual)
conc_center_residual_arrays = _array_route(conc_center_residual)
conc_surface_residual_arrays = _array_route(conc_surface_residual)
potential_residuals_arrays = _array_route(potential_residuals)


# -- assembly ---------------------------------------------------------------


@dataclass
class LossGraph:
    """Assembled loss with per-term hooks for gradients and diagnostics."""

    root: ad.Var                      # weighted total
    term_means: dict                  # term -> unweighted mean-square Var
    residuals: dict                   # term -> per-point residual Var
    points: dict                      # term -> (t_hat, r_hat or None)
    clip_count: int = 0

    def breakdown(self) -> dict:
        out = {t: float(v.value) for t, v in self.term_means.items()}
        out["total"] = float(self.root.value)
        return out


def _mean_square(res: ad.Var, attention=None) -> ad.Var:
    if attention is None:
        return ad.reduce_mean_square(res)
    att = attention if isinstance(attention, ad.Var) \
        else ad.constant(np.asarray(attention, dtype=float).reshape(res.value.shape))
    return ad.reduce_sum(att * res * res) * (1.0 / res.value.size)


def network_state(net_spec: NetworkSpec, params: dict,
                  transform: OutputTransform):
    """Bind a network and transform into a physical-state evaluator.

    The returned callable maps (t_hat, r_hat, deriv, heads) to an EvalResult
    in physical units, hiding how the fields are produced.  The hierarchy
    module swaps in a composite evaluator (frozen base plus trained
    correction) without the assembly below noticing.
    """
    def state(t_hat, r_hat, deriv, heads=HEADS):
        jets = build_heads(net_spec, params, t_hat, r_hat, deriv=deriv,
                           heads=heads)
        return apply_transform(graph_eval_result(jets, deriv), transform, t_hat)
    return state


def assemble_loss_from_state(colloc: CollocationSet, state,
                             cell: CellParameters, profile: CurrentProfile,
                             weights: LossWeights, attention: dict | None = None,
                             linearized: bool = False,
                             data_term: ad.Var | None = None,
                             term_factors: dict | None = None) -> LossGraph:
    """Build the physics-loss graph from any physical-state evaluator.

    term_factors optionally multiplies individual weighted contributions
    (gradient-annealing hook); absent terms default to 1.
    """
    scales = weights.scales_for(cell)
    attention = attention or {}
    clip_counter = [0]
    horizon = profile.horizon

    residuals, points = {}, {}
    for elec in ELECTRODES:
        head = _HEAD_OF[elec]
        p = cell.electrode(elec)
        t_int = colloc.interior_t[elec]
        r_int = colloc.interior_r[elec]
        er = state(t_int, r_int, "full", (head,))
        residuals[f"{head}_int"] = conc_interior_residual(
            er.d_t[head], er.d_r[head], er.d_rr[head], r_int.reshape(-1, 1),
            p, horizon, scales[f"{head}_int"])
        points[f"{head}_int"] = (t_int, r_int)

        t_b = colloc.boundary_t[elec]
        j_surf = flux_from_current(profile.current_at(t_b * horizon, cell),
                                   cell, elec)
        for which, r_const in (("rmin", 0.0), ("rmax", 1.0)):
            r_b = np.full(t_b.size, r_const)
            er = state(t_b, r_b, "r", (head,))
            if which == "rmin":
                res = conc_center_residual(er.d_r[head], p,
                                           scales[f"{head}_rmin"])
            else:
                res = conc_surface_residual(er.d_r[head], j_surf, p,
                                            scales[f"{head}_rmax"])
            residuals[f"{head}_{which}"] = res
            points[f"{head}_{which}"] = (t_b, r_b)

    t_pot = np.concatenate([colloc.interior_t[e] for e in ELECTRODES])
    er = state(t_pot, np.ones(t_pot.size), "none", HEADS)
    res_e, res_s = potential_residuals(
        er.values["cs_an"], er.values["cs_ca"], er.values["phie"],
        er.values["phis_ca"],
        flux_from_current(profile.current_at(t_pot * horizon, cell), cell, "anode"),
        flux_from_current(profile.current_at(t_pot * horizon, cell), cell, "cathode"),
        cell, scales["phie_int"], scales["phis_ca_int"],
        linearized=linearized, clip_counter=clip_counter)
    residuals["phie_int"] = res_e
    residuals["phis_ca_int"] = res_s
    points["phie_int"] = points["phis_ca_int"] = (t_pot, None)

    term_means = {t: _mean_square(residuals[t], attention.get(t))
                  for t in TERMS}
    term_factors = term_factors or {}
    root = None
    for t in TERMS:
        contrib = term_means[t] * (weights.term_weight(t)
                                   * term_factors.get(t, 1.0))
        root = contrib if root is None else root + contrib
    if data_term is not None:
        root = root + data_term
    return LossGraph(root=root, term_means=term_means, residuals=residuals,
                     points=points, clip_count=clip_counter[0])


def assemble_loss(colloc: CollocationSet, net_spec: NetworkSpec, params: dict,
                  cell: CellParameters, profile: CurrentProfile,
                  transform: OutputTransform, weights: LossWeights,
                  attention: dict | None = None, linearized: bool = False,
                  data_term: ad.Var | None = None,
                  term_factors: dict | None = None) -> LossGraph:
    """Build the full physics-loss graph over one collocation set.

    params maps tensor names to graph Vars (leaves for training, constants for
    evaluation); attention optionally maps term names to per-point multipliers
    on the squared residuals.  data_term, when given, joins the total as-is;
    by default training is physics-only and any dataset is ignored.
    """
    if abs(transform.horizon - profile.horizon) > 1e-9 * profile.horizon:
        raise ConfigError("transform and profile disagree on the time horizon")
    return assemble_loss_from_state(
        colloc, network_state(net_spec, params, transform), cell, profile,
        weights, attention=attention, linearized=linearized,
        data_term=data_term, term_factors=term_factors)


def check_finite(graph: LossGraph):
    if np.isfinite(graph.root.value):
        return
    bad = [t for t, v in graph.term_means.items() if not np.isfinite(v.value)]
    raise NonFiniteLoss(f"non-finite loss terms: {', '.join(bad) or 'data term'}")


def loss_value_and_gradient(net_spec: NetworkSpec, pv: ParameterVector,
                            colloc: CollocationSet, cell: CellParameters,
                            profile: CurrentProfile, transform: OutputTransform,
                            weights: LossWeights, attention: dict | None = None,
                            linearized: bool = False):
    """(loss, flat gradient, breakdown dict) at the current parameters."""
    leaves, ordered = param_vars(pv)
    graph = assemble_loss(colloc, net_spec, leaves, cell, profile, transform,
                          weights, attention=attention, linearized=linearized)
    check_finite(graph)
    grads = ad.backward(graph.root, ordered)
    return float(graph.root.value), pack_gradients(grads, net_spec), graph.breakdown()


def loss_breakdown(net_spec: NetworkSpec, pv: ParameterVector,
                   colloc: CollocationSet, cell: CellParameters,
                   profile: CurrentProfile, transform: OutputTransform,
                   weights: LossWeights, attention: dict | None = None,
                   linearized: bool = False) -> dict:
    """Per-term mean squares plus weighted total, no gradient."""
    params = {nm: ad.constant(arr) for nm, arr in pv.unpack().items()}
    graph = assemble_loss(colloc, net_spec, params, cell, profile, transform,
                          weights, attention=attention, linearized=linearized)
    check_finite(graph)
    return graph.breakdown()


def dump_residuals(path, graph: LossGraph, weights: LossWeights):
    """Per-point residual CSV: term, t_hat, r_hat, residual, squared weight."""
    with open(path, "w", newline="") as fh:
        out = csv_writer(fh)
        out.writerow(["term", "t_hat", "r_hat", "residual", "weight_sq"])
        for term in TERMS:
            res = np.asarray(graph.residuals[term].value).ravel()
            t_hat, r_hat = graph.points[term]
            w = weights.term_weight(term)
            for i, v in enumerate(res):
                r_txt = "" if r_hat is None else repr(float(r_hat[i]))
                out.writerow([term, repr(float(t_hat[i])), r_txt, repr(float(v)),
                              repr(w)])


def reaggregate_dump(path) -> float:
    """Recompute the total loss from a residual dump, for cross-checking."""
    sums, counts, wts = {}, {}, {}
    with open(path, newline="") as fh:
        rows = iter(fh.read().splitlines())
        next(rows)
        for line in rows:
            term, _, _, res, w = line.split(",")
            sums[term] = sums.get(term, 0.0) + float(res) ** 2
            counts[term] = counts.get(term, 0) + 1
            wts[term] = float(w)
    return sum(wts[t] * sums[t] / counts[t] for t in sums)
