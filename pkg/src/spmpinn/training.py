"""Two-stage physics training: batched Adam, then guarded full-batch L-BFGS.

A run is described by a TrainingConfig plus a physics fidelity.  Adam sweeps
the collocation set in shuffled batches with a geometric learning-rate decay;
L-BFGS then polishes the full batch under the checkpoint guard.  Optional
regularizer strategies modify sampling, the time domain, per-point attention,
or per-term weights, and every source of randomness derives from the run seed
so a record can be reproduced bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import time
from csv import writer as csv_writer
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .collocation import ELECTRODES, CollocationSet, sample_collocation
from .errors import ConfigError, NonFiniteGradient, TrainingError
from .kinetics import flux_from_current
from .loss import (TERMS, LossWeights, assemble_loss_from_state, check_finite,
                   network_state)
from .network import (NetworkSpec, ParameterVector, init_weights,
                      pack_gradients, param_vars, save_checkpoint)
from .ocp import OcpCurve
from .optim import Adam, geometric_lr, lbfgs_minimize
from .parameters import CellParameters
from .profiles import CurrentProfile
from .transforms import OutputTransform, make_transform

FIDELITIES = ("simplified", "linear_bv", "nonlinear_bv")
REGULARIZERS = ("none", "gradual_sgd", "gradual_lbfgs", "random_collocation",
                "self_attention", "gradient_annealing")

# raw value at which softplus equals exactly 1, so fresh multipliers are inert
_SOFTPLUS_UNIT = float(np.log(np.e - 1.0))


@dataclass(frozen=True)
class TrainingConfig:
    """Step counts, schedules and the regularizer strategy for one run."""

    adam_steps: int = 3000
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    lr_decay_steps: int = 1500
    batches_per_epoch: int = 10
    lbfgs_steps: int = 10000
    lbfgs_warm_start: int = 50
    history_size: int = 50
    regularizer: str = "none"
    n_interior: int = 1280
    n_boundary: int = 640
    time_ramp_start: float = 0.1    # initial t-domain fraction, gradual strategies
    attention_lr: float = 1e-3
    anneal_ema: float = 0.9
    tau: float = 1.0

    def __post_init__(self):
        if min(self.adam_steps, self.lbfgs_steps) < 0 or \
                min(self.batches_per_epoch, self.history_size) < 1:
            raise ConfigError("step and batch counts must be positive")
        if self.lbfgs_warm_start < 0:
            raise ConfigError("warm-start step count must be >= 0")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}")
        if not 0.0 < self.time_ramp_start <= 1.0:
            raise ConfigError("time_ramp_start must lie in (0, 1]")
        if self.lr_end > self.lr_start or self.lr_start <= 0:
            raise ConfigError("learning rate must decay (or stay flat)")
        if not 0.0 <= self.anneal_ema < 1.0:
            raise ConfigError("anneal_ema must lie in [0, 1)")
        if self.tau <= 0.0 or self.attention_lr <= 0.0:
            raise ConfigError("tau and attention_lr must be positive")


def run_hash(net_spec: NetworkSpec, config: TrainingConfig,
             weights: LossWeights, fidelity: str) -> str:
    """Short digest over everything that defines the optimization problem."""
    doc = {"spec": asdict(net_spec), "config": asdict(config),
           "weights": asdict(weights), "fidelity": fidelity}
    blob = json.dumps(doc, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- fidelity ---------------------------------------------------------------


def _operating_chord(curve: OcpCurve, x0: float, x1: float) -> OcpCurve:
    """Linear OCP through (x0, U(x0)) and (x1, U(x1)), flat if they coincide."""
    u0 = float(curve.value(x0))
    if abs(x1 - x0) < 1e-12:
        return OcpCurve(np.array([0.0, 1.0]), np.array([u0, u0]))
    s = (float(curve.value(x1)) - u0) / (x1 - x0)
    return OcpCurve(np.array([0.0, 1.0]),
                    np.array([u0 - s * x0, u0 + s * (1.0 - x0)]))


def end_of_horizon_stoich(cell: CellParameters, profile: CurrentProfile,
                          electrode: str) -> float:
    """Mean stoichiometry after the whole profile, from lithium conservation."""
    p = cell.electrode(electrode)
    t = np.linspace(0.0, profile.horizon, 2049)
    j = flux_from_current(profile.current_at(t, cell), cell, electrode)
    delta = -3.0 / p.particle_radius * np.trapezoid(j, t)
    return (p.initial_conc + delta) / p.max_conc


def fidelity_cell(cell: CellParameters, profile: CurrentProfile,
                  fidelity: str) -> tuple[CellParameters, bool]:
    """Physics variant for a hierarchy level: (possibly modified cell, linearized).

    nonlinear_bv is the full model; linear_bv linearizes the kinetics around
    zero overpotential; simplified additionally replaces each OCP with its
    chord between the initial and end-of-horizon stoichiometry.  Diffusivities
    are concentration-independent throughout this model, so the simplified
    level has nothing further to freeze there.
    """
    if fidelity == "nonlinear_bv":
        return cell, False
    if fidelity == "linear_bv":
        return cell, True
    if fidelity != "simplified":
        raise ConfigError(f"fidelity must be one of {FIDELITIES}")
    new = {}
    for elec in ELECTRODES:
        p = cell.electrode(elec)
        x_end = end_of_horizon_stoich(cell, profile, elec)
        chord = _operating_chord(p.ocp, p.initial_stoich, x_end)
        new[elec] = replace(p, ocp=chord)
    return replace(cell, anode=new["anode"], cathode=new["cathode"]), True


@dataclass
class TrainTask:
    """Everything the loss needs, with the field evaluator swappable.

    state_factory maps a dict of parameter Vars to a physical-state callable;
    None means a plain transformed network (composite hierarchy levels
    substitute their own).
    """

    net_spec: NetworkSpec
    cell: CellParameters
    profile: CurrentProfile
    transform: OutputTransform
    weights: LossWeights
    linearized: bool = False
    state_factory: object = None

    def state(self, params: dict):
        if self.state_factory is not None:
            return self.state_factory(params)
        return network_state(self.net_spec, params, self.transform)


def make_task(net_spec: NetworkSpec, cell: CellParameters,
              profile: CurrentProfile, fidelity: str = "nonlinear_bv",
              weights: LossWeights | None = None, tau: float = 1.0) -> TrainTask:
    """Standard single-network task at the requested physics fidelity."""
    cell_f, linearized = fidelity_cell(cell, profile, fidelity)
    transform = make_transform(cell_f, profile, tau=tau, linearized=linearized)
    return TrainTask(net_spec=net_spec, cell=cell_f, profile=profile,
                     transform=transform, weights=weights or LossWeights(),
                     linearized=linearized)


# -- regularizer strategies -------------------------------------------------


@dataclass
class RegularizerState:
    """Mutable knobs a strategy is allowed to move between epochs."""

    strategy: str
    base: CollocationSet
    colloc: CollocationSet
    ramp_start: float = 0.1
    time_bound: float = 1.0
    attention_raw: dict | None = None    # term -> raw multiplier array
    attention_train: bool = False
    term_factors: dict | None = None     # gradient-annealing multipliers

    def attention(self) -> dict | None:
        """Frozen multiplier arrays (softplus of raw), for diagnostics."""
        if self.attention_raw is None:
            return None
        return {t: np.logaddexp(0.0, a) for t, a in self.attention_raw.items()}


def _attention_sizes(colloc: CollocationSet) -> dict:
    n_an = colloc.interior_t["anode"].size
    n_ca = colloc.interior_t["cathode"].size
    b_an = colloc.boundary_t["anode"].size
    b_ca = colloc.boundary_t["cathode"].size
    return {"cs_an_int": n_an, "cs_ca_int": n_ca,
            "phie_int": n_an + n_ca, "phis_ca_int": n_an + n_ca,
            "cs_an_rmin": b_an, "cs_an_rmax": b_an,
            "cs_ca_rmin": b_ca, "cs_ca_rmax": b_ca}


def apply_regularizer(reg: RegularizerState, stage: str, index: int,
                      total: int, seed: int = 0) -> RegularizerState:
    """Advance one strategy at an epoch (Adam) or chunk (L-BFGS) boundary.

    index / total measure progress through the stage; ramping strategies
    finish their ramp halfway through.  Mutates and returns `reg`.
    """
    if stage not in ("adam", "lbfgs"):
        raise ConfigError(f"unknown stage {stage!r}")
    s = reg.strategy
    frac = index / max(total, 1)
    ramp = reg.ramp_start + (1.0 - reg.ramp_start) * min(1.0, 2.0 * frac)
    if s == "gradual_sgd":
        reg.time_bound = ramp if stage == "adam" else 1.0
    elif s == "gradual_lbfgs":
        reg.time_bound = 1.0 if stage == "adam" else ramp
    elif s == "random_collocation":
        if stage == "adam":
            child = np.random.SeedSequence([seed, index]).generate_state(1)[0]
            reg.colloc = sample_collocation(reg.base.n_interior,
                                            reg.base.n_boundary, int(child))
        # L-BFGS keeps whatever set the last epoch sampled
    elif s == "self_attention":
        if stage == "adam" and reg.attention_raw is None and index >= total // 2:
            reg.attention_raw = {t: np.full(n, _SOFTPLUS_UNIT) for t, n
                                 in _attention_sizes(reg.colloc).items()}
        reg.attention_train = stage == "adam" and reg.attention_raw is not None
    elif s == "gradient_annealing":
        if reg.term_factors is None:
            reg.term_factors = {t: 1.0 for t in TERMS}
    elif s != "none":
        raise ConfigError(f"unknown regularizer {s!r}")
    return reg


def anneal_term_factors(factors: dict, grad_norms: dict, ema: float = 0.9,
                        cap: float = 1e3) -> dict:
    """EMA update moving per-term factors toward balanced gradient norms.

    Each factor tracks max_norm / own_norm (capped), so a term whose gradient
    is 10x weaker drifts toward a 10x larger weight.
    """
    gmax = max(grad_norms.values(), default=0.0)
    if gmax <= 0.0:
        return dict(factors)
    out = {}
    for term, f in factors.items():
        ratio = min(cap, gmax / max(grad_norms.get(term, 0.0), gmax / cap))
        out[term] = ema * f + (1.0 - ema) * ratio
    return out


# -- batching ---------------------------------------------------------------


def _partition(colloc: CollocationSet, n_batches: int, rng) -> list:
    """Shuffled near-even split; returns (subset, per-term index map) pairs."""
    ints = {e: np.array_split(rng.permutation(colloc.interior_t[e].size),
                              n_batches) for e in ELECTRODES}
    bnds = {e: np.array_split(rng.permutation(colloc.boundary_t[e].size),
                              n_batches) for e in ELECTRODES}
    n_an = colloc.interior_t["anode"].size
    out = []
    for b in range(n_batches):
        ia, ic = ints["anode"][b], ints["cathode"][b]
        ba, bc = bnds["anode"][b], bnds["cathode"][b]
        sub = CollocationSet(
            interior_t={"anode": colloc.interior_t["anode"][ia],
                        "cathode": colloc.interior_t["cathode"][ic]},
            interior_r={"anode": colloc.interior_r["anode"][ia],
                        "cathode": colloc.interior_r["cathode"][ic]},
            boundary_t={"anode": colloc.boundary_t["anode"][ba],
                        "cathode": colloc.boundary_t["cathode"][bc]},
            rng_seed=colloc.rng_seed)
        pot = np.concatenate([ia, n_an + ic])
        out.append((sub, {"cs_an_int": ia, "cs_ca_int": ic,
                          "phie_int": pot, "phis_ca_int": pot,
                          "cs_an_rmin": ba, "cs_an_rmax": ba,
                          "cs_ca_rmin": bc, "cs_ca_rmax": bc}))
    return out


def _bounded(colloc: CollocationSet, bound: float) -> CollocationSet:
    """Compress scaled times into [0, bound] (gradual domain strategies)."""
    if bound >= 1.0:
        return colloc
    return CollocationSet(
        interior_t={e: colloc.interior_t[e] * bound for e in ELECTRODES},
        interior_r=dict(colloc.interior_r),
        boundary_t={e: colloc.boundary_t[e] * bound for e in ELECTRODES},
        rng_seed=colloc.rng_seed)


class _SparseAdam:
    """Adam restricted to the coordinates seen this step (attention ascent)."""

    def __init__(self, sizes: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {t: np.zeros(n) for t, n in sizes.items()}
        self.v = {t: np.zeros(n) for t, n in sizes.items()}
        self.t = {t: np.zeros(n, dtype=int) for t, n in sizes.items()}

    def ascend(self, raw: dict, term: str, idx: np.ndarray, grad: np.ndarray):
        g = np.asarray(grad, dtype=float).ravel()
        self.t[term][idx] += 1
        tt = self.t[term][idx]
        self.m[term][idx] = self.b1 * self.m[term][idx] + (1 - self.b1) * g
        self.v[term][idx] = self.b2 * self.v[term][idx] + (1 - self.b2) * g * g
        m_hat = self.m[term][idx] / (1.0 - self.b1 ** tt)
        v_hat = self.v[term][idx] / (1.0 - self.b2 ** tt)
        raw[term][idx] += self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _attention_graph(reg: RegularizerState, index_map: dict):
    """Batch attention as graph leaves (training) or plain arrays (frozen)."""
    if reg.attention_raw is None:
        return None, [], []
    att, leaves, keys = {}, [], []
    for term, idx in index_map.items():
        raw = reg.attention_raw[term][idx]
        if reg.attention_train:
            leaf = ad.constant(raw.reshape(-1, 1))
            att[term] = ad.softplus(leaf)
            leaves.append(leaf)
            keys.append((term, idx))
        else:
            att[term] = np.logaddexp(0.0, raw)
    return att, leaves, keys


# -- stages -----------------------------------------------------------------


def _graph_for(x: np.ndarray, task: TrainTask, colloc: CollocationSet,
               reg: RegularizerState, index_map: dict | None,
               attention_leaves: bool):
    pv = ParameterVector(np.asarray(x, dtype=task.net_spec.dtype),
                         task.net_spec)
    leaves, ordered = param_vars(pv)
    index_map = index_map if index_map is not None \
        else _full_index_map(colloc)
    if attention_leaves:
        att, att_leaves, att_keys = _attention_graph(reg, index_map)
    else:
        frozen = reg.attention()
        att = {t: frozen[t][idx] for t, idx in index_map.items()} \
            if frozen is not None else None
        att_leaves, att_keys = [], []
    graph = assemble_loss_from_state(
        _bounded(colloc, reg.time_bound), task.state(leaves), task.cell,
        task.profile, task.weights, attention=att, linearized=task.linearized,
        term_factors=reg.term_factors)
    return graph, ordered, att_leaves, att_keys


def _full_index_map(colloc: CollocationSet) -> dict:
    sizes = _attention_sizes(colloc)
    return {t: np.arange(n) for t, n in sizes.items()}


def _update_annealing(x: np.ndarray, task: TrainTask, sub: CollocationSet,
                      reg: RegularizerState, config: TrainingConfig):
    """Refresh per-term factors from gradient norms on one batch."""
    graph, ordered, _, _ = _graph_for(x, task, sub, reg, None,
                                      attention_leaves=False)
    check_finite(graph)
    norms = {}
    for term in TERMS:
        root = graph.term_means[term] * task.weights.term_weight(term)
        g = pack_gradients(ad.backward(root, ordered), task.net_spec)
        norms[term] = float(np.linalg.norm(g))
    reg.term_factors = anneal_term_factors(reg.term_factors, norms,
                                           ema=config.anneal_ema)


def adam_stage(x: np.ndarray, task: TrainTask, config: TrainingConfig,
               reg: RegularizerState, batch_seed: int, reg_seed: int,
               history: list, term_rows: list, clip_counter: list):
    """Run the batched Adam stage in place of x; returns the updated vector."""
    bpe = config.batches_per_epoch
    for e in ELECTRODES:
        if reg.colloc.interior_t[e].size < bpe or \
                reg.colloc.boundary_t[e].size < bpe:
            raise ConfigError("collocation too small for batches_per_epoch")
    n_epochs = -(-config.adam_steps // bpe)
    rng = np.random.default_rng(batch_seed)
    opt = Adam(x.size, geometric_lr(config.lr_start, config.lr_end,
                                    config.lr_decay_steps))
    att_opt = None
    step = 0
    for epoch in range(n_epochs):
        apply_regularizer(reg, "adam", epoch, n_epochs, seed=reg_seed)
        if reg.attention_train and att_opt is None:
            att_opt = _SparseAdam({t: a.size for t, a
                                   in reg.attention_raw.items()},
                                  config.attention_lr)
        batches = _partition(reg.colloc, bpe, rng)
        if reg.term_factors is not None and step > 0:
            _update_annealing(x, task, batches[0][0], reg, config)
        for sub, index_map in batches:
            if step >= config.adam_steps:
                break
            graph, ordered, att_leaves, att_keys = _graph_for(
                x, task, sub, reg, index_map,
                attention_leaves=reg.attention_train)
            check_finite(graph)
            grads = ad.backward(graph.root, ordered + att_leaves)
            g = pack_gradients(grads[:len(ordered)], task.net_spec)
            history.append(float(graph.root.value))
            term_rows.append(graph.breakdown())
            clip_counter[0] += graph.clip_count
            x = opt.step(x, g)
            for (term, idx), a_grad in zip(att_keys, grads[len(ordered):]):
                att_opt.ascend(reg.attention_raw, term, idx, a_grad)
            step += 1
    return x


def lbfgs_stage(x: np.ndarray, task: TrainTask, config: TrainingConfig,
                reg: RegularizerState, reg_seed: int, history: list,
                term_rows: list, clip_counter: list):
    """Full-batch guarded L-BFGS; returns (x, stalled, rejections)."""
    if config.lbfgs_steps == 0:
        return x, False, 0

    def make_closure():
        stash = {"f": None, "bd": None}

        def closure(z):
            try:
                graph, ordered, _, _ = _graph_for(z, task, reg.colloc, reg,
                                                  None, attention_leaves=False)
                if not np.isfinite(graph.root.value):
                    return np.inf, np.zeros_like(z)
                grads = ad.backward(graph.root, ordered)
            except NonFiniteGradient:
                return np.inf, np.zeros_like(z)
            stash["f"] = float(graph.root.value)
            stash["bd"] = graph.breakdown()
            clip_counter[0] += graph.clip_count
            return stash["f"], pack_gradients(grads, task.net_spec)
        return closure, stash

    # gradual_lbfgs moves the domain bound in discrete increments spread over
    # the first half of the stage; everything else runs as one chunk
    if config.regularizer == "gradual_lbfgs":
        half = max(config.lbfgs_steps // 2, 1)
        n_updates = min(50, half)
        sizes = [len(c) for c in
                 np.array_split(np.arange(half), n_updates)]
        sizes.append(config.lbfgs_steps - half)
        total = 2 * n_updates
    else:
        sizes = [config.lbfgs_steps]
        total = 2

    state = None
    stalled = False
    rejections = 0
    for chunk, size in enumerate(sizes):
        if size == 0:
            continue
        apply_regularizer(reg, "lbfgs", chunk, total, seed=reg_seed)
        closure, stash = make_closure()
        last_bd = None   # per-chunk: a domain change makes old breakdowns stale

        def on_iter(k, xk, fk, stash=stash):
            nonlocal last_bd
            if stash["f"] == fk:       # this iteration's proposal was accepted
                last_bd = stash["bd"]
            history.append(fk)
            term_rows.append(dict(last_bd) if last_bd is not None else {})

        res = lbfgs_minimize(
            x, closure, steps=size, history_size=config.history_size,
            warm_start=config.lbfgs_warm_start if chunk == 0 else 0,
            callback=on_iter, state=state)
        x = res.x
        state = res
        rejections += res.rejections
        if res.stalled:
            stalled = True
            break
    return x, stalled, rejections


# -- run records ------------------------------------------------------------


@dataclass
class RunRecord:
    """Everything needed to audit or reproduce one training run."""

    seed: int
    fidelity: str
    config: TrainingConfig
    weights: LossWeights
    config_hash: str
    seeds: dict
    loss_history: np.ndarray
    term_history: dict
    stage_starts: dict
    final_params: ParameterVector | None
    adam_params: ParameterVector | None
    wall_time: float
    stalled: bool = False
    lbfgs_rejections: int = 0
    clip_events: int = 0
    failed: bool = False
    failure: str = ""

    @property
    def final_loss(self) -> float:
        return float(self.loss_history[-1]) if self.loss_history.size else np.nan

    def export_history(self, path):
        """CSV of the loss trace: step, stage, total, then one term column each."""
        with open(path, "w", newline="") as fh:
            out = csv_writer(fh)
            out.writerow(["step", "stage", "total", *TERMS])
            lbfgs_at = self.stage_starts.get("lbfgs", len(self.loss_history))
            for i, total in enumerate(self.loss_history):
                stage = "adam" if i < lbfgs_at else "lbfgs"
                terms = [repr(float(self.term_history[t][i])) for t in TERMS]
                out.writerow([i, stage, repr(float(total)), *terms])

    def save(self, out_dir):
        """Write history CSV, per-stage checkpoints and the manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.export_history(out / "history.csv")
        if self.adam_params is not None:
            save_checkpoint(out / "adam.ckpt", self.adam_params,
                            extra={"stage": "adam"})
        if self.final_params is not None:
            save_checkpoint(out / "final.ckpt", self.final_params,
                            extra={"stage": "final"})
        manifest = {
            "seed": self.seed, "seeds": self.seeds, "fidelity": self.fidelity,
            "config": asdict(self.config), "weights": asdict(self.weights),
            "config_hash": self.config_hash,
            "stage_starts": self.stage_starts, "wall_time": self.wall_time,
            "final_loss": None if self.failed else self.final_loss,
            "stalled": self.stalled, "clip_events": self.clip_events,
            "lbfgs_rejections": self.lbfgs_rejections,
            "failed": self.failed, "failure": self.failure,
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return out


def _derive_seeds(seed: int) -> dict:
    ss = np.random.SeedSequence(seed)
    init_s, colloc_s, batch_s, reg_s = (int(v) for v in ss.generate_state(4))
    return {"init": init_s, "colloc": colloc_s, "batch": batch_s, "reg": reg_s}


def train_task(task: TrainTask, config: TrainingConfig, seed: int,
               fidelity_label: str = "nonlinear_bv",
               colloc: CollocationSet | None = None,
               x0: np.ndarray | None = None) -> RunRecord:
    """Run both stages for an already-built task (hierarchy levels reuse this)."""
    seeds = _derive_seeds(seed)
    if colloc is None:
        colloc = sample_collocation(config.n_interior, config.n_boundary,
                                    seeds["colloc"])
    seeds["colloc"] = colloc.rng_seed     # explicit sets override the derived one
    if x0 is None:
        x0 = init_weights(task.net_spec, seed=seeds["init"]).data.astype(float)
    x = np.asarray(x0, dtype=float).copy()
    reg = RegularizerState(strategy=config.regularizer, base=colloc,
                           colloc=colloc, ramp_start=config.time_ramp_start)
    history: list = []
    term_rows: list = []
    clip_counter = [0]
    stage_starts = {"adam": 0}
    adam_params = None
    stalled = False
    rejections = 0
    failed = False
    failure = ""

    t0 = time.perf_counter()
    try:
        x = adam_stage(x, task, config, reg, seeds["batch"], seeds["reg"],
                       history, term_rows, clip_counter)
        adam_params = ParameterVector(
            x.astype(task.net_spec.dtype).copy(), task.net_spec)
        stage_starts["lbfgs"] = len(history)
        x, stalled, rejections = lbfgs_stage(
            x, task, config, reg, seeds["reg"], history, term_rows,
            clip_counter)
    except (TrainingError, NonFiniteGradient) as exc:
        failed = True
        failure = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0

    term_history = {t: np.array([row.get(t, np.nan) for row in term_rows])
                    for t in TERMS}
    final = ParameterVector(x.astype(task.net_spec.dtype).copy(),
                            task.net_spec)
    return RunRecord(
        seed=seed, fidelity=fidelity_label, config=config,
        weights=task.weights,
        config_hash=run_hash(task.net_spec, config, task.weights,
                             fidelity_label),
        seeds=seeds, loss_history=np.array(history),
        term_history=term_history, stage_starts=stage_starts,
        final_params=final, adam_params=adam_params, wall_time=wall,
        stalled=stalled, lbfgs_rejections=rejections,
        clip_events=clip_counter[0], failed=failed, failure=failure)


def train_single(net_spec: NetworkSpec, config: TrainingConfig,
                 cell: CellParameters, profile: CurrentProfile, seed: int,
                 fidelity: str = "nonlinear_bv",
                 weights: LossWeights | None = None) -> RunRecord:
    """Train one network from scratch at one physics fidelity."""
    if fidelity not in FIDELITIES:
        raise ConfigError(f"fidelity must be one of {FIDELITIES}")
    task = make_task(net_spec, cell, profile, fidelity=fidelity,
                     weights=weights, tau=config.tau)
    return train_task(task, config, seed, fidelity_label=fidelity)
