"""Multi-fidelity training: freeze a level, learn a ramped correction on top.

Level 1 trains normally at its (lower) physics fidelity.  Every further level
holds the previous composite fixed and trains a fresh network whose output,
centered for the bounded concentration heads, is scaled by a small amplitude,
multiplied by the same time ramp that enforces the initial condition, and
added on.  The correction therefore vanishes at t = 0 (initial conditions
survive exactly) and an amplitude of zero reproduces the lower level
identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .collocation import sample_collocation
from .errors import ArtifactError, ConfigError
from .loss import LossWeights, network_state
from .network import (CONC_HEADS, HEADS, EvalResult, NetworkSpec,
                      ParameterVector, build_heads, graph_eval_result,
                      load_checkpoint, save_checkpoint)
from .parameters import CellParameters
from .profiles import CurrentProfile
from .training import (FIDELITIES, RunRecord, TrainingConfig, TrainTask,
                       fidelity_cell, train_task)
from .transforms import OutputTransform, apply_transform, make_transform, ramp_factors

_FIDELITY_RANK = {f: i for i, f in enumerate(FIDELITIES)}


@dataclass(frozen=True)
class HierarchyLevel:
    """One stage of the hierarchy: physics fidelity plus its own network."""

    fidelity: str
    net_spec: NetworkSpec
    config: TrainingConfig
    colloc_seed: int

    def __post_init__(self):
        if self.fidelity not in FIDELITIES:
            raise ConfigError(f"fidelity must be one of {FIDELITIES}")


@dataclass(frozen=True)
class HierarchyConfig:
    """Ordered levels, lower fidelity first, plus the correction amplitude."""

    levels: tuple
    alpha2: float = 0.1

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ConfigError("a hierarchy needs at least two levels")
        ranks = [_FIDELITY_RANK[lv.fidelity] for lv in self.levels]
        if any(b < a for a, b in zip(ranks, ranks[1:])):
            raise ConfigError("level fidelities must be nondecreasing")
        seeds = [lv.colloc_seed for lv in self.levels]
        if len(set(seeds)) != len(seeds):
            raise ConfigError("each level needs a distinct collocation seed")
        if not 0.0 < self.alpha2 <= 1.0:
            raise ConfigError("correction amplitude must lie in (0, 1]")


def correction_transform(base: OutputTransform, alpha2: float) -> OutputTransform:
    """Affine map for a correction: same ramp, zero offsets, damped scales."""
    return OutputTransform(
        tau=base.tau, horizon=base.horizon, direction=base.direction,
        xi0={h: 0.0 for h in HEADS},
        alpha={h: alpha2 * base.alpha[h] for h in HEADS})


def _center_conc(raw: EvalResult) -> EvalResult:
    """Map sigmoid conc heads from (0, 1) to (-1, 1) so corrections are two-sided."""
    values = dict(raw.values)
    d_t, d_r, d_rr = dict(raw.d_t), dict(raw.d_r), dict(raw.d_rr)
    for h in CONC_HEADS:
        if h in values:
            values[h] = values[h] * 2.0 - 1.0
        for d in (d_t, d_r, d_rr):
            if h in d:
                d[h] = d[h] * 2.0
    return EvalResult(values=values, d_t=d_t, d_r=d_r, d_rr=d_rr)


def _detach(er: EvalResult) -> EvalResult:
    as_np = lambda d: {h: np.asarray(v.value) for h, v in d.items()}
    return EvalResult(values=as_np(er.values), d_t=as_np(er.d_t),
                      d_r=as_np(er.d_r), d_rr=as_np(er.d_rr))


def _add_frozen(base: EvalResult, corr: EvalResult) -> EvalResult:
    add = lambda b, c: {h: c[h] + ad.constant(b[h]) for h in c}
    return EvalResult(values=add(base.values, corr.values),
                      d_t=add(base.d_t, corr.d_t),
                      d_r=add(base.d_r, corr.d_r),
                      d_rr=add(base.d_rr, corr.d_rr))


def frozen_state(net_spec: NetworkSpec, pv: ParameterVector,
                 transform: OutputTransform, cache_size: int = 128):
    """Physical-state evaluator on fixed parameters, detached from any graph.

    Results are memoized by the query bytes: the full-batch L-BFGS stage of a
    higher level re-evaluates the same points thousands of times.
    """
    params = {nm: ad.constant(arr) for nm, arr in pv.unpack().items()}
    state = network_state(net_spec, params, transform)
    cache: dict = {}

    def run(t_hat, r_hat, deriv, heads=HEADS):
        key = (np.asarray(t_hat).tobytes(), np.asarray(r_hat).tobytes(),
               deriv, tuple(heads))
        hit = cache.get(key)
        if hit is None:
            hit = _detach(state(t_hat, r_hat, deriv, heads))
            if len(cache) >= cache_size:
                cache.pop(next(iter(cache)))
            cache[key] = hit
        return hit
    return run


def composite_state_factory(base_state, net_spec: NetworkSpec,
                            corr: OutputTransform):
    """state_factory for training a correction network on top of a frozen base."""
    def factory(params: dict):
        def state(t_hat, r_hat, deriv, heads=HEADS):
            frozen = base_state(t_hat, r_hat, deriv, heads)
            jets = build_heads(net_spec, params, t_hat, r_hat, deriv=deriv,
                               heads=heads)
            raw = _center_conc(graph_eval_result(jets, deriv))
            return _add_frozen(frozen, apply_transform(raw, corr, t_hat))
        return state
    return factory


# -- composite prediction ----------------------------------------------------


@dataclass
class TrainedLevel:
    """Weights plus the affine map with which this level enters the sum."""

    fidelity: str
    pv: ParameterVector
    transform: OutputTransform   # full map for the base, correction map above
    role: str = "base"           # "base" | "correction"

    def __post_init__(self):
        if self.role not in ("base", "correction"):
            raise ConfigError("level role must be 'base' or 'correction'")


@dataclass
class CompositePredictor:
    """Evaluates every level and sums base plus ramped corrections."""

    levels: list
    alpha2: float

    @property
    def horizon(self) -> float:
        """Physical time (s) that scaled input t_hat = 1 corresponds to."""
        return self.levels[0].transform.horizon

    def predict(self, t_hat, r_hat) -> dict:
        """Physical fields at scaled query points: head -> column array."""
        t_hat = np.asarray(t_hat, dtype=float)
        r_hat = np.asarray(r_hat, dtype=float)
        out = {h: 0.0 for h in HEADS}
        for lvl in self.levels:
            params = {nm: ad.constant(a) for nm, a in lvl.pv.unpack().items()}
            jets = build_heads(lvl.pv.spec, params, t_hat, r_hat, deriv="none")
            values = graph_eval_result(jets, "none").values
            tr = lvl.transform
            f, _ = ramp_factors(t_hat, tr.horizon, tr.tau)
            f = f.reshape(-1, 1)
            for h in HEADS:
                raw = np.asarray(values[h].value)
                if lvl.role == "correction" and h in CONC_HEADS:
                    raw = 2.0 * raw - 1.0
                out[h] = out[h] + tr.alpha[h] * raw * f + tr.xi0[h]
        return out

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"format": "spmpinn-composite-1", "alpha2": self.alpha2,
               "levels": []}
        for i, lvl in enumerate(self.levels):
            name = f"level{i + 1}.ckpt"
            save_checkpoint(out / name, lvl.pv, extra={"fidelity": lvl.fidelity})
            tr = lvl.transform
            doc["levels"].append({
                "checkpoint": name, "fidelity": lvl.fidelity, "role": lvl.role,
                "tau": tr.tau, "horizon": tr.horizon, "direction": tr.direction,
                "xi0": tr.xi0, "alpha": tr.alpha})
        with open(out / "composite.json", "w") as fh:
            json.dump(doc, fh, indent=2)
        return out

    @classmethod
    def load(cls, in_dir) -> "CompositePredictor":
        path = Path(in_dir) / "composite.json"
        if not path.exists():
            raise ArtifactError(f"composite descriptor not found: {path}")
        with open(path) as fh:
            doc = json.load(fh)
        levels = []
        for entry in doc["levels"]:
            pv, _ = load_checkpoint(Path(in_dir) / entry["checkpoint"])
            tr = OutputTransform(tau=entry["tau"], horizon=entry["horizon"],
                                 direction=entry["direction"],
                                 xi0=entry["xi0"], alpha=entry["alpha"])
            levels.append(TrainedLevel(fidelity=entry["fidelity"], pv=pv,
                                       transform=tr, role=entry["role"]))
        return cls(levels=levels, alpha2=doc["alpha2"])


# -- orchestration -----------------------------------------------------------


def train_hierarchy(hconfig: HierarchyConfig, cell: CellParameters,
                    profile: CurrentProfile, seed: int,
                    weights: LossWeights | None = None
                    ) -> tuple[list, CompositePredictor]:
    """Train all levels in order; returns (per-level records, composite).

    The first level trains as usual at its fidelity.  Each later level holds
    the running composite frozen, trains its network against the residuals of
    its own (higher) fidelity, and joins the sum through the damped, ramped
    correction map.
    """
    weights = weights or LossWeights()
    records: list[RunRecord] = []
    trained: list[TrainedLevel] = []
    base_transform = None
    base_state = None

    for i, level in enumerate(hconfig.levels):
        run_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        colloc = sample_collocation(level.config.n_interior,
                                    level.config.n_boundary,
                                    level.colloc_seed)
        cell_f, linearized = fidelity_cell(cell, profile, level.fidelity)
        if i == 0:
            transform = make_transform(cell_f, profile, tau=level.config.tau,
                                       linearized=linearized)
            task = TrainTask(net_spec=level.net_spec, cell=cell_f,
                             profile=profile, transform=transform,
                             weights=weights, linearized=linearized)
        else:
            transform = correction_transform(base_transform, hconfig.alpha2)
            task = TrainTask(
                net_spec=level.net_spec, cell=cell_f, profile=profile,
                transform=transform, weights=weights, linearized=linearized,
                state_factory=composite_state_factory(
                    base_state, level.net_spec, transform))
        record = train_task(task, level.config, run_seed,
                            fidelity_label=level.fidelity, colloc=colloc)
        records.append(record)
        if record.failed:
            break
        trained.append(TrainedLevel(
            fidelity=level.fidelity, pv=record.final_params,
            transform=transform, role="base" if i == 0 else "correction"))
        if i == 0:
            base_transform = transform
        predictor_so_far = CompositePredictor(levels=list(trained),
                                              alpha2=hconfig.alpha2)
        base_state = _predictor_state(predictor_so_far)

    return records, CompositePredictor(levels=list(trained),
                                       alpha2=hconfig.alpha2)


def _predictor_state(predictor: CompositePredictor):
    """Frozen evaluator summing every trained level, with derivative channels."""
    states = [frozen_state(lvl.pv.spec, lvl.pv, lvl.transform)
              if lvl.role == "base" else
              _frozen_correction_state(lvl.pv.spec, lvl.pv, lvl.transform)
              for lvl in predictor.levels]

    def run(t_hat, r_hat, deriv, heads=HEADS):
        results = [s(t_hat, r_hat, deriv, heads) for s in states]
        total = results[0]
        for er in results[1:]:
            add = lambda b, c: {h: b[h] + c[h] for h in c}
            total = EvalResult(values=add(total.values, er.values),
                               d_t=add(total.d_t, er.d_t),
                               d_r=add(total.d_r, er.d_r),
                               d_rr=add(total.d_rr, er.d_rr))
        return total
    return run


def _frozen_correction_state(net_spec: NetworkSpec, pv: ParameterVector,
                             corr: OutputTransform, cache_size: int = 128):
    params = {nm: ad.constant(arr) for nm, arr in pv.unpack().items()}
    cache: dict = {}

    def run(t_hat, r_hat, deriv, heads=HEADS):
        key = (np.asarray(t_hat).tobytes(), np.asarray(r_hat).tobytes(),
               deriv, tuple(heads))
        hit = cache.get(key)
        if hit is None:
            jets = build_heads(net_spec, params, t_hat, r_hat, deriv=deriv,
                               heads=heads)
            raw = _center_conc(graph_eval_result(jets, deriv))
            hit = _detach(apply_transform(raw, corr, t_hat))
            if len(cache) >= cache_size:
                cache.pop(next(iter(cache)))
            cache[key] = hit
        return hit
    return run


def double_baseline(net_spec: NetworkSpec,
                    config: TrainingConfig) -> tuple[NetworkSpec, TrainingConfig]:
    """Comparison baseline: twice the branch depth, twice the training steps."""
    return (replace(net_spec, branch_layers=2 * net_spec.branch_layers),
            replace(config, adam_steps=2 * config.adam_steps,
                    lbfgs_steps=2 * config.lbfgs_steps))
