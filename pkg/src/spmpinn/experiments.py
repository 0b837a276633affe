"""Preset experiment suites: seeded ensembles, sweeps, and ordered comparisons.

A preset expands into a tuple of fully specified runs (network, schedule,
physics fidelity, loss weights, current profile, seed).  The runner trains
each run, scores it against a shared finite-difference reference, and reduces
every group to mean and percentile statistics, counting failed runs rather
than dropping them silently.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .config import _data_path, default_cell
from .errors import ConfigError, SpmPinnError
from .fd import SolutionGrid, solve
from .hierarchy import (CompositePredictor, HierarchyConfig, HierarchyLevel,
                        TrainedLevel, double_baseline, train_hierarchy)
from .loss import LossWeights
from .metrics import QueryGrid, evaluate
from .network import NetworkSpec, default_spec
from .parameters import CellParameters
from .profiles import CurrentProfile
from .training import (REGULARIZERS, TrainingConfig, end_of_horizon_stoich,
                       make_task, train_task)

PRESETS = ("variability", "weight_sweep", "architectures", "regularizers",
           "precision", "hierarchy", "c_rates", "drive_cycle")
SCALES = ("full", "desk", "micro")

# two-sided threshold below which a sweep rank correlation counts as significant
SPEARMAN_ALPHA = 0.05

# the discharge every preset is anchored to, C
_REFERENCE_RATE = -2.0

# collocation horizon per |C-rate| for the constant-current suite, s
_RATE_HORIZONS = {1: 2700.0, 2: 1350.0, 3: 900.0}

# per-preset realization counts (per group; the sweep counts total samples)
_DEFAULT_REALIZATIONS = {
    "variability": {"full": 23, "desk": 5, "micro": 2},
    "weight_sweep": {"full": 150, "desk": 20, "micro": 3},
    "architectures": {"full": 5, "desk": 5, "micro": 1},
    "regularizers": {"full": 5, "desk": 3, "micro": 1},
    "precision": {"full": 5, "desk": 3, "micro": 1},
    "hierarchy": {"full": 5, "desk": 5, "micro": 1},
    "c_rates": {"full": 3, "desk": 3, "micro": 1},
    "drive_cycle": {"full": 3, "desk": 3, "micro": 1},
}


def scaled_config(base: TrainingConfig, scale: str) -> TrainingConfig:
    """Shrink a full protocol to desk or micro runtime, keeping its shape.

    Step counts divide by a fixed factor and collocation halves (desk) or
    drops to a token grid (micro); relative differences between presets,
    such as a 5x collocation group, survive the scaling.
    """
    if scale == "full":
        return base
    if scale == "desk":
        adam = max(200, base.adam_steps // 6)
        return replace(base, adam_steps=adam, lr_decay_steps=max(1, adam // 2),
                       lbfgs_steps=max(400, base.lbfgs_steps // 10),
                       n_interior=max(64, base.n_interior // 2),
                       n_boundary=max(32, base.n_boundary // 2))
    if scale == "micro":
        return replace(base, adam_steps=16, lr_decay_steps=8, lbfgs_steps=25,
                       n_interior=max(32, base.n_interior // 20),
                       n_boundary=max(16, base.n_boundary // 20))
    raise ConfigError(f"scale must be one of {SCALES}")


def discharged_start(cell: CellParameters,
                     rate: float = _REFERENCE_RATE) -> CellParameters:
    """Cell whose initial concentrations sit at the end of a reference discharge.

    Charge runs start here so the stoichiometry window matches the discharge
    cases instead of saturating the anode within minutes.
    """
    ref = CurrentProfile.constant(rate, cell.discharge_time_horizon)
    an = cell.anode.with_initial_stoich(
        end_of_horizon_stoich(cell, ref, "anode"))
    ca = cell.cathode.with_initial_stoich(
        end_of_horizon_stoich(cell, ref, "cathode"))
    return replace(cell, anode=an, cathode=ca)


def modified_cell(cell: CellParameters, mod: str) -> CellParameters:
    if mod == "none":
        return cell
    if mod == "discharged_start":
        return discharged_start(cell)
    raise ConfigError(f"unknown cell modifier {mod!r}")


# -- drive-cycle demand -----------------------------------------------------

# frozen so the packaged table never drifts between releases
_DRIVE_SEED = 734
_DRIVE_DURATION = 720.0   # s
_DRIVE_DT = 1.0           # s


def synthesize_drive_cycle(cell: CellParameters | None = None,
                           duration: float = _DRIVE_DURATION,
                           dt: float = _DRIVE_DT,
                           seed: int = _DRIVE_SEED) -> CurrentProfile:
    """Synthetic urban drive demand: discharge pulses with fast load swings.

    Piecewise-constant C-rate segments of 2-18 s drawn between -0.2 and
    -3.2 C, biased toward cruise loads, with a handful of high-demand bursts.
    Discharge-only by construction, which keeps both particles inside their
    stoichiometry windows over the whole table.  Deterministic per seed.
    """
    cell = cell or default_cell()
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration + 0.5 * dt, dt)
    rate = np.empty_like(t)
    pos = 0
    while pos < t.size:
        length = int(rng.integers(2, 19))
        rate[pos:pos + length] = -(0.2 + 3.0 * rng.beta(1.6, 2.4))
        pos += length
    for _ in range(6):
        start = int(rng.integers(0, t.size - 12))
        rate[start:start + int(rng.integers(4, 12))] = -(2.6 + 0.6 * rng.random())
    return CurrentProfile.tabulated(t, rate * cell.current_1c)


def write_profile_csv(profile: CurrentProfile, path) -> Path:
    """Two-column (t [s], I [A/m^2]) table readable by CurrentProfile.from_csv."""
    if profile.kind != "tabulated":
        raise ConfigError("only tabulated profiles can be exported")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t_s", "current_A_m2"])
        for ti, ii in zip(profile.times, profile.currents):
            out.writerow([repr(float(ti)), repr(float(ii))])
    return path


def drive_cycle_profile() -> CurrentProfile:
    """The packaged drive-cycle demand table."""
    return CurrentProfile.from_csv(_data_path("hev_drive_cycle.csv"))


# -- plan types -------------------------------------------------------------

@dataclass(frozen=True)
class RunTemplate:
    """One fully specified training-and-scoring job."""

    group: str
    name: str
    seed: int
    net_spec: NetworkSpec
    config: TrainingConfig
    weights: LossWeights
    profile: CurrentProfile
    fidelity: str = "linear_bv"
    hierarchy: HierarchyConfig | None = None
    cell_mod: str = "none"
    extras: tuple = ()      # ((key, value), ...) echoed into the run table


@dataclass(frozen=True)
class ExperimentPlan:
    """A preset expanded to concrete runs plus the scoring grid."""

    preset: str
    scale: str
    runs: tuple
    grid: str = "101x65"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; "
                              f"valid presets: {', '.join(PRESETS)}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}")
        if not self.runs:
            raise ConfigError("a plan needs at least one run")
        seen = set()
        per_group: dict = {}
        for tpl in self.runs:
            key = (tpl.group, tpl.name)
            if key in seen:
                raise ConfigError(f"duplicate run {key} in plan")
            seen.add(key)
            per_group.setdefault(tpl.group, []).append(tpl.seed)
        for group, seeds in per_group.items():
            if len(set(seeds)) != len(seeds):
                raise ConfigError(f"seeds within group {group!r} must be distinct")

    @property
    def groups(self) -> tuple:
        out = []
        for tpl in self.runs:
            if tpl.group not in out:
                out.append(tpl.group)
        return tuple(out)


@dataclass
class RunOutcome:
    """Score card for one executed run."""

    group: str
    name: str
    seed: int
    fidelity: str
    epsilon: float = np.nan
    epsilon_tv: float = np.nan     # V
    final_loss: float = np.nan
    wall_time: float = 0.0         # s
    stalled: bool = False
    failed: bool = False
    failure: str = ""
    extras: dict = field(default_factory=dict)


@dataclass
class GroupStats:
    """Ensemble statistics over one group's scored runs.

    mean_eps averages every run that produced a surrogate; the converged
    variant drops runs whose final optimizer stage stalled.  Percentiles are
    the 2.5 / 97.5 bounds of the scored-run spread.
    """

    group: str
    n_runs: int
    n_failed: int
    n_stalled: int
    mean_eps: float
    mean_eps_converged: float
    median_eps: float
    p2_5: float
    p97_5: float
    best_eps: float
    worst_eps: float
    mean_eps_tv: float     # V


def group_stats(group: str, outcomes: list) -> GroupStats:
    scored = [o for o in outcomes if not o.failed]
    eps = np.array([o.epsilon for o in scored], dtype=float)
    conv = np.array([o.epsilon for o in scored if not o.stalled], dtype=float)
    tv = np.array([o.epsilon_tv for o in scored], dtype=float)
    tv = tv[np.isfinite(tv)]

    def _stat(fn, arr):
        return float(fn(arr)) if arr.size else float("nan")

    return GroupStats(
        group=group, n_runs=len(outcomes),
        n_failed=sum(o.failed for o in outcomes),
        n_stalled=sum(o.stalled for o in outcomes if not o.failed),
        mean_eps=_stat(np.mean, eps),
        mean_eps_converged=_stat(np.mean, conv),
        median_eps=_stat(np.median, eps),
        p2_5=_stat(lambda a: np.percentile(a, 2.5), eps),
        p97_5=_stat(lambda a: np.percentile(a, 97.5), eps),
        best_eps=_stat(np.min, eps), worst_eps=_stat(np.max, eps),
        mean_eps_tv=_stat(np.mean, tv))


# -- execution --------------------------------------------------------------

def execute_run(tpl: RunTemplate, cell: CellParameters, oracle: SolutionGrid,
                grid: QueryGrid) -> RunOutcome:
    """Train one run and score it against the reference solution."""
    out = RunOutcome(group=tpl.group, name=tpl.name, seed=tpl.seed,
                     fidelity=tpl.fidelity, extras=dict(tpl.extras))
    start = time.perf_counter()
    try:
        if tpl.hierarchy is not None:
            records, predictor = train_hierarchy(
                tpl.hierarchy, cell, tpl.profile, tpl.seed, weights=tpl.weights)
            out.failed = any(r.failed for r in records)
            out.failure = records[-1].failure
            out.stalled = any(r.stalled for r in records)
            out.final_loss = records[-1].final_loss
        else:
            task = make_task(tpl.net_spec, cell, tpl.profile,
                             fidelity=tpl.fidelity, weights=tpl.weights,
                             tau=tpl.config.tau)
            record = train_task(task, tpl.config, tpl.seed,
                                fidelity_label=tpl.fidelity)
            out.failed = record.failed
            out.failure = record.failure
            out.stalled = record.stalled
            out.final_loss = record.final_loss
            if not record.failed:
                predictor = CompositePredictor(levels=[TrainedLevel(
                    fidelity=tpl.fidelity, pv=record.final_params,
                    transform=task.transform)], alpha2=1.0)
        if not out.failed:
            report = evaluate(predictor, oracle, grid)
            out.epsilon = report.epsilon
            out.epsilon_tv = float(report.epsilon_tv)
    except SpmPinnError as exc:
        out.failed = True
        out.failure = f"{type(exc).__name__}: {exc}"
    out.wall_time = time.perf_counter() - start
    return out


def _profile_key(profile: CurrentProfile) -> tuple:
    if profile.kind == "tabulated":
        return ("tabulated", profile.horizon,
                profile.times.tobytes(), profile.currents.tobytes())
    return (profile.kind, profile.horizon, profile.c_rate,
            profile.mean_c_rate, profile.amplitude_c_rate, profile.period)


def _execute_packed(packed):
    return execute_run(*packed)


@dataclass
class ExperimentResult:
    """Everything one preset execution produced."""

    plan: ExperimentPlan
    outcomes: list
    groups: dict                  # group name -> GroupStats
    extras: dict = field(default_factory=dict)

    @property
    def partial_failure(self) -> bool:
        return any(o.failed for o in self.outcomes)

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self._write_runs(out / "runs.csv")
        self._write_summary(out / "summary.csv")
        self._write_plot_data(out / "plot_data.csv")
        with open(out / "extras.json", "w") as fh:
            json.dump({"preset": self.plan.preset, "scale": self.plan.scale,
                       "grid": self.plan.grid,
                       "partial_failure": self.partial_failure,
                       **self.extras}, fh, indent=2, sort_keys=True)
        return out

    def _extra_columns(self) -> list:
        cols = []
        for o in self.outcomes:
            for key in o.extras:
                if key not in cols:
                    cols.append(key)
        return cols

    def _write_runs(self, path):
        cols = self._extra_columns()
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["preset", "group", "name", "seed", "fidelity",
                          "epsilon", "epsilon_tv", "final_loss", "wall_time",
                          "stalled", "failed", "failure", *cols])
            for o in self.outcomes:
                out.writerow([self.plan.preset, o.group, o.name, o.seed,
                              o.fidelity, repr(float(o.epsilon)),
                              repr(float(o.epsilon_tv)),
                              repr(float(o.final_loss)),
                              repr(float(o.wall_time)), int(o.stalled),
                              int(o.failed), o.failure,
                              *[o.extras.get(c, "") for c in cols]])

    def _write_summary(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["preset", "group", "n_runs", "n_failed", "n_stalled",
                          "mean_eps", "mean_eps_converged", "median_eps",
                          "p2_5", "p97_5", "best_eps", "worst_eps",
                          "mean_eps_tv"])
            for group in self.plan.groups:
                g = self.groups[group]
                out.writerow([self.plan.preset, g.group, g.n_runs, g.n_failed,
                              g.n_stalled,
                              *[repr(float(v)) for v in
                                (g.mean_eps, g.mean_eps_converged, g.median_eps,
                                 g.p2_5, g.p97_5, g.best_eps, g.worst_eps,
                                 g.mean_eps_tv)]])

    def _write_plot_data(self, path):
        """Bar heights plus error-bar extents for the preset's figure."""
        metric = "epsilon_tv" if self.plan.preset == "drive_cycle" else "epsilon"
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["group", "metric", "bar_height", "err_low", "err_high"])
            for group in self.plan.groups:
                g = self.groups[group]
                height = g.mean_eps_tv if metric == "epsilon_tv" else g.mean_eps
                lo = height - g.p2_5 if metric == "epsilon" else float("nan")
                hi = g.p97_5 - height if metric == "epsilon" else float("nan")
                out.writerow([group, metric, repr(float(height)),
                              repr(float(lo)), repr(float(hi))])


def run_experiment(plan: ExperimentPlan, out_dir=None, jobs: int = 1,
                   log=None) -> ExperimentResult:
    """Execute every run of a plan and reduce the outcomes.

    Reference solutions are computed once per distinct (cell, profile) pair
    and shared.  jobs > 1 dispatches independent runs to worker processes;
    statistics are assembled in plan order either way.
    """
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    base = default_cell()
    cells = {}
    oracles = {}
    grids = {}
    jobs_args = []
    for tpl in plan.runs:
        if tpl.cell_mod not in cells:
            cells[tpl.cell_mod] = modified_cell(base, tpl.cell_mod)
        cell = cells[tpl.cell_mod]
        key = (tpl.cell_mod, _profile_key(tpl.profile))
        if key not in oracles:
            oracles[key] = solve(cell, tpl.profile)
        if tpl.profile.horizon not in grids:
            grids[tpl.profile.horizon] = QueryGrid.parse(plan.grid,
                                                         tpl.profile.horizon)
        jobs_args.append((tpl, cell, oracles[key], grids[tpl.profile.horizon]))

    outcomes = [None] * len(jobs_args)
    if jobs == 1:
        for i, packed in enumerate(jobs_args):
            outcomes[i] = _execute_packed(packed)
            if log is not None:
                o = outcomes[i]
                log(f"[{i + 1}/{len(jobs_args)}] {o.group}/{o.name} "
                    f"eps={o.epsilon:.4f} tv={o.epsilon_tv * 1e3:.2f}mV "
                    f"loss={o.final_loss:.3e} "
                    f"{'FAILED ' + o.failure if o.failed else ''}"
                    f"({o.wall_time:.0f}s)")
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, o in enumerate(pool.map(_execute_packed, jobs_args)):
                outcomes[i] = o
                if log is not None:
                    log(f"[{i + 1}/{len(jobs_args)}] {o.group}/{o.name} "
                        f"eps={o.epsilon:.4f} ({o.wall_time:.0f}s)")

    by_group: dict = {}
    for o in outcomes:
        by_group.setdefault(o.group, []).append(o)
    groups = {g: group_stats(g, runs) for g, runs in by_group.items()}
    result = ExperimentResult(plan=plan, outcomes=outcomes, groups=groups,
                              extras=_preset_extras(plan, outcomes))
    if out_dir is not None:
        result.save(out_dir)
    return result


def _preset_extras(plan: ExperimentPlan, outcomes: list) -> dict:
    if plan.preset != "weight_sweep":
        return {}
    scored = [o for o in outcomes if not o.failed]
    extras = {"significance_threshold": SPEARMAN_ALPHA, "correlations": {}}
    eps = np.array([o.epsilon for o in scored], dtype=float)
    for key in ("w_cs_int", "w_cs_rmin", "w_cs_rmax"):
        w = np.array([o.extras[key] for o in scored], dtype=float)
        if eps.size < 3:
            rho, p = float("nan"), float("nan")
        else:
            rho, p = stats.spearmanr(w, eps)
        extras["correlations"][key] = {
            "spearman_rho": float(rho), "p_value": float(p),
            "significant": bool(p < SPEARMAN_ALPHA) if np.isfinite(p) else False}
    return extras


# -- preset builders --------------------------------------------------------

def _reference_profile(cell: CellParameters) -> CurrentProfile:
    return CurrentProfile.constant(_REFERENCE_RATE, cell.discharge_time_horizon)


def _plan_variability(scale, n, seed0, grid):
    cell = default_cell()
    profile = _reference_profile(cell)
    cfg = scaled_config(TrainingConfig(), scale)
    net = default_spec("split")
    runs = tuple(RunTemplate(group="variability", name=f"seed{seed0 + k}",
                             seed=seed0 + k, net_spec=net, config=cfg,
                             weights=LossWeights(), profile=profile)
                 for k in range(n))
    return ExperimentPlan(preset="variability", scale=scale, runs=runs,
                          grid=grid)


def _plan_weight_sweep(scale, n, seed0, grid):
    cell = default_cell()
    profile = _reference_profile(cell)
    cfg = scaled_config(TrainingConfig(), scale)
    net = default_spec("merged")
    rng = np.random.default_rng(np.random.SeedSequence([seed0, 151]))
    draws = 10.0 ** rng.uniform(-1.0, 3.0, size=(n, 3))
    runs = []
    for k, (wi, w0, w1) in enumerate(draws):
        weights = LossWeights(w_cs_int=float(wi), w_cs_rmin=float(w0),
                              w_cs_rmax=float(w1))
        runs.append(RunTemplate(
            group="sweep", name=f"sample{k}", seed=seed0 + k, net_spec=net,
            config=cfg, weights=weights, profile=profile,
            extras=(("w_cs_int", float(wi)), ("w_cs_rmin", float(w0)),
                    ("w_cs_rmax", float(w1)))))
    return ExperimentPlan(preset="weight_sweep", scale=scale,
                          runs=tuple(runs), grid=grid)


def _plan_architectures(scale, n, seed0, grid):
    cell = default_cell()
    profile = _reference_profile(cell)
    cfg = scaled_config(TrainingConfig(), scale)
    runs = []
    for arch in ("split", "merged"):
        for kind in ("dense", "gradient_pathology"):
            label = "gp" if kind == "gradient_pathology" else kind
            net = default_spec(arch, kind)
            for k in range(n):
                runs.append(RunTemplate(
                    group=f"{arch}-{label}", name=f"seed{seed0 + k}",
                    seed=seed0 + k, net_spec=net, config=cfg,
                    weights=LossWeights(), profile=profile))
    return ExperimentPlan(preset="architectures", scale=scale,
                          runs=tuple(runs), grid=grid)


def _plan_regularizers(scale, n, seed0, grid):
    cell = default_cell()
    profile = _reference_profile(cell)
    base = scaled_config(TrainingConfig(), scale)
    net = default_spec("merged")
    runs = []
    for reg in REGULARIZERS:
        cfg = replace(base, regularizer=reg)
        for k in range(n):
            runs.append(RunTemplate(
                group=reg, name=f"seed{seed0 + k}", seed=seed0 + k,
                net_spec=net, config=cfg, weights=LossWeights(),
                profile=profile))
    return ExperimentPlan(preset="regularizers", scale=scale,
                          runs=tuple(runs), grid=grid)


def _plan_precision(scale, n, seed0, grid):
    cell = default_cell()
    profile = _reference_profile(cell)
    cfg = scaled_config(TrainingConfig(), scale)
    runs = []
    for prec in ("f64", "f32"):
        net = default_spec("merged", precision=prec)
        for k in range(n):
            runs.append(RunTemplate(
                group=prec, name=f"seed{seed0 + k}", seed=seed0 + k,
                net_spec=net, config=cfg, weights=LossWeights(),
                profile=profile))
    return ExperimentPlan(preset="precision", scale=scale, runs=tuple(runs),
                          grid=grid)


def _plan_hierarchy(scale, n, seed0, grid):
    cell = default_cell()
    profile = _reference_profile(cell)
    base_cfg = scaled_config(TrainingConfig(), scale)
    net = default_spec("merged")
    double_net, double_cfg = double_baseline(net, base_cfg)
    runs = []
    for k in range(n):
        seed = seed0 + k
        runs.append(RunTemplate(group="base", name=f"seed{seed}", seed=seed,
                                net_spec=net, config=base_cfg,
                                weights=LossWeights(), profile=profile,
                                fidelity="nonlinear_bv"))
        runs.append(RunTemplate(group="double", name=f"seed{seed}", seed=seed,
                                net_spec=double_net, config=double_cfg,
                                weights=LossWeights(), profile=profile,
                                fidelity="nonlinear_bv"))
        for label, first in (("hnn-lin", "linear_bv"),
                             ("hnn-simp", "simplified")):
            hier = HierarchyConfig(levels=(
                HierarchyLevel(fidelity=first, net_spec=net, config=base_cfg,
                               colloc_seed=10000 + seed),
                HierarchyLevel(fidelity="nonlinear_bv", net_spec=net,
                               config=base_cfg, colloc_seed=20000 + seed)))
            runs.append(RunTemplate(group=label, name=f"seed{seed}", seed=seed,
                                    net_spec=net, config=base_cfg,
                                    weights=LossWeights(), profile=profile,
                                    fidelity="nonlinear_bv", hierarchy=hier))
    return ExperimentPlan(preset="hierarchy", scale=scale, runs=tuple(runs),
                          grid=grid)


def _plan_c_rates(scale, n, seed0, grid):
    net = default_spec("merged")
    cc_cfg = scaled_config(TrainingConfig(lbfgs_steps=20000), scale)
    runs = []
    for rate in (-3, -2, -1, 1, 2, 3):
        profile = CurrentProfile.constant(float(rate),
                                          _RATE_HORIZONS[abs(rate)])
        mod = "discharged_start" if rate > 0 else "none"
        for k in range(n):
            runs.append(RunTemplate(
                group=f"c{rate:+d}", name=f"seed{seed0 + k}", seed=seed0 + k,
                net_spec=net, config=cc_cfg, weights=LossWeights(),
                profile=profile, cell_mod=mod,
                extras=(("c_rate", float(rate)),)))
    sin_cfg = scaled_config(TrainingConfig(lbfgs_steps=30000), scale)
    sin_profile = CurrentProfile.sinusoidal(1350.0)
    for k in range(n):
        runs.append(RunTemplate(group="sin", name=f"seed{seed0 + k}",
                                seed=seed0 + k, net_spec=net, config=sin_cfg,
                                weights=LossWeights(), profile=sin_profile))
    return ExperimentPlan(preset="c_rates", scale=scale, runs=tuple(runs),
                          grid=grid)


def _plan_drive_cycle(scale, n, seed0, grid):
    profile = drive_cycle_profile()
    small = default_spec("merged")
    big = default_spec("merged", width=40, branch_layers=6)
    base_cfg = TrainingConfig(lbfgs_steps=50000)
    col_cfg = replace(base_cfg, n_interior=5 * base_cfg.n_interior,
                      n_boundary=5 * base_cfg.n_boundary)
    if scale == "desk":
        # the 41k-parameter net at 5x collocation dominates this preset's
        # runtime; desk trims steps harder than the generic rule
        base_cfg = replace(base_cfg, adam_steps=300, lr_decay_steps=150,
                           lbfgs_steps=700, n_interior=320, n_boundary=160)
        col_cfg = replace(base_cfg, n_interior=1600, n_boundary=800)
    else:
        base_cfg = scaled_config(base_cfg, scale)
        col_cfg = scaled_config(col_cfg, scale)
    groups = (("base", small, base_cfg), ("col", small, col_cfg),
              ("col-par", big, col_cfg))
    runs = []
    for label, net, cfg in groups:
        for k in range(n):
            runs.append(RunTemplate(group=label, name=f"seed{seed0 + k}",
                                    seed=seed0 + k, net_spec=net, config=cfg,
                                    weights=LossWeights(), profile=profile))
    return ExperimentPlan(preset="drive_cycle", scale=scale, runs=tuple(runs),
                          grid=grid)


_BUILDERS = {
    "variability": _plan_variability,
    "weight_sweep": _plan_weight_sweep,
    "architectures": _plan_architectures,
    "regularizers": _plan_regularizers,
    "precision": _plan_precision,
    "hierarchy": _plan_hierarchy,
    "c_rates": _plan_c_rates,
    "drive_cycle": _plan_drive_cycle,
}


def build_plan(preset: str, scale: str = "desk",
               realizations: int | None = None, seed0: int = 0,
               grid: str = "101x65", groups=None) -> ExperimentPlan:
    """Expand a named preset into a concrete plan.

    realizations overrides the per-scale default count (seeds per group, or
    total samples for the sweep); groups keeps only the named subset.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; "
                          f"valid presets: {', '.join(PRESETS)}")
    if scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}")
    n = _DEFAULT_REALIZATIONS[preset][scale] if realizations is None \
        else int(realizations)
    if n < 1:
        raise ConfigError("realizations must be >= 1")
    plan = _BUILDERS[preset](scale, n, int(seed0), grid)
    if groups is not None:
        wanted = tuple(groups)
        known = plan.groups
        missing = [g for g in wanted if g not in known]
        if missing:
            raise ConfigError(f"unknown groups {missing}; "
                              f"plan has {', '.join(known)}")
        plan = replace(plan, runs=tuple(t for t in plan.runs
                                        if t.group in wanted))
    return plan
