"""Accuracy metrics of a surrogate against the finite-difference reference.

The headline error is a scaled mean absolute error: for each of the four state
variables (both solid concentrations on a time x radius tensor grid, both
potentials on the time grid) the mean absolute relative deviation is computed
and the four means are summed.  Relative-error denominators are floored at a
small fraction of each variable's reference range so near-zero reference
values cannot dominate; how many samples hit the floor is reported per
variable.  A separate terminal-voltage error averages the absolute cathode
potential mismatch (V) over the time grid.

Any object with a `horizon` attribute (s) and a `predict(t_hat, r_hat)`
method returning a head -> array mapping over scaled inputs can be scored.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fd import SolutionGrid
from .network import CONC_HEADS, HEADS

VARIABLES = HEADS  # cs_an, cs_ca, phie, phis_ca; summation order of the metric

DENOM_FLOOR_FRACTION = 1e-3   # of the per-variable reference range

_ORACLE_FIELD = {"cs_an": "anode_conc", "cs_ca": "cathode_conc",
                 "phie": "phi_e", "phis_ca": "phi_s_ca"}


@dataclass(frozen=True)
class QueryGrid:
    """Tensor evaluation grid: physical times (s) and one scaled radial axis.

    The scaled radii serve both particles (physical radius = r_hat * R_j), so
    each concentration field is scored on times x radii points and each
    potential on the time axis alone.
    """

    times: np.ndarray
    radii_hat: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        r = np.asarray(self.radii_hat, dtype=float)
        if t.ndim != 1 or r.ndim != 1 or t.size < 2 or r.size < 2:
            raise ConfigError("query grid needs 1-D time and radius axes, >= 2 points each")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(r) <= 0):
            raise ConfigError("query grid axes must be strictly increasing")
        if t[0] < 0.0 or np.any((r < 0.0) | (r > 1.0)):
            raise ConfigError("times must be >= 0 and scaled radii within [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "radii_hat", r)

    @property
    def shape(self) -> tuple:
        return (self.times.size, self.radii_hat.size)

    @classmethod
    def regular(cls, horizon: float, n_time: int = 101,
                n_radial: int = 65) -> "QueryGrid":
        """Uniform grid over [0, horizon] x [0, 1]; default 101 x 65."""
        if horizon <= 0:
            raise ConfigError("query horizon must be positive")
        return cls(times=np.linspace(0.0, horizon, n_time),
                   radii_hat=np.linspace(0.0, 1.0, n_radial))

    @classmethod
    def parse(cls, text: str, horizon: float) -> "QueryGrid":
        """Grid from an NxM override string such as '201x129'."""
        parts = str(text).lower().split("x")
        try:
            n_time, n_radial = (int(p) for p in parts)
        except ValueError:
            n_time = 0
        if len(parts) != 2 or n_time < 2 or n_radial < 2:
            raise ConfigError(f"grid override {text!r} must look like '101x65'")
        return cls.regular(horizon, n_time, n_radial)


@dataclass
class MetricsReport:
    """Scored comparison of one surrogate against one reference solution.

    breakdown holds each variable's mean absolute relative error and sums to
    epsilon exactly; floored counts how many reference samples per variable
    fell below the denominator floor and were clamped to it.
    """

    epsilon: float
    breakdown: dict
    counts: dict
    floored: dict
    epsilon_tv: float | None = None   # V
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ConfigError("epsilon must be finite and >= 0")
        if self.epsilon != sum(self.breakdown.values()):
            raise ConfigError("breakdown entries must sum to epsilon")
        if self.epsilon_tv is not None and not self.epsilon_tv >= 0.0:
            raise ConfigError("epsilon_tv must be >= 0")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "epsilon_tv": self.epsilon_tv,
            "breakdown": dict(self.breakdown),
            "counts": dict(self.counts),
            "floored": dict(self.floored),
            "metadata": dict(self.metadata),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


@dataclass(frozen=True)
class OraclePredictor:
    """Reference solution exposed through the predictor interface.

    factor rescales every field, which turns the adapter into a metric
    self-check: factor 1 must score epsilon = 0 and factor 1.1 must score
    4 x 0.1 by the structure of the error sum.
    """

    oracle: SolutionGrid
    factor: float = 1.0

    @property
    def horizon(self) -> float:
        return float(self.oracle.times[-1])

    def predict(self, t_hat, r_hat) -> dict:
        t = np.asarray(t_hat, dtype=float) * self.horizon
        r_hat = np.asarray(r_hat, dtype=float)
        out = {}
        for head in VARIABLES:
            if head in CONC_HEADS:
                grid = self.oracle.anode_grid if head == "cs_an" \
                    else self.oracle.cathode_grid
                vals = self.oracle.sample(t, r_hat * grid.radius,
                                          _ORACLE_FIELD[head])
            else:
                vals = self.oracle.sample(t, None, _ORACLE_FIELD[head])
            out[head] = np.atleast_1d(vals) * self.factor
        return out


def _query_times(predictor, times: np.ndarray) -> tuple:
    """(scaled times for the predictor, physical times it actually resolves).

    Scaling and unscaling round differently in the last bit, so the reference
    is sampled at t_hat * horizon rather than at the raw grid times; both
    fields are then compared at bitwise-identical physical coordinates.
    """
    horizon = float(predictor.horizon)
    t_hat = np.asarray(times, dtype=float) / horizon
    return t_hat, t_hat * horizon


def _predicted_fields(predictor, grid: QueryGrid) -> dict:
    """Surrogate fields on the grid: (n_t, n_r) per concentration, (n_t,) per potential."""
    t_hat, _ = _query_times(predictor, grid.times)
    raw = predictor.predict(np.repeat(t_hat, grid.radii_hat.size),
                            np.tile(grid.radii_hat, grid.times.size))
    fields = {}
    for var in VARIABLES:
        arr = np.ravel(np.asarray(raw[var], dtype=float)).reshape(grid.shape)
        fields[var] = arr if var in CONC_HEADS else arr[:, 0]
    return fields


def _reference_fields(oracle: SolutionGrid, grid: QueryGrid,
                      predictor) -> dict:
    _, t_phys = _query_times(predictor, grid.times)
    fields = {}
    t = np.repeat(t_phys, grid.radii_hat.size)
    for var in VARIABLES:
        if var in CONC_HEADS:
            pgrid = oracle.anode_grid if var == "cs_an" else oracle.cathode_grid
            r = np.tile(grid.radii_hat * pgrid.radius, grid.times.size)
            fields[var] = oracle.sample(t, r, _ORACLE_FIELD[var]).reshape(grid.shape)
        else:
            fields[var] = np.atleast_1d(
                oracle.sample(t_phys, None, _ORACLE_FIELD[var]))
    return fields


def _scaled_error(pred: np.ndarray, ref: np.ndarray) -> tuple:
    """(mean abs relative error, sample count, floored-denominator count)."""
    pred = np.ravel(pred)
    ref = np.ravel(ref)
    floor = DENOM_FLOOR_FRACTION * float(ref.max() - ref.min())
    denom = np.maximum(np.abs(ref), floor)
    n_floored = int(np.sum(np.abs(ref) < floor))
    return float(np.mean(np.abs(pred - ref) / denom)), ref.size, n_floored


def epsilon(predictor, oracle: SolutionGrid, grid: QueryGrid | None = None,
            metadata: dict | None = None) -> MetricsReport:
    """Scaled mean absolute error summed over the four state variables."""
    grid = grid or QueryGrid.regular(float(oracle.times[-1]))
    pred = _predicted_fields(predictor, grid)
    ref = _reference_fields(oracle, grid, predictor)
    breakdown, counts, floored = {}, {}, {}
    for var in VARIABLES:
        err, n, n_floored = _scaled_error(pred[var], ref[var])
        breakdown[var] = err
        counts[var] = n
        floored[var] = n_floored
    meta = {"grid": f"{grid.shape[0]}x{grid.shape[1]}"}
    if metadata:
        meta.update(metadata)
    return MetricsReport(epsilon=sum(breakdown.values()), breakdown=breakdown,
                         counts=counts, floored=floored, metadata=meta)


def epsilon_tv(predictor, oracle: SolutionGrid,
               times: np.ndarray | None = None) -> float:
    """Mean absolute cathode current-collector potential mismatch (V)."""
    if times is None:
        times = QueryGrid.regular(float(oracle.times[-1])).times
    t_hat, t_phys = _query_times(predictor, times)
    pred = predictor.predict(t_hat, np.zeros_like(t_hat))
    ref = np.atleast_1d(oracle.sample(t_phys, None, "phi_s_ca"))
    return float(np.mean(np.abs(np.ravel(np.asarray(pred["phis_ca"],
                                                    dtype=float)) - ref)))


def evaluate(predictor, oracle: SolutionGrid, grid: QueryGrid | None = None,
             metadata: dict | None = None) -> MetricsReport:
    """Full report: epsilon breakdown plus the terminal-voltage error."""
    grid = grid or QueryGrid.regular(float(oracle.times[-1]))
    report = epsilon(predictor, oracle, grid, metadata=metadata)
    report.epsilon_tv = epsilon_tv(predictor, oracle, times=grid.times)
    return report


def correlation_dump(predictor, oracle: SolutionGrid, n_samples: int,
                     seed: int = 0, path=None) -> dict:
    """Paired (reference, surrogate) samples for 45-degree correlation plots.

    n_samples uniform random points of the spatiotemporal domain per variable
    (potentials ignore the radius draw); returns variable -> (ref, pred) and
    optionally writes one CSV row per pair, 4 * n_samples rows total.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, float(oracle.times[-1]), n_samples)
    r_hat = rng.uniform(0.0, 1.0, n_samples)
    t_hat, t_phys = _query_times(predictor, t)
    pred = predictor.predict(t_hat, r_hat)
    pairs = {}
    for var in VARIABLES:
        if var in CONC_HEADS:
            pgrid = oracle.anode_grid if var == "cs_an" else oracle.cathode_grid
            ref = oracle.sample(t_phys, r_hat * pgrid.radius, _ORACLE_FIELD[var])
        else:
            ref = oracle.sample(t_phys, None, _ORACLE_FIELD[var])
        pairs[var] = (np.atleast_1d(ref),
                      np.ravel(np.asarray(pred[var], dtype=float)))
    if path is not None:
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["variable", "xi_pde", "xi_pinn"])
            for var in VARIABLES:
                ref, hat = pairs[var]
                for a, b in zip(ref, hat):
                    out.writerow([var, repr(float(a)), repr(float(b))])
    return pairs
