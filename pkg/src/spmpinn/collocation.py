"""Collocation point sampling over the scaled space-time domain.

Interior points live strictly inside (0, 1) in scaled radius; boundary points
are time samples at which both particle-boundary conditions (center symmetry
and surface flux) are imposed, so each sampled boundary time contributes one
residual site at r_hat = 0 and one at r_hat = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ELECTRODES = ("anode", "cathode")


@dataclass(frozen=True)
class CollocationSet:
    """Fixed sample of scaled points, split per electrode.

    interior_t / interior_r: matching arrays of scaled interior coordinates;
    boundary_t: scaled times imposed at both r_hat = 0 and r_hat = 1.
    """

    interior_t: dict
    interior_r: dict
    boundary_t: dict
    rng_seed: int

    def __post_init__(self):
        for elec in ELECTRODES:
            t = self.interior_t[elec]
            r = self.interior_r[elec]
            if t.shape != r.shape or t.ndim != 1:
                raise ConfigError("interior t and r must be matching 1-D arrays")
            if np.any((r <= 0.0) | (r >= 1.0)):
                raise ConfigError("interior radii must lie strictly inside (0, 1)")
            if np.any((t < 0.0) | (t > 1.0)) or np.any(
                    (self.boundary_t[elec] < 0.0) | (self.boundary_t[elec] > 1.0)):
                raise ConfigError("scaled times must lie in [0, 1]")

    @property
    def n_interior(self) -> int:
        return sum(self.interior_t[e].size for e in ELECTRODES)

    @property
    def n_boundary(self) -> int:
        return sum(self.boundary_t[e].size for e in ELECTRODES)

    def surface_count(self, electrode: str) -> int:
        return self.boundary_t[electrode].size


def sample_collocation(n_interior: int = 1280, n_boundary: int = 640,
                       seed: int = 0) -> CollocationSet:
    """Uniform i.i.d. scaled samples, deterministic per seed.

    Counts split evenly between electrodes; each electrode receives
    n_boundary / 2 time samples, every one imposed at both the center and the
    surface, so the surface sees exactly n_boundary / 2 sites per electrode.
    """
    if n_interior <= 0 or n_boundary <= 0:
        raise ConfigError("collocation counts must be positive")
    if n_interior % 2 or n_boundary % 2:
        raise ConfigError("collocation counts must split evenly between electrodes")
    rng = np.random.default_rng(seed)
    interior_t, interior_r, boundary_t = {}, {}, {}
    for elec in ELECTRODES:
        n = n_interior // 2
        interior_t[elec] = rng.uniform(0.0, 1.0, n)
        r = rng.uniform(0.0, 1.0, n)
        while np.any(r == 0.0):  # open interval; uniform() can return 0.0 exactly
            r[r == 0.0] = rng.uniform(0.0, 1.0, int(np.sum(r == 0.0)))
        interior_r[elec] = r
    for elec in ELECTRODES:
        boundary_t[elec] = rng.uniform(0.0, 1.0, n_boundary // 2)
    return CollocationSet(interior_t=interior_t, interior_r=interior_r,
                          boundary_t=boundary_t, rng_seed=seed)
