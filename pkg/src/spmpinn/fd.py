"""Implicit-Euler finite-difference reference solver for the single-particle model.

Spherical Fick diffusion is discretized with a finite-volume (shell-integrated)
scheme on a uniform radial grid, which handles the r = 0 symmetry without a
singular coefficient and conserves the shell-weighted lithium content of each
particle exactly (up to linear-solver roundoff) at every step.  Potentials are
algebraic: once the surface flux is imposed, the Butler-Volmer relation is
inverted per electrode after each concentration step.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from . import kinetics
from .errors import BoundsViolation, OutOfHull, SingularMatrix, SolverError
from .parameters import CellParameters
from .profiles import CurrentProfile

_HULL_SLACK = 1e-9


@dataclass(frozen=True)
class RadialGrid:
    """Uniform node grid over one particle, nodes at r_i = i * spacing including r = 0 and r = R."""

    n_points: int
    radius: float

    def __post_init__(self):
        if self.n_points < 3:
            raise SolverError("radial grid needs at least 3 points")
        if self.radius <= 0:
            raise SolverError("radius must be positive")

    @property
    def spacing(self) -> float:
        return self.radius / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.radius, self.n_points)

    def shell_volumes(self) -> np.ndarray:
        """Control-volume sizes (r^3 units, per 4*pi) around each node; half cells at the ends."""
        h = self.spacing
        r = self.nodes
        outer = np.minimum(r + 0.5 * h, self.radius)
        inner = np.maximum(r - 0.5 * h, 0.0)
        return (outer ** 3 - inner ** 3) / 3.0

    def face_areas(self) -> np.ndarray:
        """Interior face areas (r^2 units, per 4*pi) between consecutive nodes."""
        h = self.spacing
        return ((np.arange(self.n_points - 1) + 0.5) * h) ** 2


def total_content(state: np.ndarray, grid: RadialGrid) -> float:
    """Shell-weighted lithium content (kmol per 4*pi of particle solid angle)."""
    return float(state @ grid.shell_volumes())


def _banded_matrix(grid: RadialGrid, diffusivity: float, dt: float) -> np.ndarray:
    v = grid.shell_volumes()
    a = grid.face_areas()
    h = grid.spacing
    n = grid.n_points
    w = diffusivity * a / h  # conductance across each interior face
    ab = np.zeros((3, n))
    ab[1, :] = v / dt
    ab[1, :-1] += w
    ab[1, 1:] += w
    ab[0, 1:] = -w   # upper diagonal
    ab[2, :-1] = -w  # lower diagonal
    return ab


def step_concentration(state: np.ndarray, j_surf: float, dt: float, grid: RadialGrid,
                       diffusivity: float, max_conc: float | None = None,
                       _ab: np.ndarray | None = None) -> np.ndarray:
    """Advance one implicit-Euler step; j_surf > 0 drains the particle.

    The assembled system is (V/dt) c_new - div(D grad c_new) = (V/dt) c_old - J R^2 e_surf,
    so summing rows gives the exact discrete balance sum(V dc) = -J R^2 dt.
    """
    if dt <= 0:
        raise SolverError("dt must be positive")
    state = np.asarray(state, dtype=float)
    ab = _banded_matrix(grid, diffusivity, dt) if _ab is None else _ab
    rhs = grid.shell_volumes() / dt * state
    rhs[-1] -= j_surf * grid.radius ** 2
    try:
        new = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularMatrix(f"implicit step failed: {exc}") from exc
    if not np.all(np.isfinite(new)):
        raise SingularMatrix("implicit step produced non-finite concentrations")
    if np.any(new <= 0.0) or (max_conc is not None and np.any(new >= max_conc)):
        raise BoundsViolation("concentration left (0, c_max) during implicit step")
    return new


@dataclass
class SolutionGrid:
    """Dense reference solution of one scenario."""

    times: np.ndarray         # (n_t,), s, starting at 0
    anode_conc: np.ndarray    # (n_t, n_r), kmol/m^3
    cathode_conc: np.ndarray  # (n_t, n_r), kmol/m^3
    phi_e: np.ndarray         # (n_t,), V
    phi_s_ca: np.ndarray      # (n_t,), V
    anode_grid: RadialGrid
    cathode_grid: RadialGrid
    cell: CellParameters
    profile: CurrentProfile

    FIELDS = ("anode_conc", "cathode_conc", "phi_e", "phi_s_ca")

    @property
    def voltage(self) -> np.ndarray:
        """Terminal voltage, phi_s_ca - phi_s_an with phi_s_an = 0."""
        return self.phi_s_ca

    def surface_conc(self, electrode: str) -> np.ndarray:
        return {"anode": self.anode_conc, "cathode": self.cathode_conc}[electrode][:, -1]

    def _time_index(self, t: np.ndarray):
        tmin, tmax = self.times[0], self.times[-1]
        if np.any(t < tmin - _HULL_SLACK) or np.any(t > tmax + _HULL_SLACK):
            raise OutOfHull(f"time query outside [{tmin}, {tmax}] s")
        t = np.clip(t, tmin, tmax)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, w

    def sample(self, t, r, field: str):
        """Bilinear (time x radius) interpolation; potentials ignore r."""
        if field not in self.FIELDS:
            raise SolverError(f"unknown field {field!r}")
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0 and np.ndim(r) == 0
        t = np.atleast_1d(t)
        k, wt = self._time_index(t)
        if field in ("phi_e", "phi_s_ca"):
            y = getattr(self, field)
            out = y[k] * (1.0 - wt) + y[k + 1] * wt
        else:
            grid = self.anode_grid if field == "anode_conc" else self.cathode_grid
            r = np.atleast_1d(np.asarray(r, dtype=float))
            if np.any(r < -_HULL_SLACK) or np.any(r > grid.radius + _HULL_SLACK):
                raise OutOfHull(f"radius query outside [0, {grid.radius}] m")
            rc = np.clip(r, 0.0, grid.radius)
            q = rc / grid.spacing
            i = np.clip(q.astype(int), 0, grid.n_points - 2)
            wr = q - i
            c = getattr(self, field)
            row0 = c[k, i] * (1.0 - wr) + c[k, i + 1] * wr
            row1 = c[k + 1, i] * (1.0 - wr) + c[k + 1, i + 1] * wr
            out = row0 * (1.0 - wt) + row1 * wt
        return float(out[0]) if scalar else out

    def export_csv(self, path, metadata: dict | None = None):
        """One row per (t, radial index) with both particles' fields; JSON sidecar with run metadata."""
        path = Path(path)
        n_r = self.anode_grid.n_points
        r_an = self.anode_grid.nodes
        r_ca = self.cathode_grid.nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "r_anode_m", "anode_conc", "r_cathode_m",
                        "cathode_conc", "phi_e_v", "phi_s_ca_v"])
            for it, t in enumerate(self.times):
                for ir in range(n_r):
                    w.writerow([f"{t:.10g}", f"{r_an[ir]:.10g}",
                                f"{self.anode_conc[it, ir]:.17g}", f"{r_ca[ir]:.10g}",
                                f"{self.cathode_conc[it, ir]:.17g}",
                                f"{self.phi_e[it]:.17g}", f"{self.phi_s_ca[it]:.17g}"])
        meta = {
            "dt": float(self.times[1] - self.times[0]) if len(self.times) > 1 else None,
            "n_radial": n_r,
            "anode_radius": self.anode_grid.radius,
            "cathode_radius": self.cathode_grid.radius,
            "horizon": float(self.times[-1]),
            "profile_kind": self.profile.kind,
        }
        if metadata:
            meta.update(metadata)
        blob = json.dumps(meta, sort_keys=True).encode()
        meta["content_hash"] = hashlib.sha256(blob).hexdigest()
        with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _overpotentials(cell: CellParameters, electrode: str, cs_surf: np.ndarray,
                    j_surf: np.ndarray) -> np.ndarray:
    p = cell.electrode(electrode)
    i0 = kinetics.exchange_current(p, cell, cs_surf)
    if cell.anodic_transfer_coeff == 0.5:
        f = cell.faraday_const
        rt = cell.gas_const * cell.temperature
        return 2.0 * rt / f * np.arcsinh(f * np.asarray(j_surf) / (2.0 * i0))
    return np.array([kinetics.bv_invert(i, j, cell) for i, j in zip(np.atleast_1d(i0),
                                                                    np.atleast_1d(j_surf))])


def _potentials(cell: CellParameters, cs_an: np.ndarray, cs_ca: np.ndarray,
                j_an: np.ndarray, j_ca: np.ndarray):
    """Algebraic potentials from surface concentrations and imposed fluxes (vectorized in t)."""
    eta_an = _overpotentials(cell, "anode", cs_an, j_an)
    eta_ca = _overpotentials(cell, "cathode", cs_ca, j_ca)
    u_an = cell.anode.ocp.value(np.asarray(cs_an) / cell.anode.max_conc)
    u_ca = cell.cathode.ocp.value(np.asarray(cs_ca) / cell.cathode.max_conc)
    phi_e = -eta_an - u_an          # phi_s_an = 0 reference
    phi_s_ca = eta_ca + phi_e + u_ca
    return phi_e, phi_s_ca


def solve(cell: CellParameters, profile: CurrentProfile, dt: float = 0.1,
          n_radial: int = 64) -> SolutionGrid:
    """Reference solve over the profile horizon; default dt 0.1 s, 64 radial points."""
    if dt <= 0:
        raise SolverError("dt must be positive")
    grid_an = RadialGrid(n_radial, cell.anode.particle_radius)
    grid_ca = RadialGrid(n_radial, cell.cathode.particle_radius)
    horizon = profile.horizon
    n_whole = int(math.floor(horizon / dt + 1e-12))
    steps = [dt] * n_whole
    if horizon - n_whole * dt > 1e-12 * max(horizon, 1.0):
        steps.append(horizon - n_whole * dt)
    times = np.concatenate([[0.0], np.cumsum(steps)])

    n_t = len(times)
    c_an = np.empty((n_t, n_radial))
    c_ca = np.empty((n_t, n_radial))
    phi_e = np.empty(n_t)
    phi_s = np.empty(n_t)
    c_an[0] = cell.anode.initial_conc
    c_ca[0] = cell.cathode.initial_conc

    current = profile.current_at(times, cell)
    j_an = kinetics.flux_from_current(current, cell, "anode")
    j_ca = kinetics.flux_from_current(current, cell, "cathode")

    ab_an = _banded_matrix(grid_an, cell.anode.solid_diffusivity, dt)
    ab_ca = _banded_matrix(grid_ca, cell.cathode.solid_diffusivity, dt)

    k = -1
    try:
        for k, dt_k in enumerate(steps):
            same = abs(dt_k - dt) <= 1e-15 * dt
            c_an[k + 1] = step_concentration(
                c_an[k], j_an[k + 1], dt_k, grid_an, cell.anode.solid_diffusivity,
                cell.anode.max_conc, _ab=ab_an if same else None)
            c_ca[k + 1] = step_concentration(
                c_ca[k], j_ca[k + 1], dt_k, grid_ca, cell.cathode.solid_diffusivity,
                cell.cathode.max_conc, _ab=ab_ca if same else None)
        phi_e[:], phi_s[:] = _potentials(cell, c_an[:, -1], c_ca[:, -1], j_an, j_ca)
    except SolverError as exc:
        raise type(exc)(f"step {k + 1} (t={times[min(k + 1, n_t - 1)]:.3f} s): {exc}") from exc

    return SolutionGrid(times=times, anode_conc=c_an, cathode_conc=c_ca, phi_e=phi_e,
                        phi_s_ca=phi_s, anode_grid=grid_an, cathode_grid=grid_ca,
                        cell=cell, profile=profile)
