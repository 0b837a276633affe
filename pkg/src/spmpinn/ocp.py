"""Open-circuit-potential curves.

A curve is a table of (stoichiometry, potential) knots interpolated with a
monotone cubic Hermite spline (PCHIP), which keeps the tabulated shape free of
polynomial overshoot and has an analytic first derivative everywhere on [0, 1].
Outside the knot span the curve continues linearly with the end slope, but
queries are only legal within [0, 1] up to a 1e-9 slack.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, OutOfDomain

_DOMAIN_SLACK = 1e-9


@dataclass(frozen=True)
class OcpCurve:
    """Tabulated open-circuit potential U(x) of one electrode, x = c_surf / c_max."""

    stoich: np.ndarray     # knot stoichiometries, strictly increasing, within [0, 1]
    potential: np.ndarray  # knot potentials, V

    def __post_init__(self):
        x = np.asarray(self.stoich, dtype=float)
        u = np.asarray(self.potential, dtype=float)
        if x.ndim != 1 or x.shape != u.shape or x.size < 2:
            raise ConfigError("OCP table needs two same-length columns with >= 2 knots")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise ConfigError("OCP table contains non-finite entries")
        if np.any(np.diff(x) <= 0):
            raise ConfigError("OCP stoichiometry knots must be strictly increasing")
        if x[0] < -_DOMAIN_SLACK or x[-1] > 1 + _DOMAIN_SLACK:
            raise ConfigError("OCP knots must lie within [0, 1]")
        object.__setattr__(self, "stoich", x)
        object.__setattr__(self, "potential", u)

    @cached_property
    def _spline(self) -> PchipInterpolator:
        return PchipInterpolator(self.stoich, self.potential, extrapolate=False)

    @cached_property
    def _slope(self) -> PchipInterpolator:
        return self._spline.derivative()

    def _clamp(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -_DOMAIN_SLACK) or np.any(x > 1 + _DOMAIN_SLACK):
            raise OutOfDomain(f"stoichiometry outside [0, 1]: range [{x.min()}, {x.max()}]")
        # inside the legal slack band, snap to the knot span; beyond the span but
        # inside [0, 1] the curve continues linearly with the end slope
        return np.clip(x, 0.0, 1.0)

    def value(self, x):
        """U at stoichiometry x (V). Accepts scalars or arrays."""
        x = self._clamp(x)
        lo, hi = self.stoich[0], self.stoich[-1]
        u = np.asarray(self._spline(np.clip(x, lo, hi)))
        below = x < lo
        above = x > hi
        if np.any(below):
            u = np.where(below, self.potential[0] + float(self._slope(lo)) * (x - lo), u)
        if np.any(above):
            u = np.where(above, self.potential[-1] + float(self._slope(hi)) * (x - hi), u)
        if np.ndim(x) == 0:
            return float(u)
        return u

    def slope(self, x):
        """dU/dx at stoichiometry x (V per unit stoichiometry)."""
        x = self._clamp(x)
        lo, hi = self.stoich[0], self.stoich[-1]
        du = self._slope(np.clip(x, lo, hi))
        if np.ndim(x) == 0:
            return float(du)
        return du

    def chord(self) -> "OcpCurve":
        """Linear curve through the two end knots (used by the simplified fidelity)."""
        x0, x1 = self.stoich[0], self.stoich[-1]
        u0, u1 = self.potential[0], self.potential[-1]
        s = (u1 - u0) / (x1 - x0)
        return OcpCurve(np.array([0.0, 1.0]), np.array([u0 - s * x0, u0 + s * (1.0 - x0)]))

    @classmethod
    def from_csv(cls, path) -> "OcpCurve":
        """Load a two-column (stoichiometry, potential) CSV with a header line."""
        rows = []
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ConfigError(f"empty OCP table: {path}")
            for row in reader:
                if not row or row[0].strip().startswith("#"):
                    continue
                if len(row) < 2:
                    raise ConfigError(f"bad OCP row in {path}: {row!r}")
                rows.append((float(row[0]), float(row[1])))
        if not rows:
            raise ConfigError(f"no data rows in OCP table: {path}")
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])
