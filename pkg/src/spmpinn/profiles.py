"""Current-demand profiles.

A profile describes the applied current density over one scenario horizon.
Constant and sinusoidal kinds are parameterized in C-rate (signed, negative =
discharge) and converted through the cell's 1 C current; tabulated kinds carry
(t, I) samples directly in (s, A/m^2) with linear interpolation in between.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, OutOfRange
from .parameters import CellParameters

_TIME_SLACK = 1e-9  # s, tolerated rounding outside [0, horizon]


@dataclass(frozen=True)
class CurrentProfile:
    kind: str                       # constant | sinusoidal | tabulated
    horizon: float                  # s
    c_rate: float = 0.0             # constant kind
    mean_c_rate: float = 0.0        # sinusoidal kind
    amplitude_c_rate: float = 0.0   # sinusoidal kind
    period: float = 0.0             # s, sinusoidal kind
    times: np.ndarray | None = None      # tabulated kind, s
    currents: np.ndarray | None = None   # tabulated kind, A/m^2

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoidal", "tabulated"):
            raise ConfigError(f"unknown profile kind {self.kind!r}")
        if self.horizon <= 0:
            raise ConfigError("profile horizon must be positive")
        if self.kind == "sinusoidal" and self.period <= 0:
            raise ConfigError("sinusoidal profile needs a positive period")
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            i = np.asarray(self.currents, dtype=float)
            if t.ndim != 1 or t.shape != i.shape or t.size < 2:
                raise ConfigError("tabulated profile needs matching t and I columns, >= 2 rows")
            if np.any(np.diff(t) <= 0):
                raise ConfigError("tabulated profile times must be strictly increasing")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(i))):
                raise ConfigError("tabulated profile contains non-finite entries")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "currents", i)

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, c_rate: float, horizon: float) -> "CurrentProfile":
        return cls(kind="constant", horizon=horizon, c_rate=c_rate)

    @classmethod
    def sinusoidal(cls, horizon: float, mean_c_rate: float = -2.0,
                   amplitude_c_rate: float = 2.0, period: float | None = None) -> "CurrentProfile":
        """C-rate(t) = mean + amplitude sin(2 pi t / period).

        The defaults reproduce the 2 C average discharge with magnitude
        2 - 2 sin(2 pi t / T) and T equal to the horizon.
        """
        return cls(kind="sinusoidal", horizon=horizon, mean_c_rate=mean_c_rate,
                   amplitude_c_rate=amplitude_c_rate,
                   period=horizon if period is None else period)

    @classmethod
    def tabulated(cls, times, currents) -> "CurrentProfile":
        t = np.asarray(times, dtype=float)
        return cls(kind="tabulated", horizon=float(t[-1]), times=t, currents=currents)

    @classmethod
    def from_csv(cls, path) -> "CurrentProfile":
        """Two-column (t [s], I [A/m^2]) CSV with a header line."""
        rows = []
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for row in reader:
                if not row or row[0].strip().startswith("#"):
                    continue
                rows.append((float(row[0]), float(row[1])))
        if len(rows) < 2:
            raise ConfigError(f"profile table {path} needs at least two rows")
        arr = np.array(rows, dtype=float)
        return cls.tabulated(arr[:, 0], arr[:, 1])

    # -- evaluation --------------------------------------------------------

    def _check_support(self, t):
        t = np.asarray(t, dtype=float)
        lo = self.times[0] if self.kind == "tabulated" else 0.0
        if np.any(t < lo - _TIME_SLACK) or np.any(t > self.horizon + _TIME_SLACK):
            raise OutOfRange(f"time query outside profile support [0, {self.horizon}] s")
        return np.clip(t, lo, self.horizon)

    def rate_at(self, t):
        """Signed C-rate at time t (constant and sinusoidal kinds only)."""
        t = self._check_support(t)
        if self.kind == "constant":
            out = np.full_like(t, self.c_rate)
        elif self.kind == "sinusoidal":
            out = self.mean_c_rate + self.amplitude_c_rate * np.sin(2.0 * np.pi * t / self.period)
        else:
            raise ConfigError("tabulated profiles carry A/m^2 directly; use current_at")
        if out.ndim == 0:
            return float(out)
        return out

    def current_at(self, t, cell: CellParameters):
        """Applied current density I(t) in A/m^2 (negative = discharge)."""
        if self.kind == "tabulated":
            t = self._check_support(t)
            out = np.interp(t, self.times, self.currents)
            if np.ndim(t) == 0:
                return float(out)
            return out
        return self.rate_at(t) * cell.current_1c

    def mean_abs_rate(self, cell: CellParameters, n: int = 2048) -> float:
        """Time-averaged |C-rate|, the reference magnitude for residual scaling."""
        if self.kind == "constant":
            return abs(self.c_rate)
        t0 = self.times[0] if self.kind == "tabulated" else 0.0
        t = np.linspace(t0, self.horizon, n)
        i = self.current_at(t, cell)
        return float(np.trapezoid(np.abs(i), t) / ((self.horizon - t0) * cell.current_1c))
