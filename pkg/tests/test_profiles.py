"""Current-demand profiles: constant, sinusoidal, tabulated."""

import numpy as np
import pytest

from spmpinn.errors import ConfigError, OutOfRange
from spmpinn.profiles import CurrentProfile


def test_constant_conversion(cell):
    prof = CurrentProfile.constant(-2.0, 1350.0)
    assert prof.current_at(700.0, cell) == pytest.approx(-2.0 * cell.current_1c, rel=1e-14)


def test_sinusoidal_magnitude_two_at_start(cell):
    """Default sinusoid is the 2 - 2 sin(2 pi t / T) discharge: |rate(0)| = 2, mean 2 C."""
    prof = CurrentProfile.sinusoidal(1350.0)
    assert prof.rate_at(0.0) == pytest.approx(-2.0, abs=1e-12)
    assert abs(prof.rate_at(0.0)) == pytest.approx(2.0, abs=1e-12)
    assert prof.mean_abs_rate(cell) == pytest.approx(2.0, rel=1e-4)


def test_sinusoidal_zero_at_quarter_period(cell):
    prof = CurrentProfile.sinusoidal(1350.0)
    assert prof.rate_at(1350.0 / 4.0) == pytest.approx(0.0, abs=1e-12)
    # peak discharge at three quarters
    assert prof.rate_at(3 * 1350.0 / 4.0) == pytest.approx(-4.0, abs=1e-12)


def test_tabulated_linear_midpoint(cell):
    prof = CurrentProfile.tabulated([0.0, 10.0], [1.0, 3.0])
    assert prof.current_at(5.0, cell) == pytest.approx(2.0, abs=1e-14)


def test_tabulated_requires_increasing_times():
    with pytest.raises(ConfigError):
        CurrentProfile.tabulated([0.0, 5.0, 5.0], [1.0, 2.0, 3.0])


def test_out_of_support_raises(cell):
    prof = CurrentProfile.constant(-1.0, 100.0)
    with pytest.raises(OutOfRange):
        prof.current_at(101.0, cell)
    with pytest.raises(OutOfRange):
        prof.current_at(-1.0, cell)


def test_mean_abs_rate_constant(cell):
    assert CurrentProfile.constant(-3.0, 900.0).mean_abs_rate(cell) == 3.0


def test_csv_round_trip(tmp_path, cell):
    p = tmp_path / "prof.csv"
    p.write_text("t_s,current_a_m2\n0,0\n30,-50\n60,25\n")
    prof = CurrentProfile.from_csv(p)
    assert prof.horizon == 60.0
    assert prof.current_at(15.0, cell) == pytest.approx(-25.0)
    assert prof.current_at(45.0, cell) == pytest.approx(-12.5)
