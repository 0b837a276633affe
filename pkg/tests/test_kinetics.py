"""Electrochemical closure functions: exchange current, Butler-Volmer, current-to-flux."""

import math

import numpy as np
import pytest

from spmpinn import kinetics
from spmpinn.errors import DomainError, OverpotentialBlowup
from spmpinn.parameters import CellParameters, ElectrodeParameters
from spmpinn.ocp import OcpCurve


def _unit_cell(alpha=0.5):
    """Cell with all unit factors so closed forms are easy to read off."""
    flat = OcpCurve(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    el = ElectrodeParameters(particle_radius=1.0, solid_diffusivity=1.0,
                             active_volume_fraction=0.5, composite_volume=1.0,
                             max_conc=2.0, initial_conc=1.0, exchange_prefactor=1.0,
                             ocp=flat)
    return CellParameters(anode=el, cathode=el, temperature=1.0, electrolyte_conc=1.0,
                          anodic_transfer_coeff=alpha, faraday_const=1.0, gas_const=1.0)


class TestExchangeCurrent:
    def test_all_unit_factors(self):
        c = _unit_cell()
        assert kinetics.exchange_current(c.anode, c, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_saturation_limits_vanish(self, cell):
        p = cell.anode
        mid = kinetics.exchange_current(p, cell, 0.5 * p.max_conc)
        lo = kinetics.exchange_current(p, cell, 1e-12 * p.max_conc)
        hi = kinetics.exchange_current(p, cell, (1 - 1e-12) * p.max_conc)
        assert lo < 1e-4 * mid and hi < 1e-4 * mid

    def test_against_scalar_oracle(self, cell):
        # direct evaluation of the closure in independent scalar arithmetic
        p = cell.anode
        cs = 0.5 * p.max_conc
        oracle = (p.exchange_prefactor * math.sqrt(cell.electrolyte_conc)
                  * math.sqrt(p.max_conc - cs) * math.sqrt(cs))
        assert oracle == pytest.approx(33.411076007815126, rel=1e-12)  # frozen
        assert kinetics.exchange_current(p, cell, cs) == pytest.approx(oracle, rel=1e-12)

    def test_out_of_domain_raises(self, cell):
        with pytest.raises(DomainError):
            kinetics.exchange_current(cell.anode, cell, 0.0)
        with pytest.raises(DomainError):
            kinetics.exchange_current(cell.anode, cell, cell.anode.max_conc)


class TestButlerVolmer:
    def test_zero_overpotential_both_branches(self, cell):
        assert kinetics.bv_flux(5.0, 0.0, cell) == 0.0
        assert kinetics.bv_flux(5.0, 0.0, cell, linearized=True) == 0.0

    def test_odd_symmetry_at_half_alpha(self, cell):
        j_pos = kinetics.bv_flux(3.0, 0.05, cell)
        j_neg = kinetics.bv_flux(3.0, -0.05, cell)
        assert j_neg == pytest.approx(-j_pos, rel=1e-14)

    def test_sinh_scalar_oracle(self, cell):
        # eta with F eta / (2 R T) = 1 gives J = (2 i0 / F) sinh(1)
        f = cell.faraday_const
        eta = 2.0 * cell.gas_const * cell.temperature / f
        oracle = (1.0 / f) * (math.exp(0.5 * f * eta / (cell.gas_const * cell.temperature))
                              - math.exp(-0.5 * f * eta / (cell.gas_const * cell.temperature)))
        assert oracle == pytest.approx(2.4360204143406774e-08, rel=1e-12)  # frozen
        assert kinetics.bv_flux(1.0, eta, cell) == pytest.approx(oracle, rel=1e-12)

    def test_monotone_increasing_in_eta(self, cell, rng):
        eta = np.sort(rng.uniform(-0.3, 0.3, 100))
        j = kinetics.bv_flux(2.0, eta, cell)
        assert np.all(np.diff(j) > 0)

    def test_linearized_matches_small_overpotential(self, cell, rng):
        """|J_lin - J_nl| / |J_nl| <= 1e-2 whenever |F eta / RT| <= 0.2."""
        rt_f = cell.thermal_voltage
        for eta in rng.uniform(-0.2 * rt_f, 0.2 * rt_f, 50):
            if abs(eta) < 1e-6 * rt_f:
                continue
            j_nl = kinetics.bv_flux(1.7, eta, cell)
            j_lin = kinetics.bv_flux(1.7, eta, cell, linearized=True)
            assert abs(j_lin - j_nl) / abs(j_nl) <= 1e-2

    def test_overflow_guard(self, cell):
        with pytest.raises(OverpotentialBlowup):
            kinetics.bv_flux(1.0, 81.0 * cell.thermal_voltage, cell)


class TestBvInvert:
    def test_zero_flux_zero_eta(self, cell):
        assert kinetics.bv_invert(2.0, 0.0, cell) == 0.0

    def test_round_trip(self, cell):
        eta0 = 0.03
        j = kinetics.bv_flux(4.0, eta0, cell)
        assert kinetics.bv_invert(4.0, j, cell) == pytest.approx(eta0, abs=1e-12)

    def test_round_trip_property(self, cell, rng):
        """bv_invert(bv_flux(eta)) = eta to 1e-10 relative over [-0.3, 0.3] V."""
        for eta in rng.uniform(-0.3, 0.3, 40):
            j = kinetics.bv_flux(1.3, eta, cell)
            back = kinetics.bv_invert(1.3, j, cell)
            assert abs(back - eta) <= 1e-10 * max(abs(eta), 1e-3)

    def test_newton_branch_for_asymmetric_alpha(self):
        c = _unit_cell(alpha=0.4)
        j = kinetics.bv_flux(1.0, 0.05, c)
        assert kinetics.bv_invert(1.0, j, c) == pytest.approx(0.05, abs=1e-9)


class TestFluxFromCurrent:
    def test_zero_current(self, cell):
        assert kinetics.flux_from_current(0.0, cell, "anode") == 0.0
        assert kinetics.flux_from_current(0.0, cell, "cathode") == 0.0

    def test_signs_opposite(self, cell):
        i = 10.0
        j_an = kinetics.flux_from_current(i, cell, "anode")
        j_ca = kinetics.flux_from_current(i, cell, "cathode")
        assert np.sign(j_ca) == -np.sign(j_an)

    def test_discharge_drains_anode_fills_cathode(self, cell):
        i = -2.0 * cell.current_1c
        assert kinetics.flux_from_current(i, cell, "anode") > 0
        assert kinetics.flux_from_current(i, cell, "cathode") < 0

    def test_scalar_oracle_at_two_c(self, cell):
        i = -2.0 * cell.current_1c
        j_an = kinetics.flux_from_current(i, cell, "anode")
        j_ca = kinetics.flux_from_current(i, cell, "cathode")
        assert j_an == pytest.approx(2.0434227330779054e-08, rel=1e-12)  # frozen
        assert j_ca == pytest.approx(-1.6e-08, rel=1e-12)                # frozen

    def test_linear_in_current(self, cell, rng):
        for i in rng.uniform(-100, 100, 20):
            j1 = kinetics.flux_from_current(i, cell, "cathode")
            j2 = kinetics.flux_from_current(2 * i, cell, "cathode")
            assert j2 == pytest.approx(2 * j1, rel=1e-14, abs=1e-30)
