"""Implicit-Euler finite-difference reference solver."""

import json

import numpy as np
import pytest

from spmpinn import fd, kinetics
from spmpinn.errors import BoundsViolation, OutOfHull
from spmpinn.profiles import CurrentProfile


@pytest.fixture(scope="module")
def two_c_solution(cell):
    return fd.solve(cell, CurrentProfile.constant(-2.0, 1350.0))


class TestStepConcentration:
    def test_uniform_state_is_steady_without_flux(self):
        grid = fd.RadialGrid(64, 3e-6)
        state = np.full(64, 12.0)
        new = fd.step_concentration(state, 0.0, 0.1, grid, 1e-13)
        assert np.max(np.abs(new - state)) <= 1e-12 * 12.0

    def test_steady_state_over_thousand_steps(self):
        grid = fd.RadialGrid(64, 3e-6)
        state = np.full(64, 12.0)
        for _ in range(1000):
            state = fd.step_concentration(state, 0.0, 0.1, grid, 1e-13)
        assert np.max(np.abs(state - 12.0)) <= 1e-12 * 12.0

    def test_single_step_conservation(self, rng):
        """Shell-weighted Li change equals -J R^2 dt to 1e-10 relative."""
        grid = fd.RadialGrid(64, 4e-6)
        for _ in range(20):
            state = 10.0 + rng.uniform(0, 5, 64)
            j = rng.uniform(-3e-8, 3e-8)
            dt = rng.uniform(0.05, 0.5)
            new = fd.step_concentration(state, j, dt, grid, 2e-13)
            dm = fd.total_content(new, grid) - fd.total_content(state, grid)
            expected = -j * grid.radius ** 2 * dt
            assert abs(dm - expected) <= 1e-10 * max(abs(dm), 1e-30)

    def test_exact_on_quadratic_profile(self):
        """c = A + B (t + r^2/6D) with J = -B R/3 is reproduced to machine precision."""
        D, R = 1e-13, 3e-6
        grid = fd.RadialGrid(64, R)
        A, B = 10.0, 1e-3
        r = grid.nodes
        state = A + B * r ** 2 / (6 * D)
        j = -B * R / 3.0
        t = 0.0
        for _ in range(50):
            state = fd.step_concentration(state, j, 0.5, grid, D)
            t += 0.5
        exact = A + B * (t + r ** 2 / (6 * D))
        assert np.max(np.abs(state - exact)) <= 1e-10

    def test_bounds_violation_raised(self):
        grid = fd.RadialGrid(16, 1e-6)
        state = np.full(16, 0.05)
        with pytest.raises(BoundsViolation):
            # outflux large enough to push the surface cell negative
            fd.step_concentration(state, 5e-7, 1.0, grid, 1e-14)


class TestConvergenceOrders:
    def test_first_order_in_dt(self, cell):
        """Terminal-voltage error vs a dt/32 reference halves with dt (ratios ~2)."""
        prof = CurrentProfile.constant(-2.0, 20.0)
        ref = fd.solve(cell, prof, dt=0.003125).voltage[-1]
        errs = [abs(fd.solve(cell, prof, dt=dt).voltage[-1] - ref)
                for dt in (0.4, 0.2, 0.1)]
        for e0, e1 in zip(errs, errs[1:]):
            assert 1.6 <= e0 / e1 <= 2.6

    def test_second_order_in_dr(self, cell):
        """Surface-concentration error vs an n=257 reference quarters per refinement."""
        prof = CurrentProfile.constant(-2.0, 40.0)
        ref = fd.solve(cell, prof, dt=0.02, n_radial=257).anode_conc[-1, -1]
        errs = [abs(fd.solve(cell, prof, dt=0.02, n_radial=n).anode_conc[-1, -1] - ref)
                for n in (17, 33, 65)]
        for e0, e1 in zip(errs, errs[1:]):
            assert 3.2 <= e0 / e1 <= 5.0


class TestSolve:
    def test_zero_current_equilibrium(self, cell):
        prof = CurrentProfile.constant(0.0, 50.0)
        sol = fd.solve(cell, prof, dt=0.5)
        assert np.ptp(sol.anode_conc) <= 1e-10 * cell.anode.initial_conc
        assert np.ptp(sol.cathode_conc) <= 1e-10 * cell.cathode.initial_conc
        u_eq = (cell.cathode.ocp.value(cell.cathode.initial_stoich)
                - cell.anode.ocp.value(cell.anode.initial_stoich))
        assert np.allclose(sol.voltage, u_eq, atol=1e-12)

    def test_two_c_surface_monotonicity(self, two_c_solution):
        an = two_c_solution.surface_conc("anode")
        ca = two_c_solution.surface_conc("cathode")
        assert np.all(np.diff(an) < 0)
        assert np.all(np.diff(ca) > 0)

    def test_mean_concentration_monotone(self, two_c_solution):
        v_an = two_c_solution.anode_grid.shell_volumes()
        v_ca = two_c_solution.cathode_grid.shell_volumes()
        mean_an = two_c_solution.anode_conc @ v_an / v_an.sum()
        mean_ca = two_c_solution.cathode_conc @ v_ca / v_ca.sum()
        assert np.all(np.diff(mean_an) <= 0)
        assert np.all(np.diff(mean_ca) >= 0)

    def test_total_transfer_matches_analytic_integral(self, cell, two_c_solution):
        """Constant current: shell-weighted Li change = -J R^2 t to 1e-8 relative."""
        sol = two_c_solution
        i = -2.0 * cell.current_1c
        for el, conc, grid in (("anode", sol.anode_conc, sol.anode_grid),
                               ("cathode", sol.cathode_conc, sol.cathode_grid)):
            j = kinetics.flux_from_current(i, cell, el)
            dm = (conc[-1] - conc[0]) @ grid.shell_volumes()
            expected = -j * grid.radius ** 2 * 1350.0
            assert abs(dm - expected) / abs(expected) <= 1e-8

    def test_per_step_conservation_full_run(self, cell, two_c_solution):
        sol = two_c_solution
        i = -2.0 * cell.current_1c
        j = kinetics.flux_from_current(i, cell, "anode")
        v = sol.anode_grid.shell_volumes()
        dm = (sol.anode_conc[1:] - sol.anode_conc[:-1]) @ v
        expected = -j * sol.anode_grid.radius ** 2 * np.diff(sol.times)
        assert np.max(np.abs(dm - expected) / np.abs(expected)) <= 1e-10

    def test_saturation_errors_out(self, cell):
        # 2 C discharge far beyond the horizon exhausts the anode
        prof = CurrentProfile.constant(-2.0, 4000.0)
        with pytest.raises(BoundsViolation):
            fd.solve(cell, prof)

    def test_partial_final_step(self, cell):
        prof = CurrentProfile.constant(-2.0, 10.05)
        sol = fd.solve(cell, prof, dt=0.1)
        assert sol.times[-1] == pytest.approx(10.05, abs=1e-12)
        assert sol.times[-1] - sol.times[-2] == pytest.approx(0.05, abs=1e-12)


class TestSample:
    def test_node_exactness(self, two_c_solution, rng):
        sol = two_c_solution
        for _ in range(20):
            it = rng.integers(0, len(sol.times))
            ir = rng.integers(0, sol.anode_grid.n_points)
            got = sol.sample(sol.times[it], sol.anode_grid.nodes[ir], "anode_conc")
            assert got == sol.anode_conc[it, ir]

    def test_linear_in_time_midpoint(self, two_c_solution):
        sol = two_c_solution
        t0, t1 = sol.times[100], sol.times[101]
        mid = sol.sample(0.5 * (t0 + t1), 0.0, "phi_e")
        assert mid == pytest.approx(0.5 * (sol.phi_e[100] + sol.phi_e[101]), rel=1e-12)

    def test_against_refined_grid(self, cell):
        """Random queries agree with a 10x finer solve to 0.1% relative."""
        prof = CurrentProfile.constant(-2.0, 60.0)
        coarse = fd.solve(cell, prof, dt=0.5, n_radial=33)
        fine = fd.solve(cell, prof, dt=0.05, n_radial=321)
        rng = np.random.default_rng(7)
        for _ in range(30):
            t = rng.uniform(5.0, 60.0)
            r = rng.uniform(0, cell.anode.particle_radius)
            a = coarse.sample(t, r, "anode_conc")
            b = fine.sample(t, r, "anode_conc")
            assert abs(a - b) / abs(b) <= 1e-3

    def test_out_of_hull(self, two_c_solution):
        with pytest.raises(OutOfHull):
            two_c_solution.sample(1351.0, 0.0, "phi_e")
        with pytest.raises(OutOfHull):
            two_c_solution.sample(10.0, 5e-6, "anode_conc")


def test_export_csv(tmp_path, cell):
    prof = CurrentProfile.constant(-2.0, 1.0)
    sol = fd.solve(cell, prof, dt=0.5, n_radial=8)
    out = tmp_path / "sol.csv"
    sol.export_csv(out, metadata={"note": "unit test"})
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + len(sol.times) * 8
    meta = json.loads((tmp_path / "sol.csv.meta.json").read_text())
    assert meta["n_radial"] == 8 and "content_hash" in meta
