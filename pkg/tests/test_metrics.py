"""Error-metric tests: scaled mean absolute error, terminal-voltage error,
correlation dumps, and the query-grid plumbing."""

import csv

import numpy as np
import pytest

from spmpinn import fd
from spmpinn.errors import ConfigError
from spmpinn.hierarchy import CompositePredictor, TrainedLevel
from spmpinn.metrics import (MetricsReport, OraclePredictor, QueryGrid,
                             correlation_dump, epsilon, epsilon_tv, evaluate)
from spmpinn.network import default_spec, init_weights
from spmpinn.profiles import CurrentProfile
from spmpinn.training import make_task

HORIZON = 135.0  # s, short discharge window keeps the reference solve fast


@pytest.fixture(scope="module")
def oracle(cell):
    profile = CurrentProfile.constant(-2.0, HORIZON)
    return fd.solve(cell, profile, dt=0.5, n_radial=32)


class TestQueryGrid:
    def test_regular_defaults(self):
        grid = QueryGrid.regular(HORIZON)
        assert grid.shape == (101, 65)
        assert grid.times[0] == 0.0 and grid.times[-1] == HORIZON
        assert grid.radii_hat[0] == 0.0 and grid.radii_hat[-1] == 1.0

    def test_parse_override(self):
        grid = QueryGrid.parse("201x129", HORIZON)
        assert grid.shape == (201, 129)

    @pytest.mark.parametrize("text", ["101", "ax65", "101x", "1x65", "101x1"])
    def test_parse_rejects_malformed(self, text):
        with pytest.raises(ConfigError):
            QueryGrid.parse(text, HORIZON)

    def test_axes_must_increase(self):
        with pytest.raises(ConfigError):
            QueryGrid(times=np.array([0.0, 1.0, 1.0]),
                      radii_hat=np.linspace(0.0, 1.0, 5))
        with pytest.raises(ConfigError):
            QueryGrid(times=np.linspace(0.0, 1.0, 5),
                      radii_hat=np.array([0.0, 0.5, 1.5]))

    def test_positive_horizon_required(self):
        with pytest.raises(ConfigError):
            QueryGrid.regular(0.0)


class TestEpsilon:
    def test_identity_scores_zero(self, oracle):
        report = epsilon(OraclePredictor(oracle), oracle)
        assert report.epsilon == 0.0
        assert all(v == 0.0 for v in report.breakdown.values())

    def test_uniform_ten_percent_offset_scores_point_four(self, oracle):
        report = epsilon(OraclePredictor(oracle, factor=1.1), oracle)
        assert report.epsilon == pytest.approx(0.4, abs=1e-12)
        for var in report.breakdown:
            assert report.breakdown[var] == pytest.approx(0.1, abs=1e-13)
        assert all(n == 0 for n in report.floored.values())

    def test_breakdown_sums_to_total(self, oracle):
        report = epsilon(OraclePredictor(oracle, factor=1.03), oracle)
        assert report.epsilon == sum(report.breakdown.values())

    def test_sample_counts(self, oracle):
        grid = QueryGrid.regular(HORIZON, n_time=21, n_radial=9)
        report = epsilon(OraclePredictor(oracle), oracle, grid)
        assert report.counts == {"cs_an": 21 * 9, "cs_ca": 21 * 9,
                                 "phie": 21, "phis_ca": 21}
        assert report.metadata["grid"] == "21x9"

    def test_floor_flags_near_zero_references(self, oracle):
        # Fabricated solution whose electrolyte potential crosses zero: the
        # floored denominator keeps the error finite and the sample is flagged.
        rg = fd.RadialGrid(3, 1e-6)
        fake = fd.SolutionGrid(
            times=np.array([0.0, 1.0, 2.0]),
            anode_conc=np.full((3, 3), 10.0), cathode_conc=np.full((3, 3), 20.0),
            phi_e=np.array([-1.0, 0.0, 1.0]), phi_s_ca=np.array([3.0, 4.0, 5.0]),
            anode_grid=rg, cathode_grid=rg, cell=oracle.cell,
            profile=CurrentProfile.constant(-1.0, 2.0))
        grid = QueryGrid.regular(2.0, n_time=3, n_radial=3)
        report = epsilon(OraclePredictor(fake, factor=1.1), fake, grid)
        assert report.floored["phie"] == 1
        assert np.isfinite(report.epsilon)
        # the zero-reference sample contributes 0/floor = 0 instead of 0/0
        assert report.breakdown["phie"] == pytest.approx(0.2 / 3, abs=1e-15)

    def test_report_invariants_enforced(self):
        with pytest.raises(ConfigError):
            MetricsReport(epsilon=0.5, breakdown={"cs_an": 0.1}, counts={},
                          floored={})
        with pytest.raises(ConfigError):
            MetricsReport(epsilon=0.1, breakdown={"cs_an": 0.1}, counts={},
                          floored={}, epsilon_tv=-1.0)

    def test_report_round_trip(self, oracle, tmp_path):
        report = evaluate(OraclePredictor(oracle, factor=1.1), oracle)
        path = tmp_path / "report.json"
        report.save(path)
        import json
        doc = json.loads(path.read_text())
        assert doc["epsilon"] == report.epsilon
        assert doc["epsilon_tv"] == report.epsilon_tv
        assert doc["breakdown"]["phis_ca"] == report.breakdown["phis_ca"]


class _PhisOffset:
    """Wraps a predictor and shifts only the cathode potential."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = offset

    @property
    def horizon(self):
        return self.base.horizon

    def predict(self, t_hat, r_hat):
        out = self.base.predict(t_hat, r_hat)
        out["phis_ca"] = out["phis_ca"] + self.offset
        return out


class TestEpsilonTv:
    def test_identity_scores_zero(self, oracle):
        assert epsilon_tv(OraclePredictor(oracle), oracle) == 0.0

    def test_constant_offset_recovered(self, oracle):
        shifted = _PhisOffset(OraclePredictor(oracle), 0.005)
        assert epsilon_tv(shifted, oracle) == pytest.approx(0.005, abs=1e-15)

    def test_evaluate_fills_both_metrics(self, oracle):
        shifted = _PhisOffset(OraclePredictor(oracle), 0.005)
        report = evaluate(shifted, oracle)
        assert report.epsilon_tv == pytest.approx(0.005, abs=1e-15)
        assert report.epsilon > 0.0
        assert report.breakdown["cs_an"] == 0.0  # only the potential moved


class TestCorrelationDump:
    def test_identity_pairs_lie_on_diagonal(self, oracle):
        pairs = correlation_dump(OraclePredictor(oracle), oracle, 64, seed=3)
        for ref, pred in pairs.values():
            assert np.max(np.abs(ref - pred)) == 0.0

    def test_row_count_and_header(self, oracle, tmp_path):
        path = tmp_path / "pairs.csv"
        correlation_dump(OraclePredictor(oracle), oracle, 50, seed=1, path=path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["variable", "xi_pde", "xi_pinn"]
        assert len(rows) == 1 + 4 * 50
        assert sum(1 for r in rows[1:] if r[0] == "phie") == 50

    def test_deterministic_given_seed(self, oracle):
        a = correlation_dump(OraclePredictor(oracle), oracle, 32, seed=9)
        b = correlation_dump(OraclePredictor(oracle), oracle, 32, seed=9)
        for var in a:
            assert np.array_equal(a[var][0], b[var][0])
            assert np.array_equal(a[var][1], b[var][1])

    def test_sample_count_guard(self, oracle):
        with pytest.raises(ConfigError):
            correlation_dump(OraclePredictor(oracle), oracle, 0)


class TestNetworkPredictorPath:
    def test_untrained_network_scores_finite(self, cell, oracle):
        # End-to-end shape check through the composite predictor: an untrained
        # net is wrong but bounded, so every metric must come back finite.
        spec = default_spec("merged", "dense", width=4, branch_layers=3)
        profile = CurrentProfile.constant(-2.0, HORIZON)
        task = make_task(spec, cell, profile, fidelity="linear_bv")
        level = TrainedLevel(fidelity="linear_bv", pv=init_weights(spec, seed=0),
                             transform=task.transform)
        predictor = CompositePredictor(levels=[level], alpha2=1.0)
        report = evaluate(predictor, oracle)
        assert np.isfinite(report.epsilon) and report.epsilon > 0.0
        assert report.epsilon_tv >= 0.0
        assert report.counts["cs_an"] == 101 * 65
        # hard initial condition: the t = 0 grid row matches the oracle exactly
        grid = QueryGrid.regular(HORIZON, n_time=3, n_radial=5)
        from spmpinn.metrics import _predicted_fields, _reference_fields
        pred = _predicted_fields(predictor, grid)
        ref = _reference_fields(oracle, grid, predictor)
        np.testing.assert_allclose(pred["cs_an"][0], ref["cs_an"][0], rtol=1e-14)
