import csv
import io
import json
import math

import numpy as np
import pytest

from fisherbench.bounds import BoundResult, Bits, Ldp
from fisherbench.errors import DomainError, UnsupportedCaseError
from fisherbench.models import DiscreteDistribution, GaussianLocation, ProductBernoulli
from fisherbench.protocols import make_identity_scheme, make_krr_scheme
from fisherbench.simulate import (
    CSV_COLUMNS,
    ExperimentConfig,
    RiskEstimate,
    build_scheme,
    compare,
    monte_carlo_risk,
    table_rows,
    to_csv,
    to_json,
)


def _bound(v, ok=True):
    return BoundResult(v, {"t": v}, ok, "test")


class TestMonteCarlo:
    def test_bernoulli_identity(self):
        m = ProductBernoulli(1)
        cfg = ExperimentConfig(m, [0.5], make_identity_scheme(m), [1000], [2], 4000, 1)
        (r,) = monte_carlo_risk(cfg)
        assert abs(r.mean_risk - 0.25 / 1000) <= 4 * r.stderr

    def test_lossless_histogram(self):
        m = DiscreteDistribution(4)
        cfg = ExperimentConfig(m, np.full(4, 0.25), make_identity_scheme(m), [1000], [2], 2000, 2)
        (r,) = monte_carlo_risk(cfg)
        assert abs(r.mean_risk - 0.75 / 1000) <= 4 * r.stderr

    def test_trials_one_rejected(self):
        m = DiscreteDistribution(4)
        with pytest.raises(DomainError):
            ExperimentConfig(m, np.full(4, 0.25), make_identity_scheme(m), [10], [2], 1)

    def test_q_below_one_rejected(self):
        m = DiscreteDistribution(4)
        with pytest.raises(DomainError):
            ExperimentConfig(m, np.full(4, 0.25), make_identity_scheme(m), [10], [0.5], 5)

    def test_risk_scaling(self):
        m = DiscreteDistribution(5)
        cfg = ExperimentConfig(m, np.full(5, 0.2), make_identity_scheme(m), [500, 2000, 8000], [2], 600, 3)
        risks = monte_carlo_risk(cfg)
        scaled = [r.mean_risk * r.n for r in risks]
        rel = [r.stderr / r.mean_risk for r in risks]
        centre = np.mean(scaled)
        for s, e in zip(scaled, rel):
            assert abs(s - centre) <= 3 * max(rel) * centre

    def test_cauchy_schwarz_across_q(self):
        m = DiscreteDistribution(8)
        cfg = ExperimentConfig(m, np.full(8, 1 / 8), make_krr_scheme(8, 1.0), [2000], [1, 2], 300, 4)
        l1, l2 = monte_carlo_risk(cfg)
        assert l1.mean_risk <= math.sqrt(8 * l2.mean_risk) * (1 + 5 * l2.stderr / l2.mean_risk)

    def test_threads_do_not_change_trials(self):
        m = DiscreteDistribution(6)
        cfg = ExperimentConfig(m, np.full(6, 1 / 6), make_krr_scheme(6, 0.7), [300, 900], [1, 2, 3], 40, 9)
        a = monte_carlo_risk(cfg, threads=1)
        b = monte_carlo_risk(cfg, threads=4)
        for x, y in zip(a, b):
            assert x.losses.tobytes() == y.losses.tobytes()

    def test_probe_parameters_and_projection(self):
        m = DiscreteDistribution(3)
        thetas = [[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]]
        cfg = ExperimentConfig(m, thetas, make_krr_scheme(3, 0.5), [200], [2], 50, 0, project=True)
        risks = monte_carlo_risk(cfg)
        assert [r.param for r in risks] == ["theta0", "theta1"]
        for r in risks:
            # projection onto the simplex never increases the L2 error
            assert r.mean_risk_projected <= r.mean_risk + 1e-15


class TestCompare:
    def test_ratio(self):
        rows = compare([RiskEstimate("t", 10, 2.0, 5, 5e-3, 1e-4)], lambda n, q: _bound(5e-4))
        assert math.isclose(rows[0]["ratio"], 10.0)

    def test_zero_bound(self):
        rows = compare([RiskEstimate("t", 10, 2.0, 5, 5e-3, 1e-4)], lambda n, q: _bound(0.0))
        assert rows[0]["ratio"] == math.inf and rows[0]["regime_ok"] is False

    def test_below_bound_flagged(self):
        rows = compare([RiskEstimate("t", 10, 2.0, 5, 1e-4, 1e-5)], lambda n, q: _bound(1e-3))
        assert rows[0]["below_bound"]

    def test_grouping_rate_band(self):
        m = DiscreteDistribution(16)
        c = Bits(2)
        cfg = ExperimentConfig(m, np.full(16, 1 / 16), build_scheme(m, c), [20000, 80000], [2], 100, 5)
        rows = table_rows(cfg, c, monte_carlo_risk(cfg))
        ratios = [r["ratio"] for r in rows]
        assert max(ratios) / min(ratios) < 4


class TestOutput:
    def _rows(self):
        m = DiscreteDistribution(4)
        c = Ldp(1.0)
        cfg = ExperimentConfig(m, np.full(4, 0.25), build_scheme(m, c, "krr"), [100, 400], [1, 2], 10, 3)
        return table_rows(cfg, c, monte_carlo_risk(cfg))

    def test_csv_columns(self):
        text = to_csv(self._rows(), {"base_seed": 3})
        lines = text.splitlines()
        assert lines[0] == "# base_seed=3"
        assert lines[1] == ",".join(CSV_COLUMNS)
        assert lines[1] == "model,constraint,param,scheme,n,q,trials,empirical_risk,stderr,lower_bound,upper_rate,ratio,regime_ok"
        assert len(lines) == 6

    def test_json_mirrors_csv(self):
        rows = self._rows()
        recs = list(csv.DictReader(io.StringIO(to_csv(rows))))
        doc = json.loads(to_json(rows))
        assert doc["columns"] == list(CSV_COLUMNS)
        for rec, jrow in zip(recs, doc["rows"]):
            for col in CSV_COLUMNS:
                v = jrow[col]
                if isinstance(v, bool):
                    assert rec[col] == ("true" if v else "false")
                elif isinstance(v, float):
                    assert float(rec[col]) == v
                else:
                    assert rec[col] == str(v)

    def test_deterministic(self):
        assert to_csv(self._rows()) == to_csv(self._rows())


class TestBuildScheme:
    def test_defaults(self):
        assert build_scheme(DiscreteDistribution(8), Bits(2)).name == "grouping"
        assert build_scheme(DiscreteDistribution(8), Ldp(1.0)).name == "rappor"
        assert build_scheme(DiscreteDistribution(8), Ldp(1.0), "krr").name == "krr"
        assert build_scheme(GaussianLocation(3), Bits(1)).name == "onebit"

    def test_unsupported(self):
        with pytest.raises(UnsupportedCaseError):
            build_scheme(GaussianLocation(3), Ldp(1.0))
