"""
Тесты оценки Монте-Карло
Tests for the seeded, partitioned Monte Carlo estimator
"""

import math

import pytest
from scipy import stats

from modules.analytic import p_zero
from modules.errors import ValidationError
from modules.model import SchemeKind, SystemConfig, db_to_linear, mer
from modules.montecarlo import (
    CSV_HEADER,
    EstimateWithCI,
    estimate,
    estimate_partitioned,
    required_samples,
    wilson_interval,
)


class TestWilson:

    def test_against_closed_form(self):
        z = stats.norm.ppf(0.975)
        n, k = 1000, 130
        p = k / n
        center = (p + z ** 2 / (2 * n)) / (1 + z ** 2 / n)
        half = z / (1 + z ** 2 / n) * math.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2))
        low, high = wilson_interval(k, n)
        assert low == pytest.approx(center - half, rel=1e-9)
        assert high == pytest.approx(center + half, rel=1e-9)

    def test_no_events(self):
        low, high = wilson_interval(0, 5000)
        assert low == 0.0
        assert 0.0 < high < 1e-3

    def test_required_samples(self):
        assert required_samples(0.01) == 10000
        assert required_samples(0.0) == math.inf


class TestEstimate:

    def test_symmetry_anchor(self):
        result = estimate(SchemeKind.STT, SystemConfig.iid(2, 1, 1), 10 ** 6, seed=1)
        assert result.p_hat == pytest.approx(0.5, abs=0.0015)
        assert result.ci_low <= result.p_hat <= result.ci_high

    def test_oas_anchor(self):
        result = estimate(SchemeKind.OAS, SystemConfig.iid(2, 1, 1), 10 ** 6, seed=2)
        assert result.p_hat == pytest.approx(0.25, abs=0.0013)

    @pytest.mark.slow
    def test_sas_anchor(self):
        result = estimate(SchemeKind.SAS, SystemConfig.iid(2, 1, 1, mer_db=10.0), 10 ** 7, seed=3)
        assert result.p_hat == pytest.approx(1 / 66, abs=1e-4)

    def test_same_seed_same_result(self):
        config = SystemConfig.iid(3, 2, 1, mer_db=2.0)
        first = estimate(SchemeKind.SAS, config, 20000, seed=123)
        second = estimate(SchemeKind.SAS, config, 20000, seed=123)
        assert first == second

    def test_single_partition_matches_plain(self):
        config = SystemConfig.iid(2, 2, 2)
        assert estimate(SchemeKind.OAS, config, 5000, seed=9) == estimate_partitioned(
            SchemeKind.OAS, config, 5000, seed=9, partitions=1
        )

    def test_partitions_deterministic(self):
        config = SystemConfig.iid(2, 1, 1)
        first = estimate_partitioned(SchemeKind.STT, config, 80000, seed=5, partitions=8)
        second = estimate_partitioned(SchemeKind.STT, config, 80000, seed=5, partitions=8)
        assert first.n_events == second.n_events

    def test_workers_do_not_change_result(self):
        config = SystemConfig.iid(4, 1, 1, mer_db=3.0)
        serial = estimate_partitioned(SchemeKind.SAS, config, 40000, seed=77, partitions=4, workers=1)
        parallel = estimate_partitioned(SchemeKind.SAS, config, 40000, seed=77, partitions=4, workers=4)
        assert serial == parallel

    def test_partition_counts_are_consistent(self):
        config = SystemConfig.iid(2, 1, 1, mer_db=3.0)
        two = estimate_partitioned(SchemeKind.OAS, config, 200000, seed=11, partitions=2)
        four = estimate_partitioned(SchemeKind.OAS, config, 200000, seed=11, partitions=4)
        assert two.ci_low <= four.p_hat <= two.ci_high
        assert four.ci_low <= two.p_hat <= four.ci_high

    def test_chunk_size_keeps_counts_exact(self):
        config = SystemConfig.iid(2, 1, 1)
        result = estimate(SchemeKind.STT, config, 10007, seed=4, chunk_size=1000)
        assert result.n_samples == 10007
        assert result.p_hat == result.n_events / 10007

    @pytest.mark.parametrize("kwargs", [
        {"n_samples": 999},
        {"seed": -1},
        {"seed": 2 ** 64},
        {"partitions": 0},
        {"workers": 0},
    ])
    def test_validation(self, kwargs):
        args = {"n_samples": 1000, "seed": 0, "partitions": 1, "workers": 1}
        args.update(kwargs)
        with pytest.raises(ValidationError):
            estimate_partitioned(SchemeKind.STT, SystemConfig.iid(1, 1, 1), **args)

    @pytest.mark.parametrize("scheme", list(SchemeKind))
    def test_snr_does_not_change_estimate(self, scheme):
        config = SystemConfig.iid(3, 2, 2, mer_db=5.0)
        low = estimate(scheme, config.with_snr(1.0), 30000, seed=606)
        high = estimate(scheme, config.with_snr(1000.0), 30000, seed=606)
        assert low == high

    def test_interval_coverage(self):
        config = SystemConfig.iid(2, 1, 1, mer_db=0.0)
        exact = p_zero(SchemeKind.OAS, 2, 1, 1, mer(config))
        covered = 0
        for seed in range(200):
            result = estimate(SchemeKind.OAS, config, 10 ** 4, seed=seed, confidence=0.95)
            covered += result.ci_low <= exact <= result.ci_high
        assert covered >= 180

    def test_csv_line(self):
        result = EstimateWithCI(0.25, 0.2, 0.3, 1000, 250, 7)
        assert CSV_HEADER.count(",") == result.as_csv().count(",")
        assert result.as_csv() == "0.25,0.2,0.3,1000,250,7"
        assert result.half_width == pytest.approx(0.05)


def _cross_validate(scheme, dims, mer_db, n_samples, seed):
    config = SystemConfig.iid(*dims, mer_db=mer_db)
    exact = p_zero(scheme, *dims, mer(config))
    result = estimate_partitioned(scheme, config, n_samples, seed, partitions=4)
    assert abs(result.p_hat - exact) <= 3 * result.half_width, (scheme, dims, mer_db, result, exact)


@pytest.mark.parametrize("scheme", list(SchemeKind))
@pytest.mark.parametrize("dims", [(2, 1, 1), (2, 2, 2), (1, 3, 2)])
def test_cross_validation_quick(scheme, dims):
    _cross_validate(scheme, dims, 0.0, 100000, seed=2024)


@pytest.mark.slow
@pytest.mark.parametrize("scheme", list(SchemeKind))
@pytest.mark.parametrize("dims", [(2, 1, 1), (4, 1, 1), (2, 2, 2), (4, 4, 4), (1, 3, 2)])
@pytest.mark.parametrize("mer_db", [-5.0, 0.0, 5.0, 10.0])
def test_cross_validation_full(scheme, dims, mer_db):
    seed = int(1000 * db_to_linear(mer_db)) + 17 * dims[0] + dims[1]
    _cross_validate(scheme, dims, mer_db, 10 ** 6, seed)
