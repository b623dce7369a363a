"""
Tests for binary segmentation and on-demand critical values.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from expcp.exceptions import MissingCriticalValueError
from expcp.models import (
    CriticalValueEntry,
    CriticalValueTable,
    LookupPolicy,
    SegmentationConfig,
    StatisticSpec,
)
from expcp.montecarlo import MonteCarloEngine
from expcp.segmentation import CriticalValueSource, binary_segment

RUNS = 200


def piecewise_sample(seed: int, pieces: list[tuple[int, float]]) -> list[float]:
    """Concatenate Exp(rate) pieces of the given lengths."""
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.exponential(1.0 / rate, n) for n, rate in pieces]).tolist()


def rate_floor(rate: float, runs: int) -> int:
    """Three standard errors below the expected count of successes."""
    return math.floor(runs * rate - 3 * math.sqrt(runs * rate * (1 - rate)))


@pytest.fixture(scope="module")
def engine():
    """Multi-threaded engine shared by the module."""
    return MonteCarloEngine(n_jobs=2, chunk_size=250)


class TestSegmentationConfig:
    """Test cases for SegmentationConfig validation."""

    def test_defaults(self):
        """Default limits and lookup policy."""
        config = SegmentationConfig(spec=StatisticSpec.s())
        assert config.min_segment == 20
        assert config.max_depth == 10
        assert config.lookup_policy is LookupPolicy.EXACT

    def test_min_segment_floor(self):
        """Segments shorter than four points are never tested."""
        with pytest.raises(ValidationError):
            SegmentationConfig(spec=StatisticSpec.s(), min_segment=3)

    def test_min_segment_for_wide_trimming(self):
        """Wide trimming raises the shortest testable segment."""
        with pytest.raises(ValidationError, match="at least 10"):
            SegmentationConfig(spec=StatisticSpec.phi(-0.5, 0.45), min_segment=5)

    def test_min_segment_for_normalized_lrt(self):
        """The normalized LRT needs segments of at least 16 points."""
        with pytest.raises(ValidationError, match="16"):
            SegmentationConfig(spec=StatisticSpec.lrt_normalized(), min_segment=10)


class TestCriticalValueSource:
    """Test cases for CriticalValueSource."""

    def test_uses_table_first(self):
        """Tabulated values are used without simulating."""
        spec = StatisticSpec.s()
        table = CriticalValueTable(
            entries=[CriticalValueEntry(spec=spec, K=50, alpha=0.05, critical_value=1.66, B=5000, seed=1)]
        )
        source = CriticalValueSource(SegmentationConfig(spec=spec), table=table)
        value, provenance = source.critical_value(50)
        assert value == 1.66
        assert provenance.source == "table"
        assert source.simulated == 0

    def test_simulates_and_caches(self, engine):
        """Missing values are simulated once and then read from the table."""
        config = SegmentationConfig(spec=StatisticSpec.s(), B=200, seed=3)
        source = CriticalValueSource(config, engine=engine)
        value, provenance = source.critical_value(40)
        assert provenance.source == "simulated"
        assert provenance.B == 200
        assert source.table.get(config.spec, 40, 0.05).critical_value == value
        again, cached = source.critical_value(40)
        assert again == value
        assert cached.source == "table"
        assert source.simulated == 1

    def test_missing_without_simulation(self):
        """Without simulation a missing value is an error."""
        config = SegmentationConfig(spec=StatisticSpec.s(), simulate_on_demand=False)
        with pytest.raises(MissingCriticalValueError):
            CriticalValueSource(config).critical_value(40)

    def test_nearest_k_without_simulation(self):
        """The nearest tabulated K is used with a warning."""
        spec = StatisticSpec.s()
        table = CriticalValueTable(
            entries=[CriticalValueEntry(spec=spec, K=60, alpha=0.05, critical_value=1.65, B=5000, seed=1)]
        )
        config = SegmentationConfig(
            spec=spec, simulate_on_demand=False, lookup_policy=LookupPolicy.NEAREST_K_WARN
        )
        value, provenance = CriticalValueSource(config, table=table).critical_value(64)
        assert value == 1.65
        assert provenance.warning is not None


class TestBinarySegment:
    """Test cases for binary_segment."""

    def test_constant_sample(self, engine):
        """A constant sample has no change points."""
        config = SegmentationConfig(spec=StatisticSpec.lrt(), B=200)
        result = binary_segment([2.0] * 100, config, CriticalValueSource(config, engine=engine))
        assert result.locations == []
        assert result.records == []

    def test_short_sample_is_not_tested(self):
        """Samples below the minimum segment are left alone."""
        config = SegmentationConfig(spec=StatisticSpec.s(), simulate_on_demand=False)
        result = binary_segment([1.0, 5.0, 1.0, 5.0], config)
        assert result.locations == []

    def test_single_change_is_located(self, engine):
        """A fivefold rate increase halfway is located within five points."""
        config = SegmentationConfig(spec=StatisticSpec.lrt(), alpha=0.05, B=2000, seed=11)
        source = CriticalValueSource(config, engine=engine)
        located = exactly_one = 0
        for seed in range(RUNS):
            sample = piecewise_sample(seed, [(50, 1.0), (50, 5.0)])
            locations = binary_segment(sample, config, source).locations
            if any(abs(k - 50) <= 5 for k in locations):
                located += 1
                if len(locations) == 1:
                    exactly_one += 1
        assert located >= rate_floor(0.95, RUNS)
        # each homogeneous half is tested again at the same level
        assert exactly_one >= rate_floor(0.95 * (1 - config.alpha) ** 2, RUNS)

    def test_two_changes(self, engine):
        """Both changes of a 1-4-1 rate pattern are found in at least 90% of runs."""
        config = SegmentationConfig(spec=StatisticSpec.s(), alpha=0.05, B=2000, seed=12)
        source = CriticalValueSource(config, engine=engine)
        hits = 0
        for seed in range(RUNS):
            sample = piecewise_sample(100 + seed, [(60, 1.0), (60, 4.0), (60, 1.0)])
            locations = binary_segment(sample, config, source).locations
            near = [any(abs(k - target) <= 8 for k in locations) for target in (60, 120)]
            if all(near):
                hits += 1
        assert hits >= rate_floor(0.90, RUNS)

    def test_records_are_consistent(self, engine):
        """Audit records agree with the returned locations."""
        config = SegmentationConfig(spec=StatisticSpec.s(), B=500, seed=5)
        sample = piecewise_sample(7, [(60, 1.0), (60, 4.0), (60, 1.0)])
        result = binary_segment(sample, config, CriticalValueSource(config, engine=engine))
        assert result.locations == sorted(result.locations)
        for record in result.records:
            assert record.segment_start < record.location < record.segment_end
            assert record.location == record.segment_start + record.k_hat
            assert record.statistic_value > record.critical_value
            assert record.depth < config.max_depth

    def test_deterministic(self, engine):
        """Results do not depend on the engine's thread count."""
        config = SegmentationConfig(spec=StatisticSpec.s(), B=300, seed=9)
        sample = piecewise_sample(3, [(40, 1.0), (40, 3.0)])
        first = binary_segment(sample, config, CriticalValueSource(config, engine=engine))
        second = binary_segment(sample, config, CriticalValueSource(config))
        assert first == second

    def test_null_data_rarely_splits(self, engine):
        """Homogeneous samples split at roughly the nominal rate."""
        config = SegmentationConfig(spec=StatisticSpec.s(), alpha=0.05, B=1000, seed=4)
        source = CriticalValueSource(config, engine=engine)
        nonempty = 0
        for seed in range(100):
            sample = piecewise_sample(1000 + seed, [(60, 1.0)])
            if binary_segment(sample, config, source).locations:
                nonempty += 1
        assert nonempty <= 14

    def test_missing_table_raises(self):
        """Segmenting without values or simulation fails."""
        config = SegmentationConfig(spec=StatisticSpec.s(), simulate_on_demand=False)
        with pytest.raises(MissingCriticalValueError):
            binary_segment(piecewise_sample(1, [(40, 1.0)]), config)
