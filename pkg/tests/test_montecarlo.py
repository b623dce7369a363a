"""
Tests for the Monte Carlo engine and the size/power studies.

The reproduction tests compare against published 5000-replication values
with tolerances of roughly four standard errors.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest
from scipy import stats

from expcp.exceptions import InputError, MissingCriticalValueError
from expcp.models import (
    AccuracyFlag,
    CriticalValueEntry,
    CriticalValueTable,
    PowerScenario,
    SimulationPlan,
    StatisticSpec,
)
from expcp.montecarlo import (
    MonteCarloEngine,
    binomial_accuracy_test,
    critical_index,
    critical_values_from_null,
    estimate_critical_values,
    exponential_from_uniforms,
    open_uniforms,
    power_study,
    replication_rng,
    sample_standard_exponential,
    simulate_null_distribution,
    size_study,
)
from expcp.reference import REFERENCE_LAMBDAS, reference_critical_value

SEED = 20110101
ALL_SPECS = [StatisticSpec.phi(lam) for lam in REFERENCE_LAMBDAS] + [
    StatisticSpec.lrt_normalized(),
    StatisticSpec.s(),
]
PROPERTY_CASES = 500
PROPERTY_SPECS = [
    StatisticSpec.phi(-1.0),
    StatisticSpec.phi(-0.5),
    StatisticSpec.phi(0.0, 0.1),
    StatisticSpec.lrt(),
    StatisticSpec.lrt_normalized(),
    StatisticSpec.s(),
]
PROPERTY_ALPHAS = [0.2, 0.1, 0.05, 0.025, 0.01, 0.005]


def reference_table(specs, K_grid, alphas) -> CriticalValueTable:
    """Table holding the published critical values."""
    return CriticalValueTable(
        entries=[
            CriticalValueEntry(
                spec=spec,
                K=K,
                alpha=alpha,
                critical_value=reference_critical_value(spec, K, alpha),
                B=5000,
                seed=0,
            )
            for spec in specs
            for K in K_grid
            for alpha in alphas
        ]
    )


def power_of(report, spec, alpha=0.05, theta1=None, tau=None):
    for cell in report.cells:
        if cell.spec == spec and cell.alpha == alpha:
            if (theta1 is None or cell.theta1 == theta1) and (tau is None or cell.tau == tau):
                return cell.proportion
    raise KeyError(spec)


def random_specs(rng: np.random.Generator) -> list[StatisticSpec]:
    picks = rng.choice(len(PROPERTY_SPECS), size=int(rng.integers(1, 4)), replace=False)
    return [PROPERTY_SPECS[i] for i in sorted(picks)]


@pytest.fixture(scope="module")
def engine():
    """Multi-threaded engine shared by the module."""
    return MonteCarloEngine(n_jobs=2, chunk_size=500)


class TestRandomStreams:
    """Test cases for uniforms and exponential draws."""

    def test_open_uniforms(self):
        """Uniforms never hit either end of (0, 1)."""
        u = open_uniforms(replication_rng(1, 0, 0), 100_000)
        assert u.min() > 0.0
        assert u.max() < 1.0

    def test_inverse_transform(self):
        """-ln(U) / theta maps e^-1 to 1."""
        assert exponential_from_uniforms(np.array([math.exp(-1.0)]), 1.0)[0] == pytest.approx(1.0)

    def test_rate_scales_draws(self):
        """Doubling the rate halves every draw."""
        base = sample_standard_exponential(replication_rng(9, 0, 3), 50, 1.0)
        doubled = sample_standard_exponential(replication_rng(9, 0, 3), 50, 2.0)
        np.testing.assert_allclose(doubled, base / 2.0, rtol=1e-15)

    def test_law_of_large_numbers(self):
        """A million standard draws average to one."""
        draws = sample_standard_exponential(replication_rng(SEED, 0, 0), 1_000_000)
        assert abs(draws.mean() - 1.0) < 0.004

    def test_rejects_bad_rate(self):
        """Non-positive rates and empty draws are rejected."""
        with pytest.raises(InputError):
            sample_standard_exponential(replication_rng(1, 0, 0), 5, 0.0)
        with pytest.raises(InputError):
            sample_standard_exponential(replication_rng(1, 0, 0), 0)

    def test_replications_are_reproducible_and_distinct(self):
        """Streams repeat for equal keys and differ otherwise."""
        first = open_uniforms(replication_rng(5, 0, 7), 10)
        again = open_uniforms(replication_rng(5, 0, 7), 10)
        other = open_uniforms(replication_rng(5, 1, 7), 10)
        np.testing.assert_array_equal(first, again)
        assert not np.array_equal(first, other)


class TestEngine:
    """Test cases for MonteCarloEngine."""

    def test_thread_count_does_not_change_results(self):
        """Four threads reproduce the serial run."""
        specs = [StatisticSpec.phi(-0.5), StatisticSpec.lrt_normalized(), StatisticSpec.s()]
        serial = MonteCarloEngine(n_jobs=1, chunk_size=37).simulate(specs, 50, 600, SEED)
        parallel = MonteCarloEngine(n_jobs=4, chunk_size=37).simulate(specs, 50, 600, SEED)
        for spec in specs:
            np.testing.assert_array_equal(serial[spec], parallel[spec])

    def test_draw_uses_scenario_rates(self):
        """Scenario rates apply after the change point only."""
        scenario = PowerScenario(K=10, tau=0.5, theta1=4.0)
        engine = MonteCarloEngine(n_jobs=1, chunk_size=10)
        null = engine.draw(10, 3, SEED, stream=2)
        shifted = engine.draw(10, 3, SEED, stream=2, scenario=scenario)
        np.testing.assert_allclose(shifted[:, :5], null[:, :5], rtol=0)
        np.testing.assert_allclose(shifted[:, 5:], null[:, 5:] / 4.0, rtol=1e-15)

    def test_rejects_bad_settings(self):
        """Chunk sizes must be positive."""
        with pytest.raises(InputError):
            MonteCarloEngine(n_jobs=1, chunk_size=-1)

    def test_worker_failure_is_wrapped(self):
        """Unexpected worker errors surface as RuntimeError."""
        engine = MonteCarloEngine(n_jobs=1, chunk_size=10)
        with patch("expcp.montecarlo._simulate_chunk", side_effect=MemoryError("out of memory")):
            with pytest.raises(RuntimeError, match="Monte Carlo simulation failed"):
                engine.simulate([StatisticSpec.s()], 20, 30, SEED)


class TestCriticalValues:
    """Test cases for null distributions and critical-value tables."""

    def test_quantile_index(self):
        """Order-statistic index ceil((1 - alpha) B)."""
        assert critical_index(0.05, 20) == 19
        assert critical_index(0.05, 5000) == 4750
        assert critical_index(0.1, 5000) == 4500
        assert critical_index(0.01, 5000) == 4950

    def test_single_replication_is_reproducible(self):
        """B = 1 is valid and seeded."""
        first = simulate_null_distribution(StatisticSpec.s(), 30, 1, 42)
        second = simulate_null_distribution(StatisticSpec.s(), 30, 1, 42)
        assert first.shape == (1,)
        assert first[0] == second[0]

    def test_null_distribution_is_sorted(self):
        """Null values come back in ascending order."""
        values = simulate_null_distribution(StatisticSpec.lrt(), 40, 300, 3)
        assert np.all(np.diff(values) >= 0)

    def test_table_shape_and_monotonicity(self):
        """One entry per (spec, K, alpha), increasing in 1 - alpha."""
        specs = [StatisticSpec.phi(-1.0), StatisticSpec.phi(-0.5), StatisticSpec.s()]
        plan = SimulationPlan(specs=specs, K_grid=[40, 64], alphas=[0.1, 0.05, 0.01], B=400, master_seed=1)
        table = estimate_critical_values(plan, MonteCarloEngine(n_jobs=1))
        assert len(table.entries) == 3 * 2 * 3
        assert table.warnings == []
        for spec in specs:
            for K in (40, 64):
                values = [table.get(spec, K, a).critical_value for a in (0.1, 0.05, 0.01)]
                assert values[0] < values[1] < values[2]
                assert table.get(spec, K, 0.05).B == 400
                assert table.get(spec, K, 0.05).seed == 1

    def test_table_is_deterministic(self):
        """Tables do not depend on the thread count."""
        plan = SimulationPlan(specs=[StatisticSpec.s()], K_grid=[40], alphas=[0.05], B=200, master_seed=8)
        first = estimate_critical_values(plan, MonteCarloEngine(n_jobs=1))
        second = estimate_critical_values(plan, MonteCarloEngine(n_jobs=3))
        assert first == second

    def test_small_B_warning(self):
        """Levels below 1/B produce a warning."""
        plan = SimulationPlan(specs=[StatisticSpec.s()], K_grid=[40], alphas=[0.001], B=100, master_seed=2)
        table = estimate_critical_values(plan, MonteCarloEngine(n_jobs=1))
        assert len(table.warnings) == 1
        assert "too small" in table.warnings[0]

    def test_s_critical_value_at_300(self, engine):
        """S at K = 300 reproduces the published value."""
        values = simulate_null_distribution(StatisticSpec.s(), 300, 20000, SEED, engine)
        assert values[critical_index(0.05, 20000) - 1] == pytest.approx(1.7393, abs=0.06)

    def test_full_row_at_100(self, engine):
        """Every statistic of the K = 100, alpha = 0.05 row matches the published value."""
        B = 80000
        plan = SimulationPlan(specs=ALL_SPECS, K_grid=[100], alphas=[0.05], B=B, master_seed=SEED)
        table = estimate_critical_values(plan, engine)
        for spec in ALL_SPECS:
            tolerance = {"s": 0.06, "lrt-norm": 0.10}.get(spec.kind.value, 0.35)
            simulated = table.get(spec, 100, 0.05).critical_value
            expected = reference_critical_value(spec, 100, 0.05)
            assert simulated == pytest.approx(expected, abs=tolerance), spec.label

    def test_s_critical_value_at_500(self, engine):
        """S at K = 500, alpha = 0.01 reproduces the published value."""
        values = simulate_null_distribution(StatisticSpec.s(), 500, 20000, SEED, engine)
        assert values[critical_index(0.01, 20000) - 1] == pytest.approx(2.5964, abs=0.15)


class TestBinomialAccuracy:
    """Test cases for the exact binomial accuracy test."""

    @pytest.mark.parametrize("x", [69, 70, 72, 80])
    def test_liberal_counts(self, x):
        """Counts at or above the upper 0.995 quantile are liberal."""
        assert binomial_accuracy_test(x, 5000, 0.01) is AccuracyFlag.LIBERAL

    @pytest.mark.parametrize("x", [34, 40, 50, 60, 68])
    def test_accurate_counts(self, x):
        """Counts strictly between the tail quantiles are accurate."""
        assert binomial_accuracy_test(x, 5000, 0.01) is AccuracyFlag.ACCURATE

    @pytest.mark.parametrize("x", [25, 32, 33])
    def test_conservative_counts(self, x):
        """Counts at or below the lower 0.005 quantile are conservative."""
        assert binomial_accuracy_test(x, 5000, 0.01) is AccuracyFlag.CONSERVATIVE

    def test_thresholds_are_binomial_quantiles(self):
        """Flags switch exactly at the 0.005 and 0.995 binomial quantiles."""
        for B, alpha in ((1000, 0.05), (5000, 0.01), (5000, 0.1), (20000, 0.05)):
            lower = int(stats.binom.ppf(0.005, B, alpha))
            upper = int(stats.binom.isf(0.005, B, alpha))
            assert binomial_accuracy_test(lower, B, alpha) is AccuracyFlag.CONSERVATIVE
            assert binomial_accuracy_test(lower + 1, B, alpha) is AccuracyFlag.ACCURATE
            assert binomial_accuracy_test(upper - 1, B, alpha) is AccuracyFlag.ACCURATE
            assert binomial_accuracy_test(upper, B, alpha) is AccuracyFlag.LIBERAL

    def test_exactly_nominal(self):
        """The nominal count itself is accurate."""
        assert binomial_accuracy_test(250, 5000, 0.05) is AccuracyFlag.ACCURATE

    def test_range_checks(self):
        """Counts outside 0..B are rejected."""
        with pytest.raises(InputError):
            binomial_accuracy_test(-1, 100, 0.05)
        with pytest.raises(InputError):
            binomial_accuracy_test(101, 100, 0.05)


class TestSizeStudy:
    """Test cases for empirical sizes."""

    def test_shared_samples_are_exactly_nominal(self):
        """Shared samples reject exactly B - ceil((1 - alpha) B) times."""
        specs = [StatisticSpec.phi(-0.5), StatisticSpec.lrt_normalized(), StatisticSpec.s()]
        alphas = [0.1, 0.05, 0.01]
        plan = SimulationPlan(specs=specs, K_grid=[40, 300], alphas=alphas, B=1000, master_seed=SEED)
        engine = MonteCarloEngine(n_jobs=2, chunk_size=128)
        table = estimate_critical_values(plan, engine)
        report = size_study(table, plan, shared_samples=True, engine=engine)
        assert len(report.cells) == 3 * 2 * 3
        for cell in report.cells:
            assert cell.rejections == 1000 - critical_index(cell.alpha, 1000)
        assert report.metadata["mode"] == "shared"

    def test_fresh_sizes_at_100(self, engine):
        """Fresh sizes stay near the nominal level for every statistic."""
        plan = SimulationPlan(specs=ALL_SPECS, K_grid=[100], alphas=[0.05], B=10000, master_seed=SEED)
        table = estimate_critical_values(plan, engine)
        report = size_study(table, plan, fresh_seed=SEED + 1, engine=engine)
        assert len(report.cells) == 13
        for cell in report.cells:
            assert 0.037 <= cell.proportion <= 0.063, cell.spec.label

    def test_fresh_size_with_published_critical_value(self, engine):
        """The published normalized-LRT value is slightly liberal at K = 50."""
        spec = StatisticSpec.lrt_normalized()
        plan = SimulationPlan(specs=[spec], K_grid=[50], alphas=[0.1], B=5000, master_seed=SEED)
        report = size_study(reference_table([spec], [50], [0.1]), plan, engine=engine)
        assert report.cells[0].proportion == pytest.approx(0.1106, abs=0.017)

    def test_missing_entry(self):
        """Missing table entries name the critvals command."""
        plan = SimulationPlan(specs=[StatisticSpec.s()], K_grid=[40], alphas=[0.05], B=100)
        with pytest.raises(MissingCriticalValueError, match="critvals"):
            size_study(CriticalValueTable(), plan)


class TestPowerStudy:
    """Test cases for empirical powers against published values."""

    def test_half_way_change_at_100(self, engine):
        """Powers against a mid-sample increase."""
        phi, s = StatisticSpec.phi(-0.5), StatisticSpec.s()
        table = reference_table([phi, s], [100], [0.05])
        scenarios = [PowerScenario(K=100, tau=0.5, theta1=3.0), PowerScenario(K=100, tau=0.5, theta1=2.0)]
        report = power_study(table, scenarios, [phi, s], [0.05], 5000, SEED, engine)
        assert power_of(report, phi, theta1=3.0) == pytest.approx(0.9964, abs=0.004)
        assert power_of(report, s, theta1=2.0) == pytest.approx(0.8872, abs=0.02)

    def test_early_decrease_at_40(self, engine):
        """Power against an early rate decrease."""
        phi = StatisticSpec.phi(-0.8)
        table = reference_table([phi], [40], [0.05])
        report = power_study(
            table, [PowerScenario(K=40, tau=0.2, theta1=1 / 5)], [phi], [0.05], 5000, SEED, engine
        )
        assert report.cells[0].proportion == pytest.approx(0.9190, abs=0.02)

    def test_strong_change_at_200(self, engine):
        """A fivefold change at K = 200 is always found."""
        table = reference_table(ALL_SPECS, [200], [0.05])
        report = power_study(
            table, [PowerScenario(K=200, tau=0.2, theta1=5.0)], ALL_SPECS, [0.05], 5000, SEED, engine
        )
        for cell in report.cells:
            assert cell.proportion >= 0.999, cell.spec.label

    def test_power_grows_with_rate_ratio(self, engine):
        """Power does not fall as the change grows."""
        spec = StatisticSpec.s()
        table = reference_table([spec], [100], [0.05])
        thetas = [5.0, 4.0, 3.0, 2.0]
        scenarios = [PowerScenario(K=100, tau=0.3, theta1=t) for t in thetas]
        report = power_study(table, scenarios, [spec], [0.05], 5000, SEED, engine)
        powers = [power_of(report, spec, theta1=t) for t in thetas]
        band = 4 * math.sqrt(0.25 / 5000)
        assert all(a >= b - band for a, b in zip(powers, powers[1:]))

    def test_power_grows_with_tau(self, engine):
        """Power does not fall as the change moves to the middle."""
        table = reference_table(ALL_SPECS, [100], [0.05])
        scenarios = [PowerScenario(K=100, tau=tau, theta1=3.0) for tau in (0.2, 0.3, 0.5)]
        report = power_study(table, scenarios, ALL_SPECS, [0.05], 5000, SEED, engine)
        band = 4 * math.sqrt(0.25 / 5000)
        for spec in ALL_SPECS:
            powers = [power_of(report, spec, tau=tau) for tau in (0.2, 0.3, 0.5)]
            assert powers[0] <= powers[1] + band and powers[1] <= powers[2] + band, spec.label

    def test_reversal_duality_of_powers(self, engine):
        """An increase under lambda matches a decrease under -1 - lambda."""
        lam = -0.2
        spec, dual = StatisticSpec.phi(lam), StatisticSpec.phi(round(-1.0 - lam, 10))
        plan = SimulationPlan(specs=[spec, dual], K_grid=[100], alphas=[0.05], B=5000, master_seed=SEED)
        table = estimate_critical_values(plan, engine)
        up = power_study(
            table, [PowerScenario(K=100, tau=0.5, theta1=2.0)], [spec], [0.05], 5000, SEED, engine
        )
        down = power_study(
            table, [PowerScenario(K=100, tau=0.5, theta1=0.5)], [dual], [0.05], 5000, SEED + 1, engine
        )
        p, q = up.cells[0].proportion, down.cells[0].proportion
        band = 2 * 4 * math.sqrt(max(p * (1 - p), 0.01) / 5000)
        assert abs(p - q) <= band

    def test_missing_entry(self):
        """Powers need a critical value for every scenario length."""
        with pytest.raises(MissingCriticalValueError):
            power_study(
                CriticalValueTable(),
                [PowerScenario(K=40, tau=0.5, theta1=2.0)],
                [StatisticSpec.s()],
                [0.05],
                100,
                1,
            )


class TestProperties:
    """Randomized property suites for the engine (seeded, reproducible)."""

    def test_thread_count_determinism(self):
        """Any thread count and chunk size reproduce the single-chunk serial run."""
        rng = np.random.default_rng(808)
        for _ in range(PROPERTY_CASES):
            specs = random_specs(rng)
            K = int(rng.integers(20, 61))
            B = int(rng.integers(1, 81))
            seed = int(rng.integers(0, 2**32))
            serial = MonteCarloEngine(n_jobs=1, chunk_size=B).simulate(specs, K, B, seed)
            threaded = MonteCarloEngine(
                n_jobs=int(rng.integers(2, 5)), chunk_size=int(rng.integers(1, B + 1))
            ).simulate(specs, K, B, seed)
            for spec in specs:
                np.testing.assert_array_equal(serial[spec], threaded[spec])

    def test_quantile_monotonicity(self):
        """Critical values never decrease as alpha decreases."""
        rng = np.random.default_rng(909)
        serial = MonteCarloEngine(n_jobs=1, chunk_size=300)
        for _ in range(PROPERTY_CASES):
            spec = PROPERTY_SPECS[int(rng.integers(len(PROPERTY_SPECS)))]
            K = int(rng.integers(20, 81))
            B = int(rng.integers(20, 301))
            seed = int(rng.integers(0, 2**32))
            picks = rng.choice(len(PROPERTY_ALPHAS), size=int(rng.integers(2, 5)), replace=False)
            alphas = [PROPERTY_ALPHAS[i] for i in sorted(picks)]
            null = simulate_null_distribution(spec, K, B, seed, serial)
            entries, _ = critical_values_from_null(spec, K, null, alphas, seed)
            values = [entry.critical_value for entry in entries]
            assert all(a <= b for a, b in zip(values, values[1:])), (spec.label, K, B, alphas)
            for entry in entries:
                assert entry.critical_value == null[critical_index(entry.alpha, B) - 1]
