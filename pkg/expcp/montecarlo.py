"""
Seeded Monte Carlo engine for critical values, empirical sizes and powers.

Replication r of stream s draws from its own PCG64 generator seeded with
SeedSequence(master_seed, spawn_key=(s, r)), so every replication is a pure
function of (master_seed, s, r). Chunks of replications run on a joblib thread
pool and are concatenated in replication order: thread count and scheduling
never change a result.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .config import config
from .exceptions import ExpcpError, InputError
from .models import (
    AccuracyFlag,
    CriticalValueEntry,
    CriticalValueTable,
    PowerScenario,
    SimulationPlan,
    StatisticSpec,
    StudyCell,
    StudyReport,
)
from .statistics import evaluate_many
from .tablestore import lookup
from .telemetry_simple import metrics_collector, set_span_attribute, traced_operation

logger = logging.getLogger(__name__)

NULL_STREAM = 0
SIZE_STREAM = 1
POWER_STREAM = 2

ACCURACY_TEST_LEVEL = 0.01

_UNIFORM_BITS = 52


def replication_rng(master_seed: int, stream: int, replication: int) -> np.random.Generator:
    """Generator for one replication of one stream."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, replication))
    return np.random.Generator(np.random.PCG64(sequence))


def open_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1): midpoints of a 2**-52 grid."""
    m = rng.integers(0, 2**_UNIFORM_BITS, size=n, dtype=np.int64)
    return (m + 0.5) / 2.0**_UNIFORM_BITS


def exponential_from_uniforms(u: np.ndarray, theta=1.0) -> np.ndarray:
    """Inverse transform X = -ln(U) / theta."""
    return -np.log(u) / theta


def sample_standard_exponential(rng: np.random.Generator, n: int, theta: float = 1.0) -> np.ndarray:
    """
    Draw n independent Exp(theta) observations by inverse transform.

    Args:
        rng: Generator supplying the uniforms
        n: Number of draws
        theta: Rate

    Returns:
        Array of n positive draws
    """
    if n < 1:
        raise InputError(f"Need at least one draw, got n={n}")
    if not math.isfinite(theta) or theta <= 0:
        raise InputError(f"Rate theta must be positive and finite, got {theta}")
    return exponential_from_uniforms(open_uniforms(rng, n), theta)


def _draw_chunk(
    K: int,
    start: int,
    stop: int,
    master_seed: int,
    stream: int,
    rates: np.ndarray,
) -> np.ndarray:
    block = np.empty((stop - start, K))
    for row, replication in enumerate(range(start, stop)):
        u = open_uniforms(replication_rng(master_seed, stream, replication), K)
        block[row] = exponential_from_uniforms(u, rates)
    return block


def _simulate_chunk(K, start, stop, master_seed, stream, rates, specs):
    block = _draw_chunk(K, start, stop, master_seed, stream, rates)
    return evaluate_many(block, specs)


class MonteCarloEngine:
    """Runs replications in fixed-size chunks on a thread pool."""

    def __init__(self, n_jobs: Optional[int] = None, chunk_size: Optional[int] = None):
        """
        Initialize the engine.

        Args:
            n_jobs: Worker threads (defaults to EXPCP_THREADS)
            chunk_size: Replications per task (defaults to EXPCP_CHUNK_SIZE)
        """
        self.n_jobs = n_jobs or config.THREADS
        self.chunk_size = chunk_size or config.CHUNK_SIZE
        if self.n_jobs < 1 or self.chunk_size < 1:
            raise InputError("n_jobs and chunk_size must be positive")

    def draw(
        self,
        K: int,
        B: int,
        master_seed: int,
        stream: int = NULL_STREAM,
        scenario: Optional[PowerScenario] = None,
    ) -> np.ndarray:
        """Raw (B, K) data sets, mainly for inspection and tests."""
        return _draw_chunk(K, 0, B, master_seed, stream, self._rates(K, scenario))

    @staticmethod
    def _rates(K: int, scenario: Optional[PowerScenario]) -> np.ndarray:
        rates = np.ones(K)
        if scenario is not None:
            if scenario.K != K:
                raise InputError(f"Scenario is for K={scenario.K}, not K={K}")
            rates[: scenario.k] = scenario.theta0
            rates[scenario.k :] = scenario.theta1
        return rates

    def simulate(
        self,
        specs: Sequence[StatisticSpec],
        K: int,
        B: int,
        master_seed: int,
        stream: int = NULL_STREAM,
        scenario: Optional[PowerScenario] = None,
    ) -> dict[StatisticSpec, np.ndarray]:
        """
        Statistic maxima over B replications, in replication order.

        Args:
            specs: Statistics evaluated on every replication
            K: Sample length
            B: Number of replications
            master_seed: Master seed
            stream: Stream index (null, size or power samples)
            scenario: Change scenario; None simulates under the null

        Returns:
            Mapping spec -> array of B maxima
        """
        if B < 1:
            raise InputError(f"Need at least one replication, got B={B}")
        specs = list(dict.fromkeys(specs))
        rates = self._rates(K, scenario)
        bounds = [(s, min(s + self.chunk_size, B)) for s in range(0, B, self.chunk_size)]

        try:
            parts = Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(_simulate_chunk)(K, start, stop, master_seed, stream, rates, specs)
                for start, stop in bounds
            )
        except ExpcpError:
            raise
        except Exception as e:
            logger.error(f"Simulation failed for K={K}, B={B}: {e}")
            raise RuntimeError(f"Monte Carlo simulation failed: {e}") from e

        metrics_collector.get_counter("replications_simulated", "Monte Carlo replications").add(
            B, {"stream": str(stream)}
        )
        logger.debug(f"Simulated {B} replications for K={K} on stream {stream}")
        return {spec: np.concatenate([part[spec] for part in parts]) for spec in specs}


def _engine(engine: Optional[MonteCarloEngine]) -> MonteCarloEngine:
    return engine if engine is not None else MonteCarloEngine()


def critical_index(alpha: float, B: int) -> int:
    """1-based index ceil((1 - alpha) B) of the upper order statistic."""
    return min(B, max(1, math.ceil((1.0 - alpha) * B - 1e-9)))


@traced_operation("simulate_null_distribution", component="montecarlo")
def simulate_null_distribution(
    spec: StatisticSpec,
    K: int,
    B: int,
    master_seed: int,
    engine: Optional[MonteCarloEngine] = None,
) -> np.ndarray:
    """Ascending sorted null values of one statistic."""
    set_span_attribute("simulation.K", K)
    set_span_attribute("simulation.B", B)
    values = _engine(engine).simulate([spec], K, B, master_seed, NULL_STREAM)[spec]
    return np.sort(values)


def critical_values_from_null(
    spec: StatisticSpec,
    K: int,
    sorted_values: np.ndarray,
    alphas: Sequence[float],
    master_seed: int,
) -> tuple[list[CriticalValueEntry], list[str]]:
    """Read every level's critical value off one sorted null distribution."""
    B = len(sorted_values)
    entries, warnings = [], []
    for alpha in alphas:
        index = critical_index(alpha, B)
        if index == B and alpha < 1.0 / B:
            warnings.append(
                f"B={B} is too small for alpha={alpha:g} ({spec.label}, K={K}); "
                "the critical value is the sample maximum"
            )
        entries.append(
            CriticalValueEntry(
                spec=spec,
                K=K,
                alpha=alpha,
                critical_value=float(sorted_values[index - 1]),
                B=B,
                seed=master_seed,
            )
        )
    return entries, warnings


@traced_operation("estimate_critical_values", component="montecarlo")
def estimate_critical_values(
    plan: SimulationPlan,
    engine: Optional[MonteCarloEngine] = None,
    metadata: Optional[dict[str, str]] = None,
) -> CriticalValueTable:
    """
    Simulate critical values for every (spec, K, alpha) of a plan.

    One null distribution per (spec, K) serves all levels; all statistics of
    one K are computed on the same replications.

    Args:
        plan: Statistics, sample sizes, levels, B and master seed
        engine: Engine to use (a default one when None)
        metadata: Extra table metadata (tool version, echoed config)

    Returns:
        Table with one entry per (spec, K, alpha)
    """
    engine = _engine(engine)
    entries: list[CriticalValueEntry] = []
    warnings: list[str] = []

    for K in plan.K_grid:
        logger.info(f"Simulating null distributions for K={K} (B={plan.B})")
        maxima = engine.simulate(plan.specs, K, plan.B, plan.master_seed, NULL_STREAM)
        for spec in plan.specs:
            new_entries, new_warnings = critical_values_from_null(
                spec, K, np.sort(maxima[spec]), plan.alphas, plan.master_seed
            )
            entries.extend(new_entries)
            warnings.extend(new_warnings)

    for warning in warnings:
        logger.warning(warning)
    set_span_attribute("table.entries", len(entries))
    return CriticalValueTable(entries=entries, warnings=warnings, metadata=dict(metadata or {}))


def binomial_accuracy_test(
    rejections: int, B: int, alpha_nominal: float, level: float = ACCURACY_TEST_LEVEL
) -> AccuracyFlag:
    """
    Exact central binomial test of an empirical rejection count.

    Args:
        rejections: Number of rejections x
        B: Number of replications
        alpha_nominal: Nominal level of the tested procedure
        level: Test level, split equally between the two tails

    Returns:
        LIBERAL if x is at or above the upper level/2 quantile of
        X ~ Binomial(B, alpha_nominal), CONSERVATIVE if x is at or below the
        lower level/2 quantile, otherwise ACCURATE
    """
    if B < 1 or not 0 <= rejections <= B:
        raise InputError(f"Need 0 <= rejections <= B with B >= 1, got {rejections} of {B}")
    if not 0.0 < alpha_nominal < 1.0:
        raise InputError(f"Nominal level must lie in (0, 1), got {alpha_nominal}")

    lower = stats.binom.ppf(level / 2, B, alpha_nominal)
    upper = stats.binom.isf(level / 2, B, alpha_nominal)
    if rejections >= upper:
        return AccuracyFlag.LIBERAL
    if rejections <= lower:
        return AccuracyFlag.CONSERVATIVE
    return AccuracyFlag.ACCURATE


def _require_entry(
    table: CriticalValueTable, spec: StatisticSpec, K: int, alpha: float
) -> CriticalValueEntry:
    entry = table.get(spec, K, alpha)
    if entry is None:
        lookup(table, spec, K, alpha)  # raises MissingCriticalValueError with a hint
    return entry


@traced_operation("size_study", component="montecarlo")
def size_study(
    table: CriticalValueTable,
    plan: SimulationPlan,
    fresh_seed: Optional[int] = None,
    shared_samples: bool = False,
    engine: Optional[MonteCarloEngine] = None,
) -> StudyReport:
    """
    Empirical sizes of every (spec, K, alpha) of a plan.

    Args:
        table: Critical values for every cell of the plan
        plan: Grid, B and master seed
        fresh_seed: Seed of the fresh null samples (plan.master_seed when None)
        shared_samples: Re-use the replications behind each table entry instead
            (their seed and B); sizes are then exactly (B - ceil((1-alpha)B))/B
        engine: Engine to use

    Returns:
        Size report with an accuracy flag per cell
    """
    engine = _engine(engine)
    critical = {
        (spec, K, alpha): _require_entry(table, spec, K, alpha)
        for K in plan.K_grid
        for spec in plan.specs
        for alpha in plan.alphas
    }
    seed = plan.master_seed if fresh_seed is None else fresh_seed
    cells: list[StudyCell] = []

    for K in plan.K_grid:
        if shared_samples:
            groups: dict[tuple[int, int], list[StatisticSpec]] = {}
            for spec in plan.specs:
                for alpha in plan.alphas:
                    entry = critical[(spec, K, alpha)]
                    group = groups.setdefault((entry.seed, entry.B), [])
                    if spec not in group:
                        group.append(spec)
            maxima = {}
            for (entry_seed, entry_B), specs in groups.items():
                simulated = engine.simulate(specs, K, entry_B, entry_seed, NULL_STREAM)
                maxima.update({(spec, entry_seed, entry_B): v for spec, v in simulated.items()})
        else:
            simulated = engine.simulate(plan.specs, K, plan.B, seed, SIZE_STREAM)

        for spec in plan.specs:
            for alpha in plan.alphas:
                entry = critical[(spec, K, alpha)]
                values = (
                    maxima[(spec, entry.seed, entry.B)] if shared_samples else simulated[spec]
                )
                rejections = int(np.count_nonzero(values > entry.critical_value))
                cells.append(
                    StudyCell(
                        K=K,
                        spec=spec,
                        alpha=alpha,
                        critical_value=entry.critical_value,
                        rejections=rejections,
                        B=len(values),
                        flag=binomial_accuracy_test(rejections, len(values), alpha),
                    )
                )

    metadata = {
        "B": plan.B,
        "seed": plan.master_seed if shared_samples else seed,
        "mode": "shared" if shared_samples else "fresh",
        "stream": NULL_STREAM if shared_samples else SIZE_STREAM,
    }
    logger.info(f"Size study finished: {len(cells)} cells ({metadata['mode']} samples)")
    return StudyReport(kind="size", cells=cells, metadata=metadata)


@traced_operation("power_study", component="montecarlo")
def power_study(
    table: CriticalValueTable,
    scenarios: Sequence[PowerScenario],
    specs: Sequence[StatisticSpec],
    alphas: Sequence[float],
    B: int,
    master_seed: int,
    engine: Optional[MonteCarloEngine] = None,
) -> StudyReport:
    """
    Empirical powers against change scenarios.

    Each replication draws X_1..X_k from Exp(theta0) and X_{k+1}..X_K from
    Exp(theta1), with k = [tau K]; a rejection is a maximum strictly above the
    table's critical value.

    Args:
        table: Critical values for every (spec, scenario K, alpha)
        scenarios: Alternatives to simulate
        specs: Statistics to compare
        alphas: Levels
        B: Replications per scenario
        master_seed: Master seed of the power stream
        engine: Engine to use

    Returns:
        Power report, one cell per (scenario, spec, alpha)
    """
    engine = _engine(engine)
    critical = {
        (spec, scenario.K, alpha): lookup(table, spec, scenario.K, alpha)[0]
        for scenario in scenarios
        for spec in specs
        for alpha in alphas
    }
    cells: list[StudyCell] = []

    for scenario in scenarios:
        maxima = engine.simulate(specs, scenario.K, B, master_seed, POWER_STREAM, scenario)
        for spec in specs:
            for alpha in alphas:
                critical_value = critical[(spec, scenario.K, alpha)]
                cells.append(
                    StudyCell(
                        K=scenario.K,
                        tau=scenario.tau,
                        theta1=scenario.theta1,
                        spec=spec,
                        alpha=alpha,
                        critical_value=critical_value,
                        rejections=int(np.count_nonzero(maxima[spec] > critical_value)),
                        B=B,
                    )
                )

    logger.info(f"Power study finished: {len(scenarios)} scenarios, {len(cells)} cells")
    return StudyReport(
        kind="power",
        cells=cells,
        metadata={"B": B, "seed": master_seed, "stream": POWER_STREAM},
    )
