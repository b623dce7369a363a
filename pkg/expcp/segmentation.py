"""
Multiple change-point detection by binary segmentation.

A segment is tested with a single-change scan; on rejection the estimated
split is recorded and both halves are tested again, depth first, until a
segment is accepted, gets shorter than min_segment or the depth cap is hit.
The same level alpha is used at every step.
"""

import logging
from typing import Optional

from .exceptions import MissingCriticalValueError
from .models import (
    ChangePointSet,
    ChangeRecord,
    CriticalValueTable,
    LookupPolicy,
    Provenance,
    Sample,
    SegmentationConfig,
)
from .montecarlo import MonteCarloEngine, critical_values_from_null, simulate_null_distribution
from .statistics import SampleLike, coerce_sample, evaluate
from .tablestore import lookup
from .telemetry_simple import metrics_collector, set_span_attribute, traced_operation

logger = logging.getLogger(__name__)


class CriticalValueSource:
    """Critical values per segment length: table first, simulation on demand."""

    def __init__(
        self,
        config: SegmentationConfig,
        table: Optional[CriticalValueTable] = None,
        engine: Optional[MonteCarloEngine] = None,
    ):
        """
        Initialize the source.

        Args:
            config: Segmentation settings (statistic, level, B, seed, policy)
            table: Known critical values; simulated ones are added to a copy
            engine: Engine used for on-demand simulation
        """
        self.config = config
        self.table = table if table is not None else CriticalValueTable()
        self.engine = engine
        self.simulated = 0

    def critical_value(self, K: int) -> tuple[float, Provenance]:
        """
        Critical value for a segment of length K.

        Raises:
            MissingCriticalValueError: If nothing is stored for K and
                simulate_on_demand is off (and no nearest-K fallback applies)
        """
        spec, alpha = self.config.spec, self.config.alpha
        try:
            return lookup(self.table, spec, K, alpha, LookupPolicy.EXACT)
        except MissingCriticalValueError:
            if not self.config.simulate_on_demand:
                return lookup(self.table, spec, K, alpha, self.config.lookup_policy)

        logger.info(f"Simulating critical value for {spec.label}, K={K}, alpha={alpha:g}")
        null = simulate_null_distribution(spec, K, self.config.B, self.config.seed, self.engine)
        entries, warnings = critical_values_from_null(spec, K, null, [alpha], self.config.seed)
        self.table = self.table.with_entries(entries, warnings)
        self.simulated += 1
        return entries[0].critical_value, Provenance(
            source="simulated", K_used=K, B=self.config.B, seed=self.config.seed
        )


@traced_operation("binary_segment", component="segmentation")
def binary_segment(
    sample: SampleLike,
    config: SegmentationConfig,
    source: Optional[CriticalValueSource] = None,
) -> ChangePointSet:
    """
    Find change points by recursive binary segmentation.

    Args:
        sample: Observations
        config: Statistic, level and stopping rule
        source: Critical values (a simulating source without a table when None)

    Returns:
        Change points in ascending order with one audit record each
    """
    sample = coerce_sample(sample)
    source = source or CriticalValueSource(config)
    values = sample.values
    records: list[ChangeRecord] = []

    def _segment(start: int, end: int, depth: int) -> None:
        length = end - start
        if length < config.min_segment or depth >= config.max_depth:
            return
        result = evaluate(Sample(values=values[start:end]), config.spec)
        critical_value, provenance = source.critical_value(length)
        if not result.max_value > critical_value:
            return

        location = start + result.k_hat
        logger.debug(
            f"Change at {location} in [{start}, {end}) depth {depth}: "
            f"{result.max_value:.4f} > {critical_value:.4f}"
        )
        records.append(
            ChangeRecord(
                location=location,
                segment_start=start,
                segment_end=end,
                depth=depth,
                k_hat=result.k_hat,
                statistic_value=result.max_value,
                critical_value=critical_value,
                provenance=provenance,
            )
        )
        _segment(start, location, depth + 1)
        _segment(location, end, depth + 1)

    _segment(0, sample.K, 0)
    records.sort(key=lambda record: record.location)

    set_span_attribute("segmentation.changes", len(records))
    metrics_collector.get_counter("change_points_found", "Change points accepted").add(
        len(records), {"kind": config.spec.kind.value}
    )
    return ChangePointSet(
        K=sample.K,
        locations=[record.location for record in records],
        records=records,
        config=config,
    )
