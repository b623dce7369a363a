__version__ = "1.0.0"
__description__ = "Change-point tests for exponential sequences with simulated critical values"

from .models import (
    CriticalValueTable,
    PowerScenario,
    Sample,
    SegmentationConfig,
    SimulationPlan,
    StatisticKind,
    StatisticSpec,
)
from .montecarlo import MonteCarloEngine, estimate_critical_values, power_study, size_study
from .segmentation import binary_segment
from .statistics import evaluate, lrt_scan, phi_family_scan, s_scan

__all__ = [
    "CriticalValueTable",
    "MonteCarloEngine",
    "PowerScenario",
    "Sample",
    "SegmentationConfig",
    "SimulationPlan",
    "StatisticKind",
    "StatisticSpec",
    "binary_segment",
    "estimate_critical_values",
    "evaluate",
    "lrt_scan",
    "phi_family_scan",
    "power_study",
    "s_scan",
    "size_study",
]
