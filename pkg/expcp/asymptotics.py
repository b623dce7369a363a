"""
Normalizing constants for the likelihood-ratio scan and asymptotic critical values.

The normalized statistic is a(K) * sqrt(LRT) - b(K) with the Darling-Erdos
constants, whose limit law is exp(-2 exp(-t)). The S statistic converges to
the squared supremum of a Brownian bridge, i.e. a squared Kolmogorov variable.
The trimmed phi-family limit has no closed form here; only three tabulated
levels are stored.
"""

import logging
import math
from typing import Optional

from scipy import special

from .exceptions import AsymptoticValueUnavailable, InputError
from .models import AsymptoticCriticalSet, StatisticKind, StatisticSpec

logger = logging.getLogger(__name__)

MIN_NORMALIZED_K = 16

T_PHI_ASYMPTOTIC: dict[float, float] = {0.1: 8.31, 0.05: 9.90, 0.01: 13.45}


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InputError(f"Significance level must lie in (0, 1), got {alpha}")


def _check_K(K: int) -> None:
    if K < MIN_NORMALIZED_K:
        raise InputError(
            f"Normalizing constants need K >= {MIN_NORMALIZED_K} "
            f"(ln ln ln K must be defined), got K={K}"
        )


def norm_a(K: int) -> float:
    """a(K) = sqrt(2 ln ln K)."""
    _check_K(K)
    return math.sqrt(2.0 * math.log(math.log(K)))


def norm_b(K: int) -> float:
    """b(K) = 2 ln ln K + (1/2) ln ln ln K - (1/2) ln pi."""
    _check_K(K)
    lnln = math.log(math.log(K))
    return 2.0 * lnln + 0.5 * math.log(lnln) - 0.5 * math.log(math.pi)


def normalize_lrt(lrt: float, K: int) -> float:
    return norm_a(K) * math.sqrt(max(lrt, 0.0)) - norm_b(K)


def lrt_asymptotic_critical(alpha: float) -> float:
    """Upper-alpha point of the limit law exp(-2 exp(-t))."""
    _check_alpha(alpha)
    return -math.log(-0.5 * math.log1p(-alpha))


def kolmogorov_cdf(q: float) -> float:
    """P(sup |B(t)| <= q) for a Brownian bridge B."""
    return 1.0 - float(special.kolmogorov(q))


def s_asymptotic_critical(alpha: float) -> float:
    """Squared upper-alpha quantile of the Kolmogorov distribution."""
    _check_alpha(alpha)
    q = float(special.kolmogi(alpha))
    return q * q


def t_phi_asymptotic_critical(alpha: float) -> float:
    for level, value in T_PHI_ASYMPTOTIC.items():
        if math.isclose(alpha, level, rel_tol=0.0, abs_tol=1e-12):
            return value
    raise AsymptoticValueUnavailable(
        f"No asymptotic value stored for the phi family at alpha={alpha}; simulate instead"
    )


def asymptotic_critical_set(alpha: float) -> AsymptoticCriticalSet:
    """All asymptotic critical values at one level (t_phi only when tabulated)."""
    _check_alpha(alpha)
    try:
        t_phi: Optional[float] = t_phi_asymptotic_critical(alpha)
    except AsymptoticValueUnavailable:
        t_phi = None
    return AsymptoticCriticalSet(
        alpha=alpha,
        t_phi=t_phi,
        lrt_normalized=lrt_asymptotic_critical(alpha),
        s=s_asymptotic_critical(alpha),
    )


def asymptotic_critical_value(spec: StatisticSpec, K: int, alpha: float) -> Optional[float]:
    """
    Asymptotic critical value of a statistic, or None when none is available.

    The raw LRT value is the normalized one mapped back through a(K), b(K).
    """
    _check_alpha(alpha)
    if spec.kind is StatisticKind.PHI_FAMILY:
        return T_PHI_ASYMPTOTIC.get(alpha)
    if spec.kind is StatisticKind.LRT_NORMALIZED:
        return lrt_asymptotic_critical(alpha)
    if spec.kind is StatisticKind.S:
        return s_asymptotic_critical(alpha)
    if K < MIN_NORMALIZED_K:
        return None
    root = (lrt_asymptotic_critical(alpha) + norm_b(K)) / norm_a(K)
    return root * root
