"""
Closed-form change-point scan statistics for sequences of exponential observations.

Every statistic is a maximum over candidate splits k of a per-split discrepancy
between the head X_1..X_k and the tail X_{k+1}..X_K. All per-split terms are
computed from prefix and suffix sums in one O(K) pass and are vectorised over
leading axes, so a (B, K) batch of replications is scanned at once.
"""

import logging
import math
from typing import Literal, NamedTuple, Sequence, Union

import numpy as np
from pydantic import ValidationError

from .asymptotics import norm_a, norm_b
from .exceptions import InputError, ScanRangeError
from .models import PrefixMeans, Sample, ScanResult, StatisticKind, StatisticSpec
from .telemetry_simple import metrics_collector, set_span_attribute, traced_operation

logger = logging.getLogger(__name__)

ScanForm = Literal["divergence", "log"]
SampleLike = Union[Sample, Sequence[float]]

# absorbs rounding in eps*K so that e.g. 0.05*40 counts as exactly 2
_GRID_TOLERANCE = 1e-9


class SplitMeans(NamedTuple):
    """Head/tail means for splits k = 1..K-1 along the last axis."""

    head: np.ndarray
    tail: np.ndarray
    grand: np.ndarray
    k: np.ndarray
    K: int


def coerce_sample(sample: SampleLike) -> Sample:
    """Accept a Sample or a plain sequence; invalid data becomes an InputError."""
    if isinstance(sample, Sample):
        return sample
    try:
        return Sample(values=list(sample))
    except ValidationError as e:
        raise InputError(f"Invalid sample: {e.errors()[0]['msg']}") from e


def _spec(**kwargs) -> StatisticSpec:
    try:
        return StatisticSpec(**kwargs)
    except ValidationError as e:
        raise InputError(f"Invalid statistic: {e.errors()[0]['msg']}") from e


def _scan_bounds(K: int, epsilon: float) -> tuple[int, int]:
    # open interval: boundary splits k = eps*K and k = (1-eps)*K are excluded
    lo = max(1, math.floor(epsilon * K + _GRID_TOLERANCE) + 1)
    hi = min(K - 1, math.ceil((1.0 - epsilon) * K - _GRID_TOLERANCE) - 1)
    return lo, hi


def minimum_scan_length(epsilon: float) -> int:
    """Smallest K from which every longer sample has a nonempty N(epsilon)."""
    if not 0.0 < epsilon < 0.5:
        raise InputError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    # an open interval (eps*K, (1-eps)*K) of width > 1 always holds an integer
    K = max(2, math.floor(1.0 / (1.0 - 2.0 * epsilon) + _GRID_TOLERANCE) + 1)
    while K > 2:
        lo, hi = _scan_bounds(K - 1, epsilon)
        if lo > hi:
            break
        K -= 1
    return K


def scan_range(K: int, epsilon: float) -> range:
    """
    Trimmed scan set N(epsilon) = {k : epsilon < k/K < 1 - epsilon} within 1..K-1.

    Splits exactly at the trimming boundary are excluded.

    Raises:
        ScanRangeError: If the set is empty for this K
    """
    lo, hi = _scan_bounds(K, epsilon)
    if lo > hi:
        raise ScanRangeError(K, epsilon, minimum_scan_length(epsilon))
    return range(lo, hi + 1)


def split_means(values: np.ndarray) -> SplitMeans:
    values = np.asarray(values, dtype=float)
    K = values.shape[-1]
    if K < 2:
        raise InputError(f"Samples need at least 2 observations, got {K}")
    k = np.arange(1, K, dtype=float)
    prefix = np.cumsum(values, axis=-1)
    # tail sums from a reversed cumsum: no cancellation against the total
    suffix = np.cumsum(values[..., ::-1], axis=-1)[..., ::-1]
    return SplitMeans(
        head=prefix[..., :-1] / k,
        tail=suffix[..., 1:] / (K - k),
        grand=prefix[..., -1:] / K,
        k=k,
        K=K,
    )


def prefix_means(sample: SampleLike) -> PrefixMeans:
    """Head, tail and grand means of every split of a sample."""
    sample = coerce_sample(sample)
    values = sample.as_array()
    K = sample.K
    prefix = np.cumsum(values)
    suffix = np.cumsum(values[::-1])[::-1]
    return PrefixMeans(
        head_means=(prefix / np.arange(1, K + 1)).tolist(),
        tail_means=(suffix[1:] / np.arange(K - 1, 0, -1)).tolist(),
        grand_mean=float(prefix[-1] / K),
    )


def kl_ratio(r):
    """r - 1 - ln r, the exponential KL divergence written in the rate ratio r."""
    x = np.asarray(r, dtype=float) - 1.0
    return np.maximum(x - np.log1p(x), 0.0)


def kl_exponential(theta: float, theta_prime: float) -> float:
    """
    Kullback-Leibler divergence between Exp(theta) and Exp(theta_prime).

    Args:
        theta: Rate of the first distribution
        theta_prime: Rate of the second distribution

    Returns:
        log(theta/theta_prime) + theta_prime/theta - 1

    Raises:
        InputError: If a rate is not positive and finite
    """
    for name, rate in (("theta", theta), ("theta_prime", theta_prime)):
        if not math.isfinite(rate) or rate <= 0:
            raise InputError(f"{name} must be positive and finite, got {rate}")
    return float(kl_ratio(theta_prime / theta))


def power_divergence(u, lam: float):
    """
    Unweighted phi-family term for the mean ratio u = head mean / tail mean.

    The general branch is evaluated as expm1(q) / (lam (lam + 1)) with
    q = -lam ln u - log1p(-lam (u - 1)); lam = 0 and lam = -1 use the
    logarithmic limits. Any lam with (lam + 1) - lam u > 0 is accepted.
    """
    u = np.asarray(u, dtype=float)
    if lam == 0.0:
        return kl_ratio(u)
    if lam == -1.0:
        return kl_ratio(1.0 / u)
    shift = -lam * (u - 1.0)
    if np.any(shift <= -1.0):
        raise InputError(f"(lambda+1)*tail - lambda*head must be positive for lambda={lam}")
    q = -lam * np.log(u) - np.log1p(shift)
    return np.maximum(np.expm1(q) / (lam * (lam + 1.0)), 0.0)


def _weights(m: SplitMeans) -> np.ndarray:
    return 2.0 * m.k * (m.K - m.k) / m.K


def _phi_terms(m: SplitMeans, lam: float) -> np.ndarray:
    return _weights(m) * power_divergence(m.head / m.tail, lam)


def _lrt_terms(m: SplitMeans, form: ScanForm = "divergence") -> np.ndarray:
    if form == "divergence":
        # D(theta_0k, theta_0K) has rate ratio head/grand, D(theta_1k, theta_0K) tail/grand
        return 2.0 * (
            m.k * kl_ratio(m.head / m.grand) + (m.K - m.k) * kl_ratio(m.tail / m.grand)
        )
    if form == "log":
        log_grand = np.log(m.grand)
        terms = 2.0 * (
            m.k * (log_grand - np.log(m.head)) + (m.K - m.k) * (log_grand - np.log(m.tail))
        )
        return np.maximum(terms, 0.0)
    raise InputError(f"Unknown form {form!r}; expected 'divergence' or 'log'")


def _s_terms(m: SplitMeans, form: ScanForm = "divergence") -> np.ndarray:
    return (m.k * (m.K - m.k) / (m.K * m.K)) * _lrt_terms(m, form)


def _scan_ks(spec: StatisticSpec, K: int) -> range:
    if spec.kind is StatisticKind.PHI_FAMILY:
        return scan_range(K, spec.epsilon)
    return range(1, K)


def _scan_terms(m: SplitMeans, spec: StatisticSpec, form: ScanForm) -> tuple[range, np.ndarray]:
    ks = _scan_ks(spec, m.K)
    if spec.kind is StatisticKind.PHI_FAMILY:
        window = slice(ks.start - 1, ks.stop - 1)
        sub = SplitMeans(m.head[..., window], m.tail[..., window], m.grand, m.k[window], m.K)
        return ks, _phi_terms(sub, spec.lambda_)
    if spec.kind is StatisticKind.S:
        return ks, _s_terms(m, form)
    return ks, _lrt_terms(m, form)


def _normalize(lrt: np.ndarray, K: int) -> np.ndarray:
    return norm_a(K) * np.sqrt(np.maximum(lrt, 0.0)) - norm_b(K)


def _scan(sample: SampleLike, spec: StatisticSpec, form: ScanForm = "divergence") -> ScanResult:
    sample = coerce_sample(sample)
    ks, terms = _scan_terms(split_means(sample.as_array()), spec, form)
    # np.argmax returns the first maximizer, i.e. the smallest k
    best = int(np.argmax(terms))
    max_value = float(terms[best])
    if spec.kind is StatisticKind.LRT_NORMALIZED:
        max_value = float(_normalize(np.asarray(max_value), sample.K))
    metrics_collector.get_counter("scans_evaluated", "Single-sample scans evaluated").add(
        1, {"kind": spec.kind.value}
    )
    return ScanResult(
        spec=spec,
        K=sample.K,
        per_k=list(zip(ks, terms.tolist())),
        k_hat=ks[best],
        max_value=max_value,
    )


def phi_family_at_k(means: PrefixMeans, k: int, lam: float) -> float:
    """
    Per-split phi-family term at split k.

    Args:
        means: Prefix means of the sample
        k: Split index in 1..K-1
        lam: Power-divergence parameter in [-1, 0]

    Returns:
        2k(K-k)/K times the power divergence of the head and tail means
    """
    K = means.K
    if not 1 <= k <= K - 1:
        raise InputError(f"Split k={k} is outside 1..{K - 1}")
    if not -1.0 <= lam <= 0.0:
        raise InputError(f"lambda must lie in [-1, 0], got {lam}")
    weight = 2.0 * k * (K - k) / K
    return float(weight * power_divergence(means.head(k) / means.tail(k), lam))


@traced_operation("phi_family_scan", component="statistics")
def phi_family_scan(sample: SampleLike, lam: float, epsilon: float) -> ScanResult:
    """Phi-family scan over the trimmed set N(epsilon)."""
    set_span_attribute("statistic.lambda", lam)
    return _scan(sample, _spec(kind=StatisticKind.PHI_FAMILY, lambda_=lam, epsilon=epsilon))


@traced_operation("lrt_scan", component="statistics")
def lrt_scan(sample: SampleLike, form: ScanForm = "divergence") -> ScanResult:
    """Likelihood-ratio scan over k = 1..K-1 (KL form by default, log form on request)."""
    return _scan(sample, StatisticSpec.lrt(), form)


@traced_operation("s_scan", component="statistics")
def s_scan(sample: SampleLike, form: ScanForm = "divergence") -> ScanResult:
    """Weighted-KL S scan over k = 1..K-1."""
    return _scan(sample, StatisticSpec.s(), form)


@traced_operation("evaluate", component="statistics")
def evaluate(sample: SampleLike, spec: StatisticSpec) -> ScanResult:
    """
    Evaluate any statistic on one sample.

    For the normalized LRT the per-k values stay raw LRT terms and only
    max_value is mapped through a(K) sqrt(.) - b(K).
    """
    set_span_attribute("statistic.kind", spec.kind.value)
    return _scan(sample, spec)


def evaluate_many(values: np.ndarray, specs: Sequence[StatisticSpec]) -> dict[StatisticSpec, np.ndarray]:
    """
    Maxima of several statistics over a batch of samples.

    Args:
        values: Array of shape (B, K), one sample per row
        specs: Statistics to evaluate

    Returns:
        Mapping spec -> array of B maxima, matching evaluate(row, spec).max_value
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    m = split_means(values)
    maxima: dict[StatisticSpec, np.ndarray] = {}
    lrt_max = None
    for spec in specs:
        if spec in maxima:
            continue
        if spec.kind in (StatisticKind.LRT, StatisticKind.LRT_NORMALIZED):
            if lrt_max is None:
                lrt_max = _lrt_terms(m).max(axis=-1)
            maxima[spec] = (
                _normalize(lrt_max, m.K) if spec.kind is StatisticKind.LRT_NORMALIZED else lrt_max
            )
        else:
            _, terms = _scan_terms(m, spec, "divergence")
            maxima[spec] = terms.max(axis=-1)
    return maxima
