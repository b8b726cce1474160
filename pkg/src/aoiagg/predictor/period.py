"""Prediction-period selection and AoI-based clustering of sources."""
from __future__ import annotations

import math
import warnings
from typing import Dict, List, Mapping, Set, Tuple


class EmptyPeriodRange(UserWarning):
    pass


def period_bounds(l_pred: float, q: float, scar: float, n_max: int) -> Tuple[float, float]:
    """Admissible prediction periods, in cycles, as a real interval.

    The lower end keeps a prediction inside the cycles it has to cover; the
    upper end guarantees one prediction before the ego leaves the node's
    coverage. A stationary relative geometry (``scar == 0``) is capped at
    ``n_max``.
    """
    if q <= 0:
        raise ValueError("q must be > 0")
    if l_pred < 0 or scar < 0:
        raise ValueError("l_pred and scar must be >= 0")
    lower = l_pred / (1000.0 / q)
    upper = q / scar if scar > 0 else float(n_max)
    return lower, upper


def choose_period(l_pred: float, q: float, scar: float, n_max: int) -> int:
    """Largest integer period inside the admissible interval, clamped to [1, n_max]."""
    lower, upper = period_bounds(l_pred, q, scar, n_max)
    lo = max(1, math.ceil(lower - 1e-12))
    hi = n_max if upper >= n_max else math.floor(upper + 1e-12)
    if lo > hi:
        warnings.warn(f"empty prediction-period range [{lower:.3f}, {upper:.3f}]", EmptyPeriodRange,
                      stacklevel=2)
        return max(1, min(n_max, lo))
    return hi


def cluster_nodes(predicted: Mapping[str, float], bucket_width: float) -> List[Set[str]]:
    """Group nodes whose AoI falls in the same ``bucket_width`` bucket.

    Buckets are half-open, ``[k*w, (k+1)*w)``. Output is ordered by bucket.
    """
    if not bucket_width > 0:
        raise ValueError("bucket_width must be > 0")
    buckets: Dict[float, Set[str]] = {}
    for node, value in predicted.items():
        key = 0.0 if math.isinf(bucket_width) else math.floor(value / bucket_width)
        buckets.setdefault(key, set()).add(node)
    return [buckets[k] for k in sorted(buckets)]
