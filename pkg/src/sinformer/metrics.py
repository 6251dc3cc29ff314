"""Threshold-free open-set metrics over known/unknown score lists.

Convention: higher score means more likely to come from a known
emitter.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError


def auroc(known_scores, unknown_scores) -> float:
    """P(known > unknown) + 0.5 P(tie), computed exactly by rank statistics."""
    known = np.asarray(known_scores, dtype=np.float64)
    unknown = np.asarray(unknown_scores, dtype=np.float64)
    if known.size == 0 or unknown.size == 0:
        raise ContractError("auroc needs non-empty score lists")
    ranks = rankdata(np.concatenate([known, unknown]))  # average ranks on ties
    u = ranks[:known.size].sum() - known.size * (known.size + 1) / 2.0
    return float(u / (known.size * unknown.size))


def fpr95(known_scores, unknown_scores) -> float:
    """Fraction of unknown scores at or above the threshold retaining 95% of known.

    The threshold is the 5th-percentile known score under the
    lower-interpolation convention.
    """
    known = np.asarray(known_scores, dtype=np.float64)
    unknown = np.asarray(unknown_scores, dtype=np.float64)
    if known.size == 0 or unknown.size == 0:
        raise ContractError("fpr95 needs non-empty score lists")
    threshold = np.percentile(known, 5.0, method="lower")
    return float(np.mean(unknown >= threshold))
