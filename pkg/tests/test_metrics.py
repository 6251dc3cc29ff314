"""Open-set metrics against an O(n^2) pairwise brute-force oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinformer.errors import ContractError
from sinformer.metrics import auroc, fpr95


def brute_force_auroc(known, unknown) -> float:
    """Pairwise comparison oracle: wins plus half-ties over all pairs."""
    wins = 0
    ties = 0
    for k in known:
        for u in unknown:
            if k > u:
                wins += 1
            elif k == u:
                ties += 1
    return (wins + 0.5 * ties) / (len(known) * len(unknown))


def brute_force_fpr95(known, unknown) -> float:
    """Independent recomputation: sort, pick the lower 5th-percentile index, count."""
    srt = sorted(known)
    idx = int(np.floor(0.05 * (len(srt) - 1)))
    threshold = srt[idx]
    return sum(1 for u in unknown if u >= threshold) / len(unknown)


def test_perfect_separation():
    known = np.linspace(10, 20, 50)
    unknown = np.linspace(0, 5, 40)
    assert auroc(known, unknown) == 1.0
    assert fpr95(known, unknown) == 0.0


def test_all_ties_gives_half():
    known = np.full(30, 2.5)
    unknown = np.full(20, 2.5)
    assert auroc(known, unknown) == 0.5
    assert fpr95(known, unknown) == 1.0


def test_empty_lists_rejected():
    with pytest.raises(ContractError):
        auroc([], [1.0])
    with pytest.raises(ContractError):
        fpr95([1.0], [])


def test_matches_brute_force_on_50_random_instances():
    rng = np.random.default_rng(0)
    for trial in range(50):
        nk = int(rng.integers(5, 501))
        nu = int(rng.integers(5, 501))
        known = rng.normal(0.5, 1.0, nk)
        unknown = rng.normal(0.0, 1.0, nu)
        if trial % 3 == 0:
            # quantized scores force ties
            known = np.round(known, 1)
            unknown = np.round(unknown, 1)
        assert auroc(known, unknown) == brute_force_auroc(list(known), list(unknown))
        assert fpr95(known, unknown) == brute_force_fpr95(list(known), list(unknown))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=40),
       st.lists(st.integers(-20, 20), min_size=1, max_size=40))
def test_auroc_properties(known, unknown):
    val = auroc(known, unknown)
    assert 0.0 <= val <= 1.0
    assert val == brute_force_auroc(known, unknown)
    # antisymmetry: swapping the lists reflects around 0.5
    assert auroc(unknown, known) == pytest.approx(1.0 - val, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60),
       st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
def test_fpr95_matches_oracle_and_bounds(known, unknown):
    val = fpr95(known, unknown)
    assert 0.0 <= val <= 1.0
    assert val == brute_force_fpr95(known, unknown)
