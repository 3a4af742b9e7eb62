"""Score aggregation: Likert expectation, argmax ablation and pairwise win sums."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .core import ContractViolation, ScoreDistribution, ScoreScale


def _aligned(dist: ScoreDistribution, scale: ScoreScale) -> np.ndarray:
    if len(dist) != len(scale):
        raise ContractViolation(f"distribution has {len(dist)} entries, scale has {len(scale)} options")
    return dist.as_array()


def soft_score(dist: ScoreDistribution, scale: ScoreScale) -> float:
    """Expected option value under ``dist``."""
    probs = _aligned(dist, scale)
    return float(np.dot(np.asarray(scale.options, dtype=np.float64), probs))


def hard_score(dist: ScoreDistribution, scale: ScoreScale) -> int:
    """Most probable option value; ties go to the lower value."""
    probs = _aligned(dist, scale)
    # argmax returns the first maximum and options are strictly increasing
    return scale.options[int(np.argmax(probs))]


class PairwiseMatrix:
    """Win probabilities for every ordered pair of ``k`` candidates.

    ``matrix[i, j]`` is the probability that candidate ``i`` is chosen when it
    is shown first and candidate ``j`` second. ``(i, j)`` and ``(j, i)`` are
    independent measurements. The diagonal is unused and stored as NaN.
    """

    def __init__(self, k: int, entries: Mapping[tuple[int, int], float]):
        if k < 1:
            raise ContractViolation("k must be positive")
        dense = np.full((k, k), np.nan)
        for (i, j), p in entries.items():
            if i == j or not (0 <= i < k and 0 <= j < k):
                raise ContractViolation(f"invalid pair index ({i}, {j}) for k={k}")
            if not (0.0 <= p <= 1.0):
                raise ContractViolation(f"entry ({i}, {j}) = {p} outside [0, 1]")
            dense[i, j] = p
        off_diag = ~np.eye(k, dtype=bool)
        missing = np.argwhere(np.isnan(dense) & off_diag)
        if len(missing):
            i, j = missing[0]
            raise ContractViolation(f"missing ordered pair ({i}, {j}); {len(missing)} absent in total")
        self.k = k
        self._dense = dense

    @classmethod
    def from_array(cls, array: np.ndarray) -> "PairwiseMatrix":
        array = np.asarray(array, dtype=np.float64)
        k = array.shape[0]
        if array.shape != (k, k):
            raise ContractViolation("pairwise array must be square")
        return cls(k, {(i, j): float(array[i, j]) for i in range(k) for j in range(k) if i != j})

    def __getitem__(self, pair: tuple[int, int]) -> float:
        i, j = pair
        if i == j:
            raise KeyError(pair)
        return float(self._dense[i, j])

    def __len__(self) -> int:
        return self.k * self.k - self.k

    def to_array(self) -> np.ndarray:
        return self._dense.copy()


def pairwise_scores(matrix: PairwiseMatrix) -> np.ndarray:
    """Total probability of being selected, summed over every ordered pair.

    Candidate ``i`` collects ``matrix[i, j]`` for each pair where it is shown
    first and ``1 - matrix[j, i]`` for each pair where it is shown second, so
    each entry lies in ``[0, 2(k-1)]`` and the vector sums to ``k^2 - k``.
    """
    k = matrix.k
    dense = np.nan_to_num(matrix.to_array(), nan=0.0)
    as_first = dense.sum(axis=1)
    as_second = (k - 1) - dense.sum(axis=0)
    return as_first + as_second
