"""Unsupervised agreement between instance labelings of classifier replicates.

Nothing here takes ground-truth instance labels: every measure compares
two predicted labelings of the same test instances.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class AgreementCounts(NamedTuple):
    n00: int
    n01: int
    n10: int
    n11: int

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11


def _as_labeling(z, name="z"):
    z = np.asarray(z)
    if z.ndim != 1 or z.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D labeling")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError(f"{name} has entries outside {{0, 1}}")
    return z.astype(bool)


def count_agreements(z, z_other) -> AgreementCounts:
    """Confusion counts between two binary labelings of the same instances."""
    a = _as_labeling(z, "z")
    b = _as_labeling(z_other, "z_other")
    if a.shape != b.shape:
        raise ValueError(f"labelings differ in length: {a.size} vs {b.size}")
    n11 = int(np.count_nonzero(a & b))
    n10 = int(np.count_nonzero(a & ~b))
    n01 = int(np.count_nonzero(~a & b))
    return AgreementCounts(a.size - n11 - n10 - n01, n01, n10, n11)


def agreement(z, z_other) -> float:
    """Fraction of instances on which both labelings agree."""
    c = count_agreements(z, z_other)
    return (c.n00 + c.n11) / c.total


def positive_agreement(z, z_other) -> float:
    """Agreement restricted to instances that either labeling marks positive.

    ``n11 / (n01 + n10 + n11)``; two all-negative labelings score 1.0
    (see :func:`is_degenerate_pair`).
    """
    c = count_agreements(z, z_other)
    denom = c.n01 + c.n10 + c.n11
    return 1.0 if denom == 0 else c.n11 / denom


def is_degenerate_pair(z, z_other) -> bool:
    """True when positive agreement is undefined (no positive label in either)."""
    return not (_as_labeling(z).any() or _as_labeling(z_other).any())


MEASURES = {"s": agreement, "s+": positive_agreement}


def _measure_key(measure):
    key = str(measure).lower().replace("_plus", "+").replace("plus", "+")
    if key not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; use 's' or 's+'")
    return key


@dataclass(frozen=True)
class StabilityMatrix:
    """Symmetric matrix of pairwise stability between R replicates."""

    values: np.ndarray
    measure: str
    degenerate: np.ndarray  # pairs where the measure fell back to its 0/0 convention

    @property
    def n_replicates(self) -> int:
        return self.values.shape[0]

    def upper(self) -> np.ndarray:
        """Strict upper-triangle entries, row-major."""
        return self.values[np.triu_indices(self.n_replicates, k=1)]


def pairwise_matrix(labelings: Sequence, measure: str = "s+") -> StabilityMatrix:
    """Pairwise stability of every pair of replicate labelings."""
    key = _measure_key(measure)
    Z = np.array([_as_labeling(z) for z in labelings]) if len(labelings) else np.empty((0, 0))
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need at least 2 labelings of equal length")
    R, n = Z.shape
    Zi = Z.astype(np.int64)
    n11 = Zi @ Zi.T
    pos = Zi.sum(axis=1)
    n10 = pos[:, None] - n11
    n01 = pos[None, :] - n11
    n00 = n - n11 - n10 - n01
    degenerate = np.zeros((R, R), dtype=bool)
    if key == "s":
        values = (n00 + n11) / n
    else:
        denom = n01 + n10 + n11
        degenerate = denom == 0
        values = np.divide(n11, denom, out=np.ones((R, R)), where=~degenerate)
    np.fill_diagonal(values, 1.0)
    return StabilityMatrix(values.astype(float), key, degenerate)


def mean_pairwise(matrix: StabilityMatrix) -> float:
    """Mean over the R(R-1)/2 distinct replicate pairs (diagonal excluded)."""
    values = matrix.values if isinstance(matrix, StabilityMatrix) else np.asarray(matrix)
    R = values.shape[0]
    if values.ndim != 2 or values.shape != (R, R) or R < 2:
        raise ValueError("expected a square matrix with at least 2 replicates")
    return float(values[np.triu_indices(R, k=1)].mean())


def positiveness_histogram(labelings: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """How often each instance is labeled positive, and the tally of those counts.

    Returns ``(counts, hist)`` where ``counts[i]`` is the number of replicates
    labeling instance ``i`` positive and ``hist[c]`` the number of instances
    with count ``c``, for ``c`` in ``0..R``.
    """
    if len(labelings) < 1:
        raise ValueError("need at least one labeling")
    Z = [_as_labeling(z) for z in labelings]
    if len({z.size for z in Z}) != 1:
        raise ValueError("labelings differ in length")
    counts = np.sum(Z, axis=0).astype(int)
    hist = np.bincount(counts, minlength=len(Z) + 1)
    return counts, hist


def measure_correlation(m_s: StabilityMatrix, m_splus: StabilityMatrix) -> float:
    """Pearson correlation of the two measures over distinct replicate pairs.

    NaN when either set of values is constant or there is only one pair.
    """
    a, b = m_s.upper(), m_splus.upper()
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])
