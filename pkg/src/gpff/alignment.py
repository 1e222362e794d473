"""Permutation alignment of noisy structures onto references.

Atoms of the same element are interchangeable; training targets and loss
audits therefore reorder the noisy structure per element type to minimize
the total squared distance to the reference. Samplers never reorder: they
inherit whatever indexing the prior used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Structure, centroid

__all__ = ["Permutation", "solve_assignment", "align_permutation"]


@dataclass(frozen=True)
class Permutation:
    """Row reordering: aligned row i comes from source row ``mapping[i]``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(i) for i in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ValueError("mapping must be a bijection on 0..n-1")
        object.__setattr__(self, "mapping", mapping)

    def apply(self, structure: Structure) -> Structure:
        idx = list(self.mapping)
        return Structure(
            [structure.elements[i] for i in idx],
            structure.positions[idx],
            name=structure.name,
        )


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost bijection for a square cost matrix.

    Returns ``assign`` with ``assign[i] = j`` meaning row i pairs with
    column j. Ties resolve deterministically (solver order).
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    rows, cols = linear_sum_assignment(cost)
    assign = np.empty(cost.shape[0], dtype=np.intp)
    assign[rows] = cols
    return assign


def align_permutation(noisy: Structure, reference: Structure):
    """Reorder ``noisy`` per element type to best match ``reference``.

    Both structures are centered on their own centroid for the distance
    computation only; the returned structure carries the original
    (uncentered) noisy coordinates in the new order. Element multisets
    must agree.

    Returns
    -------
    (Permutation, Structure)
        The permutation (reference slot -> noisy row) and the reordered
        noisy structure, whose elements now match ``reference`` exactly.
    """
    if sorted(noisy.elements) != sorted(reference.elements):
        raise ValueError("element multisets differ")
    ref_c = reference.positions - centroid(reference)
    noisy_c = noisy.positions - centroid(noisy)

    mapping = np.empty(reference.n, dtype=np.intp)
    for element in sorted(set(reference.elements)):
        ref_idx = [i for i, e in enumerate(reference.elements) if e == element]
        noisy_idx = [i for i, e in enumerate(noisy.elements) if e == element]
        diff = ref_c[ref_idx][:, None, :] - noisy_c[noisy_idx][None, :, :]
        cost = (diff ** 2).sum(axis=-1)
        assign = solve_assignment(cost)
        for slot, j in zip(ref_idx, assign):
            mapping[slot] = noisy_idx[j]

    perm = Permutation(tuple(int(i) for i in mapping))
    return perm, perm.apply(noisy)
