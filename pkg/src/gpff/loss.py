"""Monte-Carlo audit of the force-matching training objective.

Each draw perturbs a random reference at a sampled noise level, asks the
provider for forces, and scores the sigma-weighted squared residual
against the known target -2 sigma eps. An exact provider audits to zero;
a provider that returns nothing scores about 12n per atom triple.
"""

from __future__ import annotations

import numpy as np

from .alignment import align_permutation
from .providers import ForceProvider, ReferenceSet

__all__ = ["FORCE_WEIGHT_CAP", "simple_loss"]

# Per-draw weight is min(sigma^-2, cap); the cap keeps near-zero noise
# draws from dominating the estimate.
FORCE_WEIGHT_CAP = 1000.0


def simple_loss(
    provider: ForceProvider,
    refs: ReferenceSet,
    sigma_samples,
    rng: np.random.Generator,
    align: bool = False,
) -> float:
    """Mean weighted force-matching residual over the given noise draws.

    For each sigma in ``sigma_samples``: pick a reference uniformly, form
    X = X0 + sigma eps, and accumulate min(sigma^-2, cap) * ||-2 sigma eps
    - F(X)||_F^2. With ``align=True`` the perturbed structure is first
    permutation-aligned onto its reference and the target recomputed from
    the aligned displacement, matching how interchangeable atoms are
    credited during training.
    """
    sigma_samples = [float(s) for s in sigma_samples]
    if not sigma_samples:
        raise ValueError("need at least one sigma sample")
    if any(s <= 0 for s in sigma_samples):
        raise ValueError("sigma samples must be positive")

    total = 0.0
    for sigma in sigma_samples:
        ref = refs.structures[int(rng.integers(len(refs)))]
        eps = rng.standard_normal((ref.n, 3))
        noisy = ref.with_positions(ref.positions + sigma * eps)
        if align:
            _, noisy = align_permutation(noisy, ref)
        target = -2.0 * (noisy.positions - ref.positions)
        predicted = provider.evaluate(noisy).forces
        weight = min(sigma ** -2, FORCE_WEIGHT_CAP)
        total += weight * ((target - predicted) ** 2).sum()
    return total / len(sigma_samples)
