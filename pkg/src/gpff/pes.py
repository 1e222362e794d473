"""Pseudo-potential identities connecting forces, scores, and noise levels.

A structure perturbed away from its clean origin sits on a quadratic
pseudo-surface E = ||X - X0||_F^2 whose negative gradient F = -2(X - X0)
plays the role of an atomic force field. At noise level sigma the same
forces encode the Gaussian score s = F / (2 sigma^2) and the denoised
prediction X0 = X + F/2, which is what the samplers consume.
"""

from __future__ import annotations

import numpy as np

from .geometry import Structure

__all__ = [
    "BOLTZMANN_K",
    "pseudo_energy",
    "pseudo_forces",
    "score_from_forces",
    "x0_from_forces",
    "sigma_estimate",
    "boltzmann_temperature",
    "lognormal_sigma",
]

BOLTZMANN_K = 1.380649e-23


def pseudo_energy(x: Structure, x0: Structure) -> float:
    """Squared Frobenius displacement of ``x`` from the clean origin ``x0``."""
    if x.n != x0.n:
        raise ValueError("structures must have the same atom count")
    delta = x.positions - x0.positions
    return float((delta ** 2).sum())


def pseudo_forces(x: Structure, x0: Structure) -> np.ndarray:
    """Negative gradient of :func:`pseudo_energy` w.r.t. ``x``: -2(X - X0)."""
    if x.n != x0.n:
        raise ValueError("structures must have the same atom count")
    return -2.0 * (x.positions - x0.positions)


def score_from_forces(forces: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian score implied by pseudo-forces at noise level sigma: F/(2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.asarray(forces, dtype=np.float64) / (2.0 * sigma * sigma)


def x0_from_forces(x: Structure, forces: np.ndarray) -> Structure:
    """Denoised prediction encoded by the forces: X + F/2."""
    forces = np.asarray(forces, dtype=np.float64)
    if forces.shape != x.positions.shape:
        raise ValueError(
            f"forces shape {forces.shape} does not match structure ({x.n}, 3)"
        )
    return x.with_positions(x.positions + forces / 2.0)


def sigma_estimate(forces: np.ndarray, center: bool = True) -> float:
    """Noise level read off a force prediction as the std of F/2.

    The std is taken over all 3n components; ``center=True`` (default)
    subtracts the component mean, ``center=False`` gives the plain RMS.
    Needs at least 2 atoms.
    """
    forces = np.asarray(forces, dtype=np.float64)
    if forces.ndim != 2 or forces.shape[1] != 3 or forces.shape[0] < 2:
        raise ValueError("forces must have shape (n, 3) with n >= 2")
    half = forces.ravel() / 2.0
    if center:
        return float(half.std())
    return float(np.sqrt((half ** 2).mean()))


def boltzmann_temperature(sigma: float) -> float:
    """Formal temperature at which the pseudo-surface Boltzmann weights
    reproduce the level-sigma perturbation kernel: T = 2 sigma^2 / k_B.

    The pseudo-energy is read in Joules, so this is a unit correspondence,
    not a physical temperature.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return 2.0 * sigma * sigma / BOLTZMANN_K


def lognormal_sigma(
    rng: np.random.Generator,
    mean_log: float = -0.7,
    spread_log: float = 1.2,
    clip: tuple[float, float] = (0.0, 30.0),
) -> float:
    """One training-noise draw: exp(N(mean_log, spread_log^2)) clipped to ``clip``."""
    lo, hi = clip
    if lo > hi:
        raise ValueError("clip bounds out of order")
    return float(np.clip(np.exp(rng.normal(mean_log, spread_log)), lo, hi))
