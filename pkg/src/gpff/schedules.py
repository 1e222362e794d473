"""Decaying noise schedules and step-size bookkeeping.

Levels interpolate between sigma_max and sigma_min in sigma^(1/rho) space
and end with an exact zero level, so an N-step schedule has N+1 entries.
Normalized step sizes live in the same warped space: a full sweep from
sigma_max to sigma_min is step size 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScheduleParams",
    "NoiseSchedule",
    "build_schedule",
    "next_sigma",
    "observed_step_size",
    "clamp_terminal",
]


@dataclass(frozen=True)
class ScheduleParams:
    """Warp exponent, noise bounds, and step count for a schedule."""

    rho: float = 5.0
    sigma_min: float = 0.01
    sigma_max: float = 30.0
    steps: int = 64

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not (0 < self.sigma_min < self.sigma_max):
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.steps < 2:
            raise ValueError("steps must be at least 2")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleParams":
        return cls(**{k: data[k] for k in ("rho", "sigma_min", "sigma_max", "steps") if k in data})


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing sigma levels; the last entry is exactly 0."""

    levels: tuple[float, ...]
    params: ScheduleParams

    @property
    def n_steps(self) -> int:
        return len(self.levels) - 1


def build_schedule(params: ScheduleParams) -> NoiseSchedule:
    """Power-warped interpolation from sigma_max to sigma_min plus a 0 tail."""
    n = params.steps
    inv = 1.0 / params.rho
    hi = params.sigma_max ** inv
    lo = params.sigma_min ** inv
    i = np.arange(n)
    levels = (hi + (i / (n - 1)) * (lo - hi)) ** params.rho
    # the warp round-trip costs a few ulp at the ends; the interpolant is
    # mathematically sigma_max and sigma_min there, so pin the endpoints
    levels[0] = params.sigma_max
    levels[n - 1] = params.sigma_min
    return NoiseSchedule(tuple(float(v) for v in levels) + (0.0,), params)


def next_sigma(sigma: float, step: float, params: ScheduleParams, clamp: bool = True) -> float:
    """Noise level after a normalized step of size ``step`` down from ``sigma``.

    The step is taken in sigma^(1/rho) space, where the full sigma_max ->
    sigma_min sweep has length 1. With ``clamp`` (default), results that
    fall strictly below sigma_min (beyond a 1e-9 relative guard, so that a
    result mathematically equal to sigma_min survives rounding) map to 0,
    as does any step that overshoots past zero.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    inv = 1.0 / params.rho
    span = params.sigma_max ** inv - params.sigma_min ** inv
    base = sigma ** inv - step * span
    if base <= 0.0:
        return 0.0
    raw = base ** params.rho
    if clamp and raw < params.sigma_min * (1.0 - 1e-9):
        return 0.0
    return float(raw)


def observed_step_size(sigma_prev: float, sigma_now: float, params: ScheduleParams) -> float:
    """Normalized step size implied by two consecutive noise levels.

    Inverse of :func:`next_sigma`: positive when the level decayed, zero
    when unchanged, negative when it grew (callers floor as needed).
    """
    if sigma_prev <= 0 or sigma_now <= 0:
        raise ValueError("sigma levels must be positive")
    inv = 1.0 / params.rho
    span = params.sigma_max ** inv - params.sigma_min ** inv
    return float((sigma_prev ** inv - sigma_now ** inv) / span)


def clamp_terminal(sigma: float, params: ScheduleParams) -> float:
    """Terminal rule shared by the adaptive samplers: at or below sigma_min -> 0."""
    return 0.0 if sigma <= params.sigma_min else float(sigma)
