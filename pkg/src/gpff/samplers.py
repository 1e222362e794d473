"""Samplers that turn pseudo-force providers into structure generators.

Two families share the force contract. Direct denoising (DD) repeatedly
jumps to the provider's denoised prediction X + F/2, optionally re-noising
between jumps (SDD) and optionally constraining shape or frozen scaffold
atoms. The diffusion family (ancestral, Heun, stochastic Heun) walks an
explicit noise schedule using the score identity s = F / (2 sigma^2); each
member also has an adaptive variant that reads the current noise level off
the forces (sigma_hat = std(F/2)) and plans its own step sizes, bounded by
the N-step schedule so termination is guaranteed.

Every sampler returns the final structure plus a trajectory trace
(per-step noise levels, step sizes, force maxima, provider-call count,
optional coordinate snapshots). Scaffold atoms are bit-exact through every
update; samplers never reorder atoms.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import Structure, centroid, principal_frame
from .pes import sigma_estimate
from .providers import ForceProvider, ProviderError
from .schedules import (
    NoiseSchedule,
    ScheduleParams,
    build_schedule,
    clamp_terminal,
    next_sigma,
    observed_step_size,
)

__all__ = [
    "ShapeConstraint",
    "ChurnParams",
    "SamplerConfig",
    "StepRecord",
    "TrajectoryTrace",
    "SamplerError",
    "PriorSpec",
    "build_prior",
    "apply_shape_projection",
    "direct_denoise",
    "ancestral",
    "heun",
    "stochastic_heun",
    "adaptive_ancestral",
    "adaptive_heun",
    "adaptive_stochastic_heun",
    "ancestral_update",
    "ancestral_injection_scale",
    "run_sampler",
    "trajectory_rng",
    "run_batch",
]

# Smallest admissible normalized step for the adaptive samplers; keeps the
# planned sigma strictly decreasing when the estimator briefly stalls.
MIN_STEP_SIZE = 1e-6

SAMPLER_KINDS = ("dd", "ancestral", "heun", "stochastic-heun")


@dataclass(frozen=True)
class ShapeConstraint:
    """Principal-variance targets for shape-projected denoising.

    ``lam_target`` holds the target per-axis variances (A^2), sorted
    non-increasing; all entries must be positive. ``strictness`` is the
    exponent p in the annealing weight alpha = (i/N)^p: larger p holds the
    projection at full strength longer.
    """

    lam_target: tuple[float, float, float]
    strictness: float = 1.0

    def __post_init__(self):
        lam = tuple(sorted((float(v) for v in self.lam_target), reverse=True))
        if len(lam) != 3 or lam[-1] <= 0:
            raise ValueError("lam_target needs 3 positive variances")
        if self.strictness <= 0:
            raise ValueError("strictness must be positive")
        object.__setattr__(self, "lam_target", lam)


@dataclass(frozen=True)
class ChurnParams:
    """Noise-churn settings for the stochastic Heun samplers."""

    churn: float = 60.0
    t_min: float = 0.01
    t_max: float = 15.0
    noise: float = 1.0

    def __post_init__(self):
        if self.churn < 0:
            raise ValueError("churn must be non-negative")
        if not (0 < self.t_min <= self.t_max):
            raise ValueError("need 0 < t_min <= t_max")
        if self.noise < 0:
            raise ValueError("noise scale must be non-negative")

    def gamma(self, n_steps: int, sigma: float) -> float:
        if self.t_min <= sigma <= self.t_max:
            return min(self.churn / n_steps, math.sqrt(2.0) - 1.0)
        return 0.0


@dataclass(frozen=True)
class SamplerConfig:
    """Everything a sampler needs besides the prior, provider, and rng.

    ``kind`` picks the family; ``stochastic`` toggles SDD re-noising (dd
    only); ``adaptive`` switches the diffusion samplers to sigma-hat-driven
    stepping. ``schedule.steps`` is the step budget N for every kind.
    """

    kind: str = "dd"
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    adaptive: bool = False
    stochastic: bool = False
    f_max: float = 1e-4
    shape: ShapeConstraint | None = None
    scaffold_mask: tuple[bool, ...] | None = None
    churn: ChurnParams = field(default_factory=ChurnParams)
    n_target: int | None = None
    churn_alpha: float = 0.5
    snapshot_stride: int = 8

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.f_max <= 0:
            raise ValueError("f_max must be positive")
        if not (0.0 <= self.churn_alpha <= 1.0):
            raise ValueError("churn_alpha must lie in [0, 1]")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be at least 1")
        if self.n_target is not None and not (2 <= self.n_target <= self.schedule.steps):
            raise ValueError("n_target must lie in [2, steps]")
        if self.kind != "dd":
            if self.stochastic:
                raise ValueError("the stochastic flag applies to dd only")
            if self.shape is not None or self.scaffold_mask is not None:
                raise ValueError("shape/scaffold constraints apply to dd only")
        elif self.adaptive:
            raise ValueError("dd has no adaptive variant")
        if self.scaffold_mask is not None:
            object.__setattr__(
                self, "scaffold_mask", tuple(bool(b) for b in self.scaffold_mask)
            )

    @property
    def effective_n_target(self) -> int:
        if self.n_target is not None:
            return self.n_target
        return max(2, self.schedule.steps // 2)

    def scaffold_array(self, n_atoms: int) -> np.ndarray | None:
        if self.scaffold_mask is None:
            return None
        if len(self.scaffold_mask) != n_atoms:
            raise ValueError(
                f"scaffold mask length {len(self.scaffold_mask)} "
                f"does not match atom count {n_atoms}"
            )
        return np.array(self.scaffold_mask, dtype=bool)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "schedule": self.schedule.to_dict(),
            "adaptive": self.adaptive,
            "stochastic": self.stochastic,
            "f_max": self.f_max,
            "shape": None
            if self.shape is None
            else {
                "lam_target": list(self.shape.lam_target),
                "strictness": self.shape.strictness,
            },
            "scaffold_mask": None
            if self.scaffold_mask is None
            else list(self.scaffold_mask),
            "churn": {
                "churn": self.churn.churn,
                "t_min": self.churn.t_min,
                "t_max": self.churn.t_max,
                "noise": self.churn.noise,
            },
            "n_target": self.n_target,
            "churn_alpha": self.churn_alpha,
            "snapshot_stride": self.snapshot_stride,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerConfig":
        shape = data.get("shape")
        churn = data.get("churn") or {}
        mask = data.get("scaffold_mask")
        return cls(
            kind=data.get("kind", "dd"),
            schedule=ScheduleParams.from_dict(data.get("schedule") or {}),
            adaptive=bool(data.get("adaptive", False)),
            stochastic=bool(data.get("stochastic", False)),
            f_max=float(data.get("f_max", 1e-4)),
            shape=None
            if shape is None
            else ShapeConstraint(
                tuple(shape["lam_target"]), float(shape.get("strictness", 1.0))
            ),
            scaffold_mask=None if mask is None else tuple(bool(b) for b in mask),
            churn=ChurnParams(
                churn=float(churn.get("churn", 60.0)),
                t_min=float(churn.get("t_min", 0.01)),
                t_max=float(churn.get("t_max", 15.0)),
                noise=float(churn.get("noise", 1.0)),
            ),
            n_target=None if data.get("n_target") is None else int(data["n_target"]),
            churn_alpha=float(data.get("churn_alpha", 0.5)),
            snapshot_stride=int(data.get("snapshot_stride", 8)),
        )


@dataclass
class StepRecord:
    """One sampler step: noise levels, step size, force maximum, NFE so far."""

    step: int
    sigma: float | None
    sigma_hat: float | None
    sigma_next: float | None
    step_size: float | None
    max_force: float
    nfe: int

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "sigma": self.sigma,
            "sigma_hat": self.sigma_hat,
            "sigma_next": self.sigma_next,
            "step_size": self.step_size,
            "max_force": self.max_force,
            "nfe": self.nfe,
        }


@dataclass
class TrajectoryTrace:
    """Per-trajectory record: header, step records, optional snapshots."""

    header: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    termination: str = ""
    nfe: int = 0

    @property
    def steps(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"header": self.header}, sort_keys=True)]
        for record in self.records:
            lines.append(json.dumps(record.to_dict(), sort_keys=True))
        for step, positions in self.snapshots:
            lines.append(
                json.dumps(
                    {"snapshot": {"step": step, "positions": positions.tolist()}},
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {"termination": self.termination, "nfe": self.nfe}, sort_keys=True
            )
        )
        return "\n".join(lines) + "\n"


class SamplerError(RuntimeError):
    """A trajectory aborted; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int, trace: TrajectoryTrace | None = None):
        super().__init__(message)
        self.step = step
        self.trace = trace


@dataclass(frozen=True)
class PriorSpec:
    """How to draw the starting structure of a trajectory.

    ``isotropic`` draws every atom N(center, sigma_max^2 I); ``shaped``
    draws N(center, covariance) rows for a positive-definite 3x3
    covariance; ``mixed`` keeps the scaffold atoms verbatim (first rows of
    the prior) and draws the free atoms around the scaffold centroid
    unless an explicit center is given.
    """

    kind: str = "isotropic"
    sigma_max: float = 30.0
    covariance: tuple | None = None
    center: tuple[float, float, float] | None = None
    scaffold: Structure | None = None

    def __post_init__(self):
        if self.kind not in ("isotropic", "shaped", "mixed"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "isotropic" and self.sigma_max < 0:
            raise ValueError("sigma_max must be non-negative")
        if self.kind == "shaped" and self.covariance is None:
            raise ValueError("shaped prior needs a covariance")
        if self.kind == "mixed" and self.scaffold is None:
            raise ValueError("mixed prior needs a scaffold")
        if self.covariance is not None:
            cov = np.array(self.covariance, dtype=np.float64)
            if cov.shape != (3, 3):
                raise ValueError("covariance must be 3x3")
            object.__setattr__(
                self, "covariance", tuple(tuple(float(v) for v in row) for row in cov)
            )
        if self.center is not None:
            c = np.array(self.center, dtype=np.float64)
            if c.shape != (3,):
                raise ValueError("center must have 3 components")
            object.__setattr__(self, "center", tuple(float(v) for v in c))

    @classmethod
    def isotropic(cls, sigma_max: float = 30.0, center=None) -> "PriorSpec":
        return cls(kind="isotropic", sigma_max=sigma_max, center=center)

    @classmethod
    def shaped(cls, covariance, center=None) -> "PriorSpec":
        return cls(kind="shaped", covariance=covariance, center=center)

    @classmethod
    def mixed(cls, scaffold: Structure, covariance=None, sigma_max: float = 30.0, center=None) -> "PriorSpec":
        return cls(
            kind="mixed",
            scaffold=scaffold,
            covariance=covariance,
            sigma_max=sigma_max,
            center=center,
        )

    def scaffold_mask(self, n_total: int) -> tuple[bool, ...]:
        m = 0 if self.scaffold is None else self.scaffold.n
        return tuple(i < m for i in range(n_total))


def _cholesky_pd(covariance) -> np.ndarray:
    cov = np.array(covariance, dtype=np.float64)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be positive definite") from None


def build_prior(spec: PriorSpec, elements, rng: np.random.Generator) -> Structure:
    """Draw a prior structure for the given (free-atom) element list.

    For ``mixed`` priors, ``elements`` lists the free atoms only and the
    result is scaffold rows followed by free rows.
    """
    elements = tuple(str(e) for e in elements)
    if spec.kind == "isotropic":
        center_v = np.zeros(3) if spec.center is None else np.array(spec.center)
        rows = center_v + spec.sigma_max * rng.standard_normal((len(elements), 3))
        return Structure(elements, rows)
    if spec.kind == "shaped":
        center_v = np.zeros(3) if spec.center is None else np.array(spec.center)
        chol = _cholesky_pd(spec.covariance)
        rows = center_v + rng.standard_normal((len(elements), 3)) @ chol.T
        return Structure(elements, rows)
    # mixed
    scaffold = spec.scaffold
    center_v = (
        centroid(scaffold) if spec.center is None else np.array(spec.center)
    )
    if len(elements) == 0:
        return Structure(scaffold.elements, scaffold.positions, name=scaffold.name)
    if spec.covariance is not None:
        chol = _cholesky_pd(spec.covariance)
        free_rows = center_v + rng.standard_normal((len(elements), 3)) @ chol.T
    else:
        free_rows = center_v + spec.sigma_max * rng.standard_normal((len(elements), 3))
    return Structure(
        scaffold.elements + elements,
        np.vstack([scaffold.positions, free_rows]),
    )


def _project_rows(x: np.ndarray, lam_target, alpha: float) -> np.ndarray:
    """Rescale a coordinate block along its principal axes toward lam_target."""
    cloud = Structure(("X",) * x.shape[0], x)
    frame = principal_frame(cloud)
    mean = x.mean(axis=0)
    local = (x - mean) @ frame.rotation
    lam = np.maximum(frame.variances, 1e-12)
    scale = (1.0 - alpha) * np.sqrt(np.asarray(lam_target) / lam) + alpha
    return (local * scale) @ frame.rotation.T + mean


def apply_shape_projection(structure: Structure, lam_target, alpha: float) -> Structure:
    """Pull the structure's principal variances toward ``lam_target``.

    Per axis the coordinates are scaled by (1 - alpha) sqrt(lam_target /
    lam) + alpha, so alpha = 0 lands exactly on the target and alpha = 1 is
    the identity; the centroid is preserved. ``lam_target`` must be three
    positive variances sorted to match the principal order.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    lam_target = np.asarray(lam_target, dtype=np.float64)
    if lam_target.shape != (3,) or np.any(lam_target <= 0):
        raise ValueError("lam_target needs 3 positive variances")
    return structure.with_positions(
        _project_rows(np.array(structure.positions), lam_target, alpha)
    )


def _evaluate(provider, elements, x, step, trace):
    try:
        return provider.evaluate(Structure(elements, x))
    except (ProviderError, ValueError) as exc:
        raise SamplerError(f"provider failed at step {step}: {exc}", step, trace) from exc


def _snapshot(trace, cfg_stride, step_index, x, final=False):
    if final or step_index % cfg_stride == 0:
        if trace.snapshots and trace.snapshots[-1][0] == step_index:
            return
        trace.snapshots.append((step_index, x.copy()))


def direct_denoise(
    prior: Structure,
    provider: ForceProvider,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
):
    """Direct denoising (with optional SDD noise, shape, and scaffold).

    Each step: project shape (when constrained), evaluate forces, jump to
    the denoised prediction X + F/2, then (SDD) re-inject noise at scale
    beta = 1 - i/N. The force-convergence stop max|F| <= f_max applies only
    when neither stochastic noise nor a shape constraint is active;
    otherwise exactly N steps run. Scaffold rows never change.
    """
    if cfg.kind != "dd":
        raise ValueError("direct_denoise requires a dd config")
    if cfg.stochastic and rng is None:
        raise ValueError("stochastic denoising needs an rng")
    n_steps = cfg.schedule.steps
    mask = cfg.scaffold_array(prior.n)
    free = None if mask is None else ~mask
    x = np.array(prior.positions, dtype=np.float64)
    scaffold_rows = x[mask].copy() if mask is not None else None
    trace = TrajectoryTrace(header={"sampler": "sdd" if cfg.stochastic else "dd", "config": cfg.to_dict()})
    _snapshot(trace, cfg.snapshot_stride, 0, x)
    use_f_max = not (cfg.stochastic or cfg.shape is not None)
    trace.termination = "schedule-exhausted"

    for i in range(n_steps):
        if cfg.shape is not None and (free is None or free.any()):
            alpha = (i / n_steps) ** cfg.shape.strictness
            if free is None:
                x = _project_rows(x, cfg.shape.lam_target, alpha)
            else:
                block = _project_rows(x[free], cfg.shape.lam_target, alpha)
                x = x.copy()
                x[free] = block
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.array(evaluation.forces, dtype=np.float64)
        if mask is not None:
            forces[mask] = 0.0
        max_force = float(np.abs(forces).max())
        x = x + forces / 2.0
        if mask is not None:
            x[mask] = scaffold_rows
        converged = use_f_max and max_force <= cfg.f_max
        if cfg.stochastic and not converged:
            beta = 1.0 - i / n_steps
            noise = rng.standard_normal(x.shape)
            if mask is not None:
                noise[mask] = 0.0
            x = x + beta * noise
            if mask is not None:
                x[mask] = scaffold_rows
        trace.records.append(
            StepRecord(
                step=i,
                sigma=None,
                sigma_hat=evaluation.sigma_hint,
                sigma_next=None,
                step_size=None,
                max_force=max_force,
                nfe=trace.nfe,
            )
        )
        _snapshot(trace, cfg.snapshot_stride, i + 1, x, final=converged or i == n_steps - 1)
        if converged:
            trace.termination = "converged"
            break

    return Structure(prior.elements, x, name=prior.name), trace


def ancestral_update(forces: np.ndarray, sigma: float, sigma_next: float) -> np.ndarray:
    """Score-step displacement s (sigma^2 - sigma_next^2), written stably.

    Equals F/2 * (1 - (sigma_next/sigma)^2): a full denoise when
    sigma_next = 0, exactly zero when the level does not move.
    """
    ratio = sigma_next / sigma
    return 0.5 * np.asarray(forces) * (1.0 - ratio * ratio)


def ancestral_injection_scale(sigma: float, sigma_next: float) -> float:
    """Noise scale preserving the marginal: sqrt(sigma_next^2 (sigma^2 - sigma_next^2) / sigma^2)."""
    return (sigma_next / sigma) * math.sqrt((sigma - sigma_next) * (sigma + sigma_next))


def _warped_step(sigma, sigma_next, params):
    if sigma is None or sigma <= 0 or sigma_next is None or sigma_next <= 0:
        return None
    return observed_step_size(sigma, sigma_next, params)


def ancestral(
    prior: Structure,
    provider: ForceProvider,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    snapshot_stride: int = 8,
):
    """Ancestral sampling along a fixed schedule.

    Per level: move along the score by (sigma^2 - sigma_next^2), then
    re-inject noise at the marginal-preserving scale; the terminal step
    (sigma_next = 0) is the plain denoised prediction with no injection.
    """
    x = np.array(prior.positions, dtype=np.float64)
    n_steps = schedule.n_steps
    trace = TrajectoryTrace(header={"sampler": "ancestral", "schedule": schedule.params.to_dict()})
    _snapshot(trace, snapshot_stride, 0, x)
    for i in range(n_steps):
        sigma, sigma_next = schedule.levels[i], schedule.levels[i + 1]
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.asarray(evaluation.forces, dtype=np.float64)
        x = x + ancestral_update(forces, sigma, sigma_next)
        if sigma_next > 0:
            x = x + ancestral_injection_scale(sigma, sigma_next) * rng.standard_normal(x.shape)
        trace.records.append(
            StepRecord(
                step=i,
                sigma=sigma,
                sigma_hat=evaluation.sigma_hint,
                sigma_next=sigma_next,
                step_size=_warped_step(sigma, sigma_next, schedule.params),
                max_force=float(np.abs(forces).max()),
                nfe=trace.nfe,
            )
        )
        _snapshot(trace, snapshot_stride, i + 1, x, final=i == n_steps - 1)
    trace.termination = "schedule-exhausted"
    return Structure(prior.elements, x, name=prior.name), trace


def heun(
    prior: Structure,
    provider: ForceProvider,
    schedule: NoiseSchedule,
    snapshot_stride: int = 8,
):
    """Deterministic second-order (Heun) probability-flow integration.

    Euler predictor along d = (X - X0_hat)/sigma, then a trapezoidal
    corrector from the same base point; the final step to sigma = 0 is
    predictor-only, so N steps cost 2N - 1 evaluations.
    """
    x = np.array(prior.positions, dtype=np.float64)
    n_steps = schedule.n_steps
    trace = TrajectoryTrace(header={"sampler": "heun", "schedule": schedule.params.to_dict()})
    _snapshot(trace, snapshot_stride, 0, x)
    for i in range(n_steps):
        sigma, sigma_next = schedule.levels[i], schedule.levels[i + 1]
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.asarray(evaluation.forces, dtype=np.float64)
        x0_hat = x + forces / 2.0
        slope = (x - x0_hat) / sigma
        x_pred = x + (sigma_next - sigma) * slope
        if sigma_next == 0.0:
            x = x_pred
        else:
            second = _evaluate(provider, prior.elements, x_pred, i, trace)
            trace.nfe += 1
            x0_second = x_pred + np.asarray(second.forces, dtype=np.float64) / 2.0
            slope_next = (x_pred - x0_second) / sigma_next
            x = x + (sigma_next - sigma) * 0.5 * (slope + slope_next)
        trace.records.append(
            StepRecord(
                step=i,
                sigma=sigma,
                sigma_hat=evaluation.sigma_hint,
                sigma_next=sigma_next,
                step_size=_warped_step(sigma, sigma_next, schedule.params),
                max_force=float(np.abs(forces).max()),
                nfe=trace.nfe,
            )
        )
        _snapshot(trace, snapshot_stride, i + 1, x, final=i == n_steps - 1)
    trace.termination = "schedule-exhausted"
    return Structure(prior.elements, x, name=prior.name), trace


def stochastic_heun(
    prior: Structure,
    provider: ForceProvider,
    schedule: NoiseSchedule,
    churn: ChurnParams,
    rng: np.random.Generator,
    snapshot_stride: int = 8,
):
    """Heun with per-step noise churn inside [t_min, t_max].

    Levels inside the churn window are inflated to sigma~ = sigma (1 +
    gamma) with matching noise injection before the Heun step from sigma~
    down to sigma_next. With churn = 0 the trajectory is bitwise the
    deterministic Heun one.
    """
    x = np.array(prior.positions, dtype=np.float64)
    n_steps = schedule.n_steps
    trace = TrajectoryTrace(
        header={"sampler": "stochastic-heun", "schedule": schedule.params.to_dict()}
    )
    _snapshot(trace, snapshot_stride, 0, x)
    for i in range(n_steps):
        sigma, sigma_next = schedule.levels[i], schedule.levels[i + 1]
        gamma = churn.gamma(n_steps, sigma)
        sigma_up = sigma * (1.0 + gamma)
        if gamma > 0.0:
            x = x + churn.noise * rng.standard_normal(x.shape) * math.sqrt(
                sigma_up * sigma_up - sigma * sigma
            )
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.asarray(evaluation.forces, dtype=np.float64)
        x0_hat = x + forces / 2.0
        slope = (x - x0_hat) / sigma_up
        x_pred = x + (sigma_next - sigma_up) * slope
        if sigma_next == 0.0:
            x = x_pred
        else:
            second = _evaluate(provider, prior.elements, x_pred, i, trace)
            trace.nfe += 1
            x0_second = x_pred + np.asarray(second.forces, dtype=np.float64) / 2.0
            slope_next = (x_pred - x0_second) / sigma_next
            x = x + (sigma_next - sigma_up) * 0.5 * (slope + slope_next)
        trace.records.append(
            StepRecord(
                step=i,
                sigma=sigma,
                sigma_hat=evaluation.sigma_hint,
                sigma_next=sigma_next,
                step_size=_warped_step(sigma, sigma_next, schedule.params),
                max_force=float(np.abs(forces).max()),
                nfe=trace.nfe,
            )
        )
        _snapshot(trace, snapshot_stride, i + 1, x, final=i == n_steps - 1)
    trace.termination = "schedule-exhausted"
    return Structure(prior.elements, x, name=prior.name), trace


def adaptive_ancestral(
    prior: Structure,
    provider: ForceProvider,
    cfg: SamplerConfig,
    rng: np.random.Generator,
):
    """Ancestral sampling with sigma read off the forces each step.

    The first step size is 1/(N_target - 1); afterwards the observed decay
    of sigma_hat sets the pace (floored at 1e-6). The planned level is
    capped by the N-step schedule, and anything at or below sigma_min
    becomes the exact terminal step, so at most N steps ever run.
    """
    params = cfg.schedule
    upper = build_schedule(params).levels
    n_steps = params.steps
    step_size = 1.0 / (cfg.effective_n_target - 1)
    x = np.array(prior.positions, dtype=np.float64)
    trace = TrajectoryTrace(
        header={"sampler": "adaptive-ancestral", "config": cfg.to_dict()}
    )
    _snapshot(trace, cfg.snapshot_stride, 0, x)
    trace.termination = "schedule-exhausted"
    prev_hat = None
    for i in range(n_steps):
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.asarray(evaluation.forces, dtype=np.float64)
        sigma_hat = sigma_estimate(forces)
        if i > 0 and prev_hat is not None and sigma_hat > 0:
            step_size = max(
                observed_step_size(prev_hat, sigma_hat, params), MIN_STEP_SIZE
            )
        if sigma_hat <= 0.0:
            sigma_next = 0.0
            x = x + forces / 2.0
        else:
            sigma_next = clamp_terminal(
                min(next_sigma(sigma_hat, step_size, params), upper[i + 1]), params
            )
            x = x + ancestral_update(forces, sigma_hat, sigma_next)
            if sigma_next > 0.0:
                x = x + ancestral_injection_scale(
                    sigma_hat, sigma_next
                ) * rng.standard_normal(x.shape)
        trace.records.append(
            StepRecord(
                step=i,
                sigma=None,
                sigma_hat=sigma_hat,
                sigma_next=sigma_next,
                step_size=step_size,
                max_force=float(np.abs(forces).max()),
                nfe=trace.nfe,
            )
        )
        _snapshot(
            trace, cfg.snapshot_stride, i + 1, x,
            final=sigma_next == 0.0 or i == n_steps - 1,
        )
        if sigma_hat > 0:
            prev_hat = sigma_hat
        if sigma_next == 0.0:
            trace.termination = "converged"
            break
    return Structure(prior.elements, x, name=prior.name), trace


def adaptive_heun(prior: Structure, provider: ForceProvider, cfg: SamplerConfig):
    """Heun with sigma-hat-driven step sizes under the N-step upper bound.

    A sigma_hat at or below sigma_min terminates immediately with the
    denoised prediction (the Euler step to zero collapses to it); a planned
    level of zero makes the step predictor-only, so the evaluation budget
    never exceeds the non-adaptive 2N - 1.
    """
    params = cfg.schedule
    upper = build_schedule(params).levels
    n_steps = params.steps
    step_size = 1.0 / (cfg.effective_n_target - 1)
    x = np.array(prior.positions, dtype=np.float64)
    trace = TrajectoryTrace(header={"sampler": "adaptive-heun", "config": cfg.to_dict()})
    _snapshot(trace, cfg.snapshot_stride, 0, x)
    trace.termination = "schedule-exhausted"
    prev_hat = None
    for i in range(n_steps):
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.asarray(evaluation.forces, dtype=np.float64)
        x0_hat = x + forces / 2.0
        sigma_hat = sigma_estimate(forces)
        max_force = float(np.abs(forces).max())
        if sigma_hat <= params.sigma_min:
            x = x0_hat
            trace.records.append(
                StepRecord(
                    step=i, sigma=None, sigma_hat=sigma_hat, sigma_next=0.0,
                    step_size=step_size, max_force=max_force, nfe=trace.nfe,
                )
            )
            _snapshot(trace, cfg.snapshot_stride, i + 1, x, final=True)
            trace.termination = "converged"
            break
        if i > 0 and prev_hat is not None:
            step_size = max(
                observed_step_size(prev_hat, sigma_hat, params), MIN_STEP_SIZE
            )
        sigma_next = clamp_terminal(
            min(next_sigma(sigma_hat, step_size, params), upper[i + 1]), params
        )
        slope = (x - x0_hat) / sigma_hat
        x_pred = x + (sigma_next - sigma_hat) * slope
        if sigma_next == 0.0:
            x = x_pred
        else:
            second = _evaluate(provider, prior.elements, x_pred, i, trace)
            trace.nfe += 1
            x0_second = x_pred + np.asarray(second.forces, dtype=np.float64) / 2.0
            slope_next = (x_pred - x0_second) / sigma_next
            x = x + (sigma_next - sigma_hat) * 0.5 * (slope + slope_next)
        trace.records.append(
            StepRecord(
                step=i, sigma=None, sigma_hat=sigma_hat, sigma_next=sigma_next,
                step_size=step_size, max_force=max_force, nfe=trace.nfe,
            )
        )
        _snapshot(
            trace, cfg.snapshot_stride, i + 1, x,
            final=sigma_next == 0.0 or i == n_steps - 1,
        )
        if sigma_next == 0.0:
            trace.termination = "converged"
            break
        prev_hat = sigma_hat
    return Structure(prior.elements, x, name=prior.name), trace


def adaptive_stochastic_heun(
    prior: Structure,
    provider: ForceProvider,
    cfg: SamplerConfig,
    rng: np.random.Generator,
):
    """Stochastic Heun with sigma read off the forces each step.

    sigma_hat is estimated before churn; the injected noise inflates the
    working level to sigma~ while the denoised prediction is reused. For
    the next step-size estimate the stored level is corrected to sigma~ /
    (1 + gamma alpha) so repeated churn does not read as stalled decay.
    """
    params = cfg.schedule
    upper = build_schedule(params).levels
    n_steps = params.steps
    step_size = 1.0 / (cfg.effective_n_target - 1)
    x = np.array(prior.positions, dtype=np.float64)
    trace = TrajectoryTrace(
        header={"sampler": "adaptive-stochastic-heun", "config": cfg.to_dict()}
    )
    _snapshot(trace, cfg.snapshot_stride, 0, x)
    trace.termination = "schedule-exhausted"
    prev_hat = None
    for i in range(n_steps):
        evaluation = _evaluate(provider, prior.elements, x, i, trace)
        trace.nfe += 1
        forces = np.asarray(evaluation.forces, dtype=np.float64)
        x0_hat = x + forces / 2.0
        sigma_hat = sigma_estimate(forces)
        max_force = float(np.abs(forces).max())
        if sigma_hat <= params.sigma_min:
            x = x0_hat
            trace.records.append(
                StepRecord(
                    step=i, sigma=None, sigma_hat=sigma_hat, sigma_next=0.0,
                    step_size=step_size, max_force=max_force, nfe=trace.nfe,
                )
            )
            _snapshot(trace, cfg.snapshot_stride, i + 1, x, final=True)
            trace.termination = "converged"
            break
        if i > 0 and prev_hat is not None:
            step_size = max(
                observed_step_size(prev_hat, sigma_hat, params), MIN_STEP_SIZE
            )
        sigma_next = clamp_terminal(
            min(next_sigma(sigma_hat, step_size, params), upper[i + 1]), params
        )
        gamma = cfg.churn.gamma(n_steps, sigma_hat)
        sigma_up = sigma_hat * (1.0 + gamma)
        if gamma > 0.0:
            x = x + cfg.churn.noise * rng.standard_normal(x.shape) * math.sqrt(
                sigma_up * sigma_up - sigma_hat * sigma_hat
            )
        corrected_hat = sigma_up / (1.0 + gamma * cfg.churn_alpha)
        slope = (x - x0_hat) / sigma_up
        x_pred = x + (sigma_next - sigma_up) * slope
        if sigma_next == 0.0:
            x = x_pred
        else:
            second = _evaluate(provider, prior.elements, x_pred, i, trace)
            trace.nfe += 1
            x0_second = x_pred + np.asarray(second.forces, dtype=np.float64) / 2.0
            slope_next = (x_pred - x0_second) / sigma_next
            x = x + (sigma_next - sigma_up) * 0.5 * (slope + slope_next)
        trace.records.append(
            StepRecord(
                step=i, sigma=None, sigma_hat=sigma_hat, sigma_next=sigma_next,
                step_size=step_size, max_force=max_force, nfe=trace.nfe,
            )
        )
        _snapshot(
            trace, cfg.snapshot_stride, i + 1, x,
            final=sigma_next == 0.0 or i == n_steps - 1,
        )
        if sigma_next == 0.0:
            trace.termination = "converged"
            break
        prev_hat = corrected_hat
    return Structure(prior.elements, x, name=prior.name), trace


def run_sampler(
    prior: Structure,
    provider: ForceProvider,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
):
    """Dispatch on (kind, adaptive) and run one trajectory."""
    if cfg.kind == "dd":
        return direct_denoise(prior, provider, cfg, rng)
    needs_rng = cfg.kind in ("ancestral", "stochastic-heun")
    if needs_rng and rng is None:
        raise ValueError(f"{cfg.kind} sampling needs an rng")
    if cfg.adaptive:
        if cfg.kind == "ancestral":
            return adaptive_ancestral(prior, provider, cfg, rng)
        if cfg.kind == "heun":
            return adaptive_heun(prior, provider, cfg)
        return adaptive_stochastic_heun(prior, provider, cfg, rng)
    schedule = build_schedule(cfg.schedule)
    if cfg.kind == "ancestral":
        return ancestral(prior, provider, schedule, rng, snapshot_stride=cfg.snapshot_stride)
    if cfg.kind == "heun":
        return heun(prior, provider, schedule, snapshot_stride=cfg.snapshot_stride)
    return stochastic_heun(
        prior, provider, schedule, cfg.churn, rng, snapshot_stride=cfg.snapshot_stride
    )


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream for trajectory ``index``.

    Streams are derived as default_rng(SeedSequence([master_seed, index])),
    so any trajectory can be replayed without generating its predecessors.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def run_batch(
    prior_spec: PriorSpec,
    elements,
    provider: ForceProvider,
    cfg: SamplerConfig,
    count: int,
    master_seed: int,
    jobs: int = 1,
):
    """Run ``count`` independent trajectories; results are index-ordered.

    The provider is shared (it must be stateless); each trajectory draws
    its prior and noise from its own stream (see :func:`trajectory_rng`).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if jobs < 1:
        raise ValueError("jobs must be at least 1")

    def one(index: int):
        rng = trajectory_rng(master_seed, index)
        prior = build_prior(prior_spec, elements, rng)
        structure, trace = run_sampler(prior, provider, cfg, rng)
        trace.header["master_seed"] = int(master_seed)
        trace.header["trajectory_index"] = index
        return Structure(
            structure.elements, structure.positions, name=f"sample-{index:05d}"
        ), trace

    if jobs == 1:
        return [one(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(count)))
