"""Force providers: the analytic mixture oracle and the remote HTTP client.

A force provider maps a structure to pseudo-forces, optionally advertising
the noise level it assumed. The oracle closes over a fixed reference set
and computes the exact posterior-mean denoiser of the Gaussian mixture
centered on those references, so every sampler identity can be checked
against it without a trained model. The remote provider speaks the same
contract over HTTP.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import requests
from scipy.special import logsumexp

from .geometry import Structure

__all__ = [
    "ForceEvaluation",
    "ForceProvider",
    "ReferenceSet",
    "mixture_denoiser",
    "OracleForceProvider",
    "RemoteForceProvider",
    "ProviderError",
    "ProviderTransportError",
    "ProviderSchemaError",
    "ProviderShapeError",
]


class ProviderError(RuntimeError):
    """Base class for force-provider failures."""


class ProviderTransportError(ProviderError):
    """The remote endpoint could not be reached or did not answer."""


class ProviderSchemaError(ProviderError):
    """The remote response is missing or mistypes a field."""

    def __init__(self, message: str, fieldname: str | None = None):
        super().__init__(message)
        self.field = fieldname


class ProviderShapeError(ProviderError):
    """Returned forces do not match the structure's atom count."""


@dataclass
class ForceEvaluation:
    """Forces for one structure, plus the provider's noise-level hint.

    ``sigma_hint`` is None when the provider has no opinion; ``info``
    carries provider-specific diagnostics (e.g. fixed-point convergence).
    """

    forces: np.ndarray
    sigma_hint: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=np.float64)


class ForceProvider:
    """Evaluate pseudo-forces for a structure.

    Implementations must be stateless across calls (safe to share between
    threads) and must not mutate the input structure.
    """

    def evaluate(self, structure: Structure) -> ForceEvaluation:
        raise NotImplementedError


class ReferenceSet:
    """Immutable stack of same-composition reference structures."""

    def __init__(self, structures):
        structures = list(structures)
        if not structures:
            raise ValueError("reference set cannot be empty")
        base = sorted(structures[0].elements)
        for s in structures[1:]:
            if sorted(s.elements) != base:
                raise ValueError("references must share one element multiset")
        self.structures = tuple(structures)
        self.elements = structures[0].elements
        stack = np.stack([s.positions for s in structures])
        stack.setflags(write=False)
        self.stack = stack

    def __len__(self) -> int:
        return len(self.structures)

    @property
    def n_atoms(self) -> int:
        return self.stack.shape[1]

    def squared_distances(self, positions: np.ndarray) -> np.ndarray:
        """Frobenius distance squared from ``positions`` to each reference."""
        delta = self.stack - positions[None, :, :]
        return (delta ** 2).sum(axis=(1, 2))


def mixture_denoiser(x: Structure, refs: ReferenceSet, sigma: float):
    """Posterior-mean denoiser of the reference mixture at noise level sigma.

    Weights are softmax(-||X - X_k||_F^2 / (2 sigma^2)) computed through
    log-sum-exp, so widely separated references cannot underflow to NaN.

    Returns
    -------
    (Structure, np.ndarray)
        The weighted reference average and the weight vector (sums to 1).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if sorted(x.elements) != sorted(refs.elements):
        raise ValueError("element multisets differ")
    d2 = refs.squared_distances(x.positions)
    logw = -d2 / (2.0 * sigma * sigma)
    logw -= logsumexp(logw)
    weights = np.exp(logw)
    denoised = np.tensordot(weights, refs.stack, axes=1)
    return x.with_positions(denoised), weights


class OracleForceProvider(ForceProvider):
    """Exact pseudo-forces toward the mixture denoiser of a reference set.

    With ``sigma`` fixed the mixture is evaluated at that level. Without it
    the provider is noise-agnostic: the level is inferred from the input by
    a fixed-point iteration sigma_j+1^2 = ||X - X0(sigma_j)||_F^2 / (3n),
    seeded from the nearest reference, tolerance 1e-6 relative, at most 50
    iterations (non-convergence is flagged in ``info``).
    """

    def __init__(self, refs: ReferenceSet, sigma: float | None = None):
        if sigma is not None and sigma <= 0:
            raise ValueError("fixed sigma must be positive")
        self.refs = refs
        self.sigma = sigma

    def evaluate(self, structure: Structure) -> ForceEvaluation:
        if sorted(structure.elements) != sorted(self.refs.elements):
            raise ValueError("element multisets differ")
        if self.sigma is not None:
            denoised, _ = mixture_denoiser(structure, self.refs, self.sigma)
            forces = -2.0 * (structure.positions - denoised.positions)
            return ForceEvaluation(forces, sigma_hint=self.sigma, info={"converged": True})
        sigma, denoised, converged, iterations = self._infer_sigma(structure)
        forces = -2.0 * (structure.positions - denoised.positions)
        return ForceEvaluation(
            forces,
            sigma_hint=sigma,
            info={"converged": converged, "iterations": iterations},
        )

    def _infer_sigma(self, structure: Structure):
        scale = 3.0 * self.refs.n_atoms
        d2 = self.refs.squared_distances(structure.positions)
        sigma = float(np.sqrt(d2.min() / scale))
        if sigma < 1e-12:
            # Input coincides with a reference: zero residual, zero noise.
            nearest = self.refs.structures[int(np.argmin(d2))]
            return 0.0, structure.with_positions(nearest.positions), True, 0
        denoised = None
        for iteration in range(1, 51):
            denoised, _ = mixture_denoiser(structure, self.refs, sigma)
            residual = structure.positions - denoised.positions
            new_sigma = float(np.sqrt((residual ** 2).sum() / scale))
            if new_sigma < 1e-12:
                return new_sigma, denoised, True, iteration
            if abs(new_sigma - sigma) < 1e-6 * new_sigma:
                return new_sigma, denoised, True, iteration
            sigma = new_sigma
        return sigma, denoised, False, 50


class RemoteForceProvider(ForceProvider):
    """Client for the JSON-over-HTTP force protocol.

    POSTs {"elements", "positions"} to ``<endpoint>/evaluate`` and expects
    {"forces", "sigma_hint"} back; unknown response fields are ignored.
    Transport failures, schema violations, and force-shape mismatches
    raise the matching typed error.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def evaluate(self, structure: Structure) -> ForceEvaluation:
        payload = {
            "elements": list(structure.elements),
            "positions": structure.positions.tolist(),
        }
        try:
            response = requests.post(
                f"{self.endpoint}/evaluate", json=payload, timeout=self.timeout
            )
            response.raise_for_status()
        except requests.RequestException as exc:
            raise ProviderTransportError(f"force endpoint failed: {exc}") from exc
        try:
            body = response.json()
        except ValueError as exc:
            raise ProviderSchemaError("response body is not JSON") from exc

        if not isinstance(body, dict) or "forces" not in body:
            raise ProviderSchemaError("response missing 'forces'", fieldname="forces")
        try:
            forces = np.asarray(body["forces"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ProviderSchemaError(
                "'forces' is not a numeric array", fieldname="forces"
            ) from exc
        if forces.shape != (structure.n, 3):
            raise ProviderShapeError(
                f"forces shape {forces.shape} does not match structure ({structure.n}, 3)"
            )
        sigma_hint = body.get("sigma_hint")
        if sigma_hint is not None and not isinstance(sigma_hint, (int, float)):
            raise ProviderSchemaError(
                "'sigma_hint' must be a number or null", fieldname="sigma_hint"
            )
        return ForceEvaluation(forces, sigma_hint=None if sigma_hint is None else float(sigma_hint))
