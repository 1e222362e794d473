"""Shape statistics: covariance embedding, mixture fit, and target sampling.

Position covariances are embedded in an unconstrained 6-vector through
their Cholesky factor (diagonal entries logged), where a Gaussian mixture
per atom count models the shape distribution of a training set. Decoding
any real 6-vector yields a positive-definite covariance, so draws from the
fitted model are always usable as prior covariances or projection targets.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .geometry import Structure, covariance3

__all__ = [
    "cov_to_vec",
    "vec_to_cov",
    "GroupModel",
    "ShapeModel",
    "fit_shape_model",
    "named_targets",
    "absolute_target",
    "sample_conditioned",
]

logger = logging.getLogger(__name__)

_LOG_IDX = (0, 2, 5)  # positions of the logged diagonal entries in the 6-vector
_TRIL_IDX = ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2))


def cov_to_vec(cov: np.ndarray) -> np.ndarray:
    """Embed a positive-definite 3x3 covariance as an unconstrained 6-vector.

    The vector holds the lower-Cholesky entries in row-major order with the
    diagonal logged: (log L11, L21, log L22, L31, L32, log L33).
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (3, 3):
        raise ValueError("covariance must be 3x3")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be positive definite") from None
    vec = np.array([chol[i, j] for i, j in _TRIL_IDX])
    vec[list(_LOG_IDX)] = np.log(vec[list(_LOG_IDX)])
    return vec


def vec_to_cov(vec: np.ndarray) -> np.ndarray:
    """Decode a 6-vector back to a positive-definite covariance (exact inverse)."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (6,):
        raise ValueError("shape vector must have 6 entries")
    entries = vec.copy()
    entries[list(_LOG_IDX)] = np.exp(entries[list(_LOG_IDX)])
    chol = np.zeros((3, 3))
    for value, (i, j) in zip(entries, _TRIL_IDX):
        chol[i, j] = value
    return chol @ chol.T


def _log_gaussian(data: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    centered = (data - mean).T
    white = solve_triangular(chol, centered, lower=True)
    maha = (white ** 2).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    d = data.shape[1]
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def _ridge(cov: np.ndarray) -> np.ndarray:
    scale = max(np.trace(cov) / 6.0, 1e-6)
    return cov + (1e-6 * scale) * np.eye(cov.shape[0])


def _kmeanspp_centers(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centers = [data[int(rng.integers(n))]]
    for _ in range(k - 1):
        d2 = np.min(
            [((data - c) ** 2).sum(axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(data[int(rng.integers(n))])
        else:
            centers.append(data[int(rng.choice(n, p=d2 / total))])
    return np.stack(centers)


@dataclass
class GroupModel:
    """Gaussian mixture over shape vectors for one atom count."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    ll_history: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return len(self.weights)

    def log_likelihood(self, data: np.ndarray) -> float:
        parts = np.stack(
            [
                np.log(w) + _log_gaussian(data, m, c)
                for w, m, c in zip(self.weights, self.means, self.covariances)
            ]
        )
        return float(logsumexp(parts, axis=0).sum())

    def sample_vec(self, rng: np.random.Generator) -> np.ndarray:
        component = int(rng.choice(self.k, p=self.weights))
        chol = np.linalg.cholesky(self.covariances[component])
        return self.means[component] + chol @ rng.standard_normal(6)


def _fit_group(data: np.ndarray, components: int, rng: np.random.Generator) -> GroupModel:
    n, d = data.shape
    if n < components:
        # Too few samples for a mixture: single full-covariance Gaussian.
        mean = data.mean(axis=0)
        centered = data - mean
        cov = _ridge(centered.T @ centered / n)
        model = GroupModel(np.array([1.0]), mean[None, :], cov[None, :, :])
        model.ll_history.append(model.log_likelihood(data))
        return model

    centers = _kmeanspp_centers(data, components, rng)
    assign = np.argmin(
        ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1
    )
    weights = np.empty(components)
    means = np.empty((components, d))
    covs = np.empty((components, d, d))
    global_cov = np.cov(data.T, bias=True) + np.eye(d) * 1e-6
    for k in range(components):
        member = data[assign == k]
        if len(member) == 0:
            weights[k] = 1.0 / n
            means[k] = centers[k]
            covs[k] = _ridge(global_cov)
            continue
        weights[k] = len(member) / n
        means[k] = member.mean(axis=0)
        centered = member - means[k]
        covs[k] = _ridge(centered.T @ centered / len(member) + 1e-8 * np.eye(d))
    weights /= weights.sum()

    model = GroupModel(weights, means, covs)
    previous = -np.inf
    for _ in range(500):
        log_parts = np.stack(
            [
                np.log(model.weights[k])
                + _log_gaussian(data, model.means[k], model.covariances[k])
                for k in range(components)
            ]
        )
        log_norm = logsumexp(log_parts, axis=0)
        ll = float(log_norm.sum())
        model.ll_history.append(ll)
        if ll - previous < 1e-7 * n:
            break
        previous = ll
        resp = np.exp(log_parts - log_norm)
        counts = resp.sum(axis=1)
        for k in range(components):
            if counts[k] < 1e-10:
                # Starved component: keep its parameters, shrink its weight.
                model.weights[k] = 1e-10
                continue
            model.weights[k] = counts[k] / n
            model.means[k] = resp[k] @ data / counts[k]
            centered = data - model.means[k]
            cov = (resp[k][:, None] * centered).T @ centered / counts[k]
            model.covariances[k] = _ridge(cov)
        model.weights /= model.weights.sum()
    return model


@dataclass
class ShapeModel:
    """Per-atom-count mixtures over shape vectors."""

    groups: dict
    components: int

    def atom_counts(self) -> list[int]:
        return sorted(self.groups)

    def group_for(self, n_atoms: int):
        """The group for ``n_atoms``, or the nearest modeled count."""
        if n_atoms in self.groups:
            return n_atoms, self.groups[n_atoms]
        counts = self.atom_counts()
        nearest = min(counts, key=lambda c: (abs(c - n_atoms), c))
        logger.warning(
            "no shape group for %d atoms; using nearest modeled count %d",
            n_atoms,
            nearest,
        )
        return nearest, self.groups[nearest]

    def sample_cov(self, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
        """Draw a positive-definite covariance for the given atom count."""
        _, group = self.group_for(n_atoms)
        return vec_to_cov(group.sample_vec(rng))

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "components": self.components,
            "groups": {
                str(n): {
                    "weights": g.weights.tolist(),
                    "means": g.means.tolist(),
                    "covariances": g.covariances.tolist(),
                }
                for n, g in self.groups.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeModel":
        if data.get("version") != 1:
            raise ValueError(f"unsupported shape model version {data.get('version')!r}")
        groups = {}
        for key, g in data["groups"].items():
            groups[int(key)] = GroupModel(
                np.asarray(g["weights"], dtype=np.float64),
                np.asarray(g["means"], dtype=np.float64),
                np.asarray(g["covariances"], dtype=np.float64),
            )
        return cls(groups=groups, components=int(data.get("components", 5)))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ShapeModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_shape_model(structures, components: int = 5, seed: int = 0) -> ShapeModel:
    """Fit per-atom-count shape mixtures to a structure collection.

    Structures are grouped by atom count; each group's position covariances
    are embedded with :func:`cov_to_vec` and fitted with a ``components``-
    component full-covariance mixture (EM, k-means++ init, deterministic
    under ``seed``). Groups smaller than ``components`` fall back to a
    single Gaussian.
    """
    structures = list(structures)
    if not structures:
        raise ValueError("need at least one structure")
    if components < 1:
        raise ValueError("components must be at least 1")
    by_count: dict[int, list[np.ndarray]] = {}
    for s in structures:
        by_count.setdefault(s.n, []).append(cov_to_vec(_nudged(covariance3(s))))
    groups = {}
    for n_atoms in sorted(by_count):
        data = np.stack(by_count[n_atoms])
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(n_atoms)]))
        groups[n_atoms] = _fit_group(data, components, rng)
    return ShapeModel(groups=groups, components=components)


def _nudged(cov: np.ndarray) -> np.ndarray:
    # Planar or linear clouds have singular covariances; lift them just
    # enough to admit a Cholesky factor.
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= 1e-10:
        return cov + (1e-10 + abs(min(eigvals[0], 0.0))) * np.eye(3)
    return cov


def named_targets() -> dict:
    """Canonical relative-variance targets for rod, sphere, and disc."""
    return {
        "rod": (0.9, 0.05, 0.05),
        "sphere": (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        "disc": (0.5, 0.5, 0.0),
    }


def absolute_target(relative, trace: float, floor: float = 1e-4) -> np.ndarray:
    """Scale relative variances to absolute ones summing to ``trace``.

    Zero entries (the disc target) are floored at ``floor`` of the total so
    the result stays positive definite.
    """
    rel = np.asarray(relative, dtype=np.float64)
    if rel.shape != (3,) or np.any(rel < 0) or rel.sum() <= 0:
        raise ValueError("relative variances must be 3 non-negative values")
    if trace <= 0:
        raise ValueError("trace must be positive")
    rel = np.maximum(rel / rel.sum(), floor)
    rel = rel / rel.sum()
    return np.sort(rel)[::-1] * trace


def _relative_eigvals(cov: np.ndarray) -> np.ndarray:
    lam = np.sort(np.linalg.eigvalsh(cov))[::-1]
    return lam / lam.sum()


def sample_conditioned(
    model: ShapeModel,
    n_atoms: int,
    relative_target,
    rng: np.random.Generator,
    tol: float = 0.1,
    max_attempts: int = 200,
):
    """Draw a covariance whose relative eigenvalues match a shape target.

    Rejection-samples the group mixture until the L1 distance between the
    normalized eigenvalue spectra drops below ``tol``. After
    ``max_attempts`` rejections the closest draw is rescaled exactly onto
    the target spectrum (keeping its eigenvectors and trace).

    Returns
    -------
    (np.ndarray, bool)
        The covariance and whether it was accepted by rejection (False
        means the rescale fallback was used).
    """
    target = np.asarray(relative_target, dtype=np.float64)
    target = np.sort(target / target.sum())[::-1]
    best = None
    best_distance = np.inf
    for _ in range(max_attempts):
        cov = model.sample_cov(n_atoms, rng)
        distance = float(np.abs(_relative_eigvals(cov) - target).sum())
        if distance < tol:
            return cov, True
        if distance < best_distance:
            best, best_distance = cov, distance
    eigvals, eigvecs = np.linalg.eigh(best)
    order = np.argsort(-eigvals)
    eigvecs = eigvecs[:, order]
    rel = np.maximum(target, 1e-4)
    rel = rel / rel.sum()
    lam = rel * eigvals.sum()
    return (eigvecs * lam) @ eigvecs.T, False
