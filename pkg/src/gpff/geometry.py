"""Geometry value types and shape descriptors for 3D atom clouds.

Coordinates are Cartesian angstroms; covariances are in squared angstroms.
Every type in this module is an immutable value and every operation is a
pure function, so structures can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Structure",
    "Frame",
    "ShapePoint",
    "center",
    "centroid",
    "covariance3",
    "principal_frame",
    "shape_point",
    "max_pairwise_distance",
    "perturb",
    "rmsd",
]


def _as_positions(positions, n_expected=None):
    """Validate and freeze an (n, 3) float64 coordinate array."""
    arr = np.array(positions, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"positions must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("structure needs at least one atom")
    if n_expected is not None and arr.shape[0] != n_expected:
        raise ValueError(
            f"expected {n_expected} coordinate rows, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("positions must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Structure:
    """An ordered list of element symbols with Cartesian coordinates.

    Parameters
    ----------
    elements : sequence of str
        Element symbol per atom, e.g. ``("C", "H", "H", "H", "H")``.
    positions : array_like, shape (n, 3)
        Cartesian coordinates in angstroms. Stored as a read-only copy.
    name : str, optional
        Free-form label carried through I/O round trips.
    """

    elements: tuple[str, ...]
    positions: np.ndarray
    name: str | None = None

    def __post_init__(self):
        elements = tuple(str(e) for e in self.elements)
        if len(elements) == 0:
            raise ValueError("structure needs at least one atom")
        positions = _as_positions(self.positions, n_expected=len(elements))
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "positions", positions)

    @property
    def n(self) -> int:
        return len(self.elements)

    def with_positions(self, positions) -> "Structure":
        """Same elements and name, new coordinates."""
        return Structure(self.elements, positions, name=self.name)


@dataclass(frozen=True)
class Frame:
    """Principal axes of an atom cloud.

    ``rotation`` holds the axes as columns, ordered by descending variance;
    it is orthonormal (rotation.T @ rotation == I). ``variances`` are the
    per-axis population variances, sorted non-increasing.
    """

    rotation: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64, copy=True)
        var = np.array(self.variances, dtype=np.float64, copy=True)
        if rot.shape != (3, 3) or var.shape != (3,):
            raise ValueError("frame needs a 3x3 rotation and 3 variances")
        rot.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "variances", var)


@dataclass(frozen=True)
class ShapePoint:
    """Normalized principal-variance ratios locating a cloud in shape space.

    With per-axis variances q1 >= q2 >= q3, npr1 = (q2+q3)/(q1+q2) and
    npr2 = (q1+q3)/(q1+q2). Rods sit near (0, 1), spheres at (1, 1), discs
    at (0.5, 0.5); 0 <= npr1 <= npr2 <= 1 up to rounding.
    """

    npr1: float
    npr2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.npr1, self.npr2], dtype=np.float64)


def centroid(structure: Structure) -> np.ndarray:
    """Mean position, shape (3,)."""
    return structure.positions.mean(axis=0)


def center(structure: Structure) -> Structure:
    """Translate the centroid to the origin."""
    return structure.with_positions(structure.positions - centroid(structure))


def covariance3(structure: Structure) -> np.ndarray:
    """Population (1/n) covariance of the atom positions, shape (3, 3)."""
    delta = structure.positions - centroid(structure)
    return (delta.T @ delta) / structure.n


def _orient_columns(vectors: np.ndarray) -> np.ndarray:
    # Fix each eigenvector's sign: largest-magnitude entry positive.
    out = vectors.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out


def principal_frame(structure: Structure) -> Frame:
    """Eigendecomposition of the position covariance.

    Returns
    -------
    Frame
        Axes as columns sorted by descending variance; ties keep the
        original axis order (stable sort). Signs are fixed so the
        largest-magnitude entry of each axis is positive.
    """
    cov = covariance3(structure)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")
    return Frame(_orient_columns(eigvecs[:, order]), np.maximum(eigvals[order], 0.0))


def shape_point(structure: Structure) -> ShapePoint:
    """Map a structure to its (npr1, npr2) shape-space coordinates.

    Raises
    ------
    ValueError
        If the cloud has zero extent (all atoms coincident).
    """
    var = principal_frame(structure).variances
    if var.sum() <= 0.0 or var[0] <= 0.0:
        raise ValueError("zero extent: all atoms coincide")
    q1, q2, q3 = var
    denom = q1 + q2
    return ShapePoint(float((q2 + q3) / denom), float((q1 + q3) / denom))


def max_pairwise_distance(structure: Structure) -> float:
    """Largest interatomic distance in angstroms.

    Raises
    ------
    ValueError
        If the structure has fewer than two atoms.
    """
    if structure.n < 2:
        raise ValueError("max pairwise distance needs at least 2 atoms")
    x = structure.positions
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def perturb(structure: Structure, sigma: float, rng: np.random.Generator) -> Structure:
    """Add isotropic Gaussian noise of scale ``sigma`` to every coordinate."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    noise = rng.standard_normal((structure.n, 3))
    return structure.with_positions(structure.positions + sigma * noise)


def rmsd(a: Structure, b: Structure) -> float:
    """Coordinate RMSD between two equally sized structures (no alignment)."""
    if a.n != b.n:
        raise ValueError("structures must have the same atom count")
    delta = a.positions - b.positions
    return float(np.sqrt((delta ** 2).sum() / a.n))
