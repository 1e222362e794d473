"""Ensemble metrics: bond perception, validity, and distribution distances.

Bonds are perceived from covalent radii with a multiplicative tolerance; a
structure is valid when its bond graph is connected, every atom carries
exactly its nominal valence, and no two atoms sit closer than the minimum
contact distance. Ensembles are compared through histogram Jensen-Shannon
divergences and max-pairwise-distance statistics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .geometry import Structure, max_pairwise_distance, shape_point

__all__ = [
    "COVALENT_RADII",
    "VALENCES",
    "BOND_SCALE",
    "MIN_CONTACT",
    "perceive_bonds",
    "ValidityEntry",
    "validity",
    "js_divergence",
    "EnsembleReport",
    "ensemble_report",
    "write_report_json",
    "write_report_csv",
]

COVALENT_RADII = {"H": 0.31, "C": 0.76, "N": 0.71, "O": 0.66, "F": 0.57}
VALENCES = {"H": 1, "C": 4, "N": 3, "O": 2, "F": 1}
BOND_SCALE = 1.2
MIN_CONTACT = 0.5


def perceive_bonds(structure: Structure, scale: float = BOND_SCALE) -> list:
    """Bonded pairs (i, j), i < j, by the covalent-radius criterion.

    Two atoms bond when their distance is at most scale * (r_i + r_j).
    Unknown elements raise ValueError.
    """
    radii = []
    for element in structure.elements:
        if element not in COVALENT_RADII:
            raise ValueError(f"unknown element {element!r}")
        radii.append(COVALENT_RADII[element])
    radii = np.array(radii)
    x = structure.positions
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    cutoff = scale * (radii[:, None] + radii[None, :])
    bonds = []
    for i in range(structure.n):
        for j in range(i + 1, structure.n):
            if dist[i, j] <= cutoff[i, j]:
                bonds.append((i, j))
    return bonds


@dataclass(frozen=True)
class ValidityEntry:
    """Verdict for one structure; ``reason`` is None when valid."""

    valid: bool
    reason: str | None = None


def validity(structure: Structure, scale: float = BOND_SCALE) -> ValidityEntry:
    """Connectivity + exact-valence + minimum-contact check.

    Failures report one reason: "parse" (unsupported element),
    "overlapping-atoms" (any pair below the minimum contact),
    "disconnected", or "bad-valence". Never raises.
    """
    try:
        bonds = perceive_bonds(structure, scale=scale)
    except ValueError:
        return ValidityEntry(False, "parse")
    x = structure.positions
    if structure.n > 1:
        diff = x[:, None, :] - x[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=-1))
        off_diag = dist[np.triu_indices(structure.n, k=1)]
        if off_diag.min() < MIN_CONTACT:
            return ValidityEntry(False, "overlapping-atoms")
    degree = [0] * structure.n
    adjacency = [[] for _ in range(structure.n)]
    for i, j in bonds:
        degree[i] += 1
        degree[j] += 1
        adjacency[i].append(j)
        adjacency[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for neighbor in adjacency[node]:
            if neighbor not in seen:
                seen.add(neighbor)
                stack.append(neighbor)
    if len(seen) != structure.n:
        return ValidityEntry(False, "disconnected")
    for element, d in zip(structure.elements, degree):
        if d != VALENCES[element]:
            return ValidityEntry(False, "bad-valence")
    return ValidityEntry(True, None)


def js_divergence(a, b, bins: int = 100) -> float:
    """Jensen-Shannon divergence (base 2) of two samples' histograms.

    Both samples are binned over their shared range; identical samples give
    0, disjointly supported samples give 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        # An epsilon-wide range cannot support finite bins; the samples are
        # indistinguishable at histogram resolution.
        return 0.0
    p, _ = np.histogram(a, bins=bins, range=(lo, hi))
    q, _ = np.histogram(b, bins=bins, range=(lo, hi))
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        term_p = np.where(p > 0, p * np.log2(p / m), 0.0)
        term_q = np.where(q > 0, q * np.log2(q / m), 0.0)
    return float(0.5 * term_p.sum() + 0.5 * term_q.sum())


@dataclass
class EnsembleReport:
    """Summary statistics for a generated ensemble against a reference."""

    n_generated: int
    n_reference: int
    validity_fraction: float
    failure_counts: dict
    entries: list
    mpd_generated: list
    mpd_reference: list
    mpd_js: float | None
    shape_points: list
    shape_mean: tuple | None
    nfe: dict | None
    bins: int

    def to_dict(self) -> dict:
        return {
            "n_generated": self.n_generated,
            "n_reference": self.n_reference,
            "validity_fraction": self.validity_fraction,
            "failure_counts": dict(sorted(self.failure_counts.items())),
            "entries": [
                {"valid": e.valid, "reason": e.reason} for e in self.entries
            ],
            "mpd": {
                "generated": self.mpd_generated,
                "reference": self.mpd_reference,
                "js_divergence": self.mpd_js,
            },
            "shape": {
                "points": self.shape_points,
                "mean": None if self.shape_mean is None else list(self.shape_mean),
            },
            "nfe": self.nfe,
            "bins": self.bins,
        }


def ensemble_report(generated, reference=None, bins: int = 100, traces=None) -> EnsembleReport:
    """Validity, max-pairwise-distance, and shape statistics for an ensemble.

    ``reference`` enables the MPD Jensen-Shannon comparison; ``traces``
    (aligned with ``generated``) adds evaluation-count statistics.
    """
    generated = list(generated)
    if not generated:
        raise ValueError("need at least one generated structure")
    reference = list(reference) if reference is not None else []

    entries = [validity(s) for s in generated]
    n_valid = sum(1 for e in entries if e.valid)
    failures: dict[str, int] = {}
    for e in entries:
        if not e.valid:
            failures[e.reason] = failures.get(e.reason, 0) + 1

    mpd_generated = [max_pairwise_distance(s) for s in generated]
    mpd_reference = [max_pairwise_distance(s) for s in reference]
    mpd_js = (
        js_divergence(mpd_generated, mpd_reference, bins=bins)
        if mpd_reference
        else None
    )

    shape_points = []
    accumulated = []
    for s in generated:
        try:
            point = shape_point(s)
        except ValueError:
            shape_points.append(None)
            continue
        shape_points.append([point.npr1, point.npr2])
        accumulated.append([point.npr1, point.npr2])
    shape_mean = (
        tuple(np.mean(accumulated, axis=0)) if accumulated else None
    )

    nfe = None
    if traces is not None:
        traces = list(traces)
        if len(traces) != len(generated):
            raise ValueError("traces must align with generated structures")
        counts = np.array([t.nfe for t in traces])
        nfe = {
            "mean": float(counts.mean()),
            "min": int(counts.min()),
            "max": int(counts.max()),
            "per_structure": [int(c) for c in counts],
        }

    return EnsembleReport(
        n_generated=len(generated),
        n_reference=len(reference),
        validity_fraction=n_valid / len(generated),
        failure_counts=failures,
        entries=entries,
        mpd_generated=mpd_generated,
        mpd_reference=mpd_reference,
        mpd_js=mpd_js,
        shape_points=shape_points,
        shape_mean=shape_mean,
        nfe=nfe,
        bins=bins,
    )


def write_report_json(report: EnsembleReport, path) -> None:
    """Serialize the report deterministically (sorted keys, trailing newline)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(report: EnsembleReport, directory) -> list:
    """Write validity-vs-NFE and MPD-histogram tables; returns the paths."""
    import os

    paths = []
    if report.nfe is not None:
        path = os.path.join(directory, "validity_vs_nfe.csv")
        buckets: dict[int, list[bool]] = {}
        for count, entry in zip(report.nfe["per_structure"], report.entries):
            buckets.setdefault(count, []).append(entry.valid)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["nfe", "count", "valid", "valid_fraction"])
            for count in sorted(buckets):
                flags = buckets[count]
                writer.writerow(
                    [count, len(flags), sum(flags), f"{sum(flags) / len(flags):.6f}"]
                )
        paths.append(path)

    values = report.mpd_generated + report.mpd_reference
    lo, hi = min(values), max(values)
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        hi = lo + 1.0
    edges = np.linspace(lo, hi, report.bins + 1)
    gen_counts, _ = np.histogram(report.mpd_generated, bins=edges)
    ref_counts, _ = np.histogram(report.mpd_reference, bins=edges)
    path = os.path.join(directory, "mpd_histogram.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "generated", "reference"])
        for i in range(report.bins):
            writer.writerow(
                [f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", int(gen_counts[i]), int(ref_counts[i])]
            )
    paths.append(path)
    return paths
