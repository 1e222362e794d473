import itertools

import numpy as np
import pytest

from gpff import Permutation, Structure, align_permutation, perturb, solve_assignment

from conftest import random_structure


def brute_force_cost(noisy, reference):
    """Minimum total squared distance over all per-element permutations."""
    ref_c = reference.positions - reference.positions.mean(axis=0)
    noisy_c = noisy.positions - noisy.positions.mean(axis=0)
    total = 0.0
    for element in sorted(set(reference.elements)):
        ref_idx = [i for i, e in enumerate(reference.elements) if e == element]
        noisy_idx = [i for i, e in enumerate(noisy.elements) if e == element]
        best = np.inf
        for perm in itertools.permutations(noisy_idx):
            cost = sum(
                ((ref_c[i] - noisy_c[j]) ** 2).sum() for i, j in zip(ref_idx, perm)
            )
            best = min(best, cost)
        total += best
    return total


def aligned_cost(noisy, reference, aligned):
    ref_c = reference.positions - reference.positions.mean(axis=0)
    ali_c = aligned.positions - aligned.positions.mean(axis=0)
    return float(((ref_c - ali_c) ** 2).sum())


def test_permutation_validation_and_apply():
    with pytest.raises(ValueError):
        Permutation((0, 0, 1))
    s = Structure(("C", "H", "O"), [[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    out = Permutation((2, 0, 1)).apply(s)
    assert out.elements == ("O", "C", "H")
    np.testing.assert_array_equal(out.positions[0], s.positions[2])


def test_solve_assignment_prefers_cheap_swap():
    cost = np.array([[5.0, 1.0], [1.0, 5.0]])
    np.testing.assert_array_equal(solve_assignment(cost), [1, 0])
    with pytest.raises(ValueError):
        solve_assignment(np.zeros((2, 3)))


def test_align_recovers_a_pure_shuffle(rng):
    ref = random_structure(rng, n=6, elements=("C", "C", "H", "H", "H", "O"))
    shuffled = Permutation((1, 0, 4, 2, 3, 5)).apply(ref)
    perm, aligned = align_permutation(shuffled, ref)
    assert aligned.elements == ref.elements
    np.testing.assert_allclose(aligned.positions, ref.positions, atol=1e-12)
    assert perm.apply(shuffled).elements == ref.elements


def test_align_never_increases_cost(rng):
    for _ in range(20):
        ref = random_structure(rng, n=8, elements=("C",) * 4 + ("H",) * 4)
        noisy = perturb(ref, 1.0, rng)
        _, aligned = align_permutation(noisy, ref)
        assert aligned_cost(noisy, ref, aligned) <= aligned_cost(noisy, ref, noisy) + 1e-9


def test_align_matches_brute_force(rng):
    # Exhaustive check on small element groups.
    for _ in range(30):
        elements = ("C",) * int(rng.integers(1, 5)) + ("H",) * int(rng.integers(1, 5))
        ref = random_structure(rng, n=len(elements), elements=elements)
        noisy = perturb(ref, 2.0, rng)
        _, aligned = align_permutation(noisy, ref)
        assert aligned_cost(noisy, ref, aligned) == pytest.approx(
            brute_force_cost(noisy, ref), abs=1e-9
        )


def test_align_ignores_translation(rng):
    ref = random_structure(rng, n=5, elements=("C", "C", "H", "H", "O"))
    noisy = perturb(ref, 0.3, rng)
    shifted = noisy.with_positions(noisy.positions + np.array([50.0, -20.0, 3.0]))
    perm_a, _ = align_permutation(noisy, ref)
    perm_b, aligned_b = align_permutation(shifted, ref)
    assert perm_a.mapping == perm_b.mapping
    # The output keeps the original (uncentered) coordinates.
    np.testing.assert_allclose(
        aligned_b.positions, shifted.positions[list(perm_b.mapping)], atol=1e-12
    )


def test_align_rejects_mismatched_multisets(rng):
    a = random_structure(rng, n=3, elements=("C", "H", "H"))
    b = random_structure(rng, n=3, elements=("C", "C", "H"))
    with pytest.raises(ValueError):
        align_permutation(a, b)
