import numpy as np
import pytest

from gpff import (
    BOLTZMANN_K,
    boltzmann_temperature,
    lognormal_sigma,
    perturb,
    pseudo_energy,
    pseudo_forces,
    score_from_forces,
    sigma_estimate,
    x0_from_forces,
)

from conftest import random_structure


def test_forces_are_negative_finite_difference_gradient(rng):
    x0 = random_structure(rng, n=4)
    x = perturb(x0, 1.3, rng)
    forces = pseudo_forces(x, x0)
    h = 1e-4
    for i in range(x.n):
        for axis in range(3):
            plus = np.array(x.positions)
            minus = np.array(x.positions)
            plus[i, axis] += h
            minus[i, axis] -= h
            grad = (
                pseudo_energy(x.with_positions(plus), x0)
                - pseudo_energy(x.with_positions(minus), x0)
            ) / (2 * h)
            assert forces[i, axis] == pytest.approx(-grad, abs=1e-6)


def test_energy_zero_at_origin(rng):
    x0 = random_structure(rng, n=3)
    assert pseudo_energy(x0, x0) == 0.0
    np.testing.assert_array_equal(pseudo_forces(x0, x0), np.zeros((3, 3)))


def test_denoised_prediction_inverts_perturbation(rng):
    x0 = random_structure(rng, n=6)
    x = perturb(x0, 2.0, rng)
    recovered = x0_from_forces(x, pseudo_forces(x, x0))
    np.testing.assert_allclose(recovered.positions, x0.positions, atol=1e-12)


def test_score_duality_identity(rng):
    # x0 - x and sigma^2 * score are the same F/2 vector.
    for _ in range(50):
        forces = rng.normal(size=(4, 3)) * 10.0
        sigma = float(rng.uniform(0.01, 30.0))
        lhs = forces / 2.0
        rhs = sigma * sigma * score_from_forces(forces, sigma)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    with pytest.raises(ValueError):
        score_from_forces(np.zeros((2, 3)), 0.0)


def test_score_matches_gaussian_kernel(rng):
    # For X = X0 + sigma*eps the score of N(X0, sigma^2 I) is -eps/sigma.
    x0 = random_structure(rng, n=5)
    sigma = 0.8
    eps = rng.standard_normal((5, 3))
    x = x0.with_positions(x0.positions + sigma * eps)
    score = score_from_forces(pseudo_forces(x, x0), sigma)
    np.testing.assert_allclose(score, -eps / sigma, atol=1e-12)


def test_sigma_estimate_definition(rng):
    forces = rng.normal(size=(10, 3))
    half = forces.ravel() / 2.0
    assert sigma_estimate(forces) == pytest.approx(half.std(), abs=1e-15)
    assert sigma_estimate(forces, center=False) == pytest.approx(
        np.sqrt((half ** 2).mean()), abs=1e-15
    )
    with pytest.raises(ValueError):
        sigma_estimate(np.zeros((1, 3)))


def test_sigma_estimate_statistical(rng):
    # Forces from a sigma-perturbation should read back near sigma.
    x0 = random_structure(rng, n=200)
    for sigma in (0.1, 1.0, 5.0):
        x = perturb(x0, sigma, rng)
        estimate = sigma_estimate(pseudo_forces(x, x0))
        assert abs(estimate - sigma) / sigma < 0.12


def test_boltzmann_temperature():
    assert boltzmann_temperature(0.0) == 0.0
    sigma = 2.0
    assert boltzmann_temperature(sigma) == pytest.approx(
        2.0 * sigma * sigma / BOLTZMANN_K, rel=1e-15
    )
    with pytest.raises(ValueError):
        boltzmann_temperature(-1.0)


def test_lognormal_sigma_median_and_clip():
    rng = np.random.default_rng(21)
    draws = np.array([lognormal_sigma(rng) for _ in range(20000)])
    assert np.all(draws >= 0.0)
    assert np.all(draws <= 30.0)
    # Median of exp(N(-0.7, 1.2^2)) is exp(-0.7).
    assert np.median(draws) == pytest.approx(0.4965853037914095, rel=0.05)
    # A tight clip actually binds.
    rng = np.random.default_rng(21)
    clipped = [lognormal_sigma(rng, clip=(0.4, 0.6)) for _ in range(100)]
    assert min(clipped) >= 0.4 and max(clipped) <= 0.6


def test_monte_carlo_energy_mean(rng):
    # E ||sigma eps||_F^2 = 3 n sigma^2.
    x0 = random_structure(rng, n=8)
    sigma = 1.7
    values = [
        pseudo_energy(perturb(x0, sigma, rng), x0) for _ in range(4000)
    ]
    expected = 3 * x0.n * sigma * sigma
    assert np.mean(values) == pytest.approx(expected, rel=0.05)
