import numpy as np
import pytest

from gpff import ForceEvaluation, ForceProvider, ReferenceSet, Structure


class ZeroProvider(ForceProvider):
    """Always returns zero forces (a provider that has learned nothing)."""

    def evaluate(self, structure):
        return ForceEvaluation(np.zeros((structure.n, 3)))


class CountingProvider(ForceProvider):
    """Wraps another provider and counts evaluate() calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def evaluate(self, structure):
        self.calls += 1
        return self.inner.evaluate(structure)


def random_structure(rng, n=5, elements=None, scale=1.5, name=None):
    if elements is None:
        pool = ("C", "H", "O", "N")
        elements = tuple(pool[int(rng.integers(len(pool)))] for _ in range(n))
    return Structure(elements, rng.normal(size=(len(elements), 3)) * scale, name=name)


def reference_set(rng, count=3, n=5, elements=("C", "C", "O", "H", "H"), scale=1.5):
    return ReferenceSet(
        [Structure(elements, rng.normal(size=(n, 3)) * scale) for _ in range(count)]
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def zero_provider():
    return ZeroProvider()
