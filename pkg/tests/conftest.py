import numpy as np
import pytest

from lshensemble.minhash import Domain


def random_domain(rng, size, prefix="v", universe=10**9, ident=None):
    values = set()
    while len(values) < size:
        values.update(f"{prefix}{k}" for k in rng.integers(0, universe, size - len(values)))
    return Domain(ident or f"{prefix}-{size}-{rng.integers(1 << 30)}", frozenset(values))


def overlapping_pair(rng, inter, only_x, only_y):
    """Two domains with the given intersection and exclusive-part sizes."""
    base = rng.integers(0, 1 << 40)
    tag = lambda k: f"e{base}_{k}"
    shared = {tag(k) for k in range(inter)}
    x = shared | {tag(inter + k) for k in range(only_x)}
    y = shared | {tag(inter + only_x + k) for k in range(only_y)}
    return Domain("x", frozenset(x)), Domain("y", frozenset(y))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
