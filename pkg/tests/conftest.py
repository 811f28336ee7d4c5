import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def random_triples(rng, branch, n):
    """n random valid (alpha, gamma, mu) triples on the requested branch."""
    out = []
    while len(out) < n:
        gamma = float(rng.uniform(0.1, 20.0))
        mu = float(rng.uniform(0.2, 3.0))
        if branch == "negative":
            alpha = -float(rng.uniform(0.01, 10.0))
        elif branch == "zero":
            alpha = 0.0
        elif branch == "interior":
            alpha = float(rng.uniform(0.05, 0.95)) * gamma
        elif branch == "poisson":
            alpha = gamma
        elif branch == "binomial":
            b = int(rng.integers(1, 20))
            alpha = gamma + 1.0 / b
        else:
            raise ValueError(branch)
        out.append((alpha, gamma, mu))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
