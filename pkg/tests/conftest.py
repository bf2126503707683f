import math

import numpy as np
import pytest
from hypothesis import settings

from cqpbb.model import Discrete, Interval, ModulusBounds, ProblemCQP

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


def qpsk_toy() -> ProblemCQP:
    """Two unit-modulus QPSK coordinates, Q = I, c = (-1, 0)."""
    psk = Discrete.psk(4)
    return ProblemCQP(np.eye(2), np.array([-1.0, 0.0]), (ModulusBounds(1, 1),) * 2, (psk, psk))


def random_hermitian(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (A + A.conj().T)


@pytest.fixture
def toy():
    return qpsk_toy()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
