import numpy as np
import pytest


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_spd(rng, n, spread=2.0):
    Q = random_orthogonal(rng, n)
    w = np.exp(rng.uniform(-spread, spread, n))
    return (Q * w) @ Q.T
