import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_grid(rng, M):
    from renormsb.modes import ModeGrid
    return ModeGrid(rng.uniform(0.3, 2.5, M), rng.uniform(0.2, 1.5, M))


def random_ff(rng, M, scale=1.0, regularity=None):
    from renormsb.modes import FormFactor, Regularity
    amp = scale * (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2 * M)
    return FormFactor(amp, regularity or Regularity.REGULAR)


def random_normal(rng, s, scale=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s)))
    lam = scale * (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2)
    return (Q * lam) @ Q.conj().T


def random_hermitian(rng, s):
    X = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
    return 0.5 * (X + X.conj().T)


def cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)
