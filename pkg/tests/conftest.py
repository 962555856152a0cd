import numpy as np
import pytest

from ghierts.model import HierModelSpec, Weights
from ghierts.movielens import planted_embeddings, write_ratings
from ghierts.selftest import random_history, random_instance, random_spd


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def scalar_chain(b=1.0, sigma0=1.0):
    """L = K = d = 1, mu_Psi = 0, Sigma_Psi = 1, sigma = 1."""
    return HierModelSpec(
        L=1, K=1, d=1, mu_Psi=[0.0], Sigma_Psi=[[1.0]], Sigma0=[[[sigma0]]],
        mixing=Weights([[b]]), sigma=1.0,
    )


def diag_spec(rng, K, L, d, sigma=1.0):
    """Random Weights instance with a diagonal hyper-prior covariance."""
    return HierModelSpec(
        L=L, K=K, d=d,
        mu_Psi=rng.normal(size=L * d),
        Sigma_Psi=np.diag(rng.uniform(0.5, 3.0, size=L * d)),
        Sigma0=np.stack([random_spd(d, rng) for _ in range(K)]),
        mixing=Weights(rng.uniform(-1, 1, size=(K, L))),
        sigma=sigma,
    )


def planted_ratings(path, rng, n_users=200, n_items=100, d=2, L=2, density=0.3):
    """Write a ``::`` ratings file observing ``u.v`` on a random mask of a planted rank-``d`` matrix."""
    users, items, labels = planted_embeddings(n_users, n_items, d, L, rng)
    mask = rng.random((n_users, n_items)) < density
    mask[np.arange(n_users), rng.integers(n_items, size=n_users)] = True
    mask[rng.integers(n_users, size=n_items), np.arange(n_items)] = True
    u, i = np.nonzero(mask)
    write_ratings(path, u, i, np.einsum("nd,nd->n", users[u], items[i]))
    return users, items, labels


__all__ = ["ACCEPTANCE_LINES", "diag_spec", "planted_ratings", "random_history", "random_instance", "random_spd", "scalar_chain"]
