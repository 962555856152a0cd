"""Randomized equivalence checks between the hierarchical and flat posteriors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HierModelSpec, Matrices, Weights
from .posterior import (
    HistoryRecord,
    decomposed_marginal_posterior,
    joint_posterior_oracle,
    stats_from_history,
)

__all__ = ["OracleSweep", "random_history", "random_instance", "random_spd", "oracle_sweep"]


def random_spd(n: int, rng: np.random.Generator, floor: float = 0.1) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return A @ A.T / n + floor * np.eye(n)


def random_instance(
    rng: np.random.Generator, K: int, L: int, d: int, matrices: bool = False
) -> HierModelSpec:
    if matrices:
        mixing = Matrices(rng.normal(size=(K, L, d, d)))
    else:
        mixing = Weights(rng.uniform(-1.0, 1.0, size=(K, L)))
    return HierModelSpec(
        L=L,
        K=K,
        d=d,
        mu_Psi=rng.normal(size=L * d),
        Sigma_Psi=random_spd(L * d, rng),
        Sigma0=np.stack([random_spd(d, rng) for _ in range(K)]),
        mixing=mixing,
        sigma=float(rng.uniform(0.5, 2.0)),
    )


def random_history(spec: HierModelSpec, t: int, rng: np.random.Generator) -> list[HistoryRecord]:
    return [
        HistoryRecord(s, rng.normal(size=spec.d), int(rng.integers(spec.K)), float(rng.normal()))
        for s in range(t)
    ]


@dataclass
class OracleSweep:
    instances: int
    worst_mean: float
    worst_cov: float
    failures: int

    @property
    def ok(self) -> bool:
        return self.failures == 0


def oracle_sweep(
    instances: int = 200, seed: int = 0, mean_tol: float = 1e-8, cov_tol: float = 1e-8
) -> OracleSweep:
    """Compare the decomposed marginal posterior with the flat oracle.

    Instances alternate between scalar weights and matrix mixing, with
    ``K <= 5``, ``L <= 3``, ``d <= 3`` and up to 20 records spread over the
    actions. Mean error is max-abs scaled by ``1 + ||mean||_inf``; covariance
    error is relative Frobenius.
    """
    rng = np.random.default_rng(seed)
    worst_mean = worst_cov = 0.0
    failures = 0
    for j in range(instances):
        K, L, d = int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        spec = random_instance(rng, K, L, d, matrices=bool(j % 2))
        history = random_history(spec, int(rng.integers(0, 21)), rng)
        oracle = joint_posterior_oracle(spec, history)
        ours = decomposed_marginal_posterior(spec, stats_from_history(K, d, history, spec.sigma))
        em = float(np.max(np.abs(ours.mean - oracle.mean)) / (1.0 + np.max(np.abs(oracle.mean))))
        ec = float(np.linalg.norm(ours.cov - oracle.cov) / np.linalg.norm(oracle.cov))
        worst_mean, worst_cov = max(worst_mean, em), max(worst_cov, ec)
        failures += int(em > mean_tol or ec > cov_tol)
    return OracleSweep(instances, worst_mean, worst_cov, failures)
