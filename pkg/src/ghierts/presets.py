"""Problem families used by the experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HierModelSpec, UniformCube, Weights


@dataclass(frozen=True)
class SyntheticProblem:
    """Synthetic Gaussian bandit with fresh uniform mixing weights per run.

    Defaults: ``mu_Psi = 0``, ``Sigma_Psi = 3 I``, ``Sigma0_i = I``,
    ``sigma = 1`` and weights uniform on ``[-1, 1]``.
    """

    K: int = 20
    d: int = 2
    L: int = 5
    prior_mean: float = 0.0
    hyper_var: float = 3.0
    cond_var: float = 1.0
    sigma: float = 1.0
    weight_low: float = -1.0
    weight_high: float = 1.0
    jitter: float = 0.0

    def __call__(self, rng: np.random.Generator) -> HierModelSpec:
        b = rng.uniform(self.weight_low, self.weight_high, size=(self.K, self.L))
        return self.with_weights(b)

    def with_weights(self, b) -> HierModelSpec:
        Ld = self.L * self.d
        return HierModelSpec(
            L=self.L,
            K=self.K,
            d=self.d,
            mu_Psi=np.full(Ld, self.prior_mean),
            Sigma_Psi=self.hyper_var * np.eye(Ld),
            Sigma0=np.broadcast_to(self.cond_var * np.eye(self.d), (self.K, self.d, self.d)),
            mixing=Weights(b),
            sigma=self.sigma,
            jitter=self.jitter,
        )

    def context(self) -> UniformCube:
        return UniformCube(self.d, -1.0, 1.0)
