"""Hierarchical Gaussian bandit environments.

Latent parameters ``Psi = (psi_1, ..., psi_L)`` are drawn from the
hyper-prior ``N(mu_Psi, Sigma_Psi)``. Each action parameter is then drawn as
``theta_i ~ N(sum_l C_il psi_l, Sigma0_i)`` where ``C_il = b_il * I_d`` for
scalar mixing weights. Rewards are ``y ~ N(x @ theta_a, sigma^2)``.

Action indices are 0-based throughout the library; only the CLI and the CSV
output use 1-based labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, EmptyPool, ValidationError
from .gaussian import GaussianDist, SpdMatrix, cholesky, spd_inverse, symmetrize

__all__ = [
    "Constant",
    "ContextSpec",
    "EnvDraw",
    "FixedPool",
    "HierModelSpec",
    "Matrices",
    "MixingStructure",
    "UniformCube",
    "Weights",
    "best_action",
    "marginal_prior",
    "mixing_row",
    "sample_context",
    "sample_environment",
    "sample_reward",
]


@dataclass(frozen=True)
class Weights:
    """Scalar mixing weights; row ``i`` of ``b`` is action i's weight vector."""

    b: NDArray

    def __post_init__(self) -> None:
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def K(self) -> int:
        return self.b.shape[0]

    @property
    def L(self) -> int:
        return self.b.shape[1]

    def rows(self, d: int) -> NDArray:
        """Stack of per-action ``kron(b_i, I_d)`` maps, shape ``(K, d, L*d)``."""
        eye = np.eye(d)
        return np.einsum("kl,de->kdle", self.b, eye).reshape(self.K, d, self.L * d)


@dataclass(frozen=True)
class Matrices:
    """Matrix mixing: ``C[i, l]`` is the d x d map from latent l to action i."""

    C: NDArray

    def __post_init__(self) -> None:
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 4 or C.shape[2] != C.shape[3]:
            raise ValueError(f"mixing matrices must have shape (K, L, d, d), got {C.shape}")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)

    @classmethod
    def from_weights(cls, b: ArrayLike, d: int) -> "Matrices":
        b = np.atleast_2d(np.asarray(b, dtype=float))
        return cls(np.einsum("kl,de->klde", b, np.eye(d)))

    @property
    def K(self) -> int:
        return self.C.shape[0]

    @property
    def L(self) -> int:
        return self.C.shape[1]

    def rows(self, d: int) -> NDArray:
        if self.C.shape[2] != d:
            raise DimensionMismatch(f"mixing matrices are {self.C.shape[2]}x{self.C.shape[2]}, expected d={d}")
        # [C_i1, ..., C_iL] side by side
        return self.C.transpose(0, 2, 1, 3).reshape(self.K, d, self.L * d)


MixingStructure = Union[Weights, Matrices]


@dataclass(frozen=True, eq=False)
class HierModelSpec:
    """Full generative description of a hierarchical contextual bandit."""

    L: int
    K: int
    d: int
    mu_Psi: NDArray
    Sigma_Psi: NDArray
    Sigma0: NDArray
    mixing: MixingStructure
    sigma: float
    jitter: float = 0.0

    def __post_init__(self) -> None:
        L, K, d = int(self.L), int(self.K), int(self.d)
        if min(L, K, d) < 1:
            raise ValidationError(f"L, K, d must be positive, got L={L}, K={K}, d={d}")
        if not self.sigma > 0:
            raise ValidationError(f"reward noise sigma must be > 0, got {self.sigma}")
        mu = np.asarray(self.mu_Psi, dtype=float).reshape(-1)
        if mu.size != L * d:
            raise DimensionMismatch(f"mu_Psi has length {mu.size}, expected L*d={L * d}")
        S = self.Sigma_Psi
        S = symmetrize(np.atleast_2d(np.asarray(S.data if isinstance(S, SpdMatrix) else S, dtype=float)))
        if S.shape != (L * d, L * d):
            raise DimensionMismatch(f"Sigma_Psi has shape {S.shape}, expected {(L * d, L * d)}")
        S0 = self.Sigma0
        if isinstance(S0, (list, tuple)):
            S0 = np.stack([np.atleast_2d(np.asarray(getattr(m, "data", m), dtype=float)) for m in S0])
        S0 = symmetrize(np.asarray(S0, dtype=float))
        if S0.shape != (K, d, d):
            raise DimensionMismatch(f"Sigma0 has shape {S0.shape}, expected {(K, d, d)}")
        if (self.mixing.K, self.mixing.L) != (K, L):
            raise DimensionMismatch(
                f"mixing structure is {self.mixing.K}x{self.mixing.L}, expected {K}x{L}"
            )
        if isinstance(self.mixing, Matrices) and self.mixing.C.shape[2] != d:
            raise DimensionMismatch("mixing matrices do not match d")
        for arr in (mu, S, S0):
            arr.setflags(write=False)
        for name, value in (("L", L), ("K", K), ("d", d), ("mu_Psi", mu),
                            ("Sigma_Psi", S), ("Sigma0", S0), ("sigma", float(self.sigma))):
            object.__setattr__(self, name, value)
        # validate positive definiteness up front
        self.Sigma_Psi_chol
        self.Sigma0_chol

    @cached_property
    def Sigma_Psi_chol(self) -> NDArray:
        return cholesky(self.Sigma_Psi, jitter=self.jitter)

    @cached_property
    def Sigma_Psi_inv(self) -> NDArray:
        return spd_inverse(self.Sigma_Psi, jitter=self.jitter)

    @cached_property
    def Sigma0_chol(self) -> NDArray:
        return np.stack([cholesky(m, jitter=self.jitter) for m in self.Sigma0])

    @cached_property
    def Sigma0_inv(self) -> NDArray:
        return np.stack([spd_inverse(m, jitter=self.jitter) for m in self.Sigma0])

    @cached_property
    def Gamma_rows(self) -> NDArray:
        """Per-action maps from ``Psi`` to prior means, shape ``(K, d, L*d)``."""
        rows = self.mixing.rows(self.d)
        rows.setflags(write=False)
        return rows

    @property
    def is_weights(self) -> bool:
        return isinstance(self.mixing, Weights)

    def hyper_prior(self) -> GaussianDist:
        return GaussianDist(self.mu_Psi, self.Sigma_Psi, jitter=self.jitter)

    def latent_block(self, l: int) -> tuple[NDArray, NDArray]:
        """Mean and diagonal covariance block of latent ``l``."""
        s = slice(l * self.d, (l + 1) * self.d)
        return self.mu_Psi[s], self.Sigma_Psi[s, s]

    def is_block_diagonal(self) -> bool:
        d = self.d
        off = self.Sigma_Psi.copy()
        for l in range(self.L):
            off[l * d:(l + 1) * d, l * d:(l + 1) * d] = 0.0
        return not np.any(off)

    def replace(self, **changes) -> "HierModelSpec":
        fields = dict(L=self.L, K=self.K, d=self.d, mu_Psi=self.mu_Psi,
                      Sigma_Psi=self.Sigma_Psi, Sigma0=self.Sigma0,
                      mixing=self.mixing, sigma=self.sigma, jitter=self.jitter)
        fields.update(changes)
        return HierModelSpec(**fields)


@dataclass(frozen=True)
class UniformCube:
    d: int
    low: float | NDArray = -1.0
    high: float | NDArray = 1.0

    def __post_init__(self) -> None:
        low = np.broadcast_to(np.asarray(self.low, dtype=float), (self.d,))
        high = np.broadcast_to(np.asarray(self.high, dtype=float), (self.d,))
        if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
            raise ValidationError("cube bounds must be finite")
        if not np.all(low < high):
            raise ValidationError("cube bounds need low < high in every coordinate")


@dataclass(frozen=True)
class FixedPool:
    vectors: NDArray

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=float)
        if v.size == 0:
            v = v.reshape(0, v.shape[-1] if v.ndim == 2 else 0)
        v = np.atleast_2d(v)
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class Constant:
    """The non-contextual reduction: every context is the scalar 1."""

    d: int = 1

    def __post_init__(self) -> None:
        if self.d != 1:
            raise ValidationError("the constant context is only defined for d = 1")


ContextSpec = Union[UniformCube, FixedPool, Constant]


@dataclass(frozen=True)
class EnvDraw:
    Psi_star: NDArray
    Theta_star: NDArray  # (K, d)


def mixing_row(spec: HierModelSpec, i: int) -> NDArray:
    """The ``d x Ld`` map sending ``Psi`` to action ``i``'s prior mean."""
    return spec.Gamma_rows[i]


def marginal_prior(spec: HierModelSpec) -> tuple[NDArray, NDArray]:
    """Per-action prior with the latents integrated out.

    Returns means ``(K, d)`` and covariances ``Sigma0_i + Gamma_i Sigma_Psi Gamma_i^T``.
    """
    G = spec.Gamma_rows
    means = G @ spec.mu_Psi
    covs = spec.Sigma0 + np.einsum("kda,ab,keb->kde", G, spec.Sigma_Psi, G)
    return means, symmetrize(covs)


def sample_environment(spec: HierModelSpec, rng: np.random.Generator) -> EnvDraw:
    psi = spec.mu_Psi + spec.Sigma_Psi_chol @ rng.standard_normal(spec.L * spec.d)
    z = rng.standard_normal((spec.K, spec.d))
    theta = spec.Gamma_rows @ psi + np.einsum("kde,ke->kd", spec.Sigma0_chol, z)
    return EnvDraw(Psi_star=psi, Theta_star=theta)


def sample_context(ctx: ContextSpec, rng: np.random.Generator) -> NDArray:
    if isinstance(ctx, Constant):
        return np.ones(1)
    if isinstance(ctx, UniformCube):
        return rng.uniform(ctx.low, ctx.high, size=ctx.d)
    if isinstance(ctx, FixedPool):
        n = ctx.vectors.shape[0]
        if n == 0:
            raise EmptyPool("context pool is empty")
        return ctx.vectors[rng.integers(n)]
    raise TypeError(f"unsupported context spec {type(ctx).__name__}")


def sample_reward(theta: ArrayLike, x: ArrayLike, sigma: float, rng: np.random.Generator) -> float:
    return float(np.dot(x, theta) + sigma * rng.standard_normal())


def best_action(Theta: ArrayLike, x: ArrayLike) -> tuple[int, float]:
    """Index and value of ``argmax_i x @ theta_i``; ties go to the lowest index."""
    values = np.asarray(Theta, dtype=float) @ np.asarray(x, dtype=float)
    i = int(np.argmax(values))  # first maximum
    return i, float(values[i])
