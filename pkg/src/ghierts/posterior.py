"""Conjugate posterior updates for the hierarchical Gaussian bandit.

Every ``(Sigma0_i + G_i^{-1})^{-1}``-type quantity is evaluated without
inverting ``G_i`` (singular until an action has seen ``d`` independent
contexts) and without inverting ``Sigma0_i`` (near-singular in the
degenerate-prior limits the tests exercise). With ``A_i = I + G_i Sigma0_i``,

* precision weight ``(Sigma0_i + G_i^{-1})^{-1} = A_i^{-1} G_i``
* MLE weight ``(Sigma0_i + G_i^{-1})^{-1} G_i^{-1} B_i = A_i^{-1} B_i``
* conditional covariance ``(Sigma0_i^{-1} + G_i)^{-1} = A_i^{-T} Sigma0_i``

which are the Woodbury forms ``L0 - L0 (G + L0)^{-1} L0`` and
``L0 (G + L0)^{-1} B`` (``L0 = Sigma0_i^{-1}``) rewritten through the
push-through identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, NonBlockDiagonalHyperPrior
from .gaussian import GaussianDist, block_diag, cholesky, symmetrize
from .model import HierModelSpec

__all__ = [
    "HistoryRecord",
    "SufficientStats",
    "conditional_posterior",
    "conditional_covariances",
    "conditional_means",
    "decomposed_marginal_posterior",
    "factored_hyper_posterior",
    "hyper_posterior",
    "hyper_precision",
    "joint_posterior_oracle",
    "mab_hyper_posterior",
    "mle_weight",
    "precision_weight",
    "stats_from_history",
    "update_stats",
]


@dataclass(frozen=True)
class HistoryRecord:
    t: int
    x: NDArray
    a: int
    y: float


@dataclass
class SufficientStats:
    """Noise-scaled per-action Gram matrices and reward-weighted context sums.

    ``G[i] = sum x x^T / sigma^2`` and ``B[i] = sum y x / sigma^2`` over the
    rounds in which action ``i`` was played; ``N[i]`` counts those rounds.
    """

    G: NDArray
    B: NDArray
    N: NDArray
    n_obs: int = 0

    @classmethod
    def empty(cls, K: int, d: int) -> "SufficientStats":
        return cls(np.zeros((K, d, d)), np.zeros((K, d)), np.zeros(K, dtype=np.int64))

    @property
    def K(self) -> int:
        return self.G.shape[0]

    @property
    def d(self) -> int:
        return self.G.shape[1]

    @property
    def t(self) -> int:
        """The round about to be played."""
        return self.n_obs + 1

    def copy(self) -> "SufficientStats":
        return SufficientStats(self.G.copy(), self.B.copy(), self.N.copy(), self.n_obs)

    def equals(self, other: "SufficientStats") -> bool:
        return (
            self.n_obs == other.n_obs
            and np.array_equal(self.N, other.N)
            and np.array_equal(self.G, other.G)
            and np.array_equal(self.B, other.B)
        )


def update_stats(stats: SufficientStats, x: ArrayLike, a: int, y: float, sigma: float) -> SufficientStats:
    """Add one observation to action ``a`` in place and return ``stats``."""
    if not 0 <= a < stats.K:
        raise IndexError(f"action {a} out of range for K={stats.K}")
    x = np.asarray(x, dtype=float).reshape(-1)
    w = 1.0 / sigma**2
    stats.G[a] += w * np.outer(x, x)
    stats.B[a] += (w * y) * x
    stats.N[a] += 1
    stats.n_obs += 1
    return stats


def stats_from_history(K: int, d: int, history: Iterable[HistoryRecord], sigma: float) -> SufficientStats:
    stats = SufficientStats.empty(K, d)
    for rec in history:
        update_stats(stats, rec.x, rec.a, rec.y, sigma)
    return stats


# -- per-action terms ----------------------------------------------------------

def _check_spd(S0: NDArray) -> None:
    for m in S0.reshape(-1, S0.shape[-1], S0.shape[-1]):
        cholesky(m)


def _one_plus(G: NDArray, S0: NDArray) -> NDArray:
    d = G.shape[-1]
    return np.eye(d) + G @ S0


def precision_weight(Sigma0_i: ArrayLike, G: ArrayLike) -> NDArray:
    """``(Sigma0_i + G^{-1})^{-1}``, well defined for singular ``G``.

    Accepts single matrices or stacks of shape ``(K, d, d)``.
    """
    S0 = np.asarray(Sigma0_i, dtype=float)
    G = np.asarray(G, dtype=float)
    _check_spd(S0)
    return _precision_weight(S0, G)


def _precision_weight(S0: NDArray, G: NDArray) -> NDArray:
    return symmetrize(np.linalg.solve(_one_plus(G, S0), G))


def mle_weight(Sigma0_i: ArrayLike, G: ArrayLike, B: ArrayLike) -> NDArray:
    """``(Sigma0_i + G^{-1})^{-1} G^{-1} B``, well defined for singular ``G``."""
    S0 = np.asarray(Sigma0_i, dtype=float)
    _check_spd(S0)
    return _mle_weight(S0, np.asarray(G, dtype=float), np.asarray(B, dtype=float))


def _mle_weight(S0: NDArray, G: NDArray, B: NDArray) -> NDArray:
    return np.linalg.solve(_one_plus(G, S0), B[..., None])[..., 0]


# -- hyper-posterior -------------------------------------------------------------

def hyper_precision(spec: HierModelSpec, stats: SufficientStats, form: str = "auto") -> tuple[NDArray, NDArray]:
    """Precision matrix and information vector of the joint hyper-posterior.

    ``form="kron"`` assembles ``sum_i b_i b_i^T (x) P_i`` (scalar weights only),
    ``form="general"`` assembles ``sum_i Gamma_i^T P_i Gamma_i``.
    """
    P = _precision_weight(spec.Sigma0, stats.G)
    m = _mle_weight(spec.Sigma0, stats.G, stats.B)
    if form == "auto":
        form = "kron" if spec.is_weights else "general"
    Ld = spec.L * spec.d
    if form == "kron":
        if not spec.is_weights:
            raise ValueError("the Kronecker form needs scalar mixing weights")
        b = spec.mixing.b
        prec = np.einsum("kl,km,kde->ldme", b, b, P).reshape(Ld, Ld)
        info = np.einsum("kl,kd->ld", b, m).reshape(Ld)
    elif form == "general":
        Gam = spec.Gamma_rows
        prec = np.einsum("kda,kde,keb->ab", Gam, P, Gam)
        info = np.einsum("kda,kd->a", Gam, m)
    else:
        raise ValueError(f"unknown form {form!r}")
    prec = symmetrize(spec.Sigma_Psi_inv + prec)
    info = spec.Sigma_Psi_inv @ spec.mu_Psi + info
    return prec, info


def _from_precision(prec: NDArray, info: NDArray, jitter: float = 0.0) -> GaussianDist:
    chol = cholesky(prec, jitter=jitter)
    eye = np.eye(prec.shape[0])
    cov = scipy.linalg.cho_solve((chol, True), eye, check_finite=False)
    mean = scipy.linalg.cho_solve((chol, True), info, check_finite=False)
    return GaussianDist(mean, cov)


def hyper_posterior(spec: HierModelSpec, stats: SufficientStats, form: str = "auto") -> GaussianDist:
    """Exact joint posterior of the stacked latent vector ``Psi`` given the history."""
    prec, info = hyper_precision(spec, stats, form=form)
    return _from_precision(prec, info, spec.jitter)


def factored_hyper_posterior(
    spec: HierModelSpec, stats: SufficientStats, mean: str = "exact"
) -> list[GaussianDist]:
    """Per-latent Gaussian factors of the hyper-posterior.

    Factor ``l`` has precision ``Sigma_psi_l^{-1} + sum_i b_il^2 P_i``, the
    ``l``-th diagonal block of the exact precision. Its mean is the
    mean-field fixed point, which coincides with the ``l``-th block of the
    exact posterior mean (``mean="exact"``, obtained with one block solve).
    ``mean="standalone"`` instead uses the uncoupled estimate
    ``Lambda_ll^{-1} (Sigma_psi_l^{-1} mu_psi_l + sum_i b_il m_i)`` which
    ignores the cross-latent terms and avoids any ``Ld x Ld`` work.
    """
    if not spec.is_weights:
        raise NonBlockDiagonalHyperPrior("the factored hyper-posterior needs scalar mixing weights")
    if not spec.is_block_diagonal():
        raise NonBlockDiagonalHyperPrior("Sigma_Psi couples different latent parameters")
    if mean not in ("exact", "standalone"):
        raise ValueError(f"unknown mean mode {mean!r}")
    L, d = spec.L, spec.d
    b = spec.mixing.b
    P = _precision_weight(spec.Sigma0, stats.G)
    m = _mle_weight(spec.Sigma0, stats.G, stats.B)
    S_inv = spec.Sigma_Psi_inv
    block_prec = np.empty((L, d, d))
    block_info = np.empty((L, d))
    for l in range(L):
        s = slice(l * d, (l + 1) * d)
        block_prec[l] = symmetrize(S_inv[s, s] + np.einsum("k,kde->de", b[:, l] ** 2, P))
        block_info[l] = S_inv[s, s] @ spec.mu_Psi[s] + b[:, l] @ m
    if mean == "exact":
        prec, info = hyper_precision(spec, stats, form="kron")
        chol = cholesky(prec, jitter=spec.jitter)
        means = scipy.linalg.cho_solve((chol, True), info, check_finite=False).reshape(L, d)
    factors = []
    for l in range(L):
        chol = cholesky(block_prec[l], jitter=spec.jitter)
        cov = scipy.linalg.cho_solve((chol, True), np.eye(d), check_finite=False)
        if mean == "standalone":
            mu = scipy.linalg.cho_solve((chol, True), block_info[l], check_finite=False)
        else:
            mu = means[l]
        factors.append(GaussianDist(mu, cov))
    return factors


def mab_hyper_posterior(spec: HierModelSpec, stats: SufficientStats) -> GaussianDist:
    """Closed-form hyper-posterior of the non-contextual (``d = 1``, ``x = 1``) model."""
    if spec.d != 1:
        raise DimensionMismatch(f"the multi-armed bandit posterior needs d = 1, got d = {spec.d}")
    if not spec.is_weights:
        raise DimensionMismatch("the multi-armed bandit posterior needs scalar mixing weights")
    sigma2 = spec.sigma**2
    N = stats.N.astype(float)
    if not np.allclose(stats.G[:, 0, 0], N / sigma2, rtol=1e-12, atol=0.0):
        raise ValueError("statistics were not generated with unit contexts")
    s0 = spec.Sigma0[:, 0, 0]
    total = sigma2 * stats.B[:, 0]  # raw reward sums
    denom = N * s0 + sigma2
    b = spec.mixing.b
    prec = spec.Sigma_Psi_inv + (b.T * (N / denom)) @ b
    info = spec.Sigma_Psi_inv @ spec.mu_Psi + b.T @ (total / denom)
    return _from_precision(symmetrize(prec), info, spec.jitter)


# -- conditional posteriors ----------------------------------------------------------

def conditional_covariances(spec: HierModelSpec, stats: SufficientStats) -> NDArray:
    """``(Sigma0_i^{-1} + G_i)^{-1}`` for every action, shape ``(K, d, d)``."""
    S0 = spec.Sigma0
    return symmetrize(np.linalg.solve(_one_plus(S0, stats.G), S0))


def conditional_means(spec: HierModelSpec, stats: SufficientStats, Psi: ArrayLike) -> NDArray:
    """Conditional posterior means of all actions given latents ``Psi``.

    ``Psi`` may be a single ``(L*d,)`` vector or a batch ``(n, L*d)``; the
    result has shape ``(K, d)`` or ``(n, K, d)``.
    """
    S0 = spec.Sigma0
    Psi = np.asarray(Psi, dtype=float)
    prior_means = np.einsum("kda,...a->...kd", spec.Gamma_rows, Psi)
    rhs = prior_means + np.einsum("kde,ke->kd", S0, stats.B)
    A = _one_plus(S0, stats.G)
    if Psi.ndim == 1:
        return np.linalg.solve(A, rhs[..., None])[..., 0]
    # (A_i)^{-1} applied across the batch
    return np.einsum("kde,nke->nkd", np.linalg.inv(A), rhs)


def conditional_posterior(spec: HierModelSpec, stats: SufficientStats, i: int, Psi: ArrayLike) -> GaussianDist:
    S0 = spec.Sigma0[i]
    G = stats.G[i]
    A = np.eye(spec.d) + S0 @ G
    cov = np.linalg.solve(A, S0)
    mean = np.linalg.solve(A, spec.Gamma_rows[i] @ np.asarray(Psi, dtype=float) + S0 @ stats.B[i])
    return GaussianDist(mean, cov, jitter=spec.jitter)


# -- joint posterior over all action parameters ----------------------------------------

def _Gamma(spec: HierModelSpec) -> NDArray:
    return spec.Gamma_rows.reshape(spec.K * spec.d, spec.L * spec.d)


def joint_posterior_oracle(spec: HierModelSpec, history: Sequence[HistoryRecord]) -> GaussianDist:
    """Posterior of all ``K*d`` action parameters by plain Bayesian linear regression.

    Works on the flattened model: the prior is the latent-marginal
    ``N(Gamma mu_Psi, Sigma0 + Gamma Sigma_Psi Gamma^T)`` and each record is a
    regression row that places ``x`` in the block of the chosen action.
    """
    K, d = spec.K, spec.d
    Gam = _Gamma(spec)
    prior_mean = Gam @ spec.mu_Psi
    prior_cov = block_diag(list(spec.Sigma0)) + Gam @ spec.Sigma_Psi @ Gam.T
    prior_prec = np.linalg.inv(prior_cov)
    prec = prior_prec.copy()
    info = prior_prec @ prior_mean
    s2 = spec.sigma**2
    for rec in history:
        row = np.zeros(K * d)
        row[rec.a * d:(rec.a + 1) * d] = rec.x
        prec += np.outer(row, row) / s2
        info += rec.y * row / s2
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    return GaussianDist(cov @ info, cov)


def decomposed_marginal_posterior(spec: HierModelSpec, stats: SufficientStats) -> GaussianDist:
    """Posterior of all action parameters assembled from the hierarchical pieces.

    Total covariance: ``S + S L0 Gamma Sbar Gamma^T L0 S`` with
    ``S = (G + L0)^{-1}`` block diagonal and ``Sbar`` the hyper-posterior
    covariance. Total expectation: ``S (B + L0 Gamma mubar)``.
    ``S L0 = (I + Sigma0 G)^{-1}`` blockwise, so ``L0`` is never formed.
    """
    K, d = spec.K, spec.d
    hyper = hyper_posterior(spec, stats)
    S0 = spec.Sigma0
    A = _one_plus(S0, stats.G)
    M = np.linalg.inv(A)  # (K, d, d), each block S_i L0_i
    cond = symmetrize(np.linalg.solve(A, S0))
    MGam = np.einsum("kde,kea->kda", M, spec.Gamma_rows).reshape(K * d, spec.L * d)
    cov = block_diag(list(cond)) + MGam @ hyper.cov @ MGam.T
    mean = np.einsum("kde,ke->kd", cond, stats.B).reshape(K * d) + MGam @ hyper.mean
    return GaussianDist(mean, cov)
