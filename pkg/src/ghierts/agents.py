"""Bandit policies: hierarchical Thompson sampling and flat baselines.

Every agent keeps only sufficient statistics and recomputes its posteriors
from them when asked to act. Agents hold their own believed model, which in
the presets is the environment's model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, NonBlockDiagonalHyperPrior, NotPositiveDefinite
from .gaussian import symmetrize
from .model import EnvDraw, HierModelSpec, Weights, best_action, marginal_prior
from .posterior import SufficientStats, update_stats

__all__ = [
    "AGENTS",
    "Agent",
    "AgentFactory",
    "GHierTS",
    "GHierTSFa",
    "HierTS",
    "IndTS",
    "LinTS",
    "LinUCB",
    "OracleAgent",
    "make_agent",
    "reduce_to_single_latent",
]


class Agent:
    """Base class: the act/observe contract used by the simulator."""

    name = "agent"
    label = "Agent"

    def __init__(self, spec: HierModelSpec) -> None:
        self.spec = spec
        self.stats = SufficientStats.empty(spec.K, spec.d)
        self.last_theta: NDArray | None = None
        # per-action caches are refreshed only for actions observed since the last sync
        self._stale: set[int] = set()
        self._synced: tuple[int, int] | None = None

    def _stale_actions(self) -> list[int | slice]:
        """Rows of the per-action caches that are out of date (all rows on first use)."""
        key = (id(self.stats), self.stats.n_obs)
        # integer rows keep the usual single-action refresh on cheap views
        rows = [slice(None)] if self._synced != key else sorted(self._stale)
        self._stale.clear()
        self._synced = key
        return rows

    def _sync(self) -> None:
        for row in self._stale_actions():
            self._refresh(row)

    def _refresh(self, row: int | slice) -> None:
        """Recompute cached per-action quantities for one action or all of them."""
        raise NotImplementedError

    def act(self, x: ArrayLike, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def observe(self, x: ArrayLike, a: int, y: float) -> "Agent":
        in_sync = self._synced == (id(self.stats), self.stats.n_obs)
        update_stats(self.stats, x, a, y, self.spec.sigma)
        if in_sync:
            self._stale.add(int(a))
            self._synced = (id(self.stats), self.stats.n_obs)
        return self

    def bind_environment(self, draw: EnvDraw) -> None:
        """Called once per episode with the true parameters; only oracles look."""


def _sample_mvn_batch(means: NDArray, chols: NDArray, rng: np.random.Generator, size: int | None) -> NDArray:
    K, d = means.shape[-2:]
    if size is None:
        z = rng.standard_normal((K, d))
        return means + (chols @ z[..., None])[..., 0]
    z = rng.standard_normal((size, K, d))
    return means + np.einsum("kde,nke->nkd", chols, z)


def _batch_cholesky(covs: NDArray) -> NDArray:
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("a per-action posterior covariance is not positive definite") from None


def _regression_posteriors(
    prior_means: NDArray, prior_covs: NDArray, G: NDArray, B: NDArray
) -> tuple[NDArray, NDArray]:
    """Per-action conjugate posteriors ``N(m_i, S_i)`` updated by ``(G_i, B_i)``.

    ``S = (I + S0 G)^{-1} S0`` and ``m = (I + S0 G)^{-1} (m0 + S0 B)``.
    """
    d = prior_means.shape[-1]
    A = np.eye(d) + prior_covs @ G
    rhs = np.concatenate([prior_covs, (prior_means + (prior_covs @ B[..., None])[..., 0])[..., None]], axis=-1)
    sol = np.linalg.solve(A, rhs)
    return sol[..., d], symmetrize(sol[..., :d])


class _Flat(Agent):
    """Independent per-action Gaussian posteriors started from the latent-marginal prior."""

    _sampling = True

    def __init__(self, spec: HierModelSpec) -> None:
        super().__init__(spec)
        self.prior_means, self.prior_covs = marginal_prior(spec)
        self._means = np.empty_like(self.prior_means)
        self._covs = np.empty_like(self.prior_covs)
        self._chols = np.empty_like(self.prior_covs)

    def _refresh(self, row: int | slice) -> None:
        G, B = self.stats.G[row], self.stats.B[row]
        self._means[row], self._covs[row] = _regression_posteriors(self.prior_means[row], self.prior_covs[row], G, B)
        if self._sampling:
            self._chols[row] = _batch_cholesky(self._covs[row])

    def posteriors(self) -> tuple[NDArray, NDArray]:
        self._sync()
        return self._means.copy(), self._covs.copy()


class _Hierarchical(Agent):
    """Shared second stage: sample each action given sampled latents.

    Everything per-action derives from ``A_i^{-1}`` with
    ``A_i = I + G_i Sigma0_i``: precision weights ``A^{-1} G``, MLE weights
    ``A^{-1} B``, conditional covariances ``A^{-T} Sigma0`` and conditional
    means ``A^{-T} (Gamma_i Psi + Sigma0 B)``.
    """

    def _latent_sample(self, rng, size, P, m) -> NDArray:
        raise NotImplementedError

    def __init__(self, spec: HierModelSpec) -> None:
        super().__init__(spec)
        K, d, Ld = spec.K, spec.d, spec.L * spec.d
        self._P = np.empty((K, d, d))
        self._m = np.empty((K, d))
        self._chols = np.empty((K, d, d))
        self._lift = np.empty((K, d, Ld))  # A_i^{-T} Gamma_i
        self._shift = np.empty((K, d))  # A_i^{-T} Sigma0_i B_i
        self._eye = np.eye(d)
        self._S0_Gamma = np.concatenate([spec.Sigma0, spec.Gamma_rows], axis=-1)

    def _refresh(self, row: int | slice) -> None:
        spec = self.spec
        S0, G, B = spec.Sigma0[row], self.stats.G[row], self.stats.B[row]
        d = spec.d
        Ainv = np.linalg.inv(self._eye + G @ S0)
        self._P[row] = symmetrize(Ainv @ G)
        self._m[row] = (Ainv @ B[..., None])[..., 0]
        # one product for A^{-T} [Sigma0 | Gamma | Sigma0 B]
        out = np.swapaxes(Ainv, -1, -2) @ np.concatenate([self._S0_Gamma[row], S0 @ B[..., None]], axis=-1)
        self._chols[row] = _batch_cholesky(symmetrize(out[..., :d]))
        self._lift[row] = out[..., d:-1]
        self._shift[row] = out[..., -1]

    def sample_parameters(self, rng: np.random.Generator, size: int | None = None) -> NDArray:
        """One hierarchical draw of all action parameters, ``(K, d)``.

        With ``size`` set, ``size`` independent draws of shape ``(size, K, d)``.
        """
        self._sync()
        psi = self._latent_sample(rng, size, self._P, self._m)
        if size is None:
            means = self._lift @ psi + self._shift
        else:
            means = np.einsum("kda,na->nkd", self._lift, psi) + self._shift
        return _sample_mvn_batch(means, self._chols, rng, size)

    def act(self, x: ArrayLike, rng: np.random.Generator) -> int:
        theta = self.sample_parameters(rng)
        self.last_theta = theta
        return best_action(theta, x)[0]


def _kron_sum(bb: NDArray, P: NDArray, L: int) -> NDArray:
    """``sum_i (b_i b_i^T) kron P_i`` given ``bb[i] = vec(b_i b_i^T)``."""
    K, d, _ = P.shape
    blocks = (bb.T @ P.reshape(K, d * d)).reshape(L, L, d, d)
    return blocks.transpose(0, 2, 1, 3).reshape(L * d, L * d)


class GHierTS(_Hierarchical):
    """Hierarchical Thompson sampling with the exact joint hyper-posterior.

    Each round samples ``Psi ~ Q_t``, then ``theta_i ~ P_t,i(. | Psi)`` for
    every action, and plays the argmax of ``x @ theta_i``. Only ``Ld x Ld``
    and ``d x d`` matrices are formed.
    """

    name = "ghierts"
    label = "G-HierTS"

    def __init__(self, spec: HierModelSpec) -> None:
        super().__init__(spec)
        if spec.is_weights:
            b = spec.mixing.b
            self._bb = (b[:, :, None] * b[:, None, :]).reshape(spec.K, spec.L**2)
        self._prior_info = spec.Sigma_Psi_inv @ spec.mu_Psi

    def _hyper(self, P: NDArray, m: NDArray) -> tuple[NDArray, NDArray]:
        spec = self.spec
        if spec.is_weights:
            prec = _kron_sum(self._bb, P, spec.L)
            info = (spec.mixing.b.T @ m).reshape(-1)
        else:
            Gam = spec.Gamma_rows
            prec = np.einsum("kda,kde,keb->ab", Gam, P, Gam)
            info = np.einsum("kda,kd->a", Gam, m)
        return spec.Sigma_Psi_inv + prec, self._prior_info + info

    def _latent_sample(self, rng, size, P, m) -> NDArray:
        prec, info = self._hyper(P, m)
        # the factorization reads only the lower triangle, so no symmetrization is needed
        return _sample_from_precision(prec, info, rng, size, self.spec.jitter)


def _precision_cholesky(prec: NDArray, jitter: float = 0.0) -> NDArray:
    """Lower Cholesky factor ``C`` with ``prec = C C^T``."""
    if jitter > 0.0:
        prec = prec + jitter * np.trace(prec) / prec.shape[0] * np.eye(prec.shape[0])
    C, info = scipy.linalg.lapack.dpotrf(prec, lower=1)
    if info != 0:
        raise NotPositiveDefinite("hyper-posterior precision is not positive definite")
    return C


def _tri_solve(C: NDArray, rhs: NDArray, trans: int = 0) -> NDArray:
    return scipy.linalg.lapack.dtrtrs(C, rhs, lower=1, trans=trans)[0]


def _precision_solve(prec: NDArray, info: NDArray, jitter: float = 0.0) -> NDArray:
    C = _precision_cholesky(prec, jitter)
    return _tri_solve(C, _tri_solve(C, info), trans=1)


def _sample_from_precision(prec, info, rng, size, jitter=0.0):
    # prec = C C^T, so N(prec^{-1} info, prec^{-1}) draws are C^{-T} (C^{-1} info + z)
    C = _precision_cholesky(prec, jitter)
    w = _tri_solve(C, info)
    n = prec.shape[0]
    if size is None:
        return _tri_solve(C, w + rng.standard_normal(n), trans=1)
    z = rng.standard_normal((size, n))
    return _tri_solve(C, w[:, None] + z.T, trans=1).T


class GHierTSFa(_Hierarchical):
    """Hierarchical Thompson sampling with a factored hyper-posterior.

    Latents are sampled independently, each from its own ``d``-dimensional
    Gaussian. ``mean="exact"`` centres factor ``l`` at the exact posterior
    mean block; ``mean="standalone"`` uses the uncoupled per-latent estimate
    and never forms an ``Ld x Ld`` matrix.
    """

    name = "ghierts-fa"
    label = "G-HierTS-Fa"

    def __init__(self, spec: HierModelSpec, mean: str = "exact") -> None:
        if not spec.is_weights:
            raise NonBlockDiagonalHyperPrior("the factored agent needs scalar mixing weights")
        if not spec.is_block_diagonal():
            raise NonBlockDiagonalHyperPrior("Sigma_Psi couples different latent parameters")
        if mean not in ("exact", "standalone"):
            raise ConfigError(f"unknown factored mean mode {mean!r}")
        super().__init__(spec)
        self.mean = mean
        L, d = spec.L, spec.d
        self._block_prior_prec = np.stack(
            [spec.Sigma_Psi_inv[l * d:(l + 1) * d, l * d:(l + 1) * d] for l in range(L)]
        )
        b = spec.mixing.b
        self._bb = (b[:, :, None] * b[:, None, :]).reshape(spec.K, L**2)
        self._prior_info = (spec.Sigma_Psi_inv @ spec.mu_Psi).reshape(L, d)

    def _latent_sample(self, rng, size, P, m) -> NDArray:
        spec = self.spec
        L, d = spec.L, spec.d
        b = spec.mixing.b
        block_prec = self._block_prior_prec + (b.T**2 @ P.reshape(spec.K, d * d)).reshape(L, d, d)
        info = self._prior_info + b.T @ m  # (L, d)
        Cinv = np.linalg.inv(_batch_cholesky(symmetrize(block_prec)))  # block_prec = C C^T
        CinvT = np.swapaxes(Cinv, -1, -2)
        if self.mean == "exact":
            prec = spec.Sigma_Psi_inv + _kron_sum(self._bb, P, L)
            means = _precision_solve(symmetrize(prec), info.reshape(-1), spec.jitter).reshape(L, d)
        else:
            means = (CinvT @ (Cinv @ info[..., None]))[..., 0]
        if size is None:
            z = rng.standard_normal((L, d))
            return (means + (CinvT @ z[..., None])[..., 0]).reshape(L * d)
        z = rng.standard_normal((size, L, d))
        return (means + np.einsum("lde,nle->nld", CinvT, z)).reshape(size, L * d)


class LinTS(_Flat):
    """Linear Thompson sampling with independent per-action posteriors.

    Each action's prior is the latent-marginal
    ``N(Gamma_i mu_Psi, Sigma0_i + Gamma_i Sigma_Psi Gamma_i^T)`` and is
    updated with that action's own observations only.
    """

    name = "lints"
    label = "LinTS"

    def sample_parameters(self, rng: np.random.Generator, size: int | None = None) -> NDArray:
        self._sync()
        return _sample_mvn_batch(self._means, self._chols, rng, size)

    def act(self, x: ArrayLike, rng: np.random.Generator) -> int:
        theta = self.sample_parameters(rng)
        self.last_theta = theta
        return best_action(theta, x)[0]


class IndTS(LinTS):
    """K separate posteriors, one per action; same contract as LinTS."""

    name = "indts"
    label = "IndTS"


class LinUCB(_Flat):
    name = "linucb"
    label = "LinUCB"
    _sampling = False  # only covariances are needed, and they may be singular

    def __init__(self, spec: HierModelSpec, alpha: float = 1.0) -> None:
        super().__init__(spec)
        self.alpha = float(alpha)

    def scores(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        self._sync()
        width = np.sqrt(np.maximum(np.einsum("d,kde,e->k", x, self._covs, x), 0.0))
        return self._means @ x + self.alpha * width

    def act(self, x: ArrayLike, rng: np.random.Generator | None = None) -> int:
        return int(np.argmax(self.scores(x)))


def reduce_to_single_latent(spec: HierModelSpec) -> HierModelSpec:
    """Collapse the latents into their average.

    The hyper-prior becomes the law of ``(1/L) sum_l psi_l`` and action ``i``
    attaches to it with weight ``sum_l b_il``.
    """
    if not spec.is_weights:
        raise ConfigError("the single-latent reduction needs scalar mixing weights")
    L, d = spec.L, spec.d
    avg = np.kron(np.full((1, L), 1.0 / L), np.eye(d))  # d x Ld
    return spec.replace(
        L=1,
        mu_Psi=avg @ spec.mu_Psi,
        Sigma_Psi=avg @ spec.Sigma_Psi @ avg.T,
        mixing=Weights(spec.mixing.b.sum(axis=1, keepdims=True)),
    )


class HierTS(GHierTS):
    """Hierarchical TS with one latent parameter: the average of all latents."""

    name = "hierts"
    label = "HierTS"

    def __init__(self, spec: HierModelSpec) -> None:
        super().__init__(reduce_to_single_latent(spec))
        self.original_spec = spec


class OracleAgent(Agent):
    """Plays the best action under the true parameters; zero regret by design."""

    name = "oracle"
    label = "Oracle"

    def bind_environment(self, draw: EnvDraw) -> None:
        self.theta_star = draw.Theta_star

    def act(self, x: ArrayLike, rng: np.random.Generator | None = None) -> int:
        return best_action(self.theta_star, x)[0]


AGENTS: dict[str, type[Agent]] = {
    cls.name: cls for cls in (GHierTS, GHierTSFa, LinTS, LinUCB, HierTS, IndTS, OracleAgent)
}


def make_agent(name: str, spec: HierModelSpec, **options: Any) -> Agent:
    try:
        cls = AGENTS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown agent {name!r}; choose from {sorted(AGENTS)}") from None
    return cls(spec, **options)


@dataclass(frozen=True)
class AgentFactory:
    """Picklable recipe for building a fresh agent from a model spec."""

    name: str
    options: tuple = field(default_factory=tuple)

    def __call__(self, spec: HierModelSpec) -> Agent:
        return make_agent(self.name, spec, **dict(self.options))

    @property
    def label(self) -> str:
        return AGENTS[self.name].label
