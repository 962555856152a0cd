"""Ratings ingestion, low-rank factorization and the movie-recommendation model.

Movies are actions and users are contexts. Movie embeddings are clustered
with k-means; each cluster centre plays the role of one latent parameter,
and a movie's mixing weights are ``exp(-||x_i - c_l||^2)`` normalized to sum
to one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, DegenerateData, FormatError, ValidationError
from .model import FixedPool, HierModelSpec, Weights

__all__ = [
    "FactorizationResult",
    "KMeansResult",
    "MovieLensProblem",
    "RatingsDataset",
    "build_movielens_model",
    "check_malformed",
    "cluster_weights",
    "factorize",
    "kmeans",
    "load_embeddings",
    "load_ratings",
    "planted_embeddings",
    "save_embeddings",
    "write_ratings",
]

log = logging.getLogger(__name__)


@dataclass
class RatingsDataset:
    """Rating triples with users and items re-indexed densely from 0."""

    users: NDArray
    items: NDArray
    ratings: NDArray
    user_ids: NDArray
    item_ids: NDArray
    malformed: list[int] = field(default_factory=list)
    lines: int = 0

    @property
    def n_users(self) -> int:
        return self.user_ids.size

    @property
    def n_items(self) -> int:
        return self.item_ids.size

    def __len__(self) -> int:
        return self.ratings.size

    @classmethod
    def from_triples(cls, users, items, ratings, malformed=(), lines=0) -> "RatingsDataset":
        user_ids, u = np.unique(np.asarray(users, dtype=np.int64), return_inverse=True)
        item_ids, i = np.unique(np.asarray(items, dtype=np.int64), return_inverse=True)
        return cls(u.reshape(-1), i.reshape(-1), np.asarray(ratings, dtype=float),
                   user_ids, item_ids, list(malformed), lines)


def load_ratings(path: str | Path) -> RatingsDataset:
    """Read ``UserID::MovieID::Rating[::Timestamp]`` lines.

    Malformed lines are skipped and their 1-based line numbers recorded in
    ``malformed``; use :func:`check_malformed` to enforce a limit.
    """
    users, items, ratings, bad = [], [], [], []
    n = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("::")
            try:
                if len(parts) not in (3, 4):
                    raise ValueError
                u, i, r = int(parts[0]), int(parts[1]), float(parts[2])
                if not np.isfinite(r):
                    raise ValueError
            except ValueError:
                bad.append(n)
                continue
            users.append(u)
            items.append(i)
            ratings.append(r)
    if bad:
        log.warning("%s: skipped %d malformed line(s), first at line %d", path, len(bad), bad[0])
    return RatingsDataset.from_triples(users, items, ratings, malformed=bad, lines=n)


def check_malformed(dataset: RatingsDataset, limit: float = 0.01) -> None:
    """Raise :class:`FormatError` if more than ``limit`` of the lines were malformed."""
    total = len(dataset) + len(dataset.malformed)
    if total and len(dataset.malformed) / total > limit:
        raise FormatError(
            dataset.malformed[0],
            f"{len(dataset.malformed)} of {total} lines malformed (limit {limit:.0%})",
        )


# -- alternating least squares -------------------------------------------------------

@dataclass
class FactorizationResult:
    user_vectors: NDArray
    item_vectors: NDArray
    objective: list[float]

    def rmse(self, dataset: RatingsDataset) -> float:
        pred = np.einsum("nd,nd->n", self.user_vectors[dataset.users], self.item_vectors[dataset.items])
        return float(np.sqrt(np.mean((dataset.ratings - pred) ** 2)))


def _ridge_pass(rows: NDArray, cols: NDArray, r: NDArray, fixed: NDArray, n_rows: int, reg: float) -> NDArray:
    """Solve every row's ridge problem against the fixed factor in one batch."""
    d = fixed.shape[1]
    V = fixed[cols]
    gram = np.zeros((n_rows, d, d))
    np.add.at(gram, rows, V[:, :, None] * V[:, None, :])
    rhs = np.zeros((n_rows, d))
    np.add.at(rhs, rows, r[:, None] * V)
    gram += reg * np.eye(d)
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def _als_objective(ds: RatingsDataset, U: NDArray, V: NDArray, reg: float) -> float:
    pred = np.einsum("nd,nd->n", U[ds.users], V[ds.items])
    return float(np.sum((ds.ratings - pred) ** 2) + reg * (np.sum(U**2) + np.sum(V**2)))


def factorize(
    dataset: RatingsDataset, d: int, reg: float = 0.1, iters: int = 20, seed: int = 0
) -> FactorizationResult:
    """Rank-``d`` factorization of the observed ratings by alternating ridge regression.

    Each sweep solves all user vectors exactly given the items, then all
    item vectors given the users, so the regularized squared error never
    increases.
    """
    if len(dataset) == 0:
        raise DegenerateData("no ratings to factorize")
    if d < 1:
        raise ValidationError(f"rank must be at least 1, got {d}")
    counts = np.bincount(dataset.items, minlength=dataset.n_items)
    if np.any(counts == 0):
        raise DegenerateData(f"{int(np.sum(counts == 0))} item(s) have no ratings")
    if np.any(np.bincount(dataset.users, minlength=dataset.n_users) == 0):
        raise DegenerateData("some users have no ratings")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(max(np.mean(np.abs(dataset.ratings)), 1e-12) / d)
    U = rng.normal(0.0, scale, (dataset.n_users, d))
    V = rng.normal(0.0, scale, (dataset.n_items, d))
    objective = [_als_objective(dataset, U, V, reg)]
    for _ in range(iters):
        U = _ridge_pass(dataset.users, dataset.items, dataset.ratings, V, dataset.n_users, reg)
        V = _ridge_pass(dataset.items, dataset.users, dataset.ratings, U, dataset.n_items, reg)
        objective.append(_als_objective(dataset, U, V, reg))
    return FactorizationResult(U, V, objective)


# -- k-means ---------------------------------------------------------------------------

@dataclass
class KMeansResult:
    centroids: NDArray
    labels: NDArray
    objective: list[float]
    reseeded: int = 0


def _sq_dist(X: NDArray, C: NDArray) -> NDArray:
    return np.maximum(
        np.sum(X**2, axis=1)[:, None] - 2.0 * X @ C.T + np.sum(C**2, axis=1)[None, :], 0.0
    )


def _kmeans_pp(X: NDArray, k: int, rng: np.random.Generator) -> NDArray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers.append(X[idx])
        closest = np.minimum(closest, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(
    X: NDArray, k: int, rng: np.random.Generator, max_iter: int = 100, tol: float = 1e-8
) -> KMeansResult:
    """Lloyd's algorithm from a k-means++ start.

    Stops after ``max_iter`` iterations or once the largest centroid shift
    falls below ``tol`` relative to the data scale. A cluster that loses all
    its points is moved onto the point farthest from its current centroid.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= number of points, got k={k}, n={n}")
    C = _kmeans_pp(X, k, rng)
    scale = max(float(np.max(np.abs(X))), 1e-300)
    labels = np.argmin(_sq_dist(X, C), axis=1)
    objective = []
    reseeded = 0
    for _ in range(max_iter):
        new = C.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        dist = _sq_dist(X, new)
        labels = np.argmin(dist, axis=1)
        for j in range(k):
            if not np.any(labels == j):
                far = int(np.argmax(dist[np.arange(n), labels]))
                new[j] = X[far]
                reseeded += 1
                dist = _sq_dist(X, new)
                labels = np.argmin(dist, axis=1)
        objective.append(float(np.sum(dist[np.arange(n), labels])))
        shift = float(np.max(np.abs(new - C)))
        C = new
        if shift <= tol * scale:
            break
    return KMeansResult(C, labels, objective, reseeded)


# -- model construction ------------------------------------------------------------------

def cluster_weights(X: NDArray, centroids: NDArray) -> NDArray:
    """``exp(-||x - c_l||^2)`` normalized per row; computed stably in log space."""
    logits = -_sq_dist(np.asarray(X, dtype=float), centroids)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class MovieLensProblem:
    """Per-run problem: a random subset of ``K`` movies over fixed clusters.

    Call with a generator to draw the subset and obtain the model.
    """

    weights: NDArray  # (n_items, L), rows sum to one
    mean: NDArray
    variance: NDArray
    K: int
    scale_hyper: float = 0.75
    scale_cond: float = 0.25
    sigma: float = 1.0
    jitter: float = 0.0

    @classmethod
    def fit(
        cls,
        item_vectors: NDArray,
        L: int,
        K: int,
        rng: np.random.Generator,
        scale_hyper: float = 0.75,
        scale_cond: float = 0.25,
        sigma: float = 1.0,
        kmeans_iters: int = 100,
        kmeans_tol: float = 1e-8,
        jitter: float = 0.0,
    ) -> "MovieLensProblem":
        items = np.asarray(item_vectors, dtype=float)
        if K > items.shape[0]:
            raise ValidationError(f"K={K} exceeds the number of items ({items.shape[0]})")
        km = kmeans(items, L, rng, max_iter=kmeans_iters, tol=kmeans_tol)
        return cls(
            weights=cluster_weights(items, km.centroids),
            mean=items.mean(axis=0),
            variance=items.var(axis=0),
            K=K,
            scale_hyper=scale_hyper,
            scale_cond=scale_cond,
            sigma=sigma,
            jitter=jitter,
        )

    @property
    def L(self) -> int:
        return self.weights.shape[1]

    @property
    def d(self) -> int:
        return self.mean.size

    def spec_for(self, movies: NDArray) -> HierModelSpec:
        L, d, K = self.L, self.d, len(movies)
        block = np.diag(self.variance)
        return HierModelSpec(
            L=L,
            K=K,
            d=d,
            mu_Psi=np.tile(self.mean, L),
            Sigma_Psi=self.scale_hyper * np.kron(np.eye(L), block),
            Sigma0=np.broadcast_to(self.scale_cond * block, (K, d, d)),
            mixing=Weights(self.weights[movies]),
            sigma=self.sigma,
            jitter=self.jitter,
        )

    def __call__(self, rng: np.random.Generator) -> HierModelSpec:
        movies = rng.choice(self.weights.shape[0], size=self.K, replace=False)
        return self.spec_for(np.sort(movies))


def build_movielens_model(
    item_vectors: NDArray,
    user_vectors: NDArray,
    L: int,
    K: int,
    seed: int,
    scale_hyper: float = 0.75,
    scale_cond: float = 0.25,
    sigma: float = 1.0,
) -> tuple[HierModelSpec, FixedPool]:
    """Cluster the items, draw ``K`` of them and return the model and user-context pool."""
    rng = np.random.default_rng(seed)
    problem = MovieLensProblem.fit(item_vectors, L, K, rng, scale_hyper, scale_cond, sigma)
    return problem(rng), FixedPool(np.asarray(user_vectors, dtype=float))


def load_embeddings(path: str | Path) -> tuple[NDArray, NDArray]:
    """Read ``user_vectors`` and ``item_vectors`` from an ``.npz`` archive."""
    try:
        with np.load(path) as data:
            return np.asarray(data["user_vectors"]), np.asarray(data["item_vectors"])
    except KeyError as exc:
        raise DataError(f"{path}: missing array {exc}") from None


def save_embeddings(path: str | Path, user_vectors: NDArray, item_vectors: NDArray) -> None:
    np.savez(path, user_vectors=user_vectors, item_vectors=item_vectors)


def planted_embeddings(
    n_users: int,
    n_items: int,
    d: int,
    L: int,
    rng: np.random.Generator,
    separation: float = 10.0,
    radius: float = 0.1,
) -> tuple[NDArray, NDArray, NDArray]:
    """Synthetic stand-in for learned embeddings: items in ``L`` tight clusters.

    Returns user vectors, item vectors and each item's planted cluster.
    Cluster centres sit ``separation`` apart along random orthogonal
    directions (``d >= L``) or along a line otherwise.
    """
    if d >= L:
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        centers = separation / np.sqrt(2.0) * Q[:, :L].T
    else:
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        centers = separation * np.arange(L)[:, None] * direction[None, :]
    labels = np.arange(n_items) % L
    items = centers[labels] + radius * rng.normal(size=(n_items, d)) / np.sqrt(d)
    users = rng.normal(size=(n_users, d)) / np.sqrt(d)
    return users, items, labels


def write_ratings(path: str | Path, users: NDArray, items: NDArray, ratings: NDArray) -> None:
    """Write triples in the ``::`` format read by :func:`load_ratings` (1-based ids)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, (u, i, r) in enumerate(zip(users, items, ratings)):
            fh.write(f"{int(u) + 1}::{int(i) + 1}::{float(r)!r}::{t}\n")
