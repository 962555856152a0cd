"""Dense SPD linear algebra, structured matrices and Gaussian sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import NotPositiveDefinite

__all__ = [
    "GaussianDist",
    "SpdMatrix",
    "block_diag",
    "cholesky",
    "kron",
    "sample_gaussian",
    "spd_inverse",
    "symmetrize",
]


def symmetrize(m: NDArray) -> NDArray:
    """Return ``(m + m.T) / 2``; works on stacks of matrices too."""
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _jittered(m: NDArray, jitter: float) -> NDArray:
    if jitter <= 0.0:
        return m
    dim = m.shape[-1]
    return m + jitter * np.trace(m) / dim * np.eye(dim)


def cholesky(m: ArrayLike | "SpdMatrix", jitter: float = 0.0) -> NDArray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    The input is symmetrized first. ``jitter`` is a relative diagonal load
    (``jitter * trace / dim``); it is off by default so that broken posterior
    algebra fails loudly instead of being smoothed over.

    Raises
    ------
    NotPositiveDefinite
        If the factorization fails.
    """
    if isinstance(m, SpdMatrix):
        return m.chol
    a = symmetrize(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    a = _jittered(a, jitter)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def spd_inverse(m: ArrayLike, jitter: float = 0.0) -> NDArray:
    """Inverse of an SPD matrix through its Cholesky factor, symmetrized."""
    a = symmetrize(np.asarray(m, dtype=float))
    chol = cholesky(a, jitter=jitter)
    inv = scipy.linalg.cho_solve((chol, True), np.eye(a.shape[0]), check_finite=False)
    return symmetrize(inv)


class SpdMatrix:
    """A symmetric positive definite matrix, validated at construction."""

    __slots__ = ("data", "chol")

    def __init__(self, data: ArrayLike, jitter: float = 0.0) -> None:
        a = symmetrize(np.atleast_2d(np.asarray(data, dtype=float)))
        self.chol = cholesky(a, jitter=jitter)
        self.data = _jittered(a, jitter)
        self.data.setflags(write=False)
        self.chol.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def inverse(self) -> NDArray:
        inv = scipy.linalg.cho_solve((self.chol, True), np.eye(self.dim))
        return symmetrize(inv)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim})"


@dataclass(frozen=True)
class GaussianDist:
    """Multivariate normal ``N(mean, cov)`` with a cached Cholesky factor.

    The covariance is symmetrized on construction and must factorize.
    """

    mean: NDArray
    cov: NDArray
    jitter: float = 0.0
    chol: NDArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = symmetrize(np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        cov = _jittered(cov, self.jitter)
        chol = cholesky(cov)
        for arr in (mean, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator, size: int | None = None) -> NDArray:
        return sample_gaussian(self, rng, size=size)


def sample_gaussian(
    d: GaussianDist, rng: np.random.Generator, size: int | None = None
) -> NDArray:
    """Draw ``mean + chol @ z`` with ``z`` standard normal from ``rng``.

    With ``size`` set, returns an array of shape ``(size, dim)``.
    """
    if size is None:
        z = rng.standard_normal(d.dim)
        return d.mean + d.chol @ z
    z = rng.standard_normal((size, d.dim))
    return d.mean + z @ d.chol.T


def kron(a: ArrayLike, b: ArrayLike) -> NDArray:
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def block_diag(blocks) -> NDArray:
    """Block-diagonal assembly of square blocks (scalars count as 1x1)."""
    mats = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    for m in mats:
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"block_diag expects square blocks, got {m.shape}")
    if not mats:
        return np.zeros((0, 0))
    return scipy.linalg.block_diag(*mats)
