"""Bayes-regret upper bounds and the spectral facts behind them."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, UnboundedContext
from .model import ContextSpec, FixedPool, HierModelSpec, Matrices, UniformCube, Weights

__all__ = [
    "BoundInputs",
    "BoundReport",
    "SpectralReport",
    "bound_inputs_from_spec",
    "bound_report",
    "regret_bound",
    "regret_bound_mixed",
    "spectral_checks",
]


@dataclass(frozen=True)
class BoundInputs:
    n: int
    delta: float
    K: int
    L: int
    d: int
    sigma: float
    lambda_1_0: float
    lambda_d_0: float
    lambda_1_Psi: float
    kappa_b: float
    kappa_x: float
    kappa_c1: float | None = None
    kappa_c2: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("lambda_1_0", "lambda_d_0", "lambda_1_Psi", "kappa_b", "kappa_x", "sigma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class BoundReport:
    """The bound together with every constant that went into it."""

    bound: float
    c1: float
    c2: float
    c_Psi: float
    R_action: float
    R_latent: float
    first_term: float
    second_term: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _eigh_extremes(m: np.ndarray) -> tuple[float, float]:
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    return float(w[-1]), float(w[0])


def _kappa_x(ctx: ContextSpec) -> float:
    if isinstance(ctx, UniformCube):
        low = np.broadcast_to(np.asarray(ctx.low, dtype=float), (ctx.d,))
        high = np.broadcast_to(np.asarray(ctx.high, dtype=float), (ctx.d,))
        return float(np.sum(np.maximum(np.abs(low), np.abs(high)) ** 2))
    if isinstance(ctx, FixedPool):
        if ctx.vectors.shape[0] == 0:
            raise UnboundedContext("empty context pool")
        return float(np.max(np.sum(ctx.vectors**2, axis=1)))
    raise UnboundedContext(f"no norm bound for context spec {type(ctx).__name__}")


def _mixed_kappas(spec: HierModelSpec) -> tuple[float, float]:
    C = spec.Gamma_rows  # (K, d, Ld)
    kc1 = max(float(np.linalg.eigvalsh(Ci.T @ Ci)[-1]) for Ci in C)
    full = C.reshape(spec.K * spec.d, spec.L * spec.d)
    # lambda_1(C C^T) through the smaller Gram matrix
    kc2 = float(np.linalg.eigvalsh(full.T @ full)[-1])
    return kc1, kc2


def bound_inputs_from_spec(spec: HierModelSpec, ctx: ContextSpec, n: int, delta: float) -> BoundInputs:
    extremes = [_eigh_extremes(m) for m in spec.Sigma0]
    lam10 = max(e[0] for e in extremes)
    lamd0 = min(e[1] for e in extremes)
    lam1psi = _eigh_extremes(spec.Sigma_Psi)[0]
    if isinstance(spec.mixing, Weights):
        kappa_b = float(np.max(np.sum(spec.mixing.b**2, axis=1)))
    else:
        kappa_b = float("nan")
    kc1, kc2 = _mixed_kappas(spec)
    if isinstance(spec.mixing, Matrices):
        kappa_b = kc1
    return BoundInputs(
        n=n, delta=delta, K=spec.K, L=spec.L, d=spec.d, sigma=spec.sigma,
        lambda_1_0=lam10, lambda_d_0=lamd0, lambda_1_Psi=lam1psi,
        kappa_b=kappa_b, kappa_x=_kappa_x(ctx), kappa_c1=kc1, kappa_c2=kc2,
    )


def _bound(inp: BoundInputs, c_psi: float, latent_kappa: float) -> BoundReport:
    s2 = inp.sigma**2
    kx, l10 = inp.kappa_x, inp.lambda_1_0
    c1 = kx * l10 / math.log1p(kx * l10 / s2)
    c2 = c_psi * (1.0 + kx * l10 / s2) / math.log1p(c_psi / s2)
    r_action = inp.K * inp.d * c1 * math.log1p(inp.n * kx * l10 / (s2 * inp.K * inp.d))
    r_latent = inp.L * inp.d * c2 * math.log1p(inp.K * latent_kappa * inp.lambda_1_Psi / inp.lambda_d_0)
    first = math.sqrt(2.0 * inp.n * math.log(1.0 / inp.delta) * (r_action + r_latent))
    second = math.sqrt(2.0 / math.pi * (l10 + c_psi) * kx) * inp.K * inp.n * inp.delta
    return BoundReport(
        bound=first + second, c1=c1, c2=c2, c_Psi=c_psi,
        R_action=r_action, R_latent=r_latent, first_term=first, second_term=second,
    )


def bound_report(inp: BoundInputs, mixed: bool = False) -> BoundReport:
    """Evaluate the bound and keep the intermediate constants.

    ``mixed=True`` selects the matrix-mixing variant, where sparsity enters
    through ``kappa_c1`` (latent term) and ``kappa_c2`` (``c_Psi``).
    """
    if not mixed:
        c_psi = inp.K * inp.kappa_x * inp.lambda_1_0**2 * inp.lambda_1_Psi * inp.kappa_b / inp.lambda_d_0**2
        return _bound(inp, c_psi, inp.kappa_b)
    if inp.kappa_c1 is None or inp.kappa_c2 is None:
        raise ConfigError("matrix-mixing bound needs kappa_c1 and kappa_c2")
    c_psi = inp.kappa_x * inp.kappa_c2 * inp.lambda_1_0**2 * inp.lambda_1_Psi / inp.lambda_d_0**2
    return _bound(inp, c_psi, inp.kappa_c1)


def regret_bound(inp: BoundInputs) -> float:
    """Bayes-regret upper bound of hierarchical TS with scalar mixing weights."""
    return bound_report(inp).bound


def regret_bound_mixed(inp: BoundInputs) -> float:
    return bound_report(inp, mixed=True).bound


@dataclass(frozen=True)
class SpectralReport:
    lambda_GGt: float
    lambda_D: float
    lambda_GtG: float
    K_kappa_b: float

    @property
    def ok(self) -> bool:
        tol = 1e-10 * max(1.0, self.K_kappa_b)
        return (
            abs(self.lambda_GGt - self.lambda_D) <= tol
            and self.lambda_GGt <= self.K_kappa_b + tol
            and self.lambda_GtG <= self.K_kappa_b + tol
        )


def spectral_checks(spec: HierModelSpec) -> SpectralReport:
    """Largest eigenvalues of ``Gamma Gamma^T``, ``D = (b_i . b_j)`` and ``Gamma^T Gamma``."""
    if not isinstance(spec.mixing, Weights):
        raise ConfigError("spectral checks need scalar mixing weights")
    b = spec.mixing.b
    Gam = spec.Gamma_rows.reshape(spec.K * spec.d, spec.L * spec.d)
    D = b @ b.T
    return SpectralReport(
        lambda_GGt=float(np.linalg.eigvalsh(Gam @ Gam.T)[-1]),
        lambda_D=float(np.linalg.eigvalsh(D)[-1]),
        lambda_GtG=float(np.linalg.eigvalsh(Gam.T @ Gam)[-1]),
        K_kappa_b=spec.K * float(np.max(np.sum(b**2, axis=1))),
    )
