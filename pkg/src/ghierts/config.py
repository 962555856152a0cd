"""Experiment configuration files.

Grammar (one item per line, UTF-8)::

    # comment            (lines starting with '#' or ';')
    [section]            (experiment, model, context, agents, movielens, sweep, bound)
    key = value

Keys are case-insensitive and may appear at most once per section. Values
are scalars, comma-separated lists, or matrices written as rows separated
by ``;`` with entries separated by spaces or commas. A list of matrices
separates its members with ``|``.

Presets
-------
synthetic
    Gaussian latents with mixing weights redrawn every run.
custom
    A fully specified model given in ``[model]`` (``mu_psi``, ``sigma_psi``,
    ``sigma0``, and ``weights`` or ``matrices``); fixed across runs.
movielens
    Item and user embeddings from ``[movielens] embeddings`` (an ``.npz``
    written by ``ghierts ingest``); clusters are fitted once and a fresh
    subset of ``K`` items is drawn every run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .agents import AGENTS, AgentFactory
from .errors import ConfigError, ParseError, ValidationError
from .model import FixedPool, HierModelSpec, Matrices, UniformCube, Weights
from .presets import SyntheticProblem

__all__ = ["ExperimentConfig", "model_to_text", "parse_config", "parse_text"]

PRESETS = ("synthetic", "custom", "movielens")
DEFAULT_AGENTS = ("ghierts", "ghierts-fa", "lints", "linucb", "hierts")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "synthetic"
    horizon: int = 2000
    runs: int = 20
    seed: int = 0
    parallelism: int = 1
    out: str = "results"
    svg: bool = False
    # model
    L: int = 5
    K: int = 20
    d: int = 2
    sigma: float = 1.0
    prior_mean: float = 0.0
    hyper_var: float = 3.0
    cond_var: float = 1.0
    weight_low: float = -1.0
    weight_high: float = 1.0
    jitter: float = 0.0
    custom_model: HierModelSpec | None = field(default=None, compare=False)
    # context
    context_low: float = -1.0
    context_high: float = 1.0
    # agents
    agents: tuple[str, ...] = DEFAULT_AGENTS
    linucb_alpha: float = 1.0
    fa_mean: str = "exact"
    # movielens
    embeddings: str = ""
    scale_hyper: float = 0.75
    scale_cond: float = 0.25
    kmeans_iters: int = 100
    kmeans_tol: float = 1e-8
    # sweep grid; empty means "just the base values"
    sweep_K: tuple[int, ...] = ()
    sweep_d: tuple[int, ...] = ()
    sweep_L: tuple[int, ...] = ()
    # bound
    delta: float | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ValidationError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        for name in ("horizon", "runs", "parallelism", "L", "K", "d", "kmeans_iters"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("sigma", "hyper_var", "cond_var", "scale_hyper", "scale_cond", "linucb_alpha"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.jitter < 0:
            raise ValidationError("jitter must be nonnegative")
        if not self.weight_low < self.weight_high:
            raise ValidationError("weight_low must be below weight_high")
        if not self.context_low < self.context_high:
            raise ValidationError("context_low must be below context_high")
        if not self.agents:
            raise ValidationError("at least one agent is required")
        for a in self.agents:
            if a not in AGENTS:
                raise ValidationError(f"unknown agent {a!r}; choose from {sorted(AGENTS)}")
        if self.fa_mean not in ("exact", "standalone"):
            raise ValidationError("fa_mean must be 'exact' or 'standalone'")
        for name in ("sweep_K", "sweep_d", "sweep_L"):
            if any(v < 1 for v in getattr(self, name)):
                raise ValidationError(f"{name} entries must be at least 1")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if self.preset == "custom" and self.custom_model is None:
            raise ValidationError("the custom preset needs mu_psi, sigma_psi, sigma0 and weights or matrices")
        if self.preset == "movielens" and not self.embeddings:
            raise ValidationError("the movielens preset needs [movielens] embeddings")

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- building blocks for the simulator ------------------------------------------

    def agent_factories(self) -> tuple[AgentFactory, ...]:
        out = []
        for name in self.agents:
            opts: tuple = ()
            if name == "linucb":
                opts = (("alpha", self.linucb_alpha),)
            elif name == "ghierts-fa":
                opts = (("mean", self.fa_mean),)
            out.append(AgentFactory(name, opts))
        return tuple(out)

    def synthetic(self, **overrides: int) -> SyntheticProblem:
        return SyntheticProblem(
            K=overrides.get("K", self.K), d=overrides.get("d", self.d), L=overrides.get("L", self.L),
            prior_mean=self.prior_mean, hyper_var=self.hyper_var, cond_var=self.cond_var,
            sigma=self.sigma, weight_low=self.weight_low, weight_high=self.weight_high,
            jitter=self.jitter,
        )

    def problem_and_context(self, **overrides: int):
        """The model (or per-run model generator) and the context distribution."""
        if self.preset == "synthetic":
            prob = self.synthetic(**overrides)
            return prob, UniformCube(prob.d, self.context_low, self.context_high)
        if self.preset == "custom":
            if overrides:
                raise ConfigError("the custom preset cannot be swept")
            spec = self.custom_model.replace(jitter=self.jitter) if self.jitter else self.custom_model
            return spec, UniformCube(spec.d, self.context_low, self.context_high)
        from .movielens import MovieLensProblem, load_embeddings

        if "d" in overrides:
            raise ConfigError("d is fixed by the embeddings in the movielens preset")
        users, items = load_embeddings(self.embeddings)
        prob = MovieLensProblem.fit(
            items, overrides.get("L", self.L), overrides.get("K", self.K),
            np.random.default_rng(self.seed), self.scale_hyper, self.scale_cond, self.sigma,
            self.kmeans_iters, self.kmeans_tol, self.jitter,
        )
        return prob, FixedPool(users)

    def task(self, **overrides: int):
        from .sim import ExperimentTask

        problem, ctx = self.problem_and_context(**overrides)
        name = "_".join(f"{k}{v}" for k, v in overrides.items())
        return ExperimentTask(problem, ctx, self.agent_factories(), self.horizon, self.runs, self.seed, name)

    def grid(self) -> list[dict[str, int]]:
        axes = {k: v for k, v in (("K", self.sweep_K), ("d", self.sweep_d), ("L", self.sweep_L)) if v}
        if not axes:
            return [{}]
        return [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]

    # -- canonical text form ---------------------------------------------------------

    def to_text(self) -> str:
        """Canonical config text; parsing it gives back an equal config."""
        f = _fmt
        lines = [
            "[experiment]",
            f"preset = {self.preset}",
            f"horizon = {self.horizon}",
            f"runs = {self.runs}",
            f"seed = {self.seed}",
            f"parallelism = {self.parallelism}",
            f"out = {self.out}",
            f"svg = {'true' if self.svg else 'false'}",
            "",
            "[model]",
        ]
        if self.preset == "custom":
            lines.append(model_to_text(self.custom_model).rstrip("\n"))
        else:
            lines += [f"L = {self.L}", f"K = {self.K}", f"d = {self.d}", f"sigma = {f(self.sigma)}"]
            if self.preset == "synthetic":
                lines += [
                    f"prior_mean = {f(self.prior_mean)}", f"hyper_var = {f(self.hyper_var)}",
                    f"cond_var = {f(self.cond_var)}", f"weight_low = {f(self.weight_low)}",
                    f"weight_high = {f(self.weight_high)}",
                ]
        lines += [f"jitter = {f(self.jitter)}", ""]
        if self.preset != "movielens":
            lines += ["[context]", f"low = {f(self.context_low)}", f"high = {f(self.context_high)}", ""]
        lines += [
            "[agents]",
            f"list = {', '.join(self.agents)}",
            f"linucb_alpha = {f(self.linucb_alpha)}",
            f"fa_mean = {self.fa_mean}",
            "",
        ]
        if self.preset == "movielens":
            lines += [
                "[movielens]",
                f"embeddings = {self.embeddings}",
                f"scale_hyper = {f(self.scale_hyper)}",
                f"scale_cond = {f(self.scale_cond)}",
                f"kmeans_iters = {self.kmeans_iters}",
                f"kmeans_tol = {f(self.kmeans_tol)}",
                "",
            ]
        grid = [(k, getattr(self, f"sweep_{k}")) for k in ("K", "d", "L")]
        if any(v for _, v in grid):
            lines.append("[sweep]")
            lines += [f"{k} = {', '.join(map(str, v))}" for k, v in grid if v]
            lines.append("")
        if self.delta is not None:
            lines += ["[bound]", f"delta = {f(self.delta)}", ""]
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


# -- value parsing ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    out = float(v)
    if not np.isfinite(out):
        raise ValueError("not finite")
    return out


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true or false")


def _str(v: str) -> str:
    if not v:
        raise ValueError("empty value")
    return v


def _names(v: str) -> tuple[str, ...]:
    return tuple(s.strip().lower() for s in v.split(",") if s.strip())


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(s) for s in v.split(",") if s.strip())


def _row(text: str) -> list[float]:
    return [_float(s) for s in text.replace(",", " ").split()]


def _vector(v: str) -> np.ndarray:
    return np.array(_row(v))


def _matrix(v: str) -> np.ndarray:
    rows = [_row(r) for r in v.split(";") if r.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("matrix rows must all have the same length")
    return np.array(rows)


def _matrices(v: str) -> list[np.ndarray]:
    return [_matrix(part) for part in v.split("|")]


def _vec_text(v: np.ndarray) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v).reshape(-1))


def _mat_text(m: np.ndarray) -> str:
    return "; ".join(_vec_text(r) for r in np.atleast_2d(m))


def model_to_text(spec: HierModelSpec) -> str:
    """``[model]`` body describing ``spec`` exactly (floats in shortest round-trip form)."""
    lines = [
        f"L = {spec.L}",
        f"K = {spec.K}",
        f"d = {spec.d}",
        f"sigma = {_fmt(spec.sigma)}",
        f"mu_psi = {_vec_text(spec.mu_Psi)}",
        f"sigma_psi = {_mat_text(spec.Sigma_Psi)}",
        f"sigma0 = {' | '.join(_mat_text(m) for m in spec.Sigma0)}",
    ]
    if isinstance(spec.mixing, Weights):
        lines.append(f"weights = {_mat_text(spec.mixing.b)}")
    else:
        C = spec.mixing.C
        lines.append(f"matrices = {' | '.join(_mat_text(C[i, l]) for i in range(spec.K) for l in range(spec.L))}")
    return "\n".join(lines) + "\n"


_SCHEMA: dict[str, dict[str, tuple[str, Callable[[str], Any]]]] = {
    "experiment": {
        "preset": ("preset", lambda v: v.lower()),
        "horizon": ("horizon", _int),
        "runs": ("runs", _int),
        "seed": ("seed", _int),
        "parallelism": ("parallelism", _int),
        "out": ("out", _str),
        "svg": ("svg", _bool),
    },
    "model": {
        "l": ("L", _int),
        "k": ("K", _int),
        "d": ("d", _int),
        "sigma": ("sigma", _float),
        "prior_mean": ("prior_mean", _float),
        "hyper_var": ("hyper_var", _float),
        "cond_var": ("cond_var", _float),
        "weight_low": ("weight_low", _float),
        "weight_high": ("weight_high", _float),
        "jitter": ("jitter", _float),
        "mu_psi": ("mu_psi", _vector),
        "sigma_psi": ("sigma_psi", _matrix),
        "sigma0": ("sigma0", _matrices),
        "weights": ("weights", _matrix),
        "matrices": ("matrices", _matrices),
    },
    "context": {
        "low": ("context_low", _float),
        "high": ("context_high", _float),
    },
    "agents": {
        "list": ("agents", _names),
        "linucb_alpha": ("linucb_alpha", _float),
        "fa_mean": ("fa_mean", lambda v: v.lower()),
    },
    "movielens": {
        "embeddings": ("embeddings", _str),
        "scale_hyper": ("scale_hyper", _float),
        "scale_cond": ("scale_cond", _float),
        "kmeans_iters": ("kmeans_iters", _int),
        "kmeans_tol": ("kmeans_tol", _float),
    },
    "sweep": {
        "k": ("sweep_K", _ints),
        "d": ("sweep_d", _ints),
        "l": ("sweep_L", _ints),
    },
    "bound": {
        "delta": ("delta", _float),
    },
}

_MODEL_ARRAYS = ("mu_psi", "sigma_psi", "sigma0", "weights", "matrices")


def _custom_model(values: dict[str, Any], lines: dict[str, int]) -> HierModelSpec:
    L, K, d = values.get("L", 5), values.get("K", 20), values.get("d", 2)
    missing = [k for k in ("mu_psi", "sigma_psi", "sigma0") if k not in values]
    if missing:
        raise ValidationError(f"custom model is missing {', '.join(missing)}")
    if ("weights" in values) == ("matrices" in values):
        raise ValidationError("custom model needs exactly one of weights or matrices")
    S0 = values["sigma0"]
    if len(S0) == 1:
        S0 = S0 * K
    if len(S0) != K:
        raise ValidationError(f"sigma0 lists {len(S0)} matrices; expected 1 or K={K}")
    if "weights" in values:
        mixing = Weights(values["weights"])
    else:
        blocks = values["matrices"]
        if len(blocks) != K * L or any(b.shape != (d, d) for b in blocks):
            raise ValidationError(f"matrices must list K*L={K * L} blocks of shape {d}x{d}")
        mixing = Matrices(np.array(blocks).reshape(K, L, d, d))
    try:
        return HierModelSpec(
            L=L, K=K, d=d, mu_Psi=values["mu_psi"], Sigma_Psi=values["sigma_psi"],
            Sigma0=np.stack(S0), mixing=mixing, sigma=values.get("sigma", 1.0),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def parse_text(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Parse config text; relative ``embeddings`` paths resolve against ``base_dir``."""
    section: str | None = None
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, line, "unterminated section header")
            section = line[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise ParseError(lineno, section, "unknown section")
            continue
        if "=" not in line:
            raise ParseError(lineno, line, "expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if section is None:
            raise ParseError(lineno, key, "key outside any section")
        entry = _SCHEMA[section].get(key.lower())
        if entry is None:
            raise ParseError(lineno, key, f"unknown key in [{section}]")
        if (section, key.lower()) in seen:
            raise ParseError(lineno, key, "duplicate key")
        seen.add((section, key.lower()))
        name, conv = entry
        try:
            values[name] = conv(value)
        except ValueError as exc:
            raise ParseError(lineno, key, f"bad value {value!r}: {exc}") from None
        lines[name] = lineno

    arrays = {k: values.pop(k) for k in _MODEL_ARRAYS if k in values}
    preset = values.get("preset", "synthetic")
    if arrays and preset != "custom":
        name = next(iter(arrays))
        raise ParseError(lines[name], name, "explicit model arrays need preset = custom")
    if preset == "custom":
        values["custom_model"] = _custom_model({**values, **arrays}, lines)
        spec = values["custom_model"]
        values.update(L=spec.L, K=spec.K, d=spec.d, sigma=spec.sigma)
    if "embeddings" in values and base_dir is not None:
        p = Path(values["embeddings"])
        if not p.is_absolute():
            values["embeddings"] = str(Path(base_dir) / p)
    return ExperimentConfig(**values)


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_text(path.read_text(encoding="utf-8"), base_dir=path.parent)
