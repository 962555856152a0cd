"""Episode execution and Bayes-regret estimation.

Randomness is split into independent streams keyed by ``(seed, role)`` with
``role`` one of ``weights``, ``env``, ``context``, ``reward`` and ``agent``.
Run ``r`` of an experiment uses ``seed = base_seed + r``. All agents compared
on the same run therefore face the same model, the same true parameters,
the same contexts and the same reward noise.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .agents import Agent, AgentFactory
from .model import ContextSpec, HierModelSpec, best_action, sample_context, sample_environment

__all__ = [
    "AggregateCurve",
    "ExperimentTask",
    "RegretTrace",
    "SweepFailure",
    "aggregate",
    "bayes_regret",
    "compare_agents",
    "run_episode",
    "stream",
    "sweep",
]

STREAM_ROLES = {"weights": 0, "env": 1, "context": 2, "reward": 3, "agent": 4}

Problem = Union[HierModelSpec, Callable[[np.random.Generator], HierModelSpec]]


def stream(seed: int, role: str) -> np.random.Generator:
    """Independent generator for one ``(seed, role)`` pair."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAM_ROLES[role],)))


@dataclass
class RegretTrace:
    per_round: NDArray
    seed: int

    @property
    def cumulative(self) -> NDArray:
        return np.cumsum(self.per_round)


@dataclass
class AggregateCurve:
    """Mean and standard error of cumulative regret across runs."""

    mean: NDArray
    stderr: NDArray
    runs: int
    label: str = ""
    seconds: float = 0.0

    @property
    def horizon(self) -> int:
        return self.mean.size


def aggregate(traces: Sequence[RegretTrace], label: str = "", seconds: float = 0.0) -> AggregateCurve:
    cum = np.stack([tr.cumulative for tr in traces])
    runs = cum.shape[0]
    mean = cum.mean(axis=0)
    if runs >= 2:
        stderr = cum.std(axis=0, ddof=1) / np.sqrt(runs)
    else:
        stderr = np.zeros_like(mean)
    return AggregateCurve(mean=mean, stderr=stderr, runs=runs, label=label, seconds=seconds)


def run_episode(
    env_spec: HierModelSpec, ctx_spec: ContextSpec, agent: Agent, n: int, seed: int
) -> RegretTrace:
    """Play ``n`` rounds and record the instantaneous regret of each.

    Regret is measured on mean rewards ``x @ theta_*``; the realized reward
    only feeds the agent.
    """
    if n < 1:
        raise ValueError("horizon must be at least 1")
    draw = sample_environment(env_spec, stream(seed, "env"))
    agent.bind_environment(draw)
    ctx_rng = stream(seed, "context")
    reward_rng = stream(seed, "reward")
    agent_rng = stream(seed, "agent")
    theta = draw.Theta_star
    sigma = env_spec.sigma
    regret = np.empty(n)
    for t in range(n):
        x = sample_context(ctx_spec, ctx_rng)
        a = agent.act(x, agent_rng)
        values = theta @ x
        regret[t] = best_action(theta, x)[1] - values[a]
        y = values[a] + sigma * reward_rng.standard_normal()
        agent.observe(x, a, y)
    return RegretTrace(per_round=regret, seed=seed)


def _resolve(problem: Problem, seed: int) -> HierModelSpec:
    if isinstance(problem, HierModelSpec):
        return problem
    return problem(stream(seed, "weights"))


def _one_run(problem, ctx_spec, agent_factory, n, seed) -> tuple[RegretTrace, float]:
    start = time.perf_counter()
    spec = _resolve(problem, seed)
    trace = run_episode(spec, ctx_spec, agent_factory(spec), n, seed)
    return trace, time.perf_counter() - start


def bayes_regret(
    problem: Problem,
    ctx_spec: ContextSpec,
    agent_factory: Callable[[HierModelSpec], Agent],
    n: int,
    runs: int,
    base_seed: int = 0,
) -> AggregateCurve:
    """Estimate Bayes regret by averaging ``runs`` independent episodes.

    ``problem`` is either a fixed model or a callable that draws a fresh
    model (e.g. new mixing weights) from the run's ``weights`` stream; the
    agent is built from the same model, so mixing weights are known to it.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    traces, seconds = [], 0.0
    for r in range(runs):
        trace, dt = _one_run(problem, ctx_spec, agent_factory, n, base_seed + r)
        traces.append(trace)
        seconds += dt
    return aggregate(traces, label=getattr(agent_factory, "label", ""), seconds=seconds)


@dataclass(frozen=True)
class ExperimentTask:
    """One cell of a sweep: a problem family compared across several agents."""

    problem: Problem
    context: ContextSpec
    agents: tuple[AgentFactory, ...]
    horizon: int
    runs: int
    base_seed: int = 0
    name: str = ""


@dataclass
class SweepFailure:
    task: ExperimentTask
    error: str
    exception: BaseException | None = field(default=None, repr=False)


def compare_agents(task: ExperimentTask) -> dict[str, AggregateCurve]:
    return {
        f.label: bayes_regret(task.problem, task.context, f, task.horizon, task.runs, task.base_seed)
        for f in task.agents
    }


def _unit(args):
    task, agent_index, r = args
    try:
        return _one_run(task.problem, task.context, task.agents[agent_index], task.horizon, task.base_seed + r)
    except Exception as exc:  # reported per task, siblings keep running
        return exc


def sweep(
    tasks: Sequence[ExperimentTask], parallelism: int = 1
) -> list[Union[dict[str, AggregateCurve], SweepFailure]]:
    """Run every (task, agent, run) unit, possibly in worker processes.

    Results come back in input order and are identical for any
    ``parallelism``; a failing task yields a ``SweepFailure`` in its slot.
    """
    units = [
        (ti, ai, r)
        for ti, task in enumerate(tasks)
        for ai in range(len(task.agents))
        for r in range(task.runs)
    ]
    payload = [(tasks[ti], ai, r) for ti, ai, r in units]
    if parallelism <= 1 or len(payload) <= 1:
        outcomes = [_unit(p) for p in payload]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_unit, payload, chunksize=max(1, len(payload) // (4 * parallelism))))

    grouped: dict[tuple[int, int], list] = {}
    for (ti, ai, _), out in zip(units, outcomes):
        grouped.setdefault((ti, ai), []).append(out)

    results: list = []
    for ti, task in enumerate(tasks):
        curves: dict[str, AggregateCurve] = {}
        failure = None
        for ai, factory in enumerate(task.agents):
            outs = grouped.get((ti, ai), [])
            errors = [o for o in outs if isinstance(o, Exception)]
            if errors:
                exc = errors[0]
                failure = SweepFailure(task, f"{factory.label}: {type(exc).__name__}: {exc}", exc)
                break
            curves[factory.label] = aggregate(
                [o[0] for o in outs], label=factory.label, seconds=sum(o[1] for o in outs)
            )
        results.append(failure if failure is not None else curves)
    return results
