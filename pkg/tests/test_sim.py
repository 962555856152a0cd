import numpy as np
import pytest

from ghierts import sim
from ghierts.agents import AgentFactory, LinTS
from ghierts.model import HierModelSpec, UniformCube, Weights, sample_environment
from ghierts.presets import SyntheticProblem
from ghierts.sim import (
    ExperimentTask,
    RegretTrace,
    SweepFailure,
    aggregate,
    bayes_regret,
    compare_agents,
    run_episode,
    stream,
    sweep,
)
from conftest import random_instance

CUBE2 = UniformCube(2, -1.0, 1.0)
SMALL = SyntheticProblem(K=5, d=2, L=2)


def two_arm(b, tiny=1e-30):
    return HierModelSpec(L=1, K=2, d=1, mu_Psi=[1.0], Sigma_Psi=[[tiny]],
                         Sigma0=np.full((2, 1, 1), tiny), mixing=Weights(np.reshape(b, (2, 1))), sigma=1.0)


def test_single_action_has_no_regret(rng):
    spec = random_instance(rng, 1, 2, 2)
    tr = run_episode(spec, CUBE2, LinTS(spec), 50, seed=3)
    np.testing.assert_array_equal(tr.per_round, 0.0)


def test_oracle_has_no_regret():
    spec = SMALL(np.random.default_rng(0))
    tr = run_episode(spec, CUBE2, AgentFactory("oracle")(spec), 100, seed=0)
    np.testing.assert_array_equal(tr.per_round, 0.0)


def test_confident_wrong_agent_regret_is_one_per_round():
    env = two_arm([0.0, 1.0])  # theta* = (0, 1)
    agent = LinTS(two_arm([1.0, 0.0]))  # certain that theta = (1, 0)
    tr = run_episode(env, UniformCube(1, 0.999999, 1.0), agent, 40, seed=1)
    np.testing.assert_allclose(tr.per_round, 1.0, atol=1e-5)
    np.testing.assert_allclose(tr.cumulative[-1], 40.0, atol=1e-3)


def test_trace_invariants():
    spec = SMALL(np.random.default_rng(1))
    tr = run_episode(spec, CUBE2, AgentFactory("lints")(spec), 200, seed=4)
    assert np.all(tr.per_round >= 0)
    assert np.all(np.diff(tr.cumulative) >= 0)


def test_episode_deterministic():
    spec = SMALL(np.random.default_rng(1))
    a = run_episode(spec, CUBE2, AgentFactory("ghierts")(spec), 100, seed=9)
    b = run_episode(spec, CUBE2, AgentFactory("ghierts")(spec), 100, seed=9)
    np.testing.assert_array_equal(a.per_round, b.per_round)


def test_rejects_empty_horizon():
    spec = SMALL(np.random.default_rng(1))
    with pytest.raises(ValueError):
        run_episode(spec, CUBE2, LinTS(spec), 0, seed=0)


def test_reward_noise_does_not_move_oracle_regret(monkeypatch):
    spec = SMALL(np.random.default_rng(2))
    base = run_episode(spec, CUBE2, AgentFactory("oracle")(spec), 100, seed=5)
    orig = sim.stream
    monkeypatch.setattr(sim, "stream", lambda s, role: orig(s + 1000 if role == "reward" else s, role))
    moved = run_episode(spec, CUBE2, AgentFactory("oracle")(spec), 100, seed=5)
    np.testing.assert_array_equal(base.per_round, moved.per_round)


def test_streams_are_distinct_and_reproducible():
    draws = {role: stream(7, role).standard_normal(4) for role in sim.STREAM_ROLES}
    assert len({tuple(v) for v in draws.values()}) == len(draws)
    np.testing.assert_array_equal(stream(7, "env").standard_normal(4), draws["env"])
    assert not np.array_equal(stream(8, "env").standard_normal(4), draws["env"])


def test_adding_agents_does_not_perturb_others():
    one = ExperimentTask(SMALL, CUBE2, (AgentFactory("lints"),), 60, 3, base_seed=11)
    three = ExperimentTask(SMALL, CUBE2, (AgentFactory("ghierts"), AgentFactory("lints"), AgentFactory("linucb")),
                           60, 3, base_seed=11)
    np.testing.assert_array_equal(compare_agents(one)["LinTS"].mean, compare_agents(three)["LinTS"].mean)


def test_single_run_aggregate():
    spec = SMALL(np.random.default_rng(3))
    curve = bayes_regret(spec, CUBE2, AgentFactory("lints"), 30, runs=1, base_seed=4)
    tr = run_episode(spec, CUBE2, AgentFactory("lints")(spec), 30, seed=4)
    np.testing.assert_array_equal(curve.mean, tr.cumulative)
    np.testing.assert_array_equal(curve.stderr, 0.0)
    assert curve.runs == 1 and curve.label == "LinTS"


def test_identical_traces_have_zero_stderr():
    tr = RegretTrace(np.array([0.5, 0.0, 1.0]), seed=0)
    c = aggregate([tr, tr])
    np.testing.assert_array_equal(c.stderr, 0.0)
    np.testing.assert_array_equal(c.mean, [0.5, 0.5, 1.5])


def test_stderr_is_sample_std_over_sqrt_runs():
    trs = [RegretTrace(np.array([v]), seed=i) for i, v in enumerate([1.0, 2.0, 4.0])]
    c = aggregate(trs)
    assert c.stderr[0] == pytest.approx(np.std([1, 2, 4], ddof=1) / np.sqrt(3))


def test_weights_redrawn_per_run_and_shared_with_agent():
    seen = []

    class Recorder:
        label = "rec"

        def __call__(self, spec):
            seen.append(spec.mixing.b.copy())
            return AgentFactory("oracle")(spec)

    bayes_regret(SMALL, CUBE2, Recorder(), 5, runs=3, base_seed=2)
    assert len(seen) == 3 and not np.array_equal(seen[0], seen[1])
    np.testing.assert_array_equal(seen[0], SMALL(stream(2, "weights")).mixing.b)


def test_fixed_spec_environment_uses_env_stream():
    spec = SMALL(np.random.default_rng(0))
    draws = []

    class Spy:
        label = "spy"

        def __call__(self, s):
            agent = AgentFactory("oracle")(s)
            orig = agent.bind_environment

            def bind(draw):
                draws.append(draw.Theta_star)
                orig(draw)

            agent.bind_environment = bind
            return agent

    bayes_regret(spec, CUBE2, Spy(), 3, runs=2, base_seed=5)
    np.testing.assert_array_equal(draws[1], sample_environment(spec, stream(6, "env")).Theta_star)


def test_sweep_empty():
    assert sweep([], parallelism=4) == []


def tasks_for_grid():
    return [
        ExperimentTask(SyntheticProblem(K=K, d=d, L=2), UniformCube(d), (AgentFactory("ghierts"), AgentFactory("lints")),
                       25, 2, base_seed=1, name=f"K{K}_d{d}")
        for K in (3, 5, 8) for d in (1, 2, 3)
    ]


def test_sweep_grid_and_parallel_equivalence():
    tasks = tasks_for_grid()
    serial = sweep(tasks, parallelism=1)
    assert len(serial) == 9 and all(set(r) == {"G-HierTS", "LinTS"} for r in serial)
    parallel = sweep(tasks, parallelism=4)
    for a, b in zip(serial, parallel):
        for label in a:
            np.testing.assert_array_equal(a[label].mean, b[label].mean)
            np.testing.assert_array_equal(a[label].stderr, b[label].stderr)


def test_sweep_reports_failures_without_aborting(rng):
    coupled = random_instance(rng, 3, 2, 2)  # dense hyper-prior covariance
    good = ExperimentTask(SMALL, CUBE2, (AgentFactory("lints"),), 10, 2)
    bad = ExperimentTask(coupled, CUBE2, (AgentFactory("ghierts-fa"),), 10, 2, name="bad")
    res = sweep([good, bad, good], parallelism=1)
    assert isinstance(res[1], SweepFailure) and "NonBlockDiagonal" in res[1].error
    assert res[1].task.name == "bad"
    np.testing.assert_array_equal(res[0]["LinTS"].mean, res[2]["LinTS"].mean)
