import numpy as np
import pytest

from ghierts.config import ExperimentConfig, model_to_text, parse_config, parse_text
from ghierts.errors import ParseError, ValidationError
from ghierts.model import Matrices
from ghierts.presets import SyntheticProblem
from conftest import random_instance


def test_minimal_synthetic_defaults(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("[experiment]\npreset = synthetic\n")
    cfg = parse_config(p)
    assert cfg.horizon == 2000 and cfg.runs == 20
    assert (cfg.K, cfg.d, cfg.L) == (20, 2, 5)
    assert cfg.hyper_var == 3.0 and cfg.cond_var == 1.0 and cfg.sigma == 1.0
    assert cfg.agents == ("ghierts", "ghierts-fa", "lints", "linucb", "hierts")


def test_runs_zero_rejected():
    with pytest.raises(ValidationError):
        parse_text("[experiment]\nruns = 0\n")


def test_unknown_key_named():
    with pytest.raises(ParseError) as err:
        parse_text("[experiment]\nruns = 3\n\nfoo = 1\n")
    assert err.value.key == "foo" and err.value.line == 4
    assert "foo" in str(err.value)


@pytest.mark.parametrize("text,key", [
    ("[nope]\n", "nope"),
    ("runs = 3\n", "runs"),
    ("[experiment]\nruns = three\n", "runs"),
    ("[experiment]\nruns = 3\nruns = 4\n", "runs"),
    ("[experiment]\njust text\n", "just text"),
    ("[model]\nmu_psi = 1 2\n", "mu_psi"),
])
def test_parse_errors(text, key):
    with pytest.raises(ParseError) as err:
        parse_text(text)
    assert err.value.key == key


@pytest.mark.parametrize("text", [
    "[model]\nK = 0\n",
    "[agents]\nlist = ghierts, bogus\n",
    "[agents]\nlist = ,\n",
    "[experiment]\npreset = other\n",
    "[experiment]\npreset = movielens\n",
    "[model]\nsigma = -1\n",
    "[bound]\ndelta = 1.5\n",
])
def test_validation_errors(text):
    with pytest.raises(ValidationError):
        parse_text(text)


def test_comments_case_and_lists():
    cfg = parse_text(
        "# a comment\n; another\n[Experiment]\nHorizon = 50\n[MODEL]\nk = 7\n"
        "[agents]\nlist = GHierTS, lints\nlinucb_alpha = 0.25\n[sweep]\nK = 5, 10\nd = 2,3\n"
    )
    assert cfg.horizon == 50 and cfg.K == 7
    assert cfg.agents == ("ghierts", "lints") and cfg.linucb_alpha == 0.25
    assert cfg.grid() == [{"K": 5, "d": 2}, {"K": 5, "d": 3}, {"K": 10, "d": 2}, {"K": 10, "d": 3}]


def test_round_trip_through_text():
    cfg = ExperimentConfig(horizon=77, runs=3, seed=5, L=3, K=9, d=4, sigma=0.5, agents=("lints", "linucb"),
                           linucb_alpha=0.3, sweep_K=(4, 8), delta=0.01, svg=True)
    again = parse_text(cfg.to_text())
    assert again == cfg and again.digest() == cfg.digest()


@pytest.mark.parametrize("matrices", [False, True])
def test_custom_model_round_trip(rng, matrices):
    spec = random_instance(rng, 3, 2, 2, matrices=matrices)
    text = "[experiment]\npreset = custom\nhorizon = 10\n[model]\n" + model_to_text(spec)
    cfg = parse_text(text)
    got = cfg.custom_model
    np.testing.assert_array_equal(got.mu_Psi, spec.mu_Psi)
    np.testing.assert_array_equal(got.Sigma_Psi, spec.Sigma_Psi)
    np.testing.assert_array_equal(got.Sigma0, spec.Sigma0)
    assert got.sigma == spec.sigma
    if matrices:
        assert isinstance(got.mixing, Matrices)
        np.testing.assert_array_equal(got.mixing.C, spec.mixing.C)
    else:
        np.testing.assert_array_equal(got.mixing.b, spec.mixing.b)
    assert parse_text(cfg.to_text()).digest() == cfg.digest()


def test_custom_shared_sigma0_and_errors():
    base = "[experiment]\npreset = custom\n[model]\nL = 1\nK = 2\nd = 1\nmu_psi = 0\nsigma_psi = 1\n"
    cfg = parse_text(base + "sigma0 = 0.5\nweights = 1; 2\n")
    np.testing.assert_array_equal(cfg.custom_model.Sigma0, np.full((2, 1, 1), 0.5))
    with pytest.raises(ValidationError):
        parse_text(base + "sigma0 = 1 | 1 | 1\nweights = 1; 2\n")
    with pytest.raises(ValidationError):
        parse_text(base + "sigma0 = 1\n")
    with pytest.raises(ParseError):
        parse_text(base + "sigma0 = 1\nweights = 1 2; 3\n")


def test_task_building():
    cfg = ExperimentConfig(K=4, d=3, L=2, agents=("ghierts-fa", "linucb"), linucb_alpha=2.0, fa_mean="standalone")
    task = cfg.task()
    assert isinstance(task.problem, SyntheticProblem) and task.problem.K == 4
    assert dict(task.agents[0].options) == {"mean": "standalone"}
    assert dict(task.agents[1].options) == {"alpha": 2.0}
    assert task.context.d == 3
    assert cfg.task(K=9).problem.K == 9 and cfg.task(K=9).name == "K9"
