import csv

import numpy as np
import pytest

from ghierts.cli import main
from ghierts.config import ExperimentConfig, parse_config
from ghierts.report import CSV_HEADER, read_results
from conftest import planted_ratings

SMALL = "[experiment]\npreset = synthetic\nhorizon = 40\nruns = 2\n[model]\nK = 4\nL = 2\n[agents]\nlist = ghierts, lints\n"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write(path, text):
    path.write_text(text)
    return str(path)


def test_run_writes_outputs(workdir, capsys):
    cfg = write(workdir / "a.cfg", SMALL)
    assert main(["run", cfg, "--out", "res", "--svg"]) == 0
    out = capsys.readouterr().out
    assert "G-HierTS" in out and "LinTS" in out
    res = read_results(workdir / "res.csv")
    assert set(res) == {"G-HierTS", "LinTS"} and res["LinTS"][0].shape == (40,)
    assert (workdir / "res.svg").exists() and (workdir / "res.manifest").exists()


def test_flags_override_config(workdir):
    cfg = write(workdir / "a.cfg", SMALL)
    assert main(["run", cfg, "--horizon", "7", "--runs", "3", "--seed", "4", "--alpha", "0.5", "--out", "o"]) == 0
    manifest = (workdir / "o.manifest").read_text()
    assert "horizon = 7" in manifest and "seeds = 4..6" in manifest and "linucb_alpha = 0.5" in manifest
    assert len((workdir / "o.csv").read_text().splitlines()) == 1 + 7 * 2


def test_rerun_is_byte_identical(workdir):
    cfg = write(workdir / "a.cfg", SMALL)
    assert main(["run", cfg, "--out", "one"]) == 0
    assert main(["run", cfg, "--out", "two"]) == 0
    assert (workdir / "one.csv").read_bytes() == (workdir / "two.csv").read_bytes()


def test_manifest_config_reproduces(workdir):
    """The canonical config embedded in the manifest reruns to the same CSV."""
    cfg = write(workdir / "a.cfg", SMALL)
    assert main(["run", cfg, "--out", "first", "--seed", "9"]) == 0
    text = (workdir / "first.manifest").read_text().split("# canonical configuration\n", 1)[1]
    again = write(workdir / "again.cfg", text.replace("out = first", "out = second"))
    assert main(["run", again]) == 0
    assert (workdir / "first.csv").read_bytes() == (workdir / "second.csv").read_bytes()


def test_sweep_invariant_to_parallelism(workdir):
    cfg = write(workdir / "s.cfg", SMALL + "[sweep]\nK = 3, 5\nd = 1, 2\n")
    assert main(["sweep", cfg, "--out", "p1", "--parallelism", "1"]) == 0
    assert main(["sweep", cfg, "--out", "p3", "--parallelism", "3"]) == 0
    names = ["K3_d1", "K3_d2", "K5_d1", "K5_d2"]
    for n in names:
        assert (workdir / f"p1_{n}.csv").read_bytes() == (workdir / f"p3_{n}.csv").read_bytes()


def test_bound_prints_and_writes_csv(workdir, capsys):
    cfg = write(workdir / "b.cfg", SMALL)
    assert main(["bound", cfg, "--csv", "bound.csv"]) == 0
    out = capsys.readouterr().out
    assert "bound = " in out and "lambda_GGt = " in out
    with open(workdir / "bound.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    row = rows[0]
    assert int(row["n"]) == 40 and float(row["delta"]) == 1 / 40
    # weights are uniform on [-1, 1]: sup ||b_i||^2 = L
    assert float(row["kappa_b"]) == 2.0
    assert float(row["bound"]) > 0


def test_selftest(capsys):
    assert main(["selftest", "--instances", "20", "--seed", "3"]) == 0
    assert capsys.readouterr().out.startswith("PASS oracle equivalence: 20 instances")


def test_ingest_then_run(workdir, capsys):
    planted_ratings(workdir / "ratings.dat", np.random.default_rng(0), n_users=60, n_items=40)
    assert main(["ingest", "ratings.dat", "--rank", "2", "--clusters", "2", "--actions", "10", "--out", "emb"]) == 0
    cfg = parse_config(workdir / "emb.cfg")
    assert cfg.preset == "movielens" and (cfg.L, cfg.K, cfg.d) == (2, 10, 2)
    with np.load(workdir / "emb.npz") as z:
        assert z["user_vectors"].shape == (60, 2) and z["item_vectors"].shape == (40, 2)
    assert main(["run", "emb.cfg", "--horizon", "30", "--runs", "2", "--out", "ml"]) == 0
    assert (workdir / "ml.csv").read_text().splitlines()[0] == CSV_HEADER
    assert len(read_results(workdir / "ml.csv")) == 3


@pytest.mark.parametrize("text", [
    "[experiment]\nruns = 0\n",
    "[experiment]\nfoo = 1\n",
    "[model]\nK = -2\n",
])
def test_config_errors_exit_1(workdir, capsys, text):
    assert main(["run", write(workdir / "c.cfg", text)]) == 1
    assert "error:" in capsys.readouterr().err


def test_numerical_failure_exits_2(workdir, capsys):
    text = ("[experiment]\npreset = custom\nhorizon = 10\nruns = 2\n[model]\nL = 1\nK = 2\nd = 1\n"
            "mu_psi = 0\nsigma_psi = -1\nsigma0 = 1\nweights = 1; 1\n[agents]\nlist = ghierts\n")
    assert main(["run", write(workdir / "n.cfg", text)]) == 2
    assert "positive definite" in capsys.readouterr().err


def test_missing_file_exits_3(workdir):
    assert main(["run", "nope.cfg"]) == 3
    assert main(["ingest", "nope.dat", "--rank", "2", "--clusters", "2"]) == 3


def test_malformed_ratings_exit_3(workdir, capsys):
    write(workdir / "r.dat", "1::1::5::0\n1::2::oops::1\n2::1::3::2\n")
    assert main(["ingest", "r.dat", "--rank", "1", "--clusters", "1"]) == 3
    assert "line 2" in capsys.readouterr().err


def test_sweep_failure_is_reported_and_rest_written(workdir, capsys, monkeypatch):
    import ghierts.cli as cli

    real = cli.sweep

    def flaky(tasks, parallelism):
        out = real(tasks, parallelism)
        from ghierts.sim import SweepFailure
        from ghierts.errors import NotPositiveDefinite
        exc = NotPositiveDefinite("planted failure")
        return [SweepFailure(tasks[0], str(exc), exc)] + out[1:]

    monkeypatch.setattr(cli, "sweep", flaky)
    cfg = write(workdir / "s.cfg", SMALL + "[sweep]\nK = 3, 5\n")
    assert main(["sweep", cfg, "--out", "f"]) == 2
    assert "[K3] FAILED" in capsys.readouterr().err
    assert (workdir / "f_K5.csv").exists() and not (workdir / "f_K3.csv").exists()


def test_default_config_matches_defaults(workdir):
    cfg = write(workdir / "d.cfg", "[experiment]\npreset = synthetic\n")
    assert parse_config(cfg) == ExperimentConfig()
