import numpy as np
import pytest

from ghierts.errors import DegenerateData, FormatError, ValidationError
from ghierts.model import FixedPool
from ghierts.movielens import (
    MovieLensProblem,
    RatingsDataset,
    build_movielens_model,
    check_malformed,
    cluster_weights,
    factorize,
    kmeans,
    load_ratings,
    planted_embeddings,
)


def test_single_line(tmp_path):
    p = tmp_path / "r.dat"
    p.write_text("1::10::5::978300760\n")
    ds = load_ratings(p)
    assert len(ds) == 1 and ds.malformed == []
    assert (ds.user_ids[ds.users[0]], ds.item_ids[ds.items[0]], ds.ratings[0]) == (1, 10, 5.0)


def test_empty_file_then_rejected(tmp_path):
    p = tmp_path / "r.dat"
    p.write_text("")
    ds = load_ratings(p)
    assert len(ds) == 0 and ds.n_users == 0 and ds.n_items == 0
    with pytest.raises(DegenerateData):
        factorize(ds, 2)


def test_malformed_lines_reported(tmp_path):
    p = tmp_path / "r.dat"
    p.write_text("1::10::5::1\n2::x::3::2\n2::11::4\n")
    ds = load_ratings(p)
    assert len(ds) == 2 and ds.malformed == [2]
    with pytest.raises(FormatError) as err:
        check_malformed(ds)
    assert err.value.line == 2


def test_malformed_limit(tmp_path):
    p = tmp_path / "r.dat"
    good = [f"{u}::{i}::3::0" for u in range(1, 21) for i in range(1, 11)]  # 200 lines
    p.write_text("\n".join(good + ["bad line"]) + "\n")
    check_malformed(load_ratings(p))  # 1 of 201 is below 1%
    p.write_text("\n".join(good + ["bad"] * 3) + "\n")
    with pytest.raises(FormatError):
        check_malformed(load_ratings(p))


def test_dense_reindexing():
    ds = RatingsDataset.from_triples([100, 7, 100], [5, 5, 9], [1.0, 2.0, 3.0])
    assert ds.n_users == 2 and ds.n_items == 2
    assert list(ds.user_ids) == [7, 100] and list(ds.users) == [1, 0, 1]


def full_dataset(U, V):
    u, i = np.meshgrid(np.arange(U.shape[0]), np.arange(V.shape[0]), indexing="ij")
    u, i = u.ravel(), i.ravel()
    return RatingsDataset.from_triples(u, i, np.einsum("nd,nd->n", U[u], V[i]))


def test_rank_one_recovery(rng):
    ds = full_dataset(rng.uniform(0.5, 2, (30, 1)), rng.uniform(0.5, 2, (40, 1)))
    fit = factorize(ds, 1, reg=1e-8, iters=50, seed=0)
    assert fit.rmse(ds) < 1e-3


def test_overparameterized_fit(rng):
    ds = full_dataset(rng.normal(size=(6, 3)), rng.normal(size=(8, 3)))
    ds2 = RatingsDataset.from_triples(ds.users, ds.items, rng.normal(size=len(ds)))
    fit = factorize(ds2, 6, reg=1e-10, iters=200, seed=1)
    assert fit.rmse(ds2) < 1e-3


def test_als_objective_monotone(rng):
    mask = rng.random((50, 80)) < 0.3
    mask[np.arange(50), rng.integers(80, size=50)] = True
    mask[rng.integers(50, size=80), np.arange(80)] = True
    u, i = np.nonzero(mask)
    ds = RatingsDataset.from_triples(u, i, rng.integers(1, 6, size=u.size).astype(float))
    fit = factorize(ds, 5, reg=0.1, iters=20, seed=2)
    obj = np.array(fit.objective)
    assert np.all(np.diff(obj) <= 1e-9 * obj[:-1])
    assert fit.user_vectors.shape == (50, 5) and fit.item_vectors.shape == (80, 5)


def test_factorize_rejects_bad_rank():
    ds = RatingsDataset.from_triples([0], [0], [1.0])
    with pytest.raises(ValidationError):
        factorize(ds, 0)


def test_factorize_rejects_item_without_ratings():
    ds = RatingsDataset(np.array([0]), np.array([0]), np.array([1.0]), np.array([1]), np.array([1, 2]))
    with pytest.raises(DegenerateData):
        factorize(ds, 1)


def test_kmeans_monotone_and_separates(rng):
    _, X, labels = planted_embeddings(10, 300, 3, 3, rng, separation=10.0, radius=0.1)
    km = kmeans(X, 3, np.random.default_rng(0))
    obj = np.array(km.objective)
    assert np.all(np.diff(obj) <= 1e-9 * obj[:-1])
    # every planted cluster maps to a single fitted cluster
    for c in range(3):
        assert len(set(km.labels[labels == c])) == 1
    assert len(set(km.labels)) == 3


def test_kmeans_reseeds_empty_cluster():
    X = np.array([[0.0], [0.0], [0.0], [10.0]])
    km = kmeans(X, 3, np.random.default_rng(0))
    assert np.all(np.isfinite(km.centroids))
    with pytest.raises(ValidationError):
        kmeans(X, 5, np.random.default_rng(0))


def test_single_cluster_weights_are_one(rng):
    _, items, _ = planted_embeddings(5, 30, 2, 1, rng)
    spec, ctx = build_movielens_model(items, rng.normal(size=(5, 2)), L=1, K=10, seed=0)
    np.testing.assert_array_equal(spec.mixing.b, 1.0)
    assert isinstance(ctx, FixedPool) and ctx.vectors.shape == (5, 2)


def test_planted_clusters_get_majority_weight(rng):
    users, items, labels = planted_embeddings(20, 100, 2, 2, rng, separation=10.0, radius=0.1)
    prob = MovieLensProblem.fit(items, L=2, K=100, rng=np.random.default_rng(0))
    # fitted cluster ids are arbitrary: match them through the majority label
    own = np.array([np.bincount(np.argmax(prob.weights[labels == c], axis=1)).argmax() for c in range(2)])
    assert own[0] != own[1]
    assert np.all(prob.weights[np.arange(100), own[labels]] > 0.5)


def test_model_structure(rng):
    users, items, _ = planted_embeddings(15, 60, 3, 4, rng, separation=2.0, radius=0.5)
    spec, ctx = build_movielens_model(items, users, L=4, K=12, seed=3)
    b = spec.mixing.b
    assert b.shape == (12, 4) and np.all(b > 0)
    np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-12)
    mu, v = items.mean(axis=0), items.var(axis=0)
    np.testing.assert_allclose(spec.mu_Psi, np.tile(mu, 4))
    np.testing.assert_allclose(spec.Sigma_Psi, np.kron(np.eye(4), 0.75 * np.diag(v)))
    np.testing.assert_allclose(spec.Sigma0, np.broadcast_to(0.25 * np.diag(v), (12, 3, 3)))
    assert spec.is_block_diagonal()
    again, _ = build_movielens_model(items, users, L=4, K=12, seed=3)
    np.testing.assert_array_equal(again.mixing.b, b)


def test_subsets_without_replacement(rng):
    _, items, _ = planted_embeddings(5, 30, 2, 2, rng)
    prob = MovieLensProblem.fit(items, 2, 30, np.random.default_rng(0))
    spec = prob(np.random.default_rng(1))
    # K equal to the item count must use every item exactly once
    np.testing.assert_allclose(np.sort(spec.mixing.b[:, 0]), np.sort(prob.weights[:, 0]))
    with pytest.raises(ValidationError):
        MovieLensProblem.fit(items, 2, 31, np.random.default_rng(0))


def test_cluster_weights_rows_sum_to_one(rng):
    X = rng.normal(scale=30, size=(50, 4))
    w = cluster_weights(X, rng.normal(size=(3, 4)))
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(w))
