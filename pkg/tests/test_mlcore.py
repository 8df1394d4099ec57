import numpy as np
import pytest

from fbs_workbench.service.mlcore.exceptions import InsufficientDataError
from fbs_workbench.service.mlcore.types import (
    AdamTrainConfig,
    DenseNet,
    ForestParams,
    KMeansModel,
    RandomForestRegressor,
)
from fbs_workbench.service.mlcore.utils import (
    adam_train,
    dense_net,
    forest_fit,
    forest_predict,
    forest_predict_many,
    grad_check,
    hourglass_sizes,
    kmeans_assign,
    kmeans_fit,
    kmeans_objective,
    learning_rate,
    reconstruction_errors,
)


def test_kmeans_objective_never_increases():
    rng = np.random.default_rng(0)
    values = np.concatenate([rng.normal(-90, 1, 100), rng.normal(-70, 1, 100), rng.normal(-50, 1, 50)])
    model = kmeans_fit(values, 3, seed=4)
    history = np.array(model.inertia_history)
    assert np.all(np.diff(history) <= 1e-9)
    assert history[-1] == pytest.approx(kmeans_objective(values, model.centroids))
    assert sorted(np.round(model.centroids[:, 0])) == pytest.approx([-90, -70, -50], abs=1)


def test_kmeans_single_cluster_is_the_mean():
    values = np.random.default_rng(8).normal(-80, 5, size=50)
    model = kmeans_fit(values, 1, seed=0)
    assert model.centroids[0, 0] == pytest.approx(values.mean())


def test_kmeans_separated_clusters():
    model = kmeans_fit([0.0, 0.0, 0.0, 10.0, 10.0, 10.0], 2, seed=3)
    assert sorted(model.centroids[:, 0]) == [0.0, 10.0]


def test_kmeans_is_seeded():
    values = np.random.default_rng(1).normal(size=(80, 2))
    first = kmeans_fit(values, 4, seed=7)
    np.testing.assert_array_equal(first.centroids, kmeans_fit(values, 4, seed=7).centroids)


def test_kmeans_needs_enough_points():
    with pytest.raises(InsufficientDataError):
        kmeans_fit([1.0, 2.0], 3, seed=0)


def test_kmeans_assign_ties_to_lowest_index():
    model = KMeansModel(k=2, centroids=[[0.0], [2.0]], seed=0)
    assert kmeans_assign(1.0, model) == 0
    assert kmeans_assign(1.5, model) == 1


def test_forest_learns_identity():
    rng = np.random.default_rng(2)
    X = rng.uniform(-100, -60, size=(300, 2))
    params = ForestParams(n_trees=20, max_features="all")
    forest = forest_fit(X, X[:, 0], params, seed=0)
    X_test = rng.uniform(-95, -65, size=(100, 2))
    predicted = forest_predict_many(forest, X_test)
    residual = ((predicted - X_test[:, 0]) ** 2).sum()
    total = ((X_test[:, 0] - X_test[:, 0].mean()) ** 2).sum()
    assert 1 - residual / total >= 0.9


def test_forest_on_constant_target():
    X = np.random.default_rng(9).normal(size=(40, 3))
    forest = forest_fit(X, np.full(40, -87.5), ForestParams(n_trees=5), seed=0)
    np.testing.assert_array_equal(forest_predict_many(forest, X * 10), np.full(40, -87.5))


def test_forest_predicts_within_target_range():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(150, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1]
    forest = forest_fit(X, y, ForestParams(n_trees=10), seed=2)
    # Far outside the training inputs as well
    predicted = forest_predict_many(forest, rng.normal(0, 5, size=(200, 2)))
    assert predicted.min() >= y.min() - 1e-12
    assert predicted.max() <= y.max() + 1e-12


def test_single_deep_tree_memorizes():
    rng = np.random.default_rng(11)
    X = rng.permutation(200).astype(float).reshape(100, 2)
    y = rng.normal(size=100)
    params = ForestParams(
        n_trees=1, max_depth=None, min_leaf=1, max_features="all", bootstrap=False
    )
    forest = forest_fit(X, y, params, seed=0)
    np.testing.assert_array_equal(forest_predict_many(forest, X), y)


def test_forest_reload_is_bit_stable(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 3))
    y = X[:, 0] + 0.5 * X[:, 1]
    forest = forest_fit(X, y, ForestParams(n_trees=5), seed=1)
    path = str(tmp_path / "forest.json")
    forest.dump(path)
    reloaded = RandomForestRegressor.load(path)
    np.testing.assert_array_equal(forest_predict_many(reloaded, X), forest_predict_many(forest, X))
    assert forest_predict(reloaded, X[0]) == forest_predict(forest, X[0])


def test_forest_is_seeded():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 2))
    y = X.sum(axis=1)
    params = ForestParams(n_trees=3)
    a = forest_predict_many(forest_fit(X, y, params, seed=9), X)
    b = forest_predict_many(forest_fit(X, y, params, seed=9), X)
    np.testing.assert_array_equal(a, b)


def test_forest_rejects_empty_input():
    with pytest.raises(InsufficientDataError):
        forest_fit(np.zeros((0, 2)), np.zeros(0), ForestParams(), seed=0)


def test_hourglass_sizes():
    assert hourglass_sizes(10) == [10, 8, 5, 8, 10]
    assert hourglass_sizes(2) == [2, 2, 1, 2, 2]


def test_learning_rate_schedule():
    cfg = AdamTrainConfig()
    assert learning_rate(cfg, 1) == pytest.approx(0.002)
    assert learning_rate(cfg, 50) == pytest.approx(0.002)
    assert learning_rate(cfg, 51) == pytest.approx(0.0016)
    assert learning_rate(cfg, 101) == pytest.approx(0.00128)


def test_gradients_match_finite_differences():
    net = dense_net([4, 3, 2, 3, 4], seed=0)
    x = np.random.default_rng(5).normal(size=(6, 4))
    assert grad_check(net, x) < 1e-4


def test_linear_gradients_are_exact():
    net = dense_net([5, 3, 5], seed=1, activation="linear")
    x = np.random.default_rng(12).normal(size=(4, 5))
    assert grad_check(net, x) < 1e-6


def test_adam_reduces_reconstruction_loss():
    rng = np.random.default_rng(6)
    latent = rng.normal(size=(200, 2))
    X = np.hstack([latent, latent @ rng.normal(size=(2, 3))])
    net = dense_net(hourglass_sizes(5), seed=0)
    cfg = AdamTrainConfig(epochs=40, batch_size=20, lr0=0.01, lr_step_epochs=20)
    trained = adam_train(net, X, cfg, seed=0)
    assert len(trained.loss_history) == 40
    assert trained.loss_history[-1] < trained.loss_history[0]
    assert reconstruction_errors(trained, X).mean() < reconstruction_errors(net, X).mean()


def test_dense_net_reload_is_bit_stable(tmp_path):
    net = dense_net([3, 2, 3], seed=2)
    path = str(tmp_path / "net.json")
    net.dump(path)
    X = np.random.default_rng(7).normal(size=(10, 3))
    np.testing.assert_array_equal(
        reconstruction_errors(DenseNet.load(path), X), reconstruction_errors(net, X)
    )


def test_autoencoder_memorizes_a_repeated_vector():
    vector = np.array([0.5, -1.0, 2.0, 0.0, 1.5])
    X = np.tile(vector, (50, 1))
    net = dense_net(hourglass_sizes(5), seed=3)
    cfg = AdamTrainConfig(epochs=200, batch_size=10, lr0=0.01, lr_step_epochs=100)
    trained = adam_train(net, X, cfg, seed=0)
    assert reconstruction_errors(net, vector)[0] > 0.1
    assert reconstruction_errors(trained, vector)[0] < 1e-3
