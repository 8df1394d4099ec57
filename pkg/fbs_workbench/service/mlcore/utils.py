import math

import numpy as np

from fbs_workbench.base.exceptions import DomainError, NumericalError
from fbs_workbench.base.logging import log
from fbs_workbench.service.mlcore.exceptions import InsufficientDataError
from fbs_workbench.service.mlcore.types import (
    AdamTrainConfig,
    DenseNet,
    ForestParams,
    KMeansModel,
    RandomForestRegressor,
    RegressionTree,
)

KMEANS_MAX_ITER = 100

# Hidden layer widths relative to the number of input features
HOURGLASS = (0.8, 0.5, 0.8)

# Floor of the denominator in gradient checks, so that near-zero gradients compare by absolute error
GRAD_CHECK_FLOOR = 1e-5


def _as_points(values) -> np.ndarray:
    points = np.asarray(values, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    return points


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2).sum(axis=2)


def _kmeans_plus_plus(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    centroids = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        closest = _squared_distances(points, np.array(centroids)).min(axis=1)
        total = closest.sum()
        if total > 0:
            index = rng.choice(len(points), p=closest / total)
        else:
            # Fewer distinct points than clusters
            index = rng.integers(len(points))
        centroids.append(points[index])
    return np.array(centroids)


def kmeans_objective(values, centroids: np.ndarray) -> float:
    points = _as_points(values)
    return float(_squared_distances(points, centroids).min(axis=1).sum())


def kmeans_fit(values, k: int, seed: int) -> KMeansModel:
    """
    Lloyd's algorithm from k-means++ seeds, until the assignment stops changing or KMEANS_MAX_ITER iterations. A
    cluster that loses all its points keeps its previous centroid.
    """
    points = _as_points(values)
    if k < 1 or len(points) < k:
        raise InsufficientDataError(f"Cannot fit {k} clusters to {len(points)} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plus_plus(points, k, rng)
    assignment = np.argmin(_squared_distances(points, centroids), axis=1)
    history = [kmeans_objective(points, centroids)]

    n_iter = 0
    for n_iter in range(1, KMEANS_MAX_ITER + 1):
        for cluster in range(k):
            members = points[assignment == cluster]
            if len(members):
                centroids[cluster] = members.mean(axis=0)
        new_assignment = np.argmin(_squared_distances(points, centroids), axis=1)
        history.append(kmeans_objective(points, centroids))
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment

    return KMeansModel(
        k=k,
        centroids=centroids,
        seed=seed,
        n_iter=n_iter,
        inertia_history=history,
    )


def kmeans_assign(value, model: KMeansModel) -> int:
    """
    Index of the nearest centroid, ties to the lowest index
    """
    point = np.asarray(value, dtype=np.float64).reshape(1, -1)
    return int(np.argmin(_squared_distances(point, model.centroids), axis=1)[0])


def kmeans_assign_many(values, model: KMeansModel) -> np.ndarray:
    return np.argmin(_squared_distances(_as_points(values), model.centroids), axis=1)


def _best_split(
    X: np.ndarray, y: np.ndarray, features, min_leaf: int
) -> tuple[float, int, float] | None:
    """
    Lowest total squared error split over `features`, as (sse, feature, threshold)
    """
    n = len(y)
    best = None
    centered = y - y.mean()
    positions = np.arange(min_leaf - 1, n - min_leaf)
    if positions.size == 0:
        return None
    for feature in features:
        order = np.argsort(X[:, feature], kind="mergesort")
        xs = X[order, feature]
        ys = centered[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        i = positions[xs[positions] < xs[positions + 1]]
        if i.size == 0:
            continue
        n_left = i + 1
        n_right = n - n_left
        sse = (csq[i] - csum[i] ** 2 / n_left) + (
            (csq[-1] - csq[i]) - (csum[-1] - csum[i]) ** 2 / n_right
        )
        j = int(np.argmin(sse))
        if best is None or sse[j] < best[0]:
            lo, hi = xs[i[j]], xs[i[j] + 1]
            threshold = (lo + hi) / 2.0
            if not lo <= threshold < hi:
                threshold = lo
            best = (float(sse[j]), int(feature), float(threshold))
    return best


def _fit_tree(
    X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator
) -> RegressionTree:
    n_features = X.shape[1]
    mtry = n_features
    if params.max_features == "sqrt":
        mtry = max(1, int(math.sqrt(n_features)))

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(idx: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if len(idx) < 2 * params.min_leaf or np.ptp(y[idx]) == 0:
            continue
        candidates = rng.permutation(n_features)
        split = _best_split(X[idx], y[idx], candidates[:mtry], params.min_leaf)
        if split is None and mtry < n_features:
            # None of the sampled features can split this node, so look at the rest
            split = _best_split(X[idx], y[idx], candidates[mtry:], params.min_leaf)
        if split is None:
            continue
        _, split_feature, split_threshold = split
        goes_left = X[idx, split_feature] <= split_threshold
        feature[node] = split_feature
        threshold[node] = split_threshold
        left_idx, right_idx = idx[goes_left], idx[~goes_left]
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return RegressionTree(
        feature=feature, threshold=threshold, left=left, right=right, value=value
    )


def tree_predict_many(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        split_feature = tree.feature[node]
        internal = np.nonzero(split_feature >= 0)[0]
        if internal.size == 0:
            return tree.value[node]
        at = node[internal]
        goes_left = X[internal, split_feature[internal]] <= tree.threshold[at]
        node[internal] = np.where(goes_left, tree.left[at], tree.right[at])


def forest_fit(X, y, params: ForestParams, seed: int) -> RandomForestRegressor:
    """
    Bagged CART regression trees with variance-reduction splits
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise InsufficientDataError(
            f"Need matching, non-empty X and y, got {X.shape} and {y.shape}"
        )
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(params.n_trees):
        idx = np.arange(len(y))
        if params.bootstrap:
            idx = rng.integers(0, len(y), size=len(y))
        trees.append(_fit_tree(X[idx], y[idx], params, rng))
    return RandomForestRegressor(
        params=params, seed=seed, n_features=X.shape[1], trees=trees
    )


def forest_predict_many(model: RandomForestRegressor, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DomainError(
            f"Forest was fitted on {model.n_features} features, got shape {X.shape}"
        )
    return np.mean([tree_predict_many(tree, X) for tree in model.trees], axis=0)


def forest_predict(model: RandomForestRegressor, x) -> float:
    return float(forest_predict_many(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def hourglass_sizes(n_features: int) -> list[int]:
    """
    [F, 0.8F, 0.5F, 0.8F, F], rounded half up and at least one unit per layer
    """
    hidden = [max(1, int(math.floor(share * n_features + 0.5))) for share in HOURGLASS]
    return [n_features, *hidden, n_features]


def dense_net(
    layer_sizes: list[int], seed: int, activation: str = "tanh"
) -> DenseNet:
    """
    Glorot-uniform initialised network with zero biases
    """
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    biases = [np.zeros(size) for size in layer_sizes[1:]]
    return DenseNet(
        layer_sizes=layer_sizes, activation=activation, weights=weights, biases=biases
    )


def _activate(net: DenseNet, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if net.activation == "tanh" else z


def _forward(
    net: DenseNet, X: np.ndarray, weights=None, biases=None
) -> list[np.ndarray]:
    weights = net.weights if weights is None else weights
    biases = net.biases if biases is None else biases
    activations = [X]
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = activations[-1] @ w + b
        activations.append(z if i == last else _activate(net, z))
    return activations


def reconstruct(net: DenseNet, X) -> np.ndarray:
    return _forward(net, np.atleast_2d(np.asarray(X, dtype=np.float64)))[-1]


def reconstruction_errors(net: DenseNet, X) -> np.ndarray:
    """
    Per row mean squared reconstruction error
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return ((reconstruct(net, X) - X) ** 2).mean(axis=1)


def _loss(net: DenseNet, X: np.ndarray, weights=None, biases=None) -> float:
    out = _forward(net, X, weights, biases)[-1]
    return float(((out - X) ** 2).mean())


def _gradients(
    net: DenseNet, X: np.ndarray, weights=None, biases=None
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """
    Loss and its gradients for the self-mapping MSE, mean over all entries of the batch
    """
    weights = net.weights if weights is None else weights
    biases = net.biases if biases is None else biases
    activations = _forward(net, X, weights, biases)
    out = activations[-1]
    loss = float(((out - X) ** 2).mean())
    delta = 2.0 * (out - X) / X.size
    grad_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if net.activation == "tanh":
                delta = delta * (1.0 - activations[i] ** 2)
    return loss, grad_w, grad_b


def learning_rate(cfg: AdamTrainConfig, epoch: int) -> float:
    """
    Step schedule, epochs counted from 1
    """
    return cfg.lr0 * cfg.lr_decay ** ((epoch - 1) // cfg.lr_step_epochs)


def adam_train(net: DenseNet, X, cfg: AdamTrainConfig, seed: int) -> DenseNet:
    """
    Train `net` to reproduce its input with Adam on mini-batches. Returns a new network; the loss history holds the
    full training set MSE after each epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    assert X.ndim == 2 and X.shape[1] == net.layer_sizes[0], "Input width mismatch"
    rng = np.random.default_rng(seed)
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    history = []

    for epoch in range(1, cfg.epochs + 1):
        lr = learning_rate(cfg, epoch)
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            batch = X[order[start : start + cfg.batch_size]]
            _, grad_w, grad_b = _gradients(net, batch, weights, biases)
            step += 1
            for i, grad in enumerate(grad_w + grad_b):
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * grad
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * grad * grad
                m_hat = m[i] / (1 - cfg.beta1**step)
                v_hat = v[i] / (1 - cfg.beta2**step)
                params[i] -= lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        loss = _loss(net, X, weights, biases)
        if not math.isfinite(loss):
            raise NumericalError(f"Training loss became {loss} in epoch {epoch}")
        history.append(loss)
        if epoch == 1 or epoch % cfg.lr_step_epochs == 0:
            log("debug", f"Epoch {epoch}: loss {loss:.6g}", lr=lr)

    return net.copy(
        update={"weights": weights, "biases": biases, "loss_history": history}
    )


def grad_check(net: DenseNet, x, eps: float = 1e-5) -> float:
    """
    Largest relative difference between backprop gradients and central finite differences of the reconstruction
    loss, over all parameters
    """
    assert eps > 0, "Finite difference step must be positive"
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    _, grad_w, grad_b = _gradients(net, X, weights, biases)

    worst = 0.0
    for params, grads in ((weights, grad_w), (biases, grad_b)):
        for param, grad in zip(params, grads):
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + eps
                plus = _loss(net, X, weights, biases)
                param[index] = original - eps
                minus = _loss(net, X, weights, biases)
                param[index] = original
                numeric = (plus - minus) / (2 * eps)
                analytic = grad[index]
                scale = max(abs(numeric), abs(analytic), GRAD_CHECK_FLOOR)
                worst = max(worst, abs(numeric - analytic) / scale)
    return worst
