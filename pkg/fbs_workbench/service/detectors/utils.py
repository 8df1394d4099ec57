import json
import math
from collections import Counter

import numpy as np

from fbs_workbench.base.exceptions import DomainError
from fbs_workbench.base.logging import log
from fbs_workbench.service.dataset_features.types import (
    FeatureMatrix,
    FeatureScheme,
    ImputePolicy,
    NeighborCatalog,
)
from fbs_workbench.service.dataset_features.utils import fit_impute_policy, impute
from fbs_workbench.service.detectors.types import (
    AdfModel,
    AdfParams,
    AdfTree,
    AutoencoderModel,
    DetectorKind,
    DetectorModel,
    RcParams,
    RcPairModel,
    RcVerdict,
    RegressionClusteringModel,
)
from fbs_workbench.service.mlcore.exceptions import InsufficientDataError
from fbs_workbench.service.mlcore.types import AdamTrainConfig
from fbs_workbench.service.mlcore.utils import (
    adam_train,
    dense_net,
    forest_fit,
    forest_predict_many,
    hourglass_sizes,
    kmeans_assign_many,
    kmeans_fit,
    reconstruction_errors,
)

# Residue cutoffs tried when calibrating Regression Clustering
RC_MAX_CANDIDATES = 2048

# Threshold must stay positive
RC_MIN_THRESHOLD = 1e-12


def _col_layout(matrix: FeatureMatrix) -> dict[int, int]:
    """
    Column of every catalog PCI in a COL matrix
    """
    assert matrix.scheme == FeatureScheme.col, "Regression Clustering runs on COL features"
    columns = {}
    for j, name in enumerate(matrix.column_names):
        if name.startswith("rsrp_"):
            columns[int(name.removeprefix("rsrp_"))] = j
    return columns


def rc_fit(
    col_matrix: FeatureMatrix,
    catalog: NeighborCatalog,
    params: RcParams,
    seed: int,
    impute_policy: ImputePolicy = ImputePolicy(),
) -> RegressionClusteringModel:
    """
    For every catalog cell C and every other catalog cell nC: cluster the observed RSRP of C, and per cluster train a
    forest predicting it from the RSRPs of the remaining catalog cells. Rows where C was not heard are left out for
    that C, missing inputs are imputed.
    """
    columns = _col_layout(col_matrix)
    policy = fit_impute_policy(col_matrix, impute_policy)
    dense = impute(col_matrix, policy).values
    observed = ~col_matrix.missing_mask

    cells = [pci for pci in catalog.known_neighbors if pci in columns]
    pairs: list[RcPairModel] = []
    omitted: list[int] = []
    pair_seed = seed
    for target in cells:
        rows = observed[:, columns[target]]
        if rows.sum() < params.min_records:
            omitted.append(target)
            continue
        y = dense[rows, columns[target]]
        # The clustering depends on C alone, every nC shares it
        kmeans = kmeans_fit(y, min(params.k, len(np.unique(y))), seed + target)
        assignment = kmeans_assign_many(y, kmeans)
        for removed in cells:
            if removed == target:
                continue
            inputs = [columns[pci] for pci in cells if pci not in (target, removed)]
            pair_seed += 1
            X = dense[rows][:, inputs]
            forests = []
            for cluster in range(kmeans.k):
                members = assignment == cluster
                if not members.any():
                    # Empty clusters borrow every row of the pair
                    members = np.ones_like(members)
                forests.append(
                    forest_fit(X[members], y[members], params.forest, pair_seed * 31 + cluster)
                )
            pairs.append(
                RcPairModel(
                    target_pci=target,
                    removed_pci=removed,
                    target_column=columns[target],
                    input_columns=inputs,
                    kmeans=kmeans,
                    forests=forests,
                )
            )
    if omitted:
        log(
            "info",
            f"Cells {omitted} have fewer than {params.min_records} observations, no models for them",
            serving_pci=catalog.serving_pci,
        )
    return RegressionClusteringModel(
        scheme=FeatureScheme.col,
        serving_pci=catalog.serving_pci,
        seed=seed,
        column_names=col_matrix.column_names,
        impute_policy=policy,
        catalog_pcis=catalog.known_neighbors,
        params=params,
        pairs=pairs,
        omitted_cells=omitted,
    )


def rc_residues(model: RegressionClusteringModel, rows: np.ndarray) -> np.ndarray:
    """
    |y - yP| for every row and trained (C, nC) pair, NaN where C was not heard in the row. Missing inputs are imputed
    as in training.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != len(model.column_names):
        raise DomainError(
            f"Model expects {len(model.column_names)} columns, got {rows.shape[1]}"
        )
    missing = np.isnan(rows)
    fills = (
        np.asarray(model.impute_policy.column_fill)
        if model.impute_policy.column_fill is not None
        else np.full(rows.shape[1], model.impute_policy.value)
    )
    dense = np.where(missing, fills[np.newaxis, :], rows)

    residues = np.full((len(rows), len(model.pairs)), np.nan)
    for p, pair in enumerate(model.pairs):
        present = ~missing[:, pair.target_column]
        if not present.any():
            continue
        y = dense[present, pair.target_column]
        clusters = kmeans_assign_many(y, pair.kmeans)
        X = dense[present][:, pair.input_columns]
        predicted = np.empty(len(y))
        for cluster, forest in enumerate(pair.forests):
            members = clusters == cluster
            if members.any():
                predicted[members] = forest_predict_many(forest, X[members])
        residues[present, p] = np.abs(y - predicted)
    return residues


def _targets(model: RegressionClusteringModel) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for p, pair in enumerate(model.pairs):
        groups.setdefault(pair.target_pci, []).append(p)
    return groups


def _single_zero(residues: np.ndarray, groups: dict[int, list[int]], threshold: float):
    """
    Per target cell C: which rows have exactly one nC whose removal explains y (FLAG_C has a single 0). Rows where C
    was not heard have no verdict from C, and an infinite threshold flags nothing.
    """
    for target, columns in groups.items():
        block = residues[:, columns]
        zeros = ~np.isnan(block) & (block <= threshold)
        single = (zeros.sum(axis=1) == 1) & math.isfinite(threshold)
        yield target, columns, zeros, single


def rc_flags(
    model: RegressionClusteringModel, residues: np.ndarray, threshold: float
) -> np.ndarray:
    flagged = np.zeros(len(residues), dtype=bool)
    for _, _, _, single in _single_zero(residues, _targets(model), threshold):
        flagged |= single
    return flagged


def rc_evaluate(model: RegressionClusteringModel, row) -> RcVerdict:
    """
    Flag the row if, from the perspective of some cell C, removing exactly one other cell nC makes the prediction of C
    agree with what was observed. That nC is the culprit; when several C point at different culprits the majority
    wins, ties to the lowest PCI.
    """
    assert model.threshold is not None, "Calibrate the model before evaluating rows"
    residues = rc_residues(model, row)
    votes: Counter[int] = Counter()
    for _, columns, zeros, single in _single_zero(residues, _targets(model), model.threshold):
        if single[0]:
            index = int(np.nonzero(zeros[0])[0][0])
            votes[model.pairs[columns[index]].removed_pci] += 1
    if not votes:
        return RcVerdict(flagged=False)
    top = max(votes.values())
    return RcVerdict(
        flagged=True, culprit=min(pci for pci, n in votes.items() if n == top)
    )


def rc_scores_from_residues(
    model: RegressionClusteringModel, residues: np.ndarray, threshold: float
) -> np.ndarray:
    """
    Graded score with score > threshold exactly when the row is flagged: the largest second-smallest residue over the
    cells C whose smallest residue is within the threshold. A cell with a single pair has no second residue, which
    counts as infinite.
    """
    scores = np.zeros(len(residues))
    for columns in _targets(model).values():
        block = residues[:, columns]
        present = ~np.isnan(block)
        ordered = np.sort(np.where(present, block, np.inf), axis=1)
        first = ordered[:, 0]
        second = ordered[:, 1] if ordered.shape[1] > 1 else np.full(len(block), np.inf)
        eligible = present.any(axis=1) & (first <= threshold)
        scores = np.where(eligible, np.maximum(scores, second), scores)
    return scores


def rc_score(model: RegressionClusteringModel, row) -> float:
    assert model.threshold is not None, "Calibrate the model before scoring rows"
    return float(
        rc_scores_from_residues(model, rc_residues(model, row), model.threshold)[0]
    )


def rc_calibrate(
    model: RegressionClusteringModel,
    benign_validation: FeatureMatrix,
    target_flag_rate: float,
) -> float:
    """
    Smallest residue cutoff from which on no larger cutoff flags more than `target_flag_rate` of the benign rows. At
    target 0 the cutoff sits just above the largest benign residue.

    The verdict is not monotone for very small cutoffs (a row where every FLAG entry is 1 is not flagged), so the
    search looks for the start of the tail where the flag rate stays within target. Cells with a single pair flag
    every row at large cutoffs; when nothing finite meets the target the cutoff is infinite and the model flags
    nothing.
    """
    residues = rc_residues(model, benign_validation.values)
    finite = residues[~np.isnan(residues)]
    if len(residues) == 0 or finite.size == 0:
        log("warning", "No benign residues to calibrate on", serving_pci=model.serving_pci)
        return math.inf
    if target_flag_rate == 0:
        above_all = float(np.nextafter(finite.max(), math.inf))
        if not rc_flags(model, residues, above_all).any():
            return max(above_all, RC_MIN_THRESHOLD)
    candidates = np.unique(finite)
    if candidates.size > RC_MAX_CANDIDATES:
        candidates = np.unique(
            np.quantile(finite, np.linspace(0.0, 1.0, RC_MAX_CANDIDATES))
        )
    candidates = np.append(candidates, math.inf)
    rates = np.array(
        [rc_flags(model, residues, float(t)).mean() for t in candidates]
    )
    # Highest flag rate at this cutoff or any larger one
    tail = np.maximum.accumulate(rates[::-1])[::-1]
    admissible = np.nonzero(tail <= target_flag_rate)[0]
    if admissible[0] == len(candidates) - 1:
        log(
            "warning",
            f"Flag rate {target_flag_rate} is unattainable",
            serving_pci=model.serving_pci,
        )
        return math.inf
    return max(float(candidates[admissible[0]]), RC_MIN_THRESHOLD)


def _grow_adf_tree(
    X: np.ndarray, params: AdfParams, rng: np.random.Generator
) -> AdfTree:
    n_features = X.shape[1]
    min_split = params.isolation_level * len(X)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf: list[int] = []
    lower: list[np.ndarray] = []
    upper: list[np.ndarray] = []
    width: list[np.ndarray] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf.append(-1)
        return len(feature) - 1

    def close(node: int, points: np.ndarray) -> None:
        lo, hi = points.min(axis=0), points.max(axis=0)
        w = hi - lo
        leaf[node] = len(lower)
        lower.append(lo - params.margin * w)
        upper.append(hi + params.margin * w)
        width.append(w)

    stack = [(new_node(), np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        points = X[idx]
        spread = np.ptp(points, axis=0)
        splittable = np.nonzero(spread > 0)[0]
        if depth >= params.max_depth or len(idx) <= min_split or splittable.size == 0:
            close(node, points)
            continue
        split_feature = int(rng.choice(splittable))
        lo, hi = points[:, split_feature].min(), points[:, split_feature].max()
        split = float(rng.uniform(lo, hi))
        if split <= lo:
            split = (lo + hi) / 2.0
        goes_left = points[:, split_feature] < split
        feature[node] = split_feature
        threshold[node] = split
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], idx[~goes_left], depth + 1))
        stack.append((left[node], idx[goes_left], depth + 1))

    return AdfTree(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        leaf=leaf,
        lower=np.array(lower).reshape(len(lower), n_features),
        upper=np.array(upper).reshape(len(upper), n_features),
        width=np.array(width).reshape(len(width), n_features),
    )


def adf_fit_dense(X, params: AdfParams, seed: int) -> list[AdfTree]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise InsufficientDataError("Cannot fit anomaly detection trees on an empty matrix")
    subsample = params.subsample
    if len(X) < subsample:
        log("warning", f"Only {len(X)} rows, subsampling all of them for every tree")
        subsample = len(X)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(params.n_trees):
        idx = rng.choice(len(X), size=subsample, replace=False)
        trees.append(_grow_adf_tree(X[idx], params, rng))
    return trees


def adf_fit(
    matrix: FeatureMatrix,
    params: AdfParams,
    seed: int,
    impute_policy: ImputePolicy = ImputePolicy(),
    catalog_pcis: list[int] | None = None,
) -> AdfModel:
    """
    Anomaly detection forest: random split trees over subsamples, with feature-wise borders per leaf
    """
    policy = fit_impute_policy(matrix, impute_policy)
    dense = impute(matrix, policy).values
    return AdfModel(
        scheme=matrix.scheme,
        serving_pci=matrix.serving_pci,
        seed=seed,
        column_names=matrix.column_names,
        impute_policy=policy,
        catalog_pcis=catalog_pcis or [],
        params=params,
        n_features=dense.shape[1],
        trees=adf_fit_dense(dense, params, seed),
    )


def _adf_leaves(tree: AdfTree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        split_feature = tree.feature[node]
        internal = np.nonzero(split_feature >= 0)[0]
        if internal.size == 0:
            return tree.leaf[node]
        at = node[internal]
        goes_left = X[internal, split_feature[internal]] < tree.threshold[at]
        node[internal] = np.where(goes_left, tree.left[at], tree.right[at])


def adf_tree_violation(tree: AdfTree, X: np.ndarray) -> np.ndarray:
    """
    How far each row lies outside the borders of its leaf, in units of the leaf's range on the worst feature. A
    feature where the leaf has no range is measured in its own units.
    """
    leaves = _adf_leaves(tree, X)
    below = tree.lower[leaves] - X
    above = X - tree.upper[leaves]
    excess = np.maximum(np.maximum(below, above), 0.0)
    width = tree.width[leaves]
    scale = np.where(width > 0, width, 1.0)
    return (excess / scale).max(axis=1)


def adf_score_many(model: AdfModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise DomainError(f"Model expects {model.n_features} features, got {X.shape[1]}")
    return np.mean([adf_tree_violation(tree, X) for tree in model.trees], axis=0)


def adf_score(model: AdfModel, row) -> float:
    return float(adf_score_many(model, row)[0])


def ae_fit(
    matrix: FeatureMatrix,
    cfg: AdamTrainConfig,
    seed: int,
    impute_policy: ImputePolicy = ImputePolicy(),
    catalog_pcis: list[int] | None = None,
) -> AutoencoderModel:
    """
    Hourglass autoencoder on z-scored columns. Columns without variance are scaled by 1.
    """
    policy = fit_impute_policy(matrix, impute_policy)
    dense = impute(matrix, policy).values
    n_features = dense.shape[1]
    if n_features < 2:
        raise DomainError("An autoencoder needs at least two features")
    if len(dense) == 0:
        raise InsufficientDataError("Cannot train an autoencoder without rows")
    mean = dense.mean(axis=0)
    std = dense.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    net = dense_net(hourglass_sizes(n_features), seed)
    net = adam_train(net, (dense - mean) / std, cfg, seed)
    log(
        "debug",
        f"Autoencoder loss {net.loss_history[0]:.4g} -> {net.loss_history[-1]:.4g}",
        serving_pci=matrix.serving_pci,
    )
    return AutoencoderModel(
        scheme=matrix.scheme,
        serving_pci=matrix.serving_pci,
        seed=seed,
        column_names=matrix.column_names,
        impute_policy=policy,
        catalog_pcis=catalog_pcis or [],
        train_config=cfg,
        mean=mean,
        std=std,
        net=net,
    )


def ae_score_many(model: AutoencoderModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return reconstruction_errors(model.net, (X - model.mean) / model.std)


def ae_score(model: AutoencoderModel, row) -> float:
    return float(ae_score_many(model, row)[0])


def score_matrix(model: DetectorModel, matrix: FeatureMatrix) -> np.ndarray:
    """
    Scores for every row of a feature matrix laid out like the model's training data
    """
    if matrix.column_names != model.column_names:
        raise DomainError(
            f"Feature layout {matrix.column_names} does not match the model's {model.column_names}"
        )
    if matrix.n_rows == 0:
        return np.zeros(0)
    if isinstance(model, RegressionClusteringModel):
        assert model.threshold is not None, "Calibrate the model before scoring rows"
        residues = rc_residues(model, matrix.values)
        return rc_scores_from_residues(model, residues, model.threshold)
    dense = impute(matrix, model.impute_policy).values
    if isinstance(model, AdfModel):
        return adf_score_many(model, dense)
    if isinstance(model, AutoencoderModel):
        return ae_score_many(model, dense)
    raise DomainError(f"Unknown detector {model.kind}")


DETECTOR_TYPES: dict[DetectorKind, type[DetectorModel]] = {
    DetectorKind.rc: RegressionClusteringModel,
    DetectorKind.adf: AdfModel,
    DetectorKind.ae: AutoencoderModel,
}


def load_detector(path: str) -> DetectorModel:
    """
    Load a persisted detector of any kind
    """
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    return DETECTOR_TYPES[DetectorKind(data["kind"])].parse_obj(data)


def fit_detector(
    kind: DetectorKind,
    matrix: FeatureMatrix,
    catalog: NeighborCatalog,
    seed: int,
    impute_policy: ImputePolicy,
    rc_params: RcParams = RcParams(),
    adf_params: AdfParams = AdfParams(),
    ae_config: AdamTrainConfig = AdamTrainConfig(),
) -> DetectorModel:
    if kind == DetectorKind.rc:
        return rc_fit(matrix, catalog, rc_params, seed, impute_policy)
    if kind == DetectorKind.adf:
        return adf_fit(matrix, adf_params, seed, impute_policy, catalog.known_neighbors)
    return ae_fit(matrix, ae_config, seed, impute_policy, catalog.known_neighbors)
