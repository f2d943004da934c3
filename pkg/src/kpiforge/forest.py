"""Random forests over the tree grower.

Tree i draws its bootstrap sample and its per-node feature candidates
from a child stream derived from ``(master_seed, i)``, so the model is
a pure function of the table, the parameters, and the master seed.
Worker count affects wall time only: results are collected in tree
order and every tree's stream is independent of scheduling.

Aggregation sums the per-tree class frequency vectors and takes the
argmax (ties to the lowest class code), or averages the per-tree means
for regression. Out-of-bag evaluation aggregates, per row, only the
trees whose bootstrap sample missed that row.

Models serialize to a canonical, versioned JSON document. The byte
stream is deterministic, and reloading reproduces predictions exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .cart import (
    Internal,
    Leaf,
    ModelSchema,
    SplitCriterion,
    TreeModel,
    TreeParams,
    encode_row,
    fit_tree,
    resolve_criterion,
    validate_params,
)
from .errors import (
    EmptyTrainingSetError,
    InvalidParamsError,
    MissingValuesError,
    NoOobCoverageError,
)
from .seeding import TREE, child_rng
from .tabular import Table

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Ensemble size, sampling mode, and the shared tree parameters.

    A ``tree.mtry`` of None resolves at fit time to ceil(sqrt(p)) for
    classification and max(1, floor(p / 3)) for regression.
    """

    n_trees: int = 100
    tree: TreeParams = TreeParams()
    bootstrap: bool = True
    master_seed: int = 0


def default_mtry(task: str, n_features: int) -> int:
    if task == "classification":
        return math.isqrt(n_features - 1) + 1 if n_features > 1 else 1
    return max(1, n_features // 3)


@dataclass
class ForestModel:
    """A fitted forest plus its in-bag bookkeeping."""

    trees: tuple[TreeModel, ...]
    params: ForestParams
    schema: ModelSchema
    inbag: np.ndarray
    """int32 matrix [n_trees, n_rows]: bootstrap multiplicity per row."""

    _router_cache: "_Router | None" = None
    _fingerprint_cache: str | None = None

    @property
    def task(self) -> str:
        return self.schema.task

    @property
    def n_rows_trained(self) -> int:
        return int(self.inbag.shape[1])

    @property
    def n_features(self) -> int:
        return len(self.schema.feature_names)

    @property
    def fingerprint(self) -> str:
        """Hash of the canonical serialization; identifies this model."""
        if self._fingerprint_cache is None:
            self._fingerprint_cache = hashlib.sha256(model_bytes(self)).hexdigest()
        return self._fingerprint_cache

    def router(self) -> "_Router":
        if self._router_cache is None:
            self._router_cache = _Router(self)
        return self._router_cache

    def oob_row_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(tree_ids, row_ids) of every out-of-bag pair, tree-major."""
        trees, rows = np.nonzero(self.inbag == 0)
        return trees.astype(np.int64), rows.astype(np.int64)

    def mean_oob_fraction(self) -> float:
        """Mean over trees of the fraction of rows left out-of-bag."""
        return float((self.inbag == 0).mean())


def _resolve_tree_params(params: ForestParams, task: str, n_features: int) -> TreeParams:
    tree = params.tree
    if tree.mtry is None:
        tree = replace(tree, mtry=default_mtry(task, n_features))
    if tree.criterion is None:
        tree = replace(tree, criterion=resolve_criterion(tree, task).value)
    return tree


def _fit_one(
    table: Table, tree_params: TreeParams, master_seed: int, index: int,
    bootstrap: bool,
) -> tuple[TreeModel, np.ndarray]:
    rng = child_rng(master_seed, TREE, index)
    n = table.n_rows
    if bootstrap:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n)
    tree = fit_tree(table, rows, tree_params, rng)
    counts = np.bincount(rows, minlength=n).astype(np.int32)
    return tree, counts


def fit_forest(table: Table, params: ForestParams, n_jobs: int = 1) -> ForestModel:
    """Fit ``params.n_trees`` trees; byte-identical for any ``n_jobs``."""
    if table.has_missing:
        raise MissingValuesError("table has missing values; clean it first")
    if table.n_rows == 0:
        raise EmptyTrainingSetError("no rows to fit on")
    if table.n_rows < 2:
        raise InvalidParamsError("forest training needs at least 2 rows")
    if params.n_trees < 1:
        raise InvalidParamsError("n_trees must be >= 1")
    validate_params(params.tree)
    n_features = len(table.feature_specs)
    tree_params = _resolve_tree_params(params, table.task, n_features)
    resolved = replace(params, tree=tree_params)

    if n_jobs == 1:
        results = [
            _fit_one(table, tree_params, params.master_seed, i, params.bootstrap)
            for i in range(params.n_trees)
        ]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_fit_one)(
                table, tree_params, params.master_seed, i, params.bootstrap
            )
            for i in range(params.n_trees)
        )
    trees = tuple(r[0] for r in results)
    inbag = np.stack([r[1] for r in results])
    return ForestModel(
        trees=trees, params=resolved, schema=trees[0].schema, inbag=inbag,
    )


# --- batch routing -----------------------------------------------------

class _Router:
    """All trees flattened into parallel arrays for batch prediction.

    Rows route simultaneously: one vectorized step advances every still
    active (tree, row) pair by one level. Category membership is an
    equality test because the grower only emits single-code category
    splits; the unseen-code encoding (-1) never equals a stored code,
    so unknown categories fall right.
    """

    def __init__(self, forest: ForestModel):
        feature: list[int] = []
        is_cat: list[bool] = []
        value: list[float] = []
        left: list[int] = []
        right: list[int] = []
        leaf_ptr: list[int] = []
        leaf_values: list = []
        roots = []
        for tree in forest.trees:
            roots.append(len(feature))
            stack = [(tree.root, -1, "")]
            while stack:
                node, parent, side = stack.pop()
                idx = len(feature)
                if parent >= 0:
                    (left if side == "l" else right)[parent] = idx
                if isinstance(node, Leaf):
                    feature.append(-1)
                    is_cat.append(False)
                    value.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    leaf_ptr.append(len(leaf_values))
                    leaf_values.append(node.value)
                else:
                    feature.append(node.feature)
                    if node.threshold is not None:
                        is_cat.append(False)
                        value.append(node.threshold)
                    else:
                        if len(node.categories) != 1:
                            raise InvalidParamsError(
                                "batch routing supports single-code category"
                                " splits only"
                            )
                        is_cat.append(True)
                        value.append(float(next(iter(node.categories))))
                    left.append(-1)
                    right.append(-1)
                    leaf_ptr.append(-1)
                    stack.append((node.right, idx, "r"))
                    stack.append((node.left, idx, "l"))
        self.feature = np.asarray(feature, dtype=np.int64)
        self.is_cat = np.asarray(is_cat)
        self.value = np.asarray(value, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.leaf_ptr = np.asarray(leaf_ptr, dtype=np.int64)
        self.roots = np.asarray(roots, dtype=np.int64)
        self.task = forest.task
        if self.task == "classification":
            self.leaf_dist = np.vstack(leaf_values).astype(np.float64)
            self.leaf_mean = None
        else:
            self.leaf_dist = None
            self.leaf_mean = np.asarray(leaf_values, dtype=np.float64)

    def route(self, xmat: np.ndarray, tree_ids: np.ndarray, row_ids: np.ndarray):
        """Leaf-payload indices for each (tree, row) pair."""
        pos = self.roots[tree_ids].copy()
        active = np.flatnonzero(self.feature[pos] >= 0)
        while active.size:
            p = pos[active]
            vals = xmat[row_ids[active], self.feature[p]]
            v = self.value[p]
            go_left = np.where(self.is_cat[p], vals == v, vals <= v)
            new_pos = np.where(go_left, self.left[p], self.right[p])
            pos[active] = new_pos
            active = active[self.feature[new_pos] >= 0]
        return self.leaf_ptr[pos]


def _aggregate(
    router: _Router,
    xmat: np.ndarray,
    tree_ids: np.ndarray,
    row_ids: np.ndarray,
    n_rows: int,
    n_classes: int,
):
    """Per-row summed votes plus per-row tree coverage."""
    leaf = router.route(xmat, tree_ids, row_ids)
    coverage = np.bincount(row_ids, minlength=n_rows)
    if router.task == "classification":
        votes = np.empty((n_rows, n_classes), dtype=np.float64)
        dist = router.leaf_dist[leaf]
        for c in range(n_classes):
            votes[:, c] = np.bincount(
                row_ids, weights=dist[:, c], minlength=n_rows
            )
        return votes, coverage
    sums = np.bincount(row_ids, weights=router.leaf_mean[leaf], minlength=n_rows)
    return sums, coverage


# --- prediction --------------------------------------------------------

def predict_codes(forest: ForestModel, table: Table) -> np.ndarray:
    """Batch prediction in model units: class codes or float values."""
    xmat = forest.schema.encode_features(table)
    return predict_codes_from_matrix(forest, xmat)


def predict_codes_from_matrix(forest: ForestModel, xmat: np.ndarray) -> np.ndarray:
    router = forest.router()
    n = xmat.shape[0]
    tree_ids, row_ids = all_pairs(forest, n)
    n_classes = len(forest.schema.class_labels or ()) or 0
    agg, _ = _aggregate(router, xmat, tree_ids, row_ids, n, n_classes)
    if forest.task == "classification":
        return np.argmax(agg, axis=1)
    return agg / len(forest.trees)


def predict_table(forest: ForestModel, table: Table) -> list:
    """Batch prediction in user units: class labels or float values."""
    codes = predict_codes(forest, table)
    if forest.task == "classification":
        return [forest.schema.class_labels[int(c)] for c in codes]
    return [float(v) for v in codes]


def predict_forest(forest: ForestModel, row: dict):
    """Aggregate prediction for one row mapping: label or mean."""
    x = encode_row(forest.schema, row)
    if forest.task == "classification":
        total = np.zeros(len(forest.schema.class_labels), dtype=np.float64)
        for tree in forest.trees:
            node = tree.root
            while isinstance(node, Internal):
                node = node.left if node.goes_left(x[node.feature]) else node.right
            total += node.value
        return forest.schema.class_labels[int(np.argmax(total))]
    acc = 0.0
    for tree in forest.trees:
        node = tree.root
        while isinstance(node, Internal):
            node = node.left if node.goes_left(x[node.feature]) else node.right
        acc += node.value
    return acc / len(forest.trees)


# --- out-of-bag evaluation ---------------------------------------------

@dataclass(frozen=True)
class OobReport:
    task: str
    metrics: dict
    n_rows: int
    n_trees: int
    mean_oob_fraction: float

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "oob_report",
            "task": self.task,
            "metrics": dict(self.metrics),
            "n_rows": self.n_rows,
            "n_trees": self.n_trees,
            "mean_oob_fraction": self.mean_oob_fraction,
        }


def evaluate_pairs(
    forest: ForestModel,
    xmat: np.ndarray,
    y: np.ndarray,
    tree_ids: np.ndarray,
    row_ids: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Aggregate the given (tree, row) pairs and score the result.

    Returns (metric, predictions, coverage) where the metric is
    accuracy for classification and R^2 for regression. Rows with zero
    coverage raise NoOobCoverageError. Both the baseline and the
    permuted passes of permutation importance run through this one
    function, so identical predictions give a bit-identical metric.
    """
    router = forest.router()
    n = xmat.shape[0]
    n_classes = len(forest.schema.class_labels or ()) or 0
    agg, coverage = _aggregate(router, xmat, tree_ids, row_ids, n, n_classes)
    uncovered = np.flatnonzero(coverage == 0)
    if uncovered.size:
        raise NoOobCoverageError(uncovered.tolist())
    if forest.task == "classification":
        pred = np.argmax(agg, axis=1)
        return float(np.count_nonzero(pred == y) / n), pred, coverage
    pred = agg / coverage
    return _r_squared(y, pred), pred, coverage


def all_pairs(forest: ForestModel, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """(tree_ids, row_ids) pairing every tree with every row."""
    n_trees = len(forest.trees)
    tree_ids = np.repeat(np.arange(n_trees), n_rows)
    row_ids = np.tile(np.arange(n_rows), n_trees)
    return tree_ids, row_ids


def oob_metric_from_matrix(
    forest: ForestModel, xmat: np.ndarray, y: np.ndarray
) -> float:
    """Out-of-bag accuracy or R^2 for the training matrix."""
    tree_ids, row_ids = forest.oob_row_pairs()
    metric, _, _ = evaluate_pairs(forest, xmat, y, tree_ids, row_ids)
    return metric


def _r_squared(y: np.ndarray, pred: np.ndarray) -> float:
    resid = y - pred
    ss_res = float(np.dot(resid, resid))
    centered = y - y.mean()
    ss_tot = float(np.dot(centered, centered))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def oob_score(forest: ForestModel, table: Table) -> OobReport:
    """Out-of-bag report against the table the forest was trained on."""
    if table.n_rows != forest.n_rows_trained:
        raise InvalidParamsError(
            "out-of-bag evaluation needs the training table "
            f"({forest.n_rows_trained} rows), got {table.n_rows}"
        )
    xmat = forest.schema.encode_features(table)
    y = forest.schema.encode_target(table)
    tree_ids, row_ids = forest.oob_row_pairs()
    metric, pred, _ = evaluate_pairs(forest, xmat, y, tree_ids, row_ids)
    if forest.task == "classification":
        metrics = {"oob_accuracy": metric}
    else:
        mse = float(np.mean((y - pred) ** 2))
        metrics = {"oob_r2": metric, "oob_mse": mse}
    return OobReport(
        task=forest.task,
        metrics=metrics,
        n_rows=table.n_rows,
        n_trees=len(forest.trees),
        mean_oob_fraction=forest.mean_oob_fraction(),
    )


# --- serialization -----------------------------------------------------

def _tree_to_obj(tree: TreeModel) -> dict:
    feature: list[int] = []
    threshold: list = []
    category: list = []
    n_samples: list[int] = []
    decrease: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list = []
    stack = [(tree.root, -1, "")]
    while stack:
        node, parent, side = stack.pop()
        idx = len(feature)
        if parent >= 0:
            (left if side == "l" else right)[parent] = idx
        if isinstance(node, Leaf):
            feature.append(-1)
            threshold.append(None)
            category.append(None)
            n_samples.append(node.n_samples)
            decrease.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(
                node.value.tolist() if isinstance(node.value, np.ndarray)
                else node.value
            )
        else:
            feature.append(node.feature)
            threshold.append(node.threshold)
            category.append(
                None if node.categories is None else sorted(node.categories)
            )
            n_samples.append(node.n_samples)
            decrease.append(node.impurity_decrease)
            left.append(-1)
            right.append(-1)
            value.append(None)
            stack.append((node.right, idx, "r"))
            stack.append((node.left, idx, "l"))
    return {
        "feature": feature,
        "threshold": threshold,
        "category": category,
        "n_samples": n_samples,
        "decrease": decrease,
        "left": left,
        "right": right,
        "value": value,
    }


def _tree_from_obj(obj: dict, schema: ModelSchema, criterion: SplitCriterion) -> TreeModel:
    nodes: list[Leaf | Internal | None] = [None] * len(obj["feature"])
    for i in range(len(nodes) - 1, -1, -1):
        if obj["feature"][i] < 0:
            raw = obj["value"][i]
            value = (
                np.asarray(raw, dtype=np.float64) if isinstance(raw, list) else raw
            )
            nodes[i] = Leaf(n_samples=obj["n_samples"][i], value=value)
        else:
            cats = obj["category"][i]
            nodes[i] = Internal(
                feature=obj["feature"][i],
                threshold=obj["threshold"][i],
                categories=None if cats is None else frozenset(cats),
                n_samples=obj["n_samples"][i],
                impurity_decrease=obj["decrease"][i],
                left=nodes[obj["left"][i]],
                right=nodes[obj["right"][i]],
            )
    return TreeModel(
        root=nodes[0],
        schema=schema,
        criterion=criterion,
        n_samples_trained=obj["n_samples"][0],
    )


def _schema_to_obj(schema: ModelSchema) -> dict:
    return {
        "feature_names": list(schema.feature_names),
        "feature_kinds": list(schema.feature_kinds),
        "dictionaries": [
            None if d is None else list(d) for d in schema.dictionaries
        ],
        "target_name": schema.target_name,
        "task": schema.task,
        "class_labels": (
            None if schema.class_labels is None else list(schema.class_labels)
        ),
    }


def _schema_from_obj(obj: dict) -> ModelSchema:
    return ModelSchema(
        feature_names=tuple(obj["feature_names"]),
        feature_kinds=tuple(obj["feature_kinds"]),
        dictionaries=tuple(
            None if d is None else tuple(d) for d in obj["dictionaries"]
        ),
        target_name=obj["target_name"],
        task=obj["task"],
        class_labels=(
            None if obj["class_labels"] is None else tuple(obj["class_labels"])
        ),
    )


def model_to_obj(model: ForestModel) -> dict:
    tree = model.params.tree
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "forest_model",
        "params": {
            "n_trees": model.params.n_trees,
            "bootstrap": model.params.bootstrap,
            "master_seed": model.params.master_seed,
            "tree": {
                "criterion": tree.criterion,
                "max_depth": tree.max_depth,
                "min_samples_split": tree.min_samples_split,
                "min_samples_leaf": tree.min_samples_leaf,
                "mtry": tree.mtry,
            },
        },
        "schema": _schema_to_obj(model.schema),
        "inbag": model.inbag.tolist(),
        "trees": [_tree_to_obj(t) for t in model.trees],
    }


def model_from_obj(obj: dict) -> ForestModel:
    if obj.get("kind") != "forest_model":
        raise InvalidParamsError(f"not a forest model file: kind={obj.get('kind')!r}")
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise InvalidParamsError(
            f"unsupported model format version {obj.get('format_version')!r}"
        )
    schema = _schema_from_obj(obj["schema"])
    p = obj["params"]
    params = ForestParams(
        n_trees=p["n_trees"],
        bootstrap=p["bootstrap"],
        master_seed=p["master_seed"],
        tree=TreeParams(
            criterion=p["tree"]["criterion"],
            max_depth=p["tree"]["max_depth"],
            min_samples_split=p["tree"]["min_samples_split"],
            min_samples_leaf=p["tree"]["min_samples_leaf"],
            mtry=p["tree"]["mtry"],
        ),
    )
    criterion = SplitCriterion(p["tree"]["criterion"])
    trees = tuple(_tree_from_obj(t, schema, criterion) for t in obj["trees"])
    return ForestModel(
        trees=trees,
        params=params,
        schema=schema,
        inbag=np.asarray(obj["inbag"], dtype=np.int32),
    )


def model_bytes(model: ForestModel) -> bytes:
    """Canonical serialization: key-sorted compact JSON plus newline."""
    text = json.dumps(
        model_to_obj(model), sort_keys=True, separators=(",", ":"),
        allow_nan=False,
    )
    return (text + "\n").encode("utf-8")


def save_model(model: ForestModel, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path: str) -> ForestModel:
    with open(path, "rb") as fh:
        obj = json.loads(fh.read().decode("utf-8"))
    return model_from_obj(obj)
