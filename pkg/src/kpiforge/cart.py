"""Classification and regression trees with exhaustive split search.

Trees are grown greedily. At each node the grower scores every
admissible split of every candidate feature and keeps the one with the
largest impurity decrease; ties break toward the lower feature index,
then the lower threshold or category code.

Split scoring runs in two passes. A vectorized float pass computes the
weighted child impurity of every candidate. Candidates within a small
window of the best are then re-scored canonically: class counts as
exact integers, sums via math.fsum, terms combined in a fixed order.
The canonical pass is insensitive to summation order and to the
vectorized pass's rounding, so the selected split is a well-defined
function of the data and can be checked against naive enumeration.

Numeric splits test ``value <= threshold`` with thresholds midway
between consecutive distinct values. Categorical splits test membership
of a single category code against its complement; rows whose code is
unknown at prediction time fail the membership test and route right.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyNodeError,
    EmptyTrainingSetError,
    InvalidParamsError,
    MissingValuesError,
    SchemaMismatchError,
)
from .tabular import ColumnKind, Table

UNSEEN_CODE = -1.0

# Window, relative to the node impurity, inside which float-pass scores
# count as tied and are re-scored canonically.
_TIE_EPS = 1e-8


class SplitCriterion(str, enum.Enum):
    GINI = "gini"
    ENTROPY = "entropy"
    VARIANCE = "variance"


# --- impurity ----------------------------------------------------------

def gini_from_counts(counts) -> float:
    """Gini impurity 1 - sum(p_k^2) of a class-count vector."""
    total = 0
    for c in counts:
        if c < 0:
            raise InvalidParamsError("class counts must be non-negative")
        total += int(c)
    if total == 0:
        raise EmptyNodeError("impurity of an empty sample is undefined")
    acc = 0.0
    for c in counts:
        p = c / total
        acc += p * p
    return 1.0 - acc


def entropy_from_counts(counts) -> float:
    """Shannon entropy in bits; zero-count classes contribute nothing."""
    total = 0
    for c in counts:
        if c < 0:
            raise InvalidParamsError("class counts must be non-negative")
        total += int(c)
    if total == 0:
        raise EmptyNodeError("impurity of an empty sample is undefined")
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


def variance_of(values) -> float:
    """Population variance (mean squared deviation) of target values.

    Uses math.fsum, so the result does not depend on element order.
    """
    if isinstance(values, np.ndarray):
        values = values.tolist()
    n = len(values)
    if n == 0:
        raise EmptyNodeError("impurity of an empty sample is undefined")
    mean = math.fsum(values) / n
    return math.fsum((v - mean) ** 2 for v in values) / n


def node_impurity(criterion: SplitCriterion | str, data) -> float:
    """Impurity of one node: class counts for gini/entropy, targets for variance."""
    criterion = SplitCriterion(criterion)
    if criterion is SplitCriterion.GINI:
        return gini_from_counts(data)
    if criterion is SplitCriterion.ENTROPY:
        return entropy_from_counts(data)
    return variance_of(data)


# --- parameters --------------------------------------------------------

@dataclass(frozen=True)
class TreeParams:
    """Growth limits and split-search settings.

    ``criterion`` of None resolves to gini for classification and
    variance for regression. ``mtry`` of None means all features when a
    tree is fit on its own; forests resolve None to their task default
    before delegating here. ``mtry="all"`` always means all features.
    """

    criterion: str | None = None
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    mtry: int | str | None = None


def resolve_criterion(params: TreeParams, task: str) -> SplitCriterion:
    if params.criterion is None:
        return (
            SplitCriterion.GINI if task == "classification"
            else SplitCriterion.VARIANCE
        )
    criterion = SplitCriterion(params.criterion)
    if task == "classification" and criterion is SplitCriterion.VARIANCE:
        raise InvalidParamsError("variance criterion requires a numeric target")
    if task == "regression" and criterion is not SplitCriterion.VARIANCE:
        raise InvalidParamsError(f"{criterion.value} requires a categorical target")
    return criterion


def resolve_mtry(params: TreeParams, n_features: int) -> int:
    if params.mtry is None or params.mtry == "all":
        return n_features
    mtry = params.mtry
    if not isinstance(mtry, int) or isinstance(mtry, bool):
        raise InvalidParamsError(f"mtry must be an int, 'all', or None, got {mtry!r}")
    if not 1 <= mtry <= n_features:
        raise InvalidParamsError(
            f"mtry must lie in [1, {n_features}], got {mtry}"
        )
    return mtry


def validate_params(params: TreeParams) -> None:
    if params.max_depth is not None and params.max_depth < 0:
        raise InvalidParamsError("max_depth must be None or >= 0")
    if params.min_samples_split < 2:
        raise InvalidParamsError("min_samples_split must be >= 2")
    if params.min_samples_leaf < 1:
        raise InvalidParamsError("min_samples_leaf must be >= 1")


# --- model structure ---------------------------------------------------

@dataclass
class Leaf:
    n_samples: int
    value: np.ndarray | float
    """Class frequency vector (sums to 1) or target mean."""


@dataclass
class Internal:
    feature: int
    threshold: float | None
    categories: frozenset[int] | None
    n_samples: int
    impurity_decrease: float
    left: "Leaf | Internal | None" = None
    right: "Leaf | Internal | None" = None

    def goes_left(self, value: float) -> bool:
        """Routing test on an encoded feature value.

        Numeric: value <= threshold. Categorical: the int code is a
        member of the category set; unknown codes are members of
        nothing and route right.
        """
        if self.threshold is not None:
            return bool(value <= self.threshold)
        return int(value) in self.categories


@dataclass(frozen=True)
class ModelSchema:
    """What a fitted model remembers about its training columns."""

    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    dictionaries: tuple[tuple[str, ...] | None, ...]
    target_name: str
    task: str
    class_labels: tuple[str, ...] | None

    @classmethod
    def from_table(cls, table: Table) -> "ModelSchema":
        feats = table.feature_specs
        target = table.target_spec
        return cls(
            feature_names=tuple(s.name for s in feats),
            feature_kinds=tuple(s.kind.value for s in feats),
            dictionaries=tuple(
                tuple(table.dictionaries[s.name])
                if s.kind is ColumnKind.CATEGORICAL else None
                for s in feats
            ),
            target_name=target.name,
            task=table.task,
            class_labels=(
                tuple(table.dictionaries[target.name])
                if table.task == "classification" else None
            ),
        )

    @property
    def fingerprint(self) -> str:
        """Hash over names, kinds, target, and task.

        Dictionaries are excluded so a later data window that merely
        introduces new category values still matches; unknown values
        are handled at encoding time.
        """
        payload = json.dumps(
            [list(self.feature_names), list(self.feature_kinds),
             self.target_name, self.task],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def check_table(self, table: Table) -> None:
        """Raise SchemaMismatchError unless the table fits this schema."""
        feats = table.feature_specs
        names = tuple(s.name for s in feats)
        kinds = tuple(s.kind.value for s in feats)
        if names != self.feature_names or kinds != self.feature_kinds:
            raise SchemaMismatchError(
                f"feature columns {list(names)} do not match the model's "
                f"{list(self.feature_names)}"
            )
        target = table.target_spec
        if target.name != self.target_name or table.task != self.task:
            raise SchemaMismatchError(
                f"target {target.name!r} ({table.task}) does not match the "
                f"model's {self.target_name!r} ({self.task})"
            )

    def encode_features(self, table: Table) -> np.ndarray:
        """Feature matrix with this schema's categorical codes.

        Category values unseen at training time encode as -1, which
        fails every membership test and routes right.
        """
        self.check_table(table)
        if table.has_missing:
            raise MissingValuesError("table has missing values; clean it first")
        out = np.empty((table.n_rows, len(self.feature_names)), dtype=np.float64)
        for j, name in enumerate(self.feature_names):
            col = table.columns[name]
            if self.feature_kinds[j] == "numeric":
                out[:, j] = col
            else:
                model_code = {s: i for i, s in enumerate(self.dictionaries[j])}
                lut = np.array(
                    [model_code.get(s, UNSEEN_CODE) for s in table.dictionaries[name]],
                    dtype=np.float64,
                )
                out[:, j] = lut[col] if lut.size else UNSEEN_CODE
        return out

    def encode_target(self, table: Table) -> np.ndarray:
        """Target vector in model units: class codes or float values.

        Classification labels unseen at training time encode as -1 and
        therefore never match a prediction.
        """
        self.check_table(table)
        col = table.columns[self.target_name]
        if self.task == "regression":
            return col.astype(np.float64)
        model_code = {s: i for i, s in enumerate(self.class_labels)}
        lut = np.array(
            [model_code.get(s, -1) for s in table.dictionaries[self.target_name]],
            dtype=np.int64,
        )
        return lut[col]


@dataclass
class TreeModel:
    """A fitted tree. Treat as immutable once fit returns it."""

    root: Leaf | Internal
    schema: ModelSchema
    criterion: SplitCriterion
    n_samples_trained: int

    def predict_row(self, row: dict) -> np.ndarray | float:
        return predict_tree(self, row)

    def iter_nodes(self):
        """Yield every node in depth-first pre-order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Internal):
                stack.append(node.right)
                stack.append(node.left)

    def features_used(self) -> set[int]:
        return {
            n.feature for n in self.iter_nodes() if isinstance(n, Internal)
        }


# --- split search ------------------------------------------------------

@dataclass(frozen=True)
class SplitChoice:
    """Winning split of one node; `feature` indexes the feature list."""

    feature: int
    threshold: float | None
    categories: frozenset[int] | None
    impurity_decrease: float

    @property
    def order_key(self):
        return self.threshold if self.threshold is not None else min(self.categories)


class _Training:
    """Encoded columns plus target info shared by every node of a fit."""

    def __init__(self, table: Table):
        if table.has_missing:
            raise MissingValuesError("table has missing values; clean it first")
        self.schema = ModelSchema.from_table(table)
        feats = table.feature_specs
        self.n_features = len(feats)
        self.kinds = tuple(s.kind for s in feats)
        self.cols = []
        self.dict_sizes = []
        for s in feats:
            if s.kind is ColumnKind.NUMERIC:
                self.cols.append(table.columns[s.name].astype(np.float64))
                self.dict_sizes.append(0)
            else:
                self.cols.append(table.columns[s.name].astype(np.int64))
                self.dict_sizes.append(len(table.dictionaries[s.name]))
        self.task = table.task
        target = table.columns[table.target_spec.name]
        if self.task == "classification":
            self.y = target.astype(np.int64)
            self.n_classes = len(table.dictionaries[table.target_spec.name])
        else:
            self.y = target.astype(np.float64)
            self.n_classes = 0

def _class_impurity(criterion: SplitCriterion, counts: list[int]) -> float:
    return (
        gini_from_counts(counts)
        if criterion is SplitCriterion.GINI
        else entropy_from_counts(counts)
    )


def _canonical_split_score(
    tr: _Training,
    criterion: SplitCriterion,
    rows: np.ndarray,
    feature: int,
    threshold: float | None,
    code: int | None,
):
    """Canonical weighted child impurity of one candidate split.

    Returns (w, impurity_left, impurity_right, left_selector) where the
    selector is a boolean mask over ``rows``. The arithmetic here is the
    reference semantics: integer class counts or fsum-based variance,
    combined as (n_l * i_l + n_r * i_r) / n.
    """
    col = tr.cols[feature][rows]
    left = (col <= threshold) if threshold is not None else (col == code)
    n = rows.size
    n_l = int(np.count_nonzero(left))
    n_r = n - n_l
    if tr.task == "classification":
        y = tr.y[rows]
        counts_l = np.bincount(y[left], minlength=tr.n_classes).tolist()
        counts_r = np.bincount(y[~left], minlength=tr.n_classes).tolist()
        i_l = _class_impurity(criterion, counts_l)
        i_r = _class_impurity(criterion, counts_r)
    else:
        y = tr.y[rows]
        i_l = variance_of(y[left])
        i_r = variance_of(y[~left])
    w = (n_l * i_l + n_r * i_r) / n
    return w, i_l, i_r, left


def _scan_numeric(tr, criterion, svals, sy, min_leaf):
    """Float-pass scores for all admissible thresholds of one feature.

    ``svals`` ascending with ``sy`` aligned. Returns (w, thresholds) or
    None when the feature admits no split.
    """
    m = svals.size
    boundary = np.flatnonzero(svals[1:] != svals[:-1])
    if boundary.size == 0:
        return None
    n_l = boundary + 1
    keep = (n_l >= min_leaf) & (m - n_l >= min_leaf)
    if not keep.any():
        return None
    boundary = boundary[keep]
    n_l = n_l[keep].astype(np.float64)
    thr = 0.5 * svals[boundary] + 0.5 * svals[boundary + 1]
    # A midpoint that rounds onto the upper value would route that value
    # left, contradicting the scored partition; such boundaries are not
    # admissible splits.
    ok = thr < svals[boundary + 1]
    if not ok.all():
        boundary, n_l, thr = boundary[ok], n_l[ok], thr[ok]
        if boundary.size == 0:
            return None
    n_r = m - n_l
    if tr.task == "classification":
        onehot = (sy[:, None] == np.arange(tr.n_classes)).astype(np.float64)
        pref = np.cumsum(onehot, axis=0)
        cl = pref[boundary]
        cr = pref[-1] - cl
        if criterion is SplitCriterion.GINI:
            w = (m - (cl * cl).sum(1) / n_l - (cr * cr).sum(1) / n_r) / m
        else:
            w = (n_l * _entropy_rows(cl, n_l) + n_r * _entropy_rows(cr, n_r)) / m
    else:
        s = np.cumsum(sy)[boundary]
        total = np.sum(sy)
        sumsq = float(np.dot(sy, sy))
        v = s * s / n_l + (total - s) ** 2 / n_r
        w = (sumsq - v) / m
    return w, thr


def _entropy_rows(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    p = counts / totals[:, None]
    safe = np.where(counts > 0, p, 1.0)
    return -(np.where(counts > 0, p * np.log2(safe), 0.0)).sum(1)


def _scan_categorical(tr, criterion, codes, y, min_leaf, dict_size):
    """Float-pass scores for every one-versus-rest category split."""
    if dict_size == 0:
        return None
    m = codes.size
    if tr.task == "classification":
        cont = np.bincount(
            codes * tr.n_classes + y, minlength=dict_size * tr.n_classes
        ).reshape(dict_size, tr.n_classes).astype(np.float64)
        n_c = cont.sum(1)
    else:
        n_c = np.bincount(codes, minlength=dict_size).astype(np.float64)
        s_c = np.bincount(codes, weights=y, minlength=dict_size)
    keep = (n_c >= min_leaf) & (m - n_c >= min_leaf) & (n_c > 0)
    if not keep.any():
        return None
    codes_kept = np.flatnonzero(keep)
    n_l = n_c[keep]
    n_r = m - n_l
    if tr.task == "classification":
        cl = cont[keep]
        cr = cont.sum(0) - cl
        if criterion is SplitCriterion.GINI:
            w = (m - (cl * cl).sum(1) / n_l - (cr * cr).sum(1) / n_r) / m
        else:
            w = (n_l * _entropy_rows(cl, n_l) + n_r * _entropy_rows(cr, n_r)) / m
    else:
        sumsq = float(np.dot(y, y))
        s_l = s_c[keep]
        total = np.sum(y)
        v = s_l * s_l / n_l + (total - s_l) ** 2 / n_r
        w = (sumsq - v) / m
    return w, codes_kept


def _search_split(
    tr: _Training,
    criterion: SplitCriterion,
    sorted_rows: list[np.ndarray],
    candidates: np.ndarray,
    min_leaf: int,
    impurity: float,
):
    """Best split over the candidate features of one node.

    ``sorted_rows[f]`` holds the node's row multiset ordered by feature
    f. Returns (SplitChoice, i_left, i_right, left_selector) or None;
    the selector is a mask over ``sorted_rows[0]``.
    """
    eps = _TIE_EPS * (1.0 + impurity)
    shortlist = []
    w_min = math.inf
    for f in candidates:
        srows = sorted_rows[f]
        if tr.kinds[f] is ColumnKind.NUMERIC:
            scan = _scan_numeric(
                tr, criterion, tr.cols[f][srows], tr.y[srows], min_leaf
            )
        else:
            scan = _scan_categorical(
                tr, criterion, tr.cols[f][srows], tr.y[srows], min_leaf,
                tr.dict_sizes[f],
            )
        if scan is None:
            continue
        w, splits = scan
        best_here = float(w.min())
        w_min = min(w_min, best_here)
        near = np.flatnonzero(w <= best_here + eps)
        for i in near:
            shortlist.append((float(w[i]), int(f), splits[i]))
    if not shortlist:
        return None

    rows0 = sorted_rows[0]
    best = None
    for w_float, f, split in shortlist:
        if w_float > w_min + eps:
            continue
        if tr.kinds[f] is ColumnKind.NUMERIC:
            thr, code = float(split), None
        else:
            thr, code = None, int(split)
        w, i_l, i_r, left = _canonical_split_score(
            tr, criterion, rows0, f, thr, code
        )
        ord_key = thr if thr is not None else code
        key = (w, f, ord_key)
        if best is None or key < best[0]:
            best = (key, f, thr, code, i_l, i_r, left)
    (w, _, _), f, thr, code, i_l, i_r, left = best
    if not w < impurity:
        return None
    choice = SplitChoice(
        feature=f,
        threshold=thr,
        categories=None if code is None else frozenset([code]),
        impurity_decrease=impurity - w,
    )
    return choice, i_l, i_r, left


def best_split(
    table: Table,
    row_indices,
    candidate_features=None,
    criterion: str | None = None,
    min_samples_leaf: int = 1,
) -> SplitChoice | None:
    """Exhaustive best split of one node over the candidate features.

    Thresholds are midpoints between consecutive distinct values;
    categorical candidates are single codes versus the rest. Returns
    None when no admissible split decreases impurity. ``feature`` in
    the result indexes the table's feature list.
    """
    rows = np.asarray(row_indices, dtype=np.intp)
    if rows.size == 0:
        raise EmptyNodeError("cannot split an empty node")
    if min_samples_leaf < 1:
        raise InvalidParamsError("min_samples_leaf must be >= 1")
    tr = _Training(table)
    crit = resolve_criterion(TreeParams(criterion=criterion), tr.task)
    if candidate_features is None:
        candidates = np.arange(tr.n_features)
    else:
        candidates = np.asarray(sorted(set(int(f) for f in candidate_features)))
        if candidates.size and (
            candidates[0] < 0 or candidates[-1] >= tr.n_features
        ):
            raise InvalidParamsError(
                f"candidate features out of range [0, {tr.n_features})"
            )
    if candidates.size == 0:
        return None
    if tr.task == "classification":
        impurity = _class_impurity(
            crit, np.bincount(tr.y[rows], minlength=tr.n_classes).tolist()
        )
    else:
        impurity = variance_of(tr.y[rows])
    sorted_rows = [
        rows[np.argsort(tr.cols[f][rows], kind="stable")]
        if f in set(candidates.tolist()) or f == 0
        else rows
        for f in range(tr.n_features)
    ]
    found = _search_split(tr, crit, sorted_rows, candidates, min_samples_leaf, impurity)
    return None if found is None else found[0]


# --- growing -----------------------------------------------------------

def fit_tree(
    table: Table,
    row_indices,
    params: TreeParams,
    rng: np.random.Generator,
) -> TreeModel:
    """Grow one tree on the given row multiset.

    ``row_indices`` may repeat rows (bootstrap use). Candidate features
    are drawn per node from ``rng`` when mtry is below the feature
    count; with all features in play the rng is not consulted, so the
    same data and params always give the same tree.
    """
    validate_params(params)
    rows = np.asarray(row_indices, dtype=np.intp)
    if rows.size == 0:
        raise EmptyTrainingSetError("no rows to fit on")
    tr = _Training(table)
    criterion = resolve_criterion(params, tr.task)
    mtry = resolve_mtry(params, tr.n_features)
    root = _grow(tr, criterion, params, mtry, rows, rng)
    return TreeModel(
        root=root,
        schema=tr.schema,
        criterion=criterion,
        n_samples_trained=int(rows.size),
    )


def _leaf(tr: _Training, rows: np.ndarray, counts) -> Leaf:
    if tr.task == "classification":
        return Leaf(n_samples=int(rows.size), value=counts / rows.size)
    mean = math.fsum(tr.y[rows].tolist()) / rows.size
    return Leaf(n_samples=int(rows.size), value=mean)


def _grow(tr, criterion, params, mtry, rows, rng):
    """Depth-first pre-order growth with an explicit stack."""
    p = tr.n_features
    sorted_root = [
        rows[np.argsort(tr.cols[f][rows], kind="stable")] for f in range(p)
    ]
    if tr.task == "classification":
        counts0 = np.bincount(tr.y[rows], minlength=tr.n_classes)
        imp0 = _class_impurity(criterion, counts0.tolist())
    else:
        counts0 = None
        imp0 = variance_of(tr.y[rows])

    holder: list = [None]
    stack = [(holder, 0, 0, sorted_root, counts0, imp0)]
    while stack:
        parent, slot, depth, sorted_rows, counts, impurity = stack.pop()
        node_rows = sorted_rows[0]
        m = node_rows.size
        stop = (
            m < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
            or _is_pure(tr, node_rows, counts)
        )
        found = None
        if not stop:
            if mtry < p:
                candidates = np.sort(rng.choice(p, size=mtry, replace=False))
            else:
                candidates = np.arange(p)
            found = _search_split(
                tr, criterion, sorted_rows, candidates,
                params.min_samples_leaf, impurity,
            )
        if found is None:
            parent[slot] = _leaf(tr, node_rows, counts)
            continue
        choice, i_l, i_r, left_sel = found
        node = Internal(
            feature=choice.feature,
            threshold=choice.threshold,
            categories=choice.categories,
            n_samples=int(m),
            impurity_decrease=choice.impurity_decrease,
        )
        parent[slot] = node
        col = tr.cols[choice.feature]
        if choice.threshold is not None:
            def test(vals, thr=choice.threshold):
                return vals <= thr
        else:
            def test(vals, code=next(iter(choice.categories))):
                return vals == code
        left_lists = []
        right_lists = []
        for f in range(p):
            srows = sorted_rows[f]
            mask = left_sel if f == 0 else test(col[srows])
            left_lists.append(srows[mask])
            right_lists.append(srows[~mask])
        if tr.task == "classification":
            counts_l = np.bincount(tr.y[left_lists[0]], minlength=tr.n_classes)
            counts_r = counts - counts_l
        else:
            counts_l = counts_r = None
        stack.append((_attr_setter(node, "right"), 0, depth + 1,
                      right_lists, counts_r, i_r))
        stack.append((_attr_setter(node, "left"), 0, depth + 1,
                      left_lists, counts_l, i_l))
    return holder[0]


class _attr_setter:
    """Adapter so stack frames can assign node children like list slots."""

    __slots__ = ("node", "attr")

    def __init__(self, node, attr):
        self.node = node
        self.attr = attr

    def __setitem__(self, _slot, value):
        setattr(self.node, self.attr, value)


def _is_pure(tr: _Training, rows: np.ndarray, counts) -> bool:
    if tr.task == "classification":
        return int(np.count_nonzero(counts)) <= 1
    y = tr.y[rows]
    return bool((y == y[0]).all())


# --- prediction --------------------------------------------------------

def encode_row(schema: ModelSchema, row: dict) -> np.ndarray:
    """Encode one mapping of column name to value as a feature vector."""
    out = np.empty(len(schema.feature_names), dtype=np.float64)
    for j, name in enumerate(schema.feature_names):
        if name not in row:
            raise SchemaMismatchError(f"row lacks feature {name!r}")
        value = row[name]
        if schema.feature_kinds[j] == "numeric":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaMismatchError(
                    f"feature {name!r} expects a number, got {value!r}"
                )
            out[j] = float(value)
        else:
            if not isinstance(value, str):
                raise SchemaMismatchError(
                    f"feature {name!r} expects a category string, got {value!r}"
                )
            try:
                out[j] = schema.dictionaries[j].index(value)
            except ValueError:
                out[j] = UNSEEN_CODE
    return out


def predict_tree(tree: TreeModel, row: dict) -> np.ndarray | float:
    """Route one row to a leaf; returns its class frequencies or mean."""
    x = encode_row(tree.schema, row)
    node = tree.root
    while isinstance(node, Internal):
        node = node.left if node.goes_left(x[node.feature]) else node.right
    return node.value
