"""Variable importance: impurity-based and permutation-based measures.

Two complementary views of the same forest. Mean decrease in impurity
(MDI) aggregates each feature's stored split gains, weighted by the
fraction of samples reaching the split. Permutation importance measures
how much the out-of-bag (or holdout) score drops when one feature's
column is shuffled, breaking its relation to the target while keeping
its marginal distribution.

Every shuffle derives its own stream from (seed, feature, repeat), so
results do not depend on evaluation order and repeats can run in any
schedule. The evaluated table is never modified; permutations are
applied to a working copy of the encoded matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .cart import Internal
from .errors import (
    InvalidParamsError,
    RepeatsZeroError,
    SeedCollisionError,
    TooFewFeaturesError,
)
from .forest import ForestModel, ForestParams, all_pairs, evaluate_pairs, fit_forest
from .ioutil import canonical_json_bytes, sha256_hex
from .seeding import PERMUTATION, STABILITY, child_rng, derive_seed
from .tabular import Table

REPORT_FORMAT_VERSION = 1


# --- mean decrease in impurity ------------------------------------------

def mdi(forest: ForestModel) -> tuple[np.ndarray, np.ndarray]:
    """(raw, normalized) mean decrease in impurity per feature.

    A node splitting on feature j contributes its impurity decrease
    weighted by n_node / n_root; tree totals are averaged over the
    forest. Normalization divides by the grand total, or keeps the
    all-zero vector when no tree ever split.
    """
    p = forest.n_features
    raw = np.zeros(p, dtype=np.float64)
    for tree in forest.trees:
        n_root = tree.root.n_samples
        for node in tree.iter_nodes():
            if isinstance(node, Internal):
                raw[node.feature] += (
                    node.n_samples / n_root
                ) * node.impurity_decrease
    raw /= len(forest.trees)
    total = float(raw.sum())
    normalized = raw / total if total > 0.0 else raw.copy()
    return raw, normalized


# --- permutation importance ---------------------------------------------

@dataclass(frozen=True)
class PermutationResult:
    """Per-feature drops of the evaluation metric under shuffling."""

    feature_names: tuple[str, ...]
    baseline: float
    metric_name: str
    mean: np.ndarray
    std: np.ndarray
    drops: np.ndarray
    """Full (n_features, repeats) drop matrix."""
    repeats: int
    mode: str
    seed: int


def _permuted_metric(
    forest: ForestModel,
    xmat: np.ndarray,
    y: np.ndarray,
    tree_ids: np.ndarray,
    row_ids: np.ndarray,
    feature: int,
    perm: np.ndarray,
) -> float:
    """Metric after applying ``perm`` to one feature column.

    Split out so tests can force specific permutations (the identity
    permutation must reproduce the baseline metric bit for bit).
    """
    work = xmat.copy()
    work[:, feature] = work[perm, feature]
    metric, _, _ = evaluate_pairs(forest, work, y, tree_ids, row_ids)
    return metric


def permutation_importance(
    forest: ForestModel,
    table: Table,
    repeats: int = 10,
    seed: int = 0,
    mode: str = "oob",
    holdout: Table | None = None,
    n_jobs: int = 1,
) -> PermutationResult:
    """Mean and sample std of metric drops over seeded shuffles.

    ``mode="oob"`` scores out-of-bag predictions on the training table;
    ``mode="holdout"`` scores full-forest predictions on the holdout
    table. The drop for a feature no tree ever splits on is exactly
    zero, since routing never consults its column.
    """
    if repeats < 1:
        raise RepeatsZeroError("repeats must be >= 1")
    if mode == "oob":
        eval_table = table
        if eval_table.n_rows != forest.n_rows_trained:
            raise InvalidParamsError(
                "oob mode evaluates the training table "
                f"({forest.n_rows_trained} rows), got {eval_table.n_rows}"
            )
        tree_ids, row_ids = forest.oob_row_pairs()
        metric_name = (
            "oob_accuracy" if forest.task == "classification" else "oob_r2"
        )
    elif mode == "holdout":
        if holdout is None:
            raise InvalidParamsError("holdout mode needs a holdout table")
        eval_table = holdout
        tree_ids, row_ids = all_pairs(forest, eval_table.n_rows)
        metric_name = (
            "holdout_accuracy" if forest.task == "classification"
            else "holdout_r2"
        )
    else:
        raise InvalidParamsError(f"unknown evaluation mode {mode!r}")

    xmat = forest.schema.encode_features(eval_table)
    y = forest.schema.encode_target(eval_table)
    baseline, _, _ = evaluate_pairs(forest, xmat, y, tree_ids, row_ids)

    p = forest.n_features
    n = eval_table.n_rows
    tasks = [(j, r) for j in range(p) for r in range(repeats)]

    def one(j: int, r: int) -> float:
        perm = child_rng(seed, PERMUTATION, j, r).permutation(n)
        return _permuted_metric(forest, xmat, y, tree_ids, row_ids, j, perm)

    if n_jobs == 1:
        metrics = [one(j, r) for j, r in tasks]
    else:
        metrics = Parallel(n_jobs=n_jobs)(delayed(one)(j, r) for j, r in tasks)
    drops = baseline - np.asarray(metrics, dtype=np.float64).reshape(p, repeats)
    mean = drops.mean(axis=1)
    if repeats > 1:
        std = drops.std(axis=1, ddof=1)
    else:
        std = np.zeros(p, dtype=np.float64)
    return PermutationResult(
        feature_names=forest.schema.feature_names,
        baseline=baseline,
        metric_name=metric_name,
        mean=mean,
        std=std,
        drops=drops,
        repeats=repeats,
        mode=mode,
        seed=seed,
    )


# --- ranking and comparison ----------------------------------------------

def rank_descending(scores) -> tuple[int, ...]:
    """1-based ranks, highest score first; ties favor the lower index."""
    scores = list(scores)
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    ranks = [0] * len(scores)
    for position, j in enumerate(order):
        ranks[j] = position + 1
    return tuple(ranks)


def spearman_from_ranks(ranks_a, ranks_b) -> float:
    """Spearman correlation of two rank permutations of 1..p."""
    if len(ranks_a) != len(ranks_b):
        raise InvalidParamsError("rank vectors differ in length")
    p = len(ranks_a)
    if p < 2:
        raise TooFewFeaturesError(
            "rank correlation needs at least two features"
        )
    d2 = sum((int(a) - int(b)) ** 2 for a, b in zip(ranks_a, ranks_b))
    return 1.0 - 6.0 * d2 / (p * (p * p - 1))


# --- stability selection --------------------------------------------------

@dataclass(frozen=True)
class StabilityResult:
    """How often each feature made the permutation top-k across reseeds."""

    feature_names: tuple[str, ...]
    frequency: tuple[float, ...]
    n_seeds: int
    top_k: int
    seeds: tuple[int, ...]
    per_run_ranks: tuple[tuple[int, ...], ...]

    def to_json_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "frequency": list(self.frequency),
            "n_seeds": self.n_seeds,
            "top_k": self.top_k,
            "seeds": list(self.seeds),
            "per_run_ranks": [list(r) for r in self.per_run_ranks],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "StabilityResult":
        return cls(
            feature_names=tuple(obj["feature_names"]),
            frequency=tuple(obj["frequency"]),
            n_seeds=obj["n_seeds"],
            top_k=obj["top_k"],
            seeds=tuple(obj["seeds"]),
            per_run_ranks=tuple(tuple(r) for r in obj["per_run_ranks"]),
        )


def stability_selection(
    table: Table,
    params: ForestParams,
    n_seeds: int = 20,
    top_k: int = 2,
    repeats: int = 10,
    seeds=None,
    n_jobs: int = 1,
) -> StabilityResult:
    """Selection frequency of each feature over reseeded refits.

    Each run refits the forest under its own master seed and counts a
    feature as selected when its permutation rank is at most ``top_k``.
    Seeds default to a derived sequence; an explicit sequence must be
    free of duplicates.
    """
    if n_seeds < 2:
        raise InvalidParamsError("stability selection needs n_seeds >= 2")
    p = len(table.feature_specs)
    if not 1 <= top_k <= p:
        raise InvalidParamsError(f"top_k must lie in [1, {p}], got {top_k}")
    if seeds is None:
        seeds = tuple(
            derive_seed(params.master_seed, STABILITY, i) for i in range(n_seeds)
        )
    else:
        seeds = tuple(int(s) for s in seeds)
        n_seeds = len(seeds)
        if n_seeds < 2:
            raise InvalidParamsError("stability selection needs n_seeds >= 2")
        if len(set(seeds)) != n_seeds:
            raise SeedCollisionError("stability seeds must be distinct")
    counts = np.zeros(p, dtype=np.int64)
    all_ranks = []
    for s in seeds:
        forest = fit_forest(table, replace(params, master_seed=s), n_jobs=n_jobs)
        perm = permutation_importance(
            forest, table, repeats=repeats, seed=derive_seed(s, PERMUTATION),
            n_jobs=n_jobs,
        )
        ranks = rank_descending(perm.mean)
        all_ranks.append(ranks)
        counts += np.asarray(ranks) <= top_k
    return StabilityResult(
        feature_names=table.feature_names,
        frequency=tuple(float(c) / n_seeds for c in counts),
        n_seeds=n_seeds,
        top_k=top_k,
        seeds=seeds,
        per_run_ranks=tuple(all_ranks),
    )


# --- combined report -------------------------------------------------------

@dataclass(frozen=True)
class ImportanceReport:
    """Both importance measures for one fitted forest, rank-annotated."""

    feature_names: tuple[str, ...]
    mdi_raw: tuple[float, ...]
    mdi_normalized: tuple[float, ...]
    perm_mean: tuple[float, ...]
    perm_std: tuple[float, ...]
    perm_repeats: int
    rank_mdi: tuple[int, ...]
    rank_perm: tuple[int, ...]
    baseline_metric: float
    metric_name: str
    evaluation_mode: str
    seed: int
    model_fingerprint: str
    schema_fingerprint: str
    target_name: str
    task: str
    stability: StabilityResult | None = None

    def to_json_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "kind": "importance_report",
            "feature_names": list(self.feature_names),
            "mdi_raw": list(self.mdi_raw),
            "mdi_normalized": list(self.mdi_normalized),
            "perm_mean": list(self.perm_mean),
            "perm_std": list(self.perm_std),
            "perm_repeats": self.perm_repeats,
            "rank_mdi": list(self.rank_mdi),
            "rank_perm": list(self.rank_perm),
            "baseline_metric": self.baseline_metric,
            "metric_name": self.metric_name,
            "evaluation_mode": self.evaluation_mode,
            "seed": self.seed,
            "model_fingerprint": self.model_fingerprint,
            "schema_fingerprint": self.schema_fingerprint,
            "target_name": self.target_name,
            "task": self.task,
            "stability": (
                None if self.stability is None else self.stability.to_json_dict()
            ),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ImportanceReport":
        if obj.get("kind") != "importance_report":
            raise InvalidParamsError(
                f"not an importance report: kind={obj.get('kind')!r}"
            )
        if obj.get("format_version") != REPORT_FORMAT_VERSION:
            raise InvalidParamsError(
                f"unsupported report format version {obj.get('format_version')!r}"
            )
        return cls(
            feature_names=tuple(obj["feature_names"]),
            mdi_raw=tuple(obj["mdi_raw"]),
            mdi_normalized=tuple(obj["mdi_normalized"]),
            perm_mean=tuple(obj["perm_mean"]),
            perm_std=tuple(obj["perm_std"]),
            perm_repeats=obj["perm_repeats"],
            rank_mdi=tuple(obj["rank_mdi"]),
            rank_perm=tuple(obj["rank_perm"]),
            baseline_metric=obj["baseline_metric"],
            metric_name=obj["metric_name"],
            evaluation_mode=obj["evaluation_mode"],
            seed=obj["seed"],
            model_fingerprint=obj["model_fingerprint"],
            schema_fingerprint=obj["schema_fingerprint"],
            target_name=obj["target_name"],
            task=obj["task"],
            stability=(
                None if obj.get("stability") is None
                else StabilityResult.from_json_dict(obj["stability"])
            ),
        )

    @property
    def fingerprint(self) -> str:
        return sha256_hex(canonical_json_bytes(self.to_json_dict()))

    def to_text(self) -> str:
        """Plain-text ranking table, best permutation rank first."""
        lines = [
            f"importance report  task={self.task}  target={self.target_name}",
            f"metric {self.metric_name} baseline={self.baseline_metric:.6f}  "
            f"mode={self.evaluation_mode}  repeats={self.perm_repeats}  "
            f"seed={self.seed}",
            f"model {self.model_fingerprint[:12]}",
            "",
            f"{'feature':<24} {'perm_mean':>12} {'perm_std':>10} "
            f"{'rank':>4}   {'mdi_norm':>10} {'rank':>4}"
            + ("   stability" if self.stability else ""),
        ]
        order = sorted(range(len(self.feature_names)),
                       key=lambda j: self.rank_perm[j])
        freq = dict(
            zip(self.stability.feature_names, self.stability.frequency)
        ) if self.stability else {}
        for j in order:
            row = (
                f"{self.feature_names[j]:<24} {self.perm_mean[j]:>12.6f} "
                f"{self.perm_std[j]:>10.6f} {self.rank_perm[j]:>4}   "
                f"{self.mdi_normalized[j]:>10.6f} {self.rank_mdi[j]:>4}"
            )
            if self.stability:
                row += f"   {freq.get(self.feature_names[j], 0.0):>9.2f}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def importance_report(
    forest: ForestModel,
    table: Table,
    repeats: int = 10,
    seed: int = 0,
    mode: str = "oob",
    holdout: Table | None = None,
    stability: StabilityResult | None = None,
    n_jobs: int = 1,
) -> ImportanceReport:
    """Assemble both measures into one report for this forest."""
    raw, normalized = mdi(forest)
    perm = permutation_importance(
        forest, table, repeats=repeats, seed=seed, mode=mode, holdout=holdout,
        n_jobs=n_jobs,
    )
    return ImportanceReport(
        feature_names=forest.schema.feature_names,
        mdi_raw=tuple(float(v) for v in raw),
        mdi_normalized=tuple(float(v) for v in normalized),
        perm_mean=tuple(float(v) for v in perm.mean),
        perm_std=tuple(float(v) for v in perm.std),
        perm_repeats=perm.repeats,
        rank_mdi=rank_descending(raw),
        rank_perm=rank_descending(perm.mean),
        baseline_metric=perm.baseline,
        metric_name=perm.metric_name,
        evaluation_mode=perm.mode,
        seed=seed,
        model_fingerprint=forest.fingerprint,
        schema_fingerprint=forest.schema.fingerprint,
        target_name=forest.schema.target_name,
        task=forest.task,
        stability=stability,
    )


def compare_measures(report: ImportanceReport) -> float:
    """Spearman correlation between the MDI and permutation rankings."""
    return spearman_from_ranks(report.rank_mdi, report.rank_perm)
