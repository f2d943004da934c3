"""Ranking drift detection and before/after intervention checks.

A derived micro KPI stays valid only while the importance ranking that
produced it holds up. detect_drift compares a baseline importance
report against one computed on a fresh data window: it correlates the
permutation rankings and flags features that entered or left the top
ranks. evaluate_intervention quantifies what a process change did to
the macro KPI itself, with a bootstrap interval on the shift.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    EmptyWindowError,
    FeatureSetMismatchError,
    InvalidParamsError,
)
from .importance import ImportanceReport, spearman_from_ranks
from .ioutil import canonical_json_bytes, read_json_doc, sha256_hex, write_json_doc
from .kpi import MacroKpi
from .seeding import BOOTSTRAP_CI, child_rng
from .tabular import ColumnKind, Table

DRIFT_FORMAT_VERSION = 1
EFFECT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DriftReport:
    """Comparison of two importance rankings over the same features."""

    feature_names: tuple[str, ...]
    baseline_rank: tuple[int, ...]
    fresh_rank: tuple[int, ...]
    rank_delta: tuple[int, ...]
    spearman_rho: float
    spearman_rho_mdi: float
    top_k: int
    flagged_features: tuple[str, ...]
    threshold_used: float
    refresh_recommended: bool
    baseline_fingerprint: str
    fresh_fingerprint: str

    def to_json_dict(self) -> dict:
        return {
            "format_version": DRIFT_FORMAT_VERSION,
            "kind": "drift_report",
            "feature_names": list(self.feature_names),
            "baseline_rank": list(self.baseline_rank),
            "fresh_rank": list(self.fresh_rank),
            "rank_delta": list(self.rank_delta),
            "spearman_rho": self.spearman_rho,
            "spearman_rho_mdi": self.spearman_rho_mdi,
            "top_k": self.top_k,
            "flagged_features": list(self.flagged_features),
            "threshold_used": self.threshold_used,
            "refresh_recommended": self.refresh_recommended,
            "baseline_fingerprint": self.baseline_fingerprint,
            "fresh_fingerprint": self.fresh_fingerprint,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DriftReport":
        if obj.get("kind") != "drift_report":
            raise DataError(f"not a drift report: kind={obj.get('kind')!r}")
        if obj.get("format_version") != DRIFT_FORMAT_VERSION:
            raise DataError(
                f"unsupported drift report version {obj.get('format_version')!r}"
            )
        return cls(
            feature_names=tuple(obj["feature_names"]),
            baseline_rank=tuple(int(r) for r in obj["baseline_rank"]),
            fresh_rank=tuple(int(r) for r in obj["fresh_rank"]),
            rank_delta=tuple(int(r) for r in obj["rank_delta"]),
            spearman_rho=float(obj["spearman_rho"]),
            spearman_rho_mdi=float(obj["spearman_rho_mdi"]),
            top_k=int(obj["top_k"]),
            flagged_features=tuple(obj["flagged_features"]),
            threshold_used=float(obj["threshold_used"]),
            refresh_recommended=bool(obj["refresh_recommended"]),
            baseline_fingerprint=obj["baseline_fingerprint"],
            fresh_fingerprint=obj["fresh_fingerprint"],
        )

    @property
    def fingerprint(self) -> str:
        return sha256_hex(canonical_json_bytes(self.to_json_dict()))

    def to_text(self) -> str:
        lines = [
            "drift check: permutation-rank correlation"
            f" rho={self.spearman_rho:+.4f}"
            f" (threshold {self.threshold_used:.2f}),"
            f" impurity-rank rho={self.spearman_rho_mdi:+.4f}",
            f"top-{self.top_k} membership changes: "
            + (", ".join(self.flagged_features) if self.flagged_features else "none"),
        ]
        order = sorted(range(len(self.feature_names)), key=lambda j: self.baseline_rank[j])
        lines.append(f"{'feature':<24} {'was':>4} {'now':>4} {'delta':>6}")
        for j in order:
            lines.append(
                f"{self.feature_names[j]:<24} {self.baseline_rank[j]:>4}"
                f" {self.fresh_rank[j]:>4} {self.rank_delta[j]:>+6}"
            )
        verdict = (
            "refresh recommended: derived micro KPIs may be stale"
            if self.refresh_recommended
            else "ranking stable: no refresh needed"
        )
        lines.append(verdict)
        return "\n".join(lines) + "\n"


def detect_drift(
    baseline: ImportanceReport,
    fresh: ImportanceReport,
    top_k: int,
    rho_threshold: float = 0.7,
) -> DriftReport:
    """Compare two importance reports and decide whether to re-derive."""
    base_names = tuple(baseline.feature_names)
    if set(base_names) != set(fresh.feature_names):
        only_base = sorted(set(base_names) - set(fresh.feature_names))
        only_fresh = sorted(set(fresh.feature_names) - set(base_names))
        raise FeatureSetMismatchError(
            "reports cover different feature sets"
            f" (baseline only: {only_base}, fresh only: {only_fresh})"
        )
    p = len(base_names)
    if not 1 <= top_k <= p:
        raise InvalidParamsError(f"top_k must lie in [1, {p}], got {top_k}")
    if not 0.0 <= rho_threshold <= 1.0:
        raise InvalidParamsError("rho_threshold must lie in [0, 1]")
    fresh_pos = {name: j for j, name in enumerate(fresh.feature_names)}
    aligned = [fresh_pos[name] for name in base_names]
    base_perm = tuple(baseline.rank_perm)
    fresh_perm = tuple(fresh.rank_perm[j] for j in aligned)
    base_mdi = tuple(baseline.rank_mdi)
    fresh_mdi = tuple(fresh.rank_mdi[j] for j in aligned)
    rho_perm = spearman_from_ranks(base_perm, fresh_perm)
    rho_mdi = spearman_from_ranks(base_mdi, fresh_mdi)
    delta = tuple(f - b for b, f in zip(base_perm, fresh_perm))
    base_top = {name for name, r in zip(base_names, base_perm) if r <= top_k}
    fresh_top = {name for name, r in zip(base_names, fresh_perm) if r <= top_k}
    flagged_features = tuple(sorted(base_top ^ fresh_top))
    refresh = rho_perm < rho_threshold or bool(flagged_features)
    return DriftReport(
        feature_names=base_names,
        baseline_rank=base_perm,
        fresh_rank=fresh_perm,
        rank_delta=delta,
        spearman_rho=rho_perm,
        spearman_rho_mdi=rho_mdi,
        top_k=top_k,
        flagged_features=flagged_features,
        threshold_used=rho_threshold,
        refresh_recommended=refresh,
        baseline_fingerprint=baseline.fingerprint,
        fresh_fingerprint=fresh.fingerprint,
    )


@dataclass(frozen=True)
class EffectSummary:
    """Estimated effect of an intervention on a macro KPI."""

    macro_id: str
    target_column: str
    direction: str
    n_before: int
    n_after: int
    mean_before: float
    mean_after: float
    median_before: float
    median_after: float
    improvement: float
    relative_improvement: float | None
    ci_low: float
    ci_high: float
    confidence: float
    n_resamples: int
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "format_version": EFFECT_FORMAT_VERSION,
            "kind": "effect_summary",
            "macro_id": self.macro_id,
            "target_column": self.target_column,
            "direction": self.direction,
            "n_before": self.n_before,
            "n_after": self.n_after,
            "mean_before": self.mean_before,
            "mean_after": self.mean_after,
            "median_before": self.median_before,
            "median_after": self.median_after,
            "improvement": self.improvement,
            "relative_improvement": self.relative_improvement,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "n_resamples": self.n_resamples,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EffectSummary":
        if obj.get("kind") != "effect_summary":
            raise DataError(f"not an effect summary: kind={obj.get('kind')!r}")
        if obj.get("format_version") != EFFECT_FORMAT_VERSION:
            raise DataError(
                f"unsupported effect summary version {obj.get('format_version')!r}"
            )
        rel = obj["relative_improvement"]
        return cls(
            macro_id=obj["macro_id"],
            target_column=obj["target_column"],
            direction=obj["direction"],
            n_before=int(obj["n_before"]),
            n_after=int(obj["n_after"]),
            mean_before=float(obj["mean_before"]),
            mean_after=float(obj["mean_after"]),
            median_before=float(obj["median_before"]),
            median_after=float(obj["median_after"]),
            improvement=float(obj["improvement"]),
            relative_improvement=None if rel is None else float(rel),
            ci_low=float(obj["ci_low"]),
            ci_high=float(obj["ci_high"]),
            confidence=float(obj["confidence"]),
            n_resamples=int(obj["n_resamples"]),
            seed=int(obj["seed"]),
        )

    def to_text(self) -> str:
        rel = (
            f" ({self.relative_improvement * 100:+.2f}%)"
            if self.relative_improvement is not None
            else ""
        )
        pct = self.confidence * 100
        return (
            f"effect on {self.target_column} ({self.direction}),"
            f" macro {self.macro_id}\n"
            f"before: n={self.n_before} mean={self.mean_before:.6g}"
            f" median={self.median_before:.6g}\n"
            f"after:  n={self.n_after} mean={self.mean_after:.6g}"
            f" median={self.median_after:.6g}\n"
            f"improvement: {self.improvement:+.6g}{rel}\n"
            f"{pct:.1f}% bootstrap CI on improvement:"
            f" [{self.ci_low:.6g}, {self.ci_high:.6g}]\n"
        )


def _target_values(table: Table, column: str, label: str) -> np.ndarray:
    if table.n_rows == 0:
        raise EmptyWindowError(f"{label} window holds no rows")
    for spec in table.schema:
        if spec.name == column:
            if spec.kind is not ColumnKind.NUMERIC:
                raise DataError(
                    f"column {column!r} is categorical; effect evaluation"
                    " needs a numeric macro target"
                )
            values = np.asarray(table.columns[column], dtype=np.float64)
            mask = np.asarray(table.masks[column], dtype=bool)
            if mask.any():
                raise DataError(
                    f"{label} window has missing values in {column!r}"
                )
            return values
    raise DataError(f"column {column!r} not present in the {label} window")


def evaluate_intervention(
    before: Table,
    after: Table,
    macro: MacroKpi,
    seed: int = 0,
    n_resamples: int = 1000,
    confidence: float = 0.95,
) -> EffectSummary:
    """Bootstrap the macro-KPI shift between two observation windows.

    improvement is signed by the macro direction, so a positive value
    is always good news: for a minimize KPI it is before minus after.
    The interval is a percentile bootstrap over resampled window means
    on the same improvement scale.
    """
    if n_resamples < 1:
        raise InvalidParamsError("n_resamples must be >= 1")
    if not 0.0 < confidence < 1.0:
        raise InvalidParamsError("confidence must lie in (0, 1)")
    vb = _target_values(before, macro.target_column, "before")
    va = _target_values(after, macro.target_column, "after")
    sign = -1.0 if macro.direction == "minimize" else 1.0
    mean_b = float(np.mean(vb))
    mean_a = float(np.mean(va))
    improvement = sign * (mean_a - mean_b)
    relative = improvement / abs(mean_b) if mean_b != 0.0 else None
    rng = child_rng(seed, BOOTSTRAP_CI)
    idx_b = rng.integers(0, len(vb), size=(n_resamples, len(vb)))
    idx_a = rng.integers(0, len(va), size=(n_resamples, len(va)))
    diffs = sign * (va[idx_a].mean(axis=1) - vb[idx_b].mean(axis=1))
    alpha = (1.0 - confidence) / 2.0
    ci_low, ci_high = np.quantile(diffs, [alpha, 1.0 - alpha])
    return EffectSummary(
        macro_id=macro.id,
        target_column=macro.target_column,
        direction=macro.direction,
        n_before=len(vb),
        n_after=len(va),
        mean_before=mean_b,
        mean_after=mean_a,
        median_before=float(np.median(vb)),
        median_after=float(np.median(va)),
        improvement=improvement,
        relative_improvement=relative,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        confidence=confidence,
        n_resamples=n_resamples,
        seed=seed,
    )


def save_drift_report(report: DriftReport, path: str) -> None:
    write_json_doc(report.to_json_dict(), path)


def load_drift_report(path: str) -> DriftReport:
    return DriftReport.from_json_dict(read_json_doc(path, expected_kind="drift_report"))


def save_effect_summary(summary: EffectSummary, path: str) -> None:
    write_json_doc(summary.to_json_dict(), path)


def load_effect_summary(path: str) -> EffectSummary:
    return EffectSummary.from_json_dict(
        read_json_doc(path, expected_kind="effect_summary")
    )
