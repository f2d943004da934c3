"""Macro KPI declarations and the micro-KPI candidate registry.

Candidate micro KPIs come out of an importance report: features whose
permutation drop clears a threshold and whose selection is stable
across reseeded runs are proposed against the macro KPI the model was
trained on. Analysts then confirm, reject, or merge the proposals;
the tool never auto-groups features it cannot semantically understand.

The registry is event-sourced. Every operation validates against the
current state, appends one event to the ledger, and advances the state
through the same transition function that replay uses, so the live
state always equals a fold over the ledger. That makes review history
auditable and the registry file a plain, diffable record.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import (
    AlreadyDecidedError,
    CrossMacroMergeError,
    DataError,
    DuplicateMacroError,
    SchemaMismatchError,
    ThresholdInvalidError,
    UnknownCandidateError,
    UnknownMacroError,
)
from .importance import ImportanceReport, StabilityResult
from .ioutil import read_json_doc, write_json_doc

REGISTRY_FORMAT_VERSION = 1

DIRECTIONS = ("minimize", "maximize")
DECISIONS = ("confirmed", "rejected")


@dataclass(frozen=True)
class MacroKpi:
    """A process-level outcome the organisation already steers by."""

    id: str
    name: str
    target_column: str
    direction: str
    unit: str = ""
    description: str = ""
    goal_ref: str = ""

    def __post_init__(self):
        if not self.id:
            raise DataError("macro KPI id must be nonempty")
        if self.direction not in DIRECTIONS:
            raise DataError(
                f"macro KPI {self.id!r}: direction must be one of {DIRECTIONS}"
            )

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "target_column": self.target_column,
            "direction": self.direction,
            "unit": self.unit,
            "description": self.description,
            "goal_ref": self.goal_ref,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MacroKpi":
        return cls(
            id=obj["id"],
            name=obj["name"],
            target_column=obj["target_column"],
            direction=obj["direction"],
            unit=obj.get("unit", ""),
            description=obj.get("description", ""),
            goal_ref=obj.get("goal_ref", ""),
        )


@dataclass(frozen=True)
class MicroKpiCandidate:
    """A proposed operational measure tied to one macro KPI."""

    id: str
    macro_kpi_id: str
    feature_set: tuple[str, ...]
    perm_mean: dict[str, float]
    stability_frequency: dict[str, float]
    proposed_metric: str
    status: str = "proposed"
    merged_into: str | None = None
    decided_by: str | None = None
    rationale: str | None = None
    decided_at: str | None = None

    def __post_init__(self):
        if not self.feature_set:
            raise DataError(f"candidate {self.id!r} has an empty feature set")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "macro_kpi_id": self.macro_kpi_id,
            "feature_set": list(self.feature_set),
            "perm_mean": dict(self.perm_mean),
            "stability_frequency": dict(self.stability_frequency),
            "proposed_metric": self.proposed_metric,
            "status": self.status,
            "merged_into": self.merged_into,
            "decided_by": self.decided_by,
            "rationale": self.rationale,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MicroKpiCandidate":
        return cls(
            id=obj["id"],
            macro_kpi_id=obj["macro_kpi_id"],
            feature_set=tuple(obj["feature_set"]),
            perm_mean={k: float(v) for k, v in obj["perm_mean"].items()},
            stability_frequency={
                k: float(v) for k, v in obj["stability_frequency"].items()
            },
            proposed_metric=obj["proposed_metric"],
            status=obj.get("status", "proposed"),
            merged_into=obj.get("merged_into"),
            decided_by=obj.get("decided_by"),
            rationale=obj.get("rationale"),
            decided_at=obj.get("decided_at"),
        )


@dataclass(frozen=True)
class DerivationThresholds:
    """Cutoffs that turn an importance report into proposals.

    min_perm_drop of None activates the relative rule: a feature must
    beat twice the largest drop seen among unstable features (selection
    frequency below one half), which adapts the bar to however noisy
    this particular dataset is. min_stability is the smallest selection
    frequency a feature may have; max_candidates caps how many
    proposals come out, best first.
    """

    min_perm_drop: float | None = None
    min_stability: float = 0.8
    max_candidates: int | None = None

    def __post_init__(self):
        if self.min_perm_drop is not None and not math.isfinite(self.min_perm_drop):
            raise ThresholdInvalidError("min_perm_drop must be finite")
        if not 0.0 <= self.min_stability <= 1.0:
            raise ThresholdInvalidError("min_stability must lie in [0, 1]")
        if self.max_candidates is not None and self.max_candidates < 1:
            raise ThresholdInvalidError("max_candidates must be >= 1")


def resolve_min_drop(
    thresholds: DerivationThresholds,
    perm_mean: list[float],
    frequency: list[float],
) -> float:
    """The absolute permutation-drop cutoff the filter will apply."""
    if thresholds.min_perm_drop is not None:
        return thresholds.min_perm_drop
    unstable = [d for d, f in zip(perm_mean, frequency) if f < 0.5]
    if not unstable:
        return 0.0
    return 2.0 * max(unstable)


def derive_micro_kpis(
    report: ImportanceReport,
    stability: StabilityResult,
    macro: MacroKpi,
    thresholds: DerivationThresholds,
    id_prefix: str = "mkc",
    start: int = 1,
) -> list[MicroKpiCandidate]:
    """Filter report features into ranked micro-KPI proposals.

    Pure function: candidate ids are assigned from ``start`` upward so
    the caller (normally the registry) controls numbering. An empty
    result is valid and means nothing cleared the bar.
    """
    if macro.target_column != report.target_name:
        raise SchemaMismatchError(
            f"macro {macro.id!r} targets column {macro.target_column!r} but the"
            f" report was trained against {report.target_name!r}"
        )
    if tuple(stability.feature_names) != tuple(report.feature_names):
        raise SchemaMismatchError(
            "stability result and importance report cover different features"
        )
    perm = list(report.perm_mean)
    freq = list(stability.frequency)
    min_drop = resolve_min_drop(thresholds, perm, freq)
    eligible = [
        j
        for j in range(len(perm))
        if perm[j] >= min_drop and freq[j] >= thresholds.min_stability
    ]
    eligible.sort(key=lambda j: (-perm[j], j))
    if thresholds.max_candidates is not None:
        eligible = eligible[: thresholds.max_candidates]
    candidates = []
    for offset, j in enumerate(eligible):
        name = report.feature_names[j]
        candidates.append(
            MicroKpiCandidate(
                id=f"{id_prefix}-{start + offset:04d}",
                macro_kpi_id=macro.id,
                feature_set=(name,),
                perm_mean={name: perm[j]},
                stability_frequency={name: freq[j]},
                proposed_metric=f"track {name} per case",
            )
        )
    return candidates


# --- event-sourced registry -------------------------------------------------

EVENT_KINDS = (
    "macro_registered",
    "candidates_proposed",
    "decision_recorded",
    "candidates_merged",
)


@dataclass
class _State:
    macros: dict = field(default_factory=dict)
    candidates: dict = field(default_factory=dict)
    next_ordinal: int = 1


class KpiRegistry:
    """Ledger of macro KPIs and micro-KPI candidates under review."""

    def __init__(self):
        self._events: list[dict] = []
        self._state = _State()

    # -- read access ----------------------------------------------------

    @property
    def events(self) -> tuple[dict, ...]:
        return tuple(self._events)

    @property
    def version(self) -> int:
        return len(self._events)

    @property
    def macros(self) -> dict[str, MacroKpi]:
        return dict(self._state.macros)

    @property
    def candidates(self) -> dict[str, MicroKpiCandidate]:
        return dict(self._state.candidates)

    @property
    def next_ordinal(self) -> int:
        return self._state.next_ordinal

    def macro(self, macro_id: str) -> MacroKpi:
        try:
            return self._state.macros[macro_id]
        except KeyError:
            raise UnknownMacroError(f"unknown macro KPI {macro_id!r}") from None

    def candidate(self, candidate_id: str) -> MicroKpiCandidate:
        try:
            return self._state.candidates[candidate_id]
        except KeyError:
            raise UnknownCandidateError(
                f"unknown candidate {candidate_id!r}"
            ) from None

    def confirmed_features(self, macro_id: str) -> tuple[str, ...]:
        """Union of feature sets across confirmed candidates of one macro."""
        self.macro(macro_id)
        names: list[str] = []
        for cand in self._state.candidates.values():
            if cand.macro_kpi_id == macro_id and cand.status == "confirmed":
                for name in cand.feature_set:
                    if name not in names:
                        names.append(name)
        return tuple(names)

    def state_dict(self) -> dict:
        return {
            "version": self.version,
            "macros": {
                k: m.to_json_dict() for k, m in sorted(self._state.macros.items())
            },
            "candidates": {
                k: c.to_json_dict()
                for k, c in sorted(self._state.candidates.items())
            },
            "next_ordinal": self._state.next_ordinal,
        }

    # -- operations -------------------------------------------------------

    def register_macro(self, macro: MacroKpi, at: str | None = None) -> None:
        if macro.id in self._state.macros:
            raise DuplicateMacroError(f"macro KPI {macro.id!r} already registered")
        self._append(
            {"kind": "macro_registered", "at": at, "macro": macro.to_json_dict()}
        )

    def propose_candidates(
        self, candidates: list[MicroKpiCandidate], at: str | None = None
    ) -> None:
        if not candidates:
            return
        seen: set[str] = set()
        for cand in candidates:
            if cand.macro_kpi_id not in self._state.macros:
                raise UnknownMacroError(
                    f"candidate {cand.id!r} references unknown macro"
                    f" {cand.macro_kpi_id!r}"
                )
            if cand.id in self._state.candidates or cand.id in seen:
                raise DataError(f"candidate id {cand.id!r} already in use")
            if cand.status != "proposed":
                raise DataError(
                    f"candidate {cand.id!r} must enter the registry as proposed"
                )
            seen.add(cand.id)
        self._append(
            {
                "kind": "candidates_proposed",
                "at": at,
                "candidates": [c.to_json_dict() for c in candidates],
            }
        )

    def record_decision(
        self,
        candidate_id: str,
        decision: str,
        decided_by: str,
        rationale: str = "",
        at: str | None = None,
    ) -> None:
        if decision not in DECISIONS:
            raise DataError(
                f"unknown decision {decision!r}; expected one of {DECISIONS}"
            )
        cand = self.candidate(candidate_id)
        if cand.status != "proposed":
            raise AlreadyDecidedError(
                f"candidate {candidate_id!r} is already {cand.status}"
            )
        self._append(
            {
                "kind": "decision_recorded",
                "at": at,
                "candidate_id": candidate_id,
                "decision": decision,
                "decided_by": decided_by,
                "rationale": rationale,
            }
        )

    def merge_candidates(
        self,
        candidate_ids: list[str],
        new_metric_text: str,
        decided_by: str,
        rationale: str = "",
        at: str | None = None,
    ) -> str:
        """Fold several proposed candidates into one composite proposal.

        Returns the id of the merged candidate. The measurement text is
        authored by the reviewer; the tool does not synthesize formulas.
        """
        if len(candidate_ids) < 2:
            raise DataError("a merge needs at least two candidates")
        if len(set(candidate_ids)) != len(candidate_ids):
            raise DataError("merge lists a candidate twice")
        cands = [self.candidate(cid) for cid in candidate_ids]
        macro_ids = {c.macro_kpi_id for c in cands}
        if len(macro_ids) > 1:
            raise CrossMacroMergeError(
                "cannot merge candidates from different macro KPIs: "
                + ", ".join(sorted(macro_ids))
            )
        for c in cands:
            if c.status != "proposed":
                raise AlreadyDecidedError(f"candidate {c.id!r} is already {c.status}")
        merged_id = f"mkc-{self._state.next_ordinal:04d}"
        self._append(
            {
                "kind": "candidates_merged",
                "at": at,
                "source_ids": list(candidate_ids),
                "merged_id": merged_id,
                "new_metric_text": new_metric_text,
                "decided_by": decided_by,
                "rationale": rationale,
            }
        )
        return merged_id

    # -- transition function ----------------------------------------------

    def _append(self, event: dict) -> None:
        event = dict(event)
        event["seq"] = len(self._events) + 1
        _apply(self._state, event)
        self._events.append(event)

    @classmethod
    def fold(cls, events: list[dict]) -> "KpiRegistry":
        """Rebuild a registry purely from its event ledger."""
        reg = cls()
        for i, event in enumerate(events, start=1):
            if event.get("seq") != i:
                raise DataError(f"ledger event {i} has out-of-order seq")
            _apply(reg._state, event)
            reg._events.append(dict(event))
        return reg


def _bump_ordinal(state: _State, candidate_id: str) -> None:
    prefix, _, tail = candidate_id.rpartition("-")
    if prefix == "mkc" and tail.isdigit():
        state.next_ordinal = max(state.next_ordinal, int(tail) + 1)


def _apply(state: _State, event: dict) -> None:
    """The single state-transition function shared by ops and replay."""
    kind = event.get("kind")
    if kind == "macro_registered":
        macro = MacroKpi.from_json_dict(event["macro"])
        if macro.id in state.macros:
            raise DuplicateMacroError(f"macro KPI {macro.id!r} already registered")
        state.macros[macro.id] = macro
    elif kind == "candidates_proposed":
        for obj in event["candidates"]:
            cand = MicroKpiCandidate.from_json_dict(obj)
            if cand.macro_kpi_id not in state.macros:
                raise UnknownMacroError(
                    f"candidate {cand.id!r} references unknown macro"
                    f" {cand.macro_kpi_id!r}"
                )
            if cand.id in state.candidates:
                raise DataError(f"candidate id {cand.id!r} already in use")
            state.candidates[cand.id] = cand
            _bump_ordinal(state, cand.id)
    elif kind == "decision_recorded":
        cid = event["candidate_id"]
        if cid not in state.candidates:
            raise UnknownCandidateError(f"unknown candidate {cid!r}")
        cand = state.candidates[cid]
        if cand.status != "proposed":
            raise AlreadyDecidedError(f"candidate {cid!r} is already {cand.status}")
        decision = event["decision"]
        if decision not in DECISIONS:
            raise DataError(f"unknown decision {decision!r}")
        state.candidates[cid] = replace(
            cand,
            status=decision,
            decided_by=event["decided_by"],
            rationale=event.get("rationale", ""),
            decided_at=event.get("at"),
        )
    elif kind == "candidates_merged":
        sources = [state.candidates.get(cid) for cid in event["source_ids"]]
        for cid, cand in zip(event["source_ids"], sources):
            if cand is None:
                raise UnknownCandidateError(f"unknown candidate {cid!r}")
            if cand.status != "proposed":
                raise AlreadyDecidedError(f"candidate {cid!r} is already {cand.status}")
        macro_ids = {c.macro_kpi_id for c in sources}
        if len(macro_ids) > 1:
            raise CrossMacroMergeError(
                "cannot merge candidates from different macro KPIs: "
                + ", ".join(sorted(macro_ids))
            )
        merged_id = event["merged_id"]
        if merged_id in state.candidates:
            raise DataError(f"candidate id {merged_id!r} already in use")
        feature_set = tuple(sorted({name for c in sources for name in c.feature_set}))
        perm_mean: dict[str, float] = {}
        stability: dict[str, float] = {}
        for c in sources:
            for name in c.feature_set:
                perm_mean.setdefault(name, c.perm_mean[name])
                stability.setdefault(name, c.stability_frequency[name])
        merged = MicroKpiCandidate(
            id=merged_id,
            macro_kpi_id=sources[0].macro_kpi_id,
            feature_set=feature_set,
            perm_mean=perm_mean,
            stability_frequency=stability,
            proposed_metric=event["new_metric_text"],
        )
        state.candidates[merged_id] = merged
        _bump_ordinal(state, merged_id)
        for cid in event["source_ids"]:
            state.candidates[cid] = replace(
                state.candidates[cid],
                status="merged",
                merged_into=merged_id,
                decided_by=event["decided_by"],
                rationale=event.get("rationale", ""),
                decided_at=event.get("at"),
            )
    else:
        raise DataError(f"unknown registry event kind {kind!r}")


# --- persistence --------------------------------------------------------

def registry_to_obj(registry: KpiRegistry) -> dict:
    return {
        "format_version": REGISTRY_FORMAT_VERSION,
        "kind": "kpi_registry",
        "events": list(registry.events),
        "snapshot": registry.state_dict(),
    }


def registry_from_obj(obj: dict) -> KpiRegistry:
    if obj.get("kind") != "kpi_registry":
        raise DataError(f"not a registry document: kind={obj.get('kind')!r}")
    if obj.get("format_version") != REGISTRY_FORMAT_VERSION:
        raise DataError(
            f"unsupported registry format_version {obj.get('format_version')!r}"
        )
    registry = KpiRegistry.fold(list(obj.get("events", [])))
    snapshot = obj.get("snapshot")
    if snapshot is not None and snapshot != registry.state_dict():
        raise DataError("registry snapshot does not match its event ledger")
    return registry


def save_registry(registry: KpiRegistry, path: str) -> None:
    write_json_doc(registry_to_obj(registry), path)


def load_registry(path: str) -> KpiRegistry:
    return registry_from_obj(read_json_doc(path, expected_kind="kpi_registry"))
