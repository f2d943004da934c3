"""Command-line pipeline driver.

Wires the library into the six-phase workflow: generate or ingest a
data window, train a forest against the macro-KPI target, compute
variable importance, derive micro-KPI candidates, record stakeholder
review decisions, and monitor fresh windows for ranking drift.

A project configuration file (key-value format, see read_config) ties
the schema, data files, model store, registry, and report directory
together; KPIFORGE_CONFIG provides its default path. Every report is
written to disk as the durable record, with stdout carrying summaries
only. Exit codes: 0 success, 2 usage or configuration error, 3 drift
refresh recommended, 4 data error.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

from .cart import TreeParams
from .errors import (
    AlreadyDecidedError,
    ConfigError,
    CrossMacroMergeError,
    DuplicateMacroError,
    InapplicableMutationError,
    InvalidParamsError,
    KpiForgeError,
    UnknownCandidateError,
    UnknownMacroError,
)
from .forest import (
    ForestParams,
    fit_forest,
    load_model,
    oob_score,
    save_model,
)
from .importance import (
    ImportanceReport,
    importance_report,
    stability_selection,
)
from .ioutil import read_json_doc, write_json_doc
from .kpi import (
    DerivationThresholds,
    KpiRegistry,
    MacroKpi,
    derive_micro_kpis,
    load_registry,
    save_registry,
)
from .monitor import DriftReport, EffectSummary, detect_drift, save_drift_report
from .synth import generate, read_generator_spec, schema_for
from .tabular import clean, load_table, read_schema, write_schema, write_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REFRESH = 3
EXIT_DATA = 4

# errors caused by how the tool was invoked or configured
_USAGE_ERRORS = (
    ConfigError,
    InvalidParamsError,
    UnknownMacroError,
    UnknownCandidateError,
    AlreadyDecidedError,
    CrossMacroMergeError,
    DuplicateMacroError,
    InapplicableMutationError,
)


class _UsageError(Exception):
    """Argument parsing failed; message already formatted."""


class _Parser(argparse.ArgumentParser):
    # raise instead of sys.exit so main() owns the exit-code contract
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class ProjectConfig:
    """Validated view of the project configuration file."""

    config_dir: str
    schema_path: str
    data_path: str
    model_path: str
    registry_path: str
    report_dir: str
    holdout_path: str | None
    forest: ForestParams
    n_jobs: int
    imp_repeats: int
    imp_mode: str
    imp_seed: int
    stability_seeds: int
    stability_top_k: int
    thresholds: DerivationThresholds
    monitor_top_k: int | None
    rho_threshold: float
    macros: tuple[MacroKpi, ...]


def _section_get(section, key, cast, default, where):
    raw = section.get(key, None)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: bad value for {key}: {raw!r}") from None


def _parse_mtry(raw: str):
    if raw == "all":
        return "all"
    return int(raw)


def read_config(path: str) -> ProjectConfig:
    """Parse and validate the project configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        loaded = parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not loaded:
        raise ConfigError(f"config file not found: {path}")
    base = os.path.dirname(os.path.abspath(path))

    def rel(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    paths = parser["paths"] if "paths" in parser else {}
    schema_path = rel(paths.get("schema", "schema.ini"))
    data_path = rel(paths.get("data", "train.csv"))
    model_path = rel(paths.get("model", "model.json"))
    registry_path = rel(paths.get("registry", "registry.json"))
    report_dir = rel(paths.get("reports", "reports"))
    holdout_raw = paths.get("holdout", "").strip() if paths else ""
    holdout_path = rel(holdout_raw) if holdout_raw else None

    fsec = parser["forest"] if "forest" in parser else {}
    where = f"{path} [forest]"
    tree = TreeParams(
        criterion=_section_get(fsec, "criterion", str, None, where),
        max_depth=_section_get(fsec, "max_depth", int, None, where),
        min_samples_split=_section_get(fsec, "min_samples_split", int, 2, where),
        min_samples_leaf=_section_get(fsec, "min_samples_leaf", int, 1, where),
        mtry=_section_get(fsec, "mtry", _parse_mtry, None, where),
    )
    bootstrap_raw = _section_get(fsec, "bootstrap", str, "true", where).lower()
    if bootstrap_raw not in ("true", "false"):
        raise ConfigError(f"{where}: bootstrap must be true or false")
    master_seed = _section_get(fsec, "master_seed", int, 0, where)
    forest = ForestParams(
        n_trees=_section_get(fsec, "n_trees", int, 100, where),
        tree=tree,
        bootstrap=bootstrap_raw == "true",
        master_seed=master_seed,
    )
    n_jobs = _section_get(fsec, "n_jobs", int, 1, where)

    isec = parser["importance"] if "importance" in parser else {}
    where = f"{path} [importance]"
    imp_mode = _section_get(isec, "mode", str, "oob", where)
    imp_repeats = _section_get(isec, "repeats", int, 10, where)
    imp_seed = _section_get(isec, "seed", int, master_seed, where)
    stability_seeds = _section_get(isec, "stability_seeds", int, 0, where)
    stability_top_k = _section_get(isec, "stability_top_k", int, 2, where)

    dsec = parser["derive"] if "derive" in parser else {}
    where = f"{path} [derive]"
    thresholds = DerivationThresholds(
        min_perm_drop=_section_get(dsec, "min_perm_drop", float, None, where),
        min_stability=_section_get(dsec, "min_stability", float, 0.8, where),
        max_candidates=_section_get(dsec, "max_candidates", int, None, where),
    )

    msec = parser["monitor"] if "monitor" in parser else {}
    where = f"{path} [monitor]"
    monitor_top_k = _section_get(msec, "top_k", int, None, where)
    rho_threshold = _section_get(msec, "rho_threshold", float, 0.7, where)

    macros = []
    for section in parser.sections():
        if not section.startswith("macro."):
            continue
        macro_id = section[len("macro."):]
        opts = parser[section]
        target = opts.get("target", "").strip()
        direction = opts.get("direction", "").strip()
        if not target or not direction:
            raise ConfigError(
                f"{path} [{section}]: target and direction are required"
            )
        macros.append(
            MacroKpi(
                id=macro_id,
                name=opts.get("name", macro_id),
                target_column=target,
                direction=direction,
                unit=opts.get("unit", ""),
                description=opts.get("description", ""),
                goal_ref=opts.get("goal_ref", ""),
            )
        )

    return ProjectConfig(
        config_dir=base,
        schema_path=schema_path,
        data_path=data_path,
        model_path=model_path,
        registry_path=registry_path,
        report_dir=report_dir,
        holdout_path=holdout_path,
        forest=forest,
        n_jobs=n_jobs,
        imp_repeats=imp_repeats,
        imp_mode=imp_mode,
        imp_seed=imp_seed,
        stability_seeds=stability_seeds,
        stability_top_k=stability_top_k,
        thresholds=thresholds,
        monitor_top_k=monitor_top_k,
        rho_threshold=rho_threshold,
        macros=tuple(macros),
    )


def _load_config(args) -> ProjectConfig:
    path = args.config or os.environ.get("KPIFORGE_CONFIG")
    if not path:
        raise ConfigError("no config file: pass --config or set KPIFORGE_CONFIG")
    return read_config(path)


def _report_path(config: ProjectConfig, name: str, override: str | None) -> str:
    if override:
        return override
    os.makedirs(config.report_dir, exist_ok=True)
    return os.path.join(config.report_dir, name)


def _load_window(config: ProjectConfig, data_path: str):
    schema = read_schema(config.schema_path)
    return clean(load_table(data_path, schema))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_registry_or_new(path: str) -> KpiRegistry:
    if os.path.exists(path):
        return load_registry(path)
    return KpiRegistry()


# --- subcommands ---------------------------------------------------------

def cmd_train(args) -> int:
    config = _load_config(args)
    data_path = args.data or config.data_path
    table = _load_window(config, data_path)
    model = fit_forest(table, config.forest, n_jobs=config.n_jobs)
    model_path = args.model or config.model_path
    save_model(model, model_path)
    print(f"model written to {model_path}")
    print(
        f"trained {model.params.n_trees} trees on {table.n_rows} rows,"
        f" fingerprint {model.fingerprint[:16]}"
    )
    if config.forest.bootstrap:
        report = oob_score(model, table)
        oob_path = _report_path(config, "oob.json", None)
        write_json_doc(report.to_json_dict(), oob_path)
        metrics = ", ".join(f"{k}={v:.6g}" for k, v in report.metrics.items())
        print(f"out-of-bag: {metrics} (report: {oob_path})")
    else:
        print("bootstrap disabled: no out-of-bag estimate")
    return EXIT_OK


def _compute_importance(config: ProjectConfig, model, table) -> ImportanceReport:
    holdout = None
    if config.imp_mode == "holdout":
        if not config.holdout_path:
            raise ConfigError(
                "importance mode holdout needs a [paths] holdout file"
            )
        holdout = _load_window(config, config.holdout_path)
    stability = None
    if config.stability_seeds:
        if config.stability_seeds < 2:
            raise ConfigError("stability_seeds must be 0 (off) or >= 2")
        stability = stability_selection(
            table,
            config.forest,
            n_seeds=config.stability_seeds,
            top_k=config.stability_top_k,
            repeats=config.imp_repeats,
            n_jobs=config.n_jobs,
        )
    return importance_report(
        model,
        table,
        repeats=config.imp_repeats,
        seed=config.imp_seed,
        mode=config.imp_mode,
        holdout=holdout,
        stability=stability,
    )


def cmd_importance(args) -> int:
    config = _load_config(args)
    model = load_model(args.model or config.model_path)
    data_path = args.data or config.data_path
    table = _load_window(config, data_path)
    model.schema.check_table(table)
    report = _compute_importance(config, model, table)
    out_path = _report_path(config, "importance.json", args.out)
    write_json_doc(report.to_json_dict(), out_path)
    print(report.to_text(), end="")
    print(f"report written to {out_path}")
    return EXIT_OK


def cmd_derive(args) -> int:
    config = _load_config(args)
    report_path = args.report or _report_path(config, "importance.json", None)
    report = ImportanceReport.from_json_dict(
        read_json_doc(report_path, expected_kind="importance_report")
    )
    if report.stability is None:
        raise ConfigError(
            "importance report carries no stability frequencies; set"
            " stability_seeds >= 2 in [importance] and rerun importance"
        )
    registry_path = args.registry or config.registry_path
    registry = _load_registry_or_new(registry_path)
    known = registry.macros
    for macro in config.macros:
        if macro.id not in known:
            registry.register_macro(macro, at=_now())
    macro = registry.macro(args.macro)
    candidates = derive_micro_kpis(
        report,
        report.stability,
        macro,
        config.thresholds,
        start=registry.next_ordinal,
    )
    registry.propose_candidates(candidates, at=_now())
    save_registry(registry, registry_path)
    if not candidates:
        print(f"no candidates cleared the thresholds for macro {macro.id}")
        return EXIT_OK
    print(f"proposed {len(candidates)} micro-KPI candidate(s) for macro {macro.id}:")
    for cand in candidates:
        name = cand.feature_set[0]
        print(
            f"  {cand.id}  {cand.proposed_metric}"
            f"  (drop {cand.perm_mean[name]:.6g},"
            f" stability {cand.stability_frequency[name]:.2f})"
        )
    print("review checklist:")
    for cand in candidates:
        print(
            f"  kpiforge review --candidate {cand.id} --confirm"
            f" --by <reviewer>  # or --reject"
        )
    print(f"registry written to {registry_path}")
    return EXIT_OK


def cmd_review(args) -> int:
    config = _load_config(args)
    registry_path = args.registry or config.registry_path
    registry = _load_registry_or_new(registry_path)
    if args.merge:
        if len(args.merge) < 2:
            raise _UsageError(
                "kpiforge review: --merge must be given at least twice"
            )
        if args.confirm or args.reject:
            raise _UsageError(
                "kpiforge review: --merge cannot be combined with"
                " --confirm/--reject"
            )
        metric = args.metric
        if not metric:
            feats = sorted(
                {
                    name
                    for cid in args.merge
                    for name in registry.candidate(cid).feature_set
                }
            )
            metric = "track jointly: " + ", ".join(feats)
        merged_id = registry.merge_candidates(
            args.merge,
            new_metric_text=metric,
            decided_by=args.by,
            rationale=args.rationale,
            at=_now(),
        )
        save_registry(registry, registry_path)
        merged = registry.candidate(merged_id)
        print(
            f"merged {', '.join(args.merge)} into {merged_id}"
            f" covering {', '.join(merged.feature_set)}"
        )
        return EXIT_OK
    if not args.candidate:
        raise _UsageError("kpiforge review: --candidate or --merge is required")
    if args.confirm == args.reject:
        raise _UsageError(
            "kpiforge review: exactly one of --confirm/--reject is required"
        )
    decision = "confirmed" if args.confirm else "rejected"
    registry.record_decision(
        args.candidate,
        decision,
        decided_by=args.by,
        rationale=args.rationale,
        at=_now(),
    )
    save_registry(registry, registry_path)
    print(f"candidate {args.candidate} {decision} by {args.by}")
    return EXIT_OK


def _resolve_top_k(args, config: ProjectConfig, registry_path: str) -> int:
    if args.top_k is not None:
        return args.top_k
    if config.monitor_top_k is not None:
        return config.monitor_top_k
    if args.macro:
        registry = _load_registry_or_new(registry_path)
        count = len(registry.confirmed_features(args.macro))
        if count:
            return count
        raise ConfigError(
            f"macro {args.macro!r} has no confirmed micro KPIs;"
            " pass --top-k or set [monitor] top_k"
        )
    raise ConfigError("no top_k available: pass --top-k, set [monitor] top_k,"
                      " or pass --macro with confirmed candidates")


def cmd_monitor(args) -> int:
    config = _load_config(args)
    baseline_path = args.baseline or _report_path(config, "importance.json", None)
    baseline = ImportanceReport.from_json_dict(
        read_json_doc(baseline_path, expected_kind="importance_report")
    )
    top_k = _resolve_top_k(args, config, args.registry or config.registry_path)
    fresh_table = _load_window(config, args.fresh)
    model = fit_forest(fresh_table, config.forest, n_jobs=config.n_jobs)
    fresh = _compute_importance(config, model, fresh_table)
    drift = detect_drift(
        baseline, fresh, top_k=top_k, rho_threshold=config.rho_threshold
    )
    out_path = _report_path(config, "drift.json", args.out)
    save_drift_report(drift, out_path)
    print(drift.to_text(), end="")
    print(f"drift report written to {out_path}")
    return EXIT_REFRESH if drift.refresh_recommended else EXIT_OK


def cmd_synth(args) -> int:
    spec = read_generator_spec(args.spec)
    table, truth = generate(spec)
    out = args.out
    stem = out[:-4] if out.endswith(".csv") else out
    write_table(table, out)
    truth_path = stem + ".truth.json"
    write_json_doc(truth.to_json_dict(), truth_path)
    schema_path = stem + ".schema.ini"
    write_schema(schema_for(spec), schema_path)
    print(
        f"wrote {table.n_rows} rows to {out}"
        f" (ground truth: {truth_path}, schema: {schema_path})"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    obj = read_json_doc(args.path)
    kind = obj.get("kind")
    if kind == "importance_report":
        print(ImportanceReport.from_json_dict(obj).to_text(), end="")
    elif kind == "drift_report":
        print(DriftReport.from_json_dict(obj).to_text(), end="")
    elif kind == "effect_summary":
        print(EffectSummary.from_json_dict(obj).to_text(), end="")
    elif kind == "oob_report":
        metrics = ", ".join(f"{k}={v:.6g}" for k, v in obj["metrics"].items())
        print(
            f"out-of-bag evaluation ({obj['task']}): {metrics}\n"
            f"rows={obj['n_rows']} trees={obj['n_trees']}"
            f" mean_oob_fraction={obj['mean_oob_fraction']:.4f}"
        )
    elif kind == "kpi_registry":
        snapshot = obj.get("snapshot", {})
        macros = snapshot.get("macros", {})
        cands = snapshot.get("candidates", {})
        print(f"registry version {snapshot.get('version', 0)}")
        for mid, m in macros.items():
            print(f"macro {mid}: {m['name']} ({m['direction']} {m['target_column']})")
        for cid, c in cands.items():
            extra = f" -> {c['merged_into']}" if c.get("merged_into") else ""
            print(
                f"  {cid} [{c['status']}{extra}] {c['proposed_metric']}"
                f" features={','.join(c['feature_set'])}"
            )
    else:
        raise ConfigError(f"don't know how to render kind {kind!r}")
    return EXIT_OK


# --- argument wiring -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="kpiforge",
        description="Derive and monitor micro KPIs from tabular process data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument(
            "--config",
            help="project config file (default: $KPIFORGE_CONFIG)",
        )

    p = sub.add_parser("train", help="fit a forest on the training window")
    add_config(p)
    p.add_argument("--data", help="override [paths] data")
    p.add_argument("--model", help="override [paths] model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("importance", help="compute variable importance")
    add_config(p)
    p.add_argument("--model", help="override [paths] model")
    p.add_argument("--data", help="override [paths] data")
    p.add_argument("--out", help="report path (default: reports/importance.json)")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("derive", help="propose micro-KPI candidates")
    add_config(p)
    p.add_argument("--macro", required=True, help="macro KPI id")
    p.add_argument("--report", help="importance report path")
    p.add_argument("--registry", help="override [paths] registry")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("review", help="record a stakeholder decision")
    add_config(p)
    p.add_argument("--candidate", help="candidate id to decide on")
    p.add_argument("--confirm", action="store_true")
    p.add_argument("--reject", action="store_true")
    p.add_argument(
        "--merge",
        action="append",
        metavar="CANDIDATE",
        help="merge candidates (repeat the flag, at least twice)",
    )
    p.add_argument("--metric", help="measurement text for a merged candidate")
    p.add_argument("--by", required=True, help="reviewer name")
    p.add_argument("--rationale", default="", help="reason for the decision")
    p.add_argument("--registry", help="override [paths] registry")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("monitor", help="check a fresh window for ranking drift")
    add_config(p)
    p.add_argument("--fresh", required=True, help="fresh window CSV")
    p.add_argument("--baseline", help="baseline importance report path")
    p.add_argument("--out", help="drift report path (default: reports/drift.json)")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--macro", help="macro id for the confirmed-feature default top_k")
    p.add_argument("--registry", help="override [paths] registry")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("synth", help="generate a synthetic window with ground truth")
    p.add_argument("--spec", required=True, help="generator spec file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render a stored report as text")
    p.add_argument("--path", required=True, help="report JSON file")
    p.set_defaults(func=cmd_report)

    return parser


def _error_line(exc: Exception) -> str:
    msg = " ".join(str(exc).split())
    return f"kpiforge: error: {type(exc).__name__}: {msg}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"kpiforge: error: UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _USAGE_ERRORS as exc:
        print(_error_line(exc), file=sys.stderr)
        return EXIT_USAGE
    except KpiForgeError as exc:
        print(_error_line(exc), file=sys.stderr)
        return EXIT_DATA


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
