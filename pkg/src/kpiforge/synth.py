"""Synthetic event-log generator with known ground truth.

Features draw from per-feature seeded streams: informative and noise
features are standard normal, correlated features mix a base feature
with fresh noise to hit a requested correlation, and categorical
features draw uniform codes. The target follows a linear link over the
informative features: thresholded into classes for classification
(quantile cuts of the known score distribution, optionally with label
noise) or taken as-is plus Gaussian noise for regression.

Because each feature has its own derived stream, regenerating a spec
reproduces the table exactly, and editing one feature leaves the draws
of the others untouched. The returned ground truth names the features
that actually drive the target, which is what recovery experiments
check against.
"""
from __future__ import annotations

import configparser
import math
import statistics
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InapplicableMutationError, InvalidSpecError
from .seeding import GENERATOR, child_rng
from .tabular import ColumnKind, ColumnSpec, MissingPolicy, Role, Table, from_columns

PATTERNS = ("informative", "noise", "correlated")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = "numeric"
    pattern: str = "noise"
    weight: float = 0.0
    with_feature: str | None = None
    rho: float = 0.0
    categories: int = 3


@dataclass(frozen=True)
class TargetSpec:
    name: str = "target"
    kind: str = "classification"
    classes: int = 2
    class_names: tuple[str, ...] | None = None
    noise_rate: float = 0.0
    noise_std: float = 0.0
    offset: float = 0.0


@dataclass(frozen=True)
class GeneratorSpec:
    n_rows: int
    features: tuple[FeatureSpec, ...]
    target: TargetSpec
    seed: int = 0


@dataclass(frozen=True)
class GroundTruth:
    """Which features carry signal, and the exact score scale."""

    informative: tuple[tuple[str, float], ...]
    score_std: float

    @property
    def informative_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.informative)

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "ground_truth",
            "informative": {name: w for name, w in self.informative},
            "score_std": self.score_std,
        }


def validate_spec(spec: GeneratorSpec) -> None:
    if spec.n_rows < 1:
        raise InvalidSpecError("n_rows must be >= 1")
    if not spec.features:
        raise InvalidSpecError("spec declares no features")
    names = [f.name for f in spec.features]
    if len(set(names)) != len(names):
        raise InvalidSpecError("feature names must be unique")
    if spec.target.name in names:
        raise InvalidSpecError(
            f"target name {spec.target.name!r} collides with a feature"
        )
    by_name = {f.name: f for f in spec.features}
    informative = [f for f in spec.features if f.pattern == "informative"]
    if not informative:
        raise InvalidSpecError("at least one informative feature is required")
    for f in spec.features:
        if f.pattern not in PATTERNS:
            raise InvalidSpecError(
                f"feature {f.name!r}: unknown pattern {f.pattern!r}"
            )
        if f.kind not in ("numeric", "categorical"):
            raise InvalidSpecError(f"feature {f.name!r}: unknown kind {f.kind!r}")
        if f.pattern == "informative":
            if not math.isfinite(f.weight) or f.weight == 0.0:
                raise InvalidSpecError(
                    f"feature {f.name!r}: informative weight must be finite"
                    " and nonzero"
                )
        if f.pattern == "correlated":
            if f.kind != "numeric":
                raise InvalidSpecError(
                    f"feature {f.name!r}: correlated features must be numeric"
                )
            if not -1.0 < f.rho < 1.0:
                raise InvalidSpecError(
                    f"feature {f.name!r}: rho must lie in (-1, 1)"
                )
            base = by_name.get(f.with_feature or "")
            if base is None or base.name == f.name:
                raise InvalidSpecError(
                    f"feature {f.name!r}: unknown base feature"
                    f" {f.with_feature!r}"
                )
            if base.pattern == "correlated" or base.kind != "numeric":
                raise InvalidSpecError(
                    f"feature {f.name!r}: base must be a numeric"
                    " non-correlated feature"
                )
        if f.kind == "categorical" and f.categories < 2:
            raise InvalidSpecError(
                f"feature {f.name!r}: categorical features need >= 2 categories"
            )
    t = spec.target
    if t.kind not in ("classification", "regression"):
        raise InvalidSpecError(f"unknown target kind {t.kind!r}")
    if t.kind == "classification":
        if t.classes < 2:
            raise InvalidSpecError("classification needs >= 2 classes")
        if not 0.0 <= t.noise_rate < 0.5:
            raise InvalidSpecError("noise_rate must lie in [0, 0.5)")
        if t.class_names is not None and len(t.class_names) != t.classes:
            raise InvalidSpecError("class_names length must equal classes")
    else:
        if t.noise_std < 0.0 or not math.isfinite(t.noise_std):
            raise InvalidSpecError("noise_std must be finite and >= 0")
        if not math.isfinite(t.offset):
            raise InvalidSpecError("offset must be finite")


def ground_truth(spec: GeneratorSpec) -> GroundTruth:
    informative = tuple(
        (f.name, f.weight) for f in spec.features if f.pattern == "informative"
    )
    score_std = math.sqrt(math.fsum(w * w for _, w in informative))
    return GroundTruth(informative=informative, score_std=score_std)


def _category_effect(codes: np.ndarray, k: int) -> np.ndarray:
    """Unit-variance numeric effect of uniform category codes."""
    spread = math.sqrt((k * k - 1) / 12.0)
    return (codes - (k - 1) / 2.0) / spread


def generate(spec: GeneratorSpec) -> tuple[Table, GroundTruth]:
    """Draw one window, returning the table and its ground truth."""
    validate_spec(spec)
    n = spec.n_rows
    raw: dict[str, np.ndarray] = {}
    z_values: dict[str, np.ndarray] = {}
    score = np.zeros(n, dtype=np.float64)
    for i, f in enumerate(spec.features):
        rng = child_rng(spec.seed, GENERATOR, i)
        if f.kind == "categorical":
            codes = rng.integers(0, f.categories, size=n)
            raw[f.name] = codes
            effect = _category_effect(codes.astype(np.float64), f.categories)
        elif f.pattern == "correlated":
            own = rng.standard_normal(n)
            base = z_values[f.with_feature]
            values = f.rho * base + math.sqrt(1.0 - f.rho * f.rho) * own
            raw[f.name] = values
            effect = values
        else:
            values = rng.standard_normal(n)
            raw[f.name] = values
            z_values[f.name] = values
            effect = values
        if f.pattern == "informative":
            score = score + f.weight * effect

    truth = ground_truth(spec)
    t = spec.target
    target_rng = child_rng(spec.seed, GENERATOR, len(spec.features))
    data: dict[str, list] = {}
    for f in spec.features:
        if f.kind == "categorical":
            data[f.name] = [f"v{int(c)}" for c in raw[f.name]]
        else:
            data[f.name] = [float(v) for v in raw[f.name]]
    if t.kind == "classification":
        labels = t.class_names or tuple(f"c{i}" for i in range(t.classes))
        # validate_spec guarantees score_std > 0, so the cuts are finite
        dist = statistics.NormalDist(0.0, truth.score_std)
        cuts = [dist.inv_cdf(i / t.classes) for i in range(1, t.classes)]
        idx = np.searchsorted(np.asarray(cuts), score, side="right")
        if t.noise_rate > 0.0:
            flip = target_rng.random(n) < t.noise_rate
            shift = 1 + target_rng.integers(0, t.classes - 1, size=n)
            idx = np.where(flip, (idx + shift) % t.classes, idx)
        data[t.name] = [labels[int(i)] for i in idx]
        target_col = ColumnSpec(t.name, ColumnKind.CATEGORICAL, Role.TARGET)
    else:
        y = t.offset + score
        if t.noise_std > 0.0:
            y = y + t.noise_std * target_rng.standard_normal(n)
        data[t.name] = [float(v) for v in y]
        target_col = ColumnSpec(t.name, ColumnKind.NUMERIC, Role.TARGET)

    schema = tuple(
        ColumnSpec(
            f.name,
            ColumnKind.CATEGORICAL if f.kind == "categorical" else ColumnKind.NUMERIC,
            Role.FEATURE,
            MissingPolicy.REJECT,
        )
        for f in spec.features
    ) + (target_col,)
    return from_columns(schema, data), truth


def schema_for(spec: GeneratorSpec) -> tuple[ColumnSpec, ...]:
    """Column specs describing the CSV that :func:`generate` produces."""
    validate_spec(spec)
    cols = [
        ColumnSpec(
            f.name,
            ColumnKind.CATEGORICAL if f.kind == "categorical" else ColumnKind.NUMERIC,
        )
        for f in spec.features
    ]
    t = spec.target
    cols.append(
        ColumnSpec(
            t.name,
            ColumnKind.CATEGORICAL if t.kind == "classification"
            else ColumnKind.NUMERIC,
            Role.TARGET,
        )
    )
    return tuple(cols)


# --- window mutations ----------------------------------------------------

MUTATIONS = ("swap_informative", "scale_target", "shift_target")


def shift_window(spec: GeneratorSpec, mutation: str, value: float | None = None) -> GeneratorSpec:
    """A mutated copy of the spec describing the next data window.

    swap_informative reverses the weight assignment across the
    informative features; scale_target(factor) and shift_target(delta)
    rescale or shift a regression target. Mutations that do not apply
    to the spec raise rather than silently returning it unchanged.
    """
    validate_spec(spec)
    if mutation == "swap_informative":
        informative = [f for f in spec.features if f.pattern == "informative"]
        if len(informative) < 2:
            raise InapplicableMutationError(
                "swap_informative needs at least two informative features"
            )
        weights = [f.weight for f in informative]
        swapped = dict(zip((f.name for f in informative), reversed(weights)))
        features = tuple(
            replace(f, weight=swapped[f.name]) if f.name in swapped else f
            for f in spec.features
        )
        return replace(spec, features=features)
    if mutation == "scale_target":
        if spec.target.kind != "regression":
            raise InapplicableMutationError(
                "scale_target applies to regression targets only"
            )
        if value is None or not math.isfinite(value) or value <= 0.0:
            raise InvalidSpecError("scale_target needs a positive finite factor")
        features = tuple(
            replace(f, weight=f.weight * value) if f.pattern == "informative" else f
            for f in spec.features
        )
        target = replace(
            spec.target,
            noise_std=spec.target.noise_std * value,
            offset=spec.target.offset * value,
        )
        return replace(spec, features=features, target=target)
    if mutation == "shift_target":
        if spec.target.kind != "regression":
            raise InapplicableMutationError(
                "shift_target applies to regression targets only"
            )
        if value is None or not math.isfinite(value):
            raise InvalidSpecError("shift_target needs a finite delta")
        return replace(
            spec, target=replace(spec.target, offset=spec.target.offset + value)
        )
    raise InvalidSpecError(f"unknown mutation {mutation!r}")


# --- spec files ------------------------------------------------------------

def read_generator_spec(path: str) -> GeneratorSpec:
    """Parse a generator spec from its key-value configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"generator spec not found: {path}")
    if "generator" not in parser:
        raise InvalidSpecError(f"{path}: missing [generator] section")
    gen = parser["generator"]
    try:
        n_rows = gen.getint("rows")
        seed = gen.getint("seed", 0)
    except ValueError as exc:
        raise InvalidSpecError(f"{path}: [generator]: {exc}") from None
    if n_rows is None:
        raise InvalidSpecError(f"{path}: [generator] needs rows")
    features = []
    for section in parser.sections():
        if not section.startswith("feature."):
            continue
        name = section[len("feature."):]
        opts = parser[section]
        try:
            features.append(
                FeatureSpec(
                    name=name,
                    kind=opts.get("kind", "numeric"),
                    pattern=opts.get("pattern", "noise"),
                    weight=opts.getfloat("weight", 0.0),
                    with_feature=opts.get("with", None),
                    rho=opts.getfloat("rho", 0.0),
                    categories=opts.getint("categories", 3),
                )
            )
        except ValueError as exc:
            raise InvalidSpecError(f"{path}: [{section}]: {exc}") from None
    if "target" not in parser:
        raise InvalidSpecError(f"{path}: missing [target] section")
    topts = parser["target"]
    names_raw = topts.get("class_names", "").strip()
    try:
        target = TargetSpec(
            name=topts.get("name", "target"),
            kind=topts.get("kind", "classification"),
            classes=topts.getint("classes", 2),
            class_names=(
                tuple(s.strip() for s in names_raw.split(",")) if names_raw else None
            ),
            noise_rate=topts.getfloat("noise_rate", 0.0),
            noise_std=topts.getfloat("noise_std", 0.0),
            offset=topts.getfloat("offset", 0.0),
        )
    except ValueError as exc:
        raise InvalidSpecError(f"{path}: [target]: {exc}") from None
    spec = GeneratorSpec(
        n_rows=n_rows, features=tuple(features), target=target, seed=seed
    )
    validate_spec(spec)
    return spec
