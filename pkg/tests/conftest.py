"""Shared helpers for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from kpiforge.synth import FeatureSpec, GeneratorSpec, TargetSpec
from kpiforge.tabular import (
    ColumnKind,
    ColumnSpec,
    MissingPolicy,
    Role,
    Table,
    from_columns,
)


def build_table(
    features: dict[str, list],
    target: list,
    target_name: str = "y",
    kinds: dict[str, str] | None = None,
    target_kind: str | None = None,
    missing: dict[str, str] | None = None,
) -> Table:
    """Construct an in-memory table with minimal ceremony.

    Column kinds are inferred from the first value (str = categorical)
    unless overridden via ``kinds`` / ``target_kind``.
    """
    kinds = kinds or {}
    missing = missing or {}

    def infer(name, values):
        if name in kinds:
            return ColumnKind(kinds[name])
        probe = next((v for v in values if v is not None), None)
        return ColumnKind.CATEGORICAL if isinstance(probe, str) else ColumnKind.NUMERIC

    specs = []
    data = {}
    for name, values in features.items():
        specs.append(
            ColumnSpec(
                name,
                infer(name, values),
                Role.FEATURE,
                MissingPolicy(missing.get(name, "reject")),
            )
        )
        data[name] = values
    tkind = ColumnKind(target_kind) if target_kind else infer(target_name, target)
    specs.append(ColumnSpec(target_name, tkind, Role.TARGET))
    data[target_name] = target
    return from_columns(tuple(specs), data)


def random_table(rng: np.random.Generator, max_rows=50, max_features=5) -> Table:
    """A random mixed-type table for oracle comparisons."""
    n = int(rng.integers(2, max_rows + 1))
    p = int(rng.integers(1, max_features + 1))
    task = rng.choice(["classification", "regression"])
    features = {}
    kinds = {}
    for j in range(p):
        name = f"f{j}"
        if rng.random() < 0.35:
            k = int(rng.integers(2, 5))
            features[name] = [f"c{int(v)}" for v in rng.integers(0, k, size=n)]
        else:
            # few distinct values on purpose: provokes ties and
            # repeated thresholds, the hard cases for split search
            if rng.random() < 0.5:
                pool = rng.normal(size=int(rng.integers(2, 6)))
                features[name] = [float(rng.choice(pool)) for _ in range(n)]
            else:
                features[name] = [float(v) for v in rng.normal(size=n)]
        kinds[name] = (
            "categorical" if isinstance(features[name][0], str) else "numeric"
        )
    if task == "classification":
        k = int(rng.integers(2, 4))
        target = [f"y{int(v)}" for v in rng.integers(0, k, size=n)]
    else:
        target = [float(v) for v in rng.normal(size=n)]
    return build_table(features, target, kinds=kinds)


def two_informative_spec(seed: int, n_rows: int = 500) -> GeneratorSpec:
    """The recovery fixture: two informative, three noise features."""
    return GeneratorSpec(
        n_rows=n_rows,
        features=(
            FeatureSpec("inf_strong", pattern="informative", weight=2.0),
            FeatureSpec("inf_weak", pattern="informative", weight=1.0),
            FeatureSpec("noise_a", pattern="noise"),
            FeatureSpec("noise_b", pattern="noise"),
            FeatureSpec("noise_c", pattern="noise"),
        ),
        target=TargetSpec(
            name="outcome", kind="classification", classes=2, noise_rate=0.05
        ),
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
