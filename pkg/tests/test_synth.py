"""Synthetic window generator: validation, determinism, mutations."""
import math

import numpy as np
import pytest

from kpiforge.errors import (
    ConfigError,
    InapplicableMutationError,
    InvalidSpecError,
)
from kpiforge.forest import ForestParams, fit_forest, oob_score
from kpiforge.synth import (
    FeatureSpec,
    GeneratorSpec,
    TargetSpec,
    generate,
    ground_truth,
    read_generator_spec,
    schema_for,
    shift_window,
    validate_spec,
)
from kpiforge.tabular import load_table, write_schema, write_table

from .conftest import two_informative_spec


def _reg_spec(seed=0, n_rows=100, noise_std=0.0, offset=0.0):
    return GeneratorSpec(
        n_rows=n_rows,
        features=(
            FeatureSpec("load", pattern="informative", weight=1.5),
            FeatureSpec("staff", pattern="informative", weight=-0.5),
            FeatureSpec("hum", pattern="noise"),
        ),
        target=TargetSpec(
            name="days", kind="regression", noise_std=noise_std, offset=offset
        ),
        seed=seed,
    )


class TestValidation:
    def test_needs_an_informative_feature(self):
        spec = GeneratorSpec(
            n_rows=10,
            features=(FeatureSpec("a"),),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(spec)

    def test_zero_weight_informative_does_not_count(self):
        spec = GeneratorSpec(
            n_rows=10,
            features=(FeatureSpec("a", pattern="informative", weight=0.0),),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(spec)

    def test_duplicate_names(self):
        spec = GeneratorSpec(
            n_rows=10,
            features=(
                FeatureSpec("a", pattern="informative", weight=1.0),
                FeatureSpec("a"),
            ),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(spec)

    def test_target_name_collision(self):
        spec = GeneratorSpec(
            n_rows=10,
            features=(FeatureSpec("y", pattern="informative", weight=1.0),),
            target=TargetSpec(name="y"),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(spec)

    def test_correlated_needs_numeric_base(self):
        base_missing = GeneratorSpec(
            n_rows=10,
            features=(
                FeatureSpec("a", pattern="informative", weight=1.0),
                FeatureSpec("c", pattern="correlated", with_feature="nope", rho=0.5),
            ),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(base_missing)
        cat_base = GeneratorSpec(
            n_rows=10,
            features=(
                FeatureSpec("a", pattern="informative", weight=1.0),
                FeatureSpec("k", kind="categorical"),
                FeatureSpec("c", pattern="correlated", with_feature="k", rho=0.5),
            ),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(cat_base)
        chained = GeneratorSpec(
            n_rows=10,
            features=(
                FeatureSpec("a", pattern="informative", weight=1.0),
                FeatureSpec("b", pattern="correlated", with_feature="a", rho=0.5),
                FeatureSpec("c", pattern="correlated", with_feature="b", rho=0.5),
            ),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(chained)

    def test_scalar_bounds(self):
        base = dict(
            n_rows=10,
            features=(FeatureSpec("a", pattern="informative", weight=1.0),),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(GeneratorSpec(target=TargetSpec(classes=1), **base))
        with pytest.raises(InvalidSpecError):
            validate_spec(GeneratorSpec(target=TargetSpec(noise_rate=0.5), **base))
        with pytest.raises(InvalidSpecError):
            validate_spec(
                GeneratorSpec(target=TargetSpec(classes=2, class_names=("x",)), **base)
            )
        with pytest.raises(InvalidSpecError):
            validate_spec(
                GeneratorSpec(
                    target=TargetSpec(kind="regression", noise_std=-1.0), **base
                )
            )
        with pytest.raises(InvalidSpecError):
            validate_spec(GeneratorSpec(n_rows=0, features=base["features"],
                                        target=TargetSpec()))
        bad_rho = GeneratorSpec(
            n_rows=10,
            features=(
                FeatureSpec("a", pattern="informative", weight=1.0),
                FeatureSpec("c", pattern="correlated", with_feature="a", rho=1.0),
            ),
            target=TargetSpec(),
        )
        with pytest.raises(InvalidSpecError):
            validate_spec(bad_rho)
        with pytest.raises(InvalidSpecError):
            validate_spec(
                GeneratorSpec(
                    n_rows=10,
                    features=(
                        FeatureSpec("a", pattern="informative", weight=1.0),
                        FeatureSpec("k", kind="categorical", categories=1),
                    ),
                    target=TargetSpec(),
                )
            )


class TestGenerate:
    def test_deterministic(self):
        spec = two_informative_spec(seed=1, n_rows=60)
        a, truth_a = generate(spec)
        b, truth_b = generate(spec)
        assert a.equals(b)
        assert truth_a == truth_b

    def test_seed_changes_data(self):
        a, _ = generate(two_informative_spec(seed=1, n_rows=60))
        b, _ = generate(two_informative_spec(seed=2, n_rows=60))
        assert not a.equals(b)

    def test_shapes_and_kinds(self):
        spec = GeneratorSpec(
            n_rows=40,
            features=(
                FeatureSpec("num", pattern="informative", weight=1.0),
                FeatureSpec("cat", kind="categorical", categories=4),
            ),
            target=TargetSpec(name="label"),
        )
        table, _ = generate(spec)
        assert table.n_rows == 40
        assert table.feature_names == ("num", "cat")
        assert table.target_spec.name == "label"
        assert table.task == "classification"
        cats = set(table.decode("cat"))
        assert cats <= {"v0", "v1", "v2", "v3"}

    def test_ground_truth_contents(self):
        spec = _reg_spec()
        truth = ground_truth(spec)
        assert truth.informative == (("load", 1.5), ("staff", -0.5))
        assert truth.informative_names == ("load", "staff")
        assert truth.score_std == pytest.approx(
            math.sqrt(1.5**2 + 0.5**2), abs=1e-15
        )
        obj = truth.to_json_dict()
        assert obj["kind"] == "ground_truth"

    def test_noiseless_regression_recomputable(self):
        table, _ = generate(_reg_spec(seed=5, offset=3.0))
        y = np.asarray(table.columns["days"])
        recomputed = (
            3.0
            + 1.5 * np.asarray(table.columns["load"])
            - 0.5 * np.asarray(table.columns["staff"])
        )
        np.testing.assert_allclose(y, recomputed, atol=1e-12, rtol=0)

    def test_regression_noise_moves_target_only(self):
        clean_t, _ = generate(_reg_spec(seed=7))
        noisy_t, _ = generate(_reg_spec(seed=7, noise_std=0.5))
        for name in ("load", "staff", "hum"):
            assert clean_t.columns[name].tolist() == noisy_t.columns[name].tolist()
        assert clean_t.columns["days"].tolist() != noisy_t.columns["days"].tolist()

    def test_correlated_feature_tracks_base(self):
        spec = GeneratorSpec(
            n_rows=500,
            features=(
                FeatureSpec("base", pattern="informative", weight=1.0),
                FeatureSpec("echo", pattern="correlated", with_feature="base",
                            rho=0.6),
            ),
            target=TargetSpec(),
            seed=13,
        )
        table, _ = generate(spec)
        got = np.corrcoef(table.columns["base"], table.columns["echo"])[0, 1]
        assert got == pytest.approx(0.6, abs=0.08)

    def test_classification_roughly_balanced(self):
        spec = GeneratorSpec(
            n_rows=600,
            features=(FeatureSpec("x", pattern="informative", weight=1.0),),
            target=TargetSpec(classes=3, class_names=("lo", "mid", "hi")),
            seed=3,
        )
        table, _ = generate(spec)
        labels = table.decode("target")
        for name in ("lo", "mid", "hi"):
            share = labels.count(name) / 600
            assert 0.2 <= share <= 0.45

    def test_label_noise_flips_expected_fraction(self):
        base = GeneratorSpec(
            n_rows=1000,
            features=(FeatureSpec("x", pattern="informative", weight=1.0),),
            target=TargetSpec(noise_rate=0.0),
            seed=17,
        )
        noisy = GeneratorSpec(
            n_rows=1000,
            features=base.features,
            target=TargetSpec(noise_rate=0.2),
            seed=17,
        )
        clean_labels = generate(base)[0].decode("target")
        noisy_labels = generate(noisy)[0].decode("target")
        flipped = sum(a != b for a, b in zip(clean_labels, noisy_labels))
        assert 0.15 <= flipped / 1000 <= 0.25

    def test_learnable_by_forest(self):
        table, _ = generate(two_informative_spec(seed=21, n_rows=300))
        forest = fit_forest(table, ForestParams(n_trees=40, master_seed=1))
        assert oob_score(forest, table).metrics["oob_accuracy"] >= 0.85


class TestMutations:
    def test_swap_two_informative_exchanges_weights(self):
        spec = two_informative_spec(seed=0)
        swapped = shift_window(spec, "swap_informative")
        weights = {f.name: f.weight for f in swapped.features}
        assert weights["inf_strong"] == 1.0
        assert weights["inf_weak"] == 2.0
        # everything else untouched
        assert swapped.seed == spec.seed
        assert swapped.target == spec.target

    def test_swap_many_reverses_weight_order(self):
        spec = GeneratorSpec(
            n_rows=10,
            features=tuple(
                FeatureSpec(f"f{i}", pattern="informative", weight=w)
                for i, w in enumerate((2.0, 1.5, 1.0, 0.5))
            ),
            target=TargetSpec(),
        )
        swapped = shift_window(spec, "swap_informative")
        assert [f.weight for f in swapped.features] == [0.5, 1.0, 1.5, 2.0]

    def test_swap_needs_two(self):
        spec = GeneratorSpec(
            n_rows=10,
            features=(
                FeatureSpec("a", pattern="informative", weight=1.0),
                FeatureSpec("b"),
            ),
            target=TargetSpec(),
        )
        with pytest.raises(InapplicableMutationError):
            shift_window(spec, "swap_informative")

    def test_scale_target(self):
        spec = _reg_spec(noise_std=0.3, offset=2.0)
        scaled = shift_window(spec, "scale_target", value=2.0)
        assert [f.weight for f in scaled.features] == [3.0, -1.0, 0.0]
        assert scaled.target.offset == 4.0
        assert scaled.target.noise_std == 0.6
        identity = shift_window(spec, "scale_target", value=1.0)
        assert identity == spec

    def test_shift_target(self):
        spec = _reg_spec(offset=10.0)
        shifted = shift_window(spec, "shift_target", value=-2.5)
        assert shifted.target.offset == 7.5
        assert shifted.features == spec.features

    def test_target_mutations_need_regression(self):
        spec = two_informative_spec(seed=0)
        with pytest.raises(InapplicableMutationError):
            shift_window(spec, "scale_target", value=2.0)
        with pytest.raises(InapplicableMutationError):
            shift_window(spec, "shift_target", value=1.0)

    def test_bad_values(self):
        spec = _reg_spec()
        with pytest.raises(InvalidSpecError):
            shift_window(spec, "scale_target", value=-1.0)
        with pytest.raises(InvalidSpecError):
            shift_window(spec, "scale_target")
        with pytest.raises(InvalidSpecError):
            shift_window(spec, "shift_target", value=float("inf"))
        with pytest.raises(InvalidSpecError):
            shift_window(spec, "made_up")

    def test_swapped_window_still_generates(self):
        spec = two_informative_spec(seed=9, n_rows=50)
        table, truth = generate(shift_window(spec, "swap_informative"))
        assert table.n_rows == 50
        assert dict(truth.informative) == {"inf_strong": 1.0, "inf_weak": 2.0}


class TestSpecFiles:
    def test_round_trip_through_ini(self, tmp_path):
        text = "\n".join(
            [
                "[generator]",
                "rows = 30",
                "seed = 4",
                "",
                "[feature.load]",
                "pattern = informative",
                "weight = 1.25",
                "",
                "[feature.echo]",
                "pattern = correlated",
                "with = load",
                "rho = 0.4",
                "",
                "[feature.channel]",
                "kind = categorical",
                "categories = 4",
                "",
                "[target]",
                "name = outcome",
                "kind = classification",
                "classes = 3",
                "class_names = lo, mid, hi",
                "noise_rate = 0.1",
            ]
        )
        path = tmp_path / "gen.ini"
        path.write_text(text)
        spec = read_generator_spec(str(path))
        assert spec.n_rows == 30 and spec.seed == 4
        assert spec.features[0] == FeatureSpec(
            "load", pattern="informative", weight=1.25
        )
        assert spec.features[1].with_feature == "load"
        assert spec.features[1].rho == 0.4
        assert spec.features[2].kind == "categorical"
        assert spec.target.class_names == ("lo", "mid", "hi")
        table, _ = generate(spec)
        assert table.n_rows == 30

    def test_missing_file_and_sections(self, tmp_path):
        with pytest.raises(ConfigError):
            read_generator_spec(str(tmp_path / "absent.ini"))
        no_target = tmp_path / "no_target.ini"
        no_target.write_text("[generator]\nrows = 5\n")
        with pytest.raises(InvalidSpecError):
            read_generator_spec(str(no_target))
        bad_value = tmp_path / "bad.ini"
        bad_value.write_text(
            "[generator]\nrows = many\n\n[target]\nkind = classification\n"
        )
        with pytest.raises(InvalidSpecError):
            read_generator_spec(str(bad_value))

    def test_generated_csv_loads_with_its_schema(self, tmp_path):
        spec = two_informative_spec(seed=6, n_rows=25)
        table, _ = generate(spec)
        csv_path = str(tmp_path / "window.csv")
        schema_path = str(tmp_path / "window.schema.ini")
        write_table(table, csv_path)
        write_schema(schema_for(spec), schema_path)
        from kpiforge.tabular import read_schema

        back = load_table(csv_path, read_schema(schema_path))
        assert back.equals(table)
