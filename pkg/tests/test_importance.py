"""MDI, permutation importance, ranking, and stability selection."""
import numpy as np
import pytest
import scipy.stats

from kpiforge.errors import (
    InvalidParamsError,
    RepeatsZeroError,
    SeedCollisionError,
    TooFewFeaturesError,
)
from kpiforge.forest import ForestParams, all_pairs, evaluate_pairs, fit_forest
from kpiforge.importance import (
    ImportanceReport,
    _permuted_metric,
    compare_measures,
    importance_report,
    mdi,
    permutation_importance,
    rank_descending,
    spearman_from_ranks,
    stability_selection,
)
from kpiforge.cart import TreeParams
from kpiforge.synth import generate
from kpiforge.tabular import split_holdout

from .conftest import build_table, random_table, two_informative_spec
from .oracles import oracle_mdi, oracle_spearman


def _fast_params(n_trees=20, seed=0):
    return ForestParams(n_trees=n_trees, master_seed=seed)


class TestMdi:
    def test_depth_one_all_credit_to_split_feature(self):
        t = build_table(
            {"a": [1.0, 1.0, 1.0, 1.0], "x": [1.0, 2.0, 3.0, 4.0]},
            ["A", "A", "B", "B"],
        )
        forest = fit_forest(
            t, ForestParams(n_trees=3, bootstrap=False, tree=TreeParams(mtry="all"))
        )
        raw, normalized = mdi(forest)
        assert raw[0] == 0.0
        assert raw[1] == pytest.approx(0.5, abs=1e-15)
        assert normalized.tolist() == [0.0, 1.0]

    def test_absent_feature_scores_exactly_zero(self):
        rng = np.random.default_rng(1)
        xs = [float(v) for v in rng.normal(size=40)]
        t = build_table(
            {"x": xs, "const": [3.14] * 40},
            ["hi" if v > 0 else "lo" for v in xs],
        )
        forest = fit_forest(t, _fast_params())
        raw, _ = mdi(forest)
        assert raw[1] == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(77)
        for _ in range(6):
            t = random_table(rng, max_rows=40)
            forest = fit_forest(t, ForestParams(n_trees=10, master_seed=5))
            raw, _ = mdi(forest)
            want = oracle_mdi(forest)
            np.testing.assert_allclose(raw, want, rtol=0, atol=1e-12)

    def test_normalization_sums_to_one(self):
        table, _ = generate(two_informative_spec(seed=2, n_rows=150))
        forest = fit_forest(table, _fast_params())
        raw, normalized = mdi(forest)
        assert raw.sum() > 0
        assert normalized.sum() == pytest.approx(1.0, abs=1e-12)

    def test_stump_free_forest_stays_all_zero(self):
        t = build_table({"x": [1.0, 2.0, 3.0]}, ["A", "A", "A"])
        forest = fit_forest(t, ForestParams(n_trees=4))
        raw, normalized = mdi(forest)
        assert raw.tolist() == [0.0]
        assert normalized.tolist() == [0.0]


class TestPermutation:
    def test_identity_permutation_reproduces_baseline(self):
        table, _ = generate(two_informative_spec(seed=3, n_rows=120))
        forest = fit_forest(table, _fast_params())
        xmat = forest.schema.encode_features(table)
        y = forest.schema.encode_target(table)
        tree_ids, row_ids = forest.oob_row_pairs()
        baseline, _, _ = evaluate_pairs(forest, xmat, y, tree_ids, row_ids)
        for j in range(xmat.shape[1]):
            same = _permuted_metric(
                forest, xmat, y, tree_ids, row_ids, j, np.arange(table.n_rows)
            )
            assert same == baseline

    def test_unused_feature_drop_exactly_zero(self):
        rng = np.random.default_rng(4)
        xs = [float(v) for v in rng.normal(size=60)]
        t = build_table(
            {"x": xs, "const": [1.0] * 60},
            ["hi" if v > 0 else "lo" for v in xs],
        )
        forest = fit_forest(t, _fast_params())
        result = permutation_importance(forest, t, repeats=5)
        assert (result.drops[1] == 0.0).all()
        assert result.mean[1] == 0.0 and result.std[1] == 0.0

    def test_informative_beats_noise_with_margin(self):
        table, truth = generate(two_informative_spec(seed=5, n_rows=400))
        forest = fit_forest(table, ForestParams(n_trees=40, master_seed=1))
        result = permutation_importance(forest, table, repeats=8, seed=9)
        names = list(result.feature_names)
        for inf in truth.informative_names:
            i = names.index(inf)
            for noise in ("noise_a", "noise_b", "noise_c"):
                j = names.index(noise)
                assert result.mean[i] > result.mean[j] + 2.0 * result.std[j]

    def test_input_table_unchanged(self):
        table, _ = generate(two_informative_spec(seed=6, n_rows=80))
        snapshot = table.take(np.arange(table.n_rows))
        forest = fit_forest(table, _fast_params(n_trees=25))
        permutation_importance(forest, table, repeats=3)
        assert table.equals(snapshot)

    def test_deterministic_under_seed(self):
        table, _ = generate(two_informative_spec(seed=7, n_rows=100))
        forest = fit_forest(table, _fast_params(n_trees=25))
        a = permutation_importance(forest, table, repeats=4, seed=3)
        b = permutation_importance(forest, table, repeats=4, seed=3)
        assert a.drops.tolist() == b.drops.tolist()
        c = permutation_importance(forest, table, repeats=4, seed=4)
        assert a.drops.tolist() != c.drops.tolist()

    def test_worker_parity(self):
        table, _ = generate(two_informative_spec(seed=8, n_rows=100))
        forest = fit_forest(table, _fast_params(n_trees=25))
        a = permutation_importance(forest, table, repeats=4, seed=3, n_jobs=1)
        b = permutation_importance(forest, table, repeats=4, seed=3, n_jobs=4)
        assert a.drops.tolist() == b.drops.tolist()

    def test_repeats_zero_rejected(self):
        table, _ = generate(two_informative_spec(seed=9, n_rows=60))
        forest = fit_forest(table, _fast_params(n_trees=25))
        with pytest.raises(RepeatsZeroError):
            permutation_importance(forest, table, repeats=0)

    def test_holdout_mode(self):
        table, _ = generate(two_informative_spec(seed=10, n_rows=200))
        train, hold = split_holdout(table, fraction=0.8, seed=0)
        forest = fit_forest(train, _fast_params(n_trees=15))
        result = permutation_importance(
            forest, train, repeats=3, mode="holdout", holdout=hold
        )
        assert result.metric_name == "holdout_accuracy"
        assert result.mode == "holdout"
        with pytest.raises(InvalidParamsError):
            permutation_importance(forest, train, repeats=3, mode="holdout")
        with pytest.raises(InvalidParamsError):
            permutation_importance(forest, train, repeats=3, mode="bogus")

    def test_oob_mode_requires_training_table(self):
        table, _ = generate(two_informative_spec(seed=11, n_rows=80))
        forest = fit_forest(table, _fast_params(n_trees=25))
        with pytest.raises(InvalidParamsError):
            permutation_importance(forest, table.take(range(40)), repeats=2)

    def test_negative_drops_kept(self):
        # permuting pure noise can accidentally help; sign must survive
        rng = np.random.default_rng(12)
        n = 80
        xs = [float(v) for v in rng.normal(size=n)]
        zs = [float(v) for v in rng.normal(size=n)]
        t = build_table(
            {"x": xs, "z": zs}, ["hi" if v > 0 else "lo" for v in xs]
        )
        forest = fit_forest(t, ForestParams(n_trees=30, master_seed=3))
        result = permutation_importance(forest, t, repeats=20, seed=1)
        recomputed = result.baseline - result.drops
        assert np.isfinite(recomputed).all()
        # mean is the plain average of the stored drop matrix
        np.testing.assert_allclose(
            result.mean, result.drops.mean(axis=1), atol=0, rtol=0
        )


class TestRanking:
    def test_rank_descending_basic(self):
        assert rank_descending([0.1, 0.9, 0.5]) == (3, 1, 2)

    def test_rank_ties_favor_low_index(self):
        assert rank_descending([0.5, 0.5, 0.1]) == (1, 2, 3)

    def test_spearman_identical(self):
        assert spearman_from_ranks((1, 2, 3), (1, 2, 3)) == 1.0

    def test_spearman_reversed(self):
        assert spearman_from_ranks((1, 2, 3, 4), (4, 3, 2, 1)) == -1.0

    def test_spearman_single_swap(self):
        assert spearman_from_ranks((1, 2, 3), (2, 1, 3)) == 0.5

    def test_spearman_too_few(self):
        with pytest.raises(TooFewFeaturesError):
            spearman_from_ranks((1,), (1,))

    def test_spearman_length_mismatch(self):
        with pytest.raises(InvalidParamsError):
            spearman_from_ranks((1, 2), (1, 2, 3))

    def test_spearman_matches_scipy_and_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            p = int(rng.integers(2, 9))
            a = tuple(int(v) + 1 for v in rng.permutation(p))
            b = tuple(int(v) + 1 for v in rng.permutation(p))
            ours = spearman_from_ranks(a, b)
            assert ours == pytest.approx(oracle_spearman(a, b), abs=1e-12)
            want = scipy.stats.spearmanr(a, b).statistic
            assert ours == pytest.approx(want, abs=1e-12)


class TestStability:
    def test_every_feature_selected_when_top_k_is_p(self):
        table, _ = generate(two_informative_spec(seed=14, n_rows=100))
        result = stability_selection(
            table, _fast_params(n_trees=25), n_seeds=2, top_k=5, repeats=2
        )
        assert result.frequency == (1.0,) * 5

    def test_strong_feature_stable_noise_not(self):
        table, _ = generate(two_informative_spec(seed=15, n_rows=300))
        result = stability_selection(
            table, ForestParams(n_trees=25, master_seed=2),
            n_seeds=4, top_k=2, repeats=4,
        )
        by_name = dict(zip(result.feature_names, result.frequency))
        assert by_name["inf_strong"] >= 0.75
        for noise in ("noise_a", "noise_b", "noise_c"):
            assert by_name[noise] <= 0.5

    def test_seed_collision(self):
        table, _ = generate(two_informative_spec(seed=16, n_rows=60))
        with pytest.raises(SeedCollisionError):
            stability_selection(
                table, _fast_params(n_trees=3), seeds=[1, 2, 1], repeats=2
            )

    def test_n_seeds_bounds(self):
        table, _ = generate(two_informative_spec(seed=17, n_rows=60))
        with pytest.raises(InvalidParamsError):
            stability_selection(table, _fast_params(n_trees=3), n_seeds=1)
        with pytest.raises(InvalidParamsError):
            stability_selection(
                table, _fast_params(n_trees=3), n_seeds=2, top_k=0
            )

    def test_explicit_seeds_round_trip(self):
        table, _ = generate(two_informative_spec(seed=18, n_rows=80))
        result = stability_selection(
            table, _fast_params(n_trees=25), seeds=[5, 6, 7], repeats=2
        )
        assert result.seeds == (5, 6, 7)
        assert result.n_seeds == 3
        back = type(result).from_json_dict(result.to_json_dict())
        assert back == result


class TestReport:
    def test_fields_and_round_trip(self, tmp_path):
        table, _ = generate(two_informative_spec(seed=19, n_rows=120))
        forest = fit_forest(table, _fast_params(n_trees=25))
        stab = stability_selection(
            table, _fast_params(n_trees=25), n_seeds=2, top_k=2, repeats=2
        )
        report = importance_report(
            forest, table, repeats=3, seed=4, stability=stab
        )
        assert report.feature_names == table.feature_names
        assert report.rank_perm == rank_descending(report.perm_mean)
        assert report.rank_mdi == rank_descending(report.mdi_raw)
        assert report.metric_name == "oob_accuracy"
        obj = report.to_json_dict()
        assert obj["kind"] == "importance_report"
        back = ImportanceReport.from_json_dict(obj)
        assert back == report
        assert back.fingerprint == report.fingerprint

    def test_text_rendering_mentions_features(self):
        table, _ = generate(two_informative_spec(seed=20, n_rows=80))
        forest = fit_forest(table, _fast_params(n_trees=25))
        report = importance_report(forest, table, repeats=2)
        text = report.to_text()
        for name in table.feature_names:
            assert name in text

    def test_compare_measures_range(self):
        table, _ = generate(two_informative_spec(seed=21, n_rows=120))
        forest = fit_forest(table, _fast_params(n_trees=25))
        report = importance_report(forest, table, repeats=3)
        rho = compare_measures(report)
        assert -1.0 <= rho <= 1.0
        assert rho == spearman_from_ranks(report.rank_mdi, report.rank_perm)


class TestSplitShare:
    def test_duplicated_column_halves_mdi_share(self):
        # a cloned informative column splits the MDI credit while the
        # combined share stays near the solo share
        rng = np.random.default_rng(22)
        n = 200
        xs = [float(v) for v in rng.normal(size=n)]
        noise = [float(v) for v in rng.normal(size=n)]
        y = ["hi" if v > 0 else "lo" for v in xs]
        solo = build_table({"x": xs, "noise": noise}, y)
        dup = build_table({"x": xs, "x_copy": list(xs), "noise": noise}, y)
        params = ForestParams(
            n_trees=30, master_seed=7, tree=TreeParams(mtry=1)
        )
        raw_solo, _ = mdi(fit_forest(solo, params))
        raw_dup, _ = mdi(fit_forest(dup, params))
        combined = raw_dup[0] + raw_dup[1]
        assert 0.5 * raw_solo[0] <= combined <= 2.0 * raw_solo[0]
        # each clone individually carries less than the solo column
        assert raw_dup[0] < raw_solo[0]
        assert raw_dup[1] < raw_solo[0]


def test_all_pairs_covers_every_tree_row():
    table, _ = generate(two_informative_spec(seed=23, n_rows=30))
    forest = fit_forest(table, _fast_params(n_trees=4))
    tree_ids, row_ids = all_pairs(forest, 30)
    assert len(tree_ids) == 4 * 30
    assert sorted(set(zip(tree_ids.tolist(), row_ids.tolist()))) == [
        (t, r) for t in range(4) for r in range(30)
    ]
