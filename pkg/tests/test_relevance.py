import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grantprod.ml import (
    FeatureMatrix,
    ForestHyper,
    relevance_over_resamples,
    train_decision_tree,
    train_knn,
    train_random_forest,
)
from grantprod.relevance import (
    FeatureRelevanceReport,
    ImpurityRecord,
    RankingRow,
    UnsupportedModelError,
    average_rank,
    critical_difference,
    feature_importance,
    gini_impurity,
    impurity_decrease,
    nemenyi_q,
    rank_descending,
    render_rank_diagram,
    write_ranking_csv,
)

from _synth import planted_ne_corpus


# ---------------------------------------------------------------------------
# Gini impurity
# ---------------------------------------------------------------------------

def test_even_split_is_half():
    assert gini_impurity([0.5, 0.5]) == pytest.approx(0.5, abs=5e-5)


def test_pure_node_is_zero():
    assert gini_impurity([1.0, 0.0]) == 0.0


def test_one_in_seventeen():
    assert gini_impurity([1 / 17, 16 / 17]) == pytest.approx(0.1107, abs=5e-5)


def test_probability_validation():
    with pytest.raises(ValueError):
        gini_impurity([0.6, 0.6])
    with pytest.raises(ValueError):
        gini_impurity([-0.1, 1.1])


def test_symmetric_and_maximized_at_uniform():
    for p in (0.1, 0.25, 0.4):
        assert gini_impurity([p, 1 - p]) == pytest.approx(gini_impurity([1 - p, p]))
        assert gini_impurity([p, 1 - p]) < gini_impurity([0.5, 0.5])


# ---------------------------------------------------------------------------
# impurity decrease
# ---------------------------------------------------------------------------

def test_worked_split_example():
    g_right = gini_impurity([1 / 17, 16 / 17])
    delta = impurity_decrease(0.5, 0.0, g_right, 15, 17)
    assert delta == pytest.approx(0.4412, abs=5e-5)


def test_copying_parent_distribution_gains_nothing():
    g = gini_impurity([0.25, 0.75])
    assert impurity_decrease(g, g, g, 10, 30) == pytest.approx(0.0, abs=1e-15)


def test_pure_parent_gains_nothing():
    assert impurity_decrease(0.0, 0.0, 0.0, 5, 5) == 0.0


def test_child_count_validation():
    with pytest.raises(ValueError):
        impurity_decrease(0.5, 0.0, 0.0, 0, 0)


# ---------------------------------------------------------------------------
# feature importance
# ---------------------------------------------------------------------------

class FakeModel:
    def __init__(self, records, n_features):
        self._records = records
        self.n_features = n_features

    def iter_impurity_records(self):
        return iter(self._records)


def fake_record(feature, delta_g, n_left=10, n_right=10, node_id=0):
    return ImpurityRecord(node_id=node_id, feature_index=feature, gini_before=0.5,
                          gini_left=0.0, gini_right=0.0, n_left=n_left, n_right=n_right,
                          delta_g=delta_g)


def test_single_node_tree_importance():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    model = train_decision_tree(FeatureMatrix(X, y))
    report = feature_importance(model)
    [record] = list(model.iter_impurity_records())
    assert report.mean_importance[0] == record.delta_g
    assert report.node_counts[0] == 1


def test_mean_over_nodes():
    model = FakeModel([fake_record(2, 0.4), fake_record(2, 0.2), fake_record(0, 0.1)], 3)
    report = feature_importance(model)
    assert report.mean_importance[2] == pytest.approx(0.3)
    assert report.mean_importance[0] == pytest.approx(0.1)
    assert report.mean_importance[1] == 0.0  # unused feature


def test_instance_weighted_alternative():
    model = FakeModel(
        [fake_record(0, 0.4, n_left=30, n_right=30), fake_record(0, 0.1, n_left=5, n_right=5)], 1
    )
    node_mean = feature_importance(model, weighting="node_mean")
    weighted = feature_importance(model, weighting="instance_weighted")
    assert node_mean.mean_importance[0] == pytest.approx(0.25)
    assert weighted.mean_importance[0] == pytest.approx((60 * 0.4 + 10 * 0.1) / 70)


def test_unsupported_model():
    X = np.zeros((4, 1))
    y = np.array([0, 1, 0, 1])
    knn = train_knn(FeatureMatrix(X, y), k=1)
    with pytest.raises(UnsupportedModelError):
        feature_importance(knn)


def test_replaying_stored_records_reproduces_delta_g():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(80, 5))
    y = ((X[:, 0] + 0.5 * X[:, 3]) > 0).astype(int)
    forest = train_random_forest(FeatureMatrix(X, y), ForestHyper(n_trees=10), seed=2)
    records = list(forest.iter_impurity_records())
    assert records
    for record in records:
        replayed = impurity_decrease(
            record.gini_before, record.gini_left, record.gini_right,
            record.n_left, record.n_right,
        )
        assert replayed == pytest.approx(record.delta_g, abs=1e-12)
        assert record.delta_g >= 0.0


# ---------------------------------------------------------------------------
# ranks
# ---------------------------------------------------------------------------

def test_rank_descending_basic():
    np.testing.assert_array_equal(rank_descending([0.5, 0.9, 0.1]), [2, 1, 3])


def test_rank_ties_take_mean():
    np.testing.assert_array_equal(rank_descending([0.9, 0.5, 0.5, 0.1]), [1, 2.5, 2.5, 4])


def make_report(importances):
    return FeatureRelevanceReport(
        feature_names=tuple(f"f{i}" for i in range(len(importances))),
        mean_importance=np.array(importances, dtype=float),
        node_counts=np.ones(len(importances), dtype=int),
    )


def test_single_resample_rank_is_sorted_order():
    rows = average_rank([make_report([0.2, 0.9, 0.5])])
    assert [r.feature for r in rows] == ["f1", "f2", "f0"]
    assert [r.average_rank for r in rows] == [1.0, 2.0, 3.0]


def test_average_of_two_resamples():
    rows = average_rank([make_report([0.9, 0.5, 0.1]), make_report([0.1, 0.5, 0.9])])
    by_name = {r.feature: r.average_rank for r in rows}
    assert by_name["f0"] == pytest.approx((1 + 3) / 2)
    assert by_name["f1"] == pytest.approx(2.0)


def test_schema_mismatch_rejected():
    a = make_report([0.1, 0.2])
    b = FeatureRelevanceReport(feature_names=("x", "y"),
                               mean_importance=np.array([0.1, 0.2]),
                               node_counts=np.ones(2, dtype=int))
    with pytest.raises(ValueError):
        average_rank([a, b])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.9]), min_size=2, max_size=12))
def test_rank_conservation_with_ties(values):
    ranks = rank_descending(values)
    k = len(values)
    assert math.fsum(ranks) == pytest.approx(k * (k + 1) / 2)


# ---------------------------------------------------------------------------
# critical difference
# ---------------------------------------------------------------------------

def test_cd_formula_collapse_for_two():
    n = 10
    assert critical_difference([1.4, 1.6], n) == pytest.approx(
        nemenyi_q(2) * math.sqrt(1.0 / n)
    )


def test_cd_hand_evaluation_k5():
    expected = 2.7278 * math.sqrt(5 * 6 / (6.0 * 10))
    assert critical_difference([1, 2, 3, 4, 5], 10) == pytest.approx(expected)


def test_zero_gap_never_significant():
    cd = critical_difference([2.0, 2.0, 2.0], 8)
    assert cd > 0.0  # equal average ranks always fall inside the CD


def test_q_table_bounds():
    with pytest.raises(ValueError) as excinfo:
        nemenyi_q(25)
    assert "2..20" in str(excinfo.value)
    with pytest.raises(ValueError):
        nemenyi_q(5, alpha=0.01)
    assert nemenyi_q(2, 0.10) == pytest.approx(1.6449)


# ---------------------------------------------------------------------------
# end-to-end ranking over resamples
# ---------------------------------------------------------------------------

def test_planted_feature_ranks_first_each_resample():
    corpus = planted_ne_corpus(n=80, seed=5)
    ranking, aggregated, reports = relevance_over_resamples(
        corpus, n_resamples=4, base_seed=6, forest_hyper=ForestHyper(n_trees=25)
    )
    assert ranking[0].feature == "ne_ratio"
    index = aggregated.feature_names.index("ne_ratio")
    assert (aggregated.per_resample_ranks[:, index] == 1.0).all()
    assert aggregated.critical_difference is not None


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def ranking_fixture():
    return [
        RankingRow("alpha", 0.41, 1.2),
        RankingRow("beta", 0.30, 2.4),
        RankingRow("gamma", 0.05, 2.4),
    ]


def test_ranking_csv(tmp_path):
    path = tmp_path / "relevance.csv"
    write_ranking_csv(path, ranking_fixture(), cd=1.0, header_comment="cfg")
    lines = path.read_text().splitlines()
    assert lines[0] == "# cfg"
    assert lines[1] == "# critical_difference=1.0000"
    assert lines[2] == "feature,mean_importance,average_rank,within_cd_of_best"
    assert lines[3] == "alpha,0.410000,1.2000,true"
    assert lines[4].endswith("false")  # beta is 1.2 away from best, outside CD 1.0


def test_svg_labels_all_when_fewer_than_five():
    svg = render_rank_diagram(ranking_fixture(), cd=0.8)
    assert svg.count("<circle") == 3
    for name in ("alpha", "beta", "gamma"):
        assert name in svg
    assert "CD = 0.8000" in svg


def test_svg_timestamp_header_is_optional():
    with_stamp = render_rank_diagram(ranking_fixture(), timestamp="2020-01-01T00:00:00")
    without = render_rank_diagram(ranking_fixture())
    assert "<!-- generated 2020-01-01T00:00:00 -->" in with_stamp
    assert "generated" not in without
    assert render_rank_diagram(ranking_fixture()) == without  # deterministic
