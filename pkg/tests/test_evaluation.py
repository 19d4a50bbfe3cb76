import itertools

import numpy as np
import pytest

from osld.errors import OsldError
from osld.evaluation import (
    EvaluationReport,
    GroupMetrics,
    MatchResult,
    StageMetrics,
    build_matching_embedder,
    grouped_metrics,
    hungarian,
    match_discovered,
    similarity_matrix,
)


def brute_force_min(cost):
    n = cost.shape[0]
    best = None
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        if best is None or total < best:
            best = total
    return best


def test_hungarian_identity_diagonal():
    mapping, total = hungarian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert mapping == {0: 0, 1: 1}
    assert total == 0.0


def test_hungarian_hand_case():
    mapping, total = hungarian(np.array([[1.0, 2.0], [3.0, 0.0]]))
    assert mapping == {0: 0, 1: 1}
    assert total == 1.0


def test_hungarian_matches_brute_force_small():
    rng = np.random.default_rng(0)
    for size in range(2, 8):
        for _ in range(20):
            cost = rng.uniform(-5, 5, size=(size, size))
            _, total = hungarian(cost)
            assert total == pytest.approx(brute_force_min(cost), abs=1e-9)


def test_hungarian_handles_negative_entries():
    cost = np.array([[-5.0, -1.0], [-2.0, -4.0]])
    mapping, total = hungarian(cost)
    assert mapping == {0: 0, 1: 1}
    assert total == -9.0


def test_hungarian_rectangular_padding():
    # wide: 2 rows over 3 columns; both rows matched, one column unused
    cost = np.array([[1.0, 0.0, 5.0], [0.0, 4.0, 5.0]])
    mapping, total = hungarian(cost)
    assert mapping == {0: 1, 1: 0}
    assert total == 0.0
    # tall: 3 rows over 2 columns; one row left unmatched
    cost_t = cost.T
    mapping, total = hungarian(cost_t)
    assert mapping == {1: 0, 0: 1}
    assert total == 0.0
    assert 2 not in mapping


def test_hungarian_row_shift_preserves_assignment():
    rng = np.random.default_rng(1)
    cost = rng.uniform(0, 10, size=(5, 5))
    base_map, base_total = hungarian(cost)
    shifted = cost.copy()
    shifted[2] += 7.5
    new_map, new_total = hungarian(shifted)
    assert new_map == base_map
    assert new_total == pytest.approx(base_total + 7.5, abs=1e-9)
    # column shift too
    shifted_c = cost.copy()
    shifted_c[:, 3] -= 2.25
    map_c, total_c = hungarian(shifted_c)
    assert map_c == base_map
    assert total_c == pytest.approx(base_total - 2.25, abs=1e-9)


def test_hungarian_rejects_empty_and_nonfinite():
    with pytest.raises(OsldError):
        hungarian(np.zeros((0, 3)))
    with pytest.raises(OsldError):
        hungarian(np.array([[np.inf, 1.0], [1.0, 0.0]]))


# --- similarity --------------------------------------------------------


def test_similarity_self_match_is_one():
    embed = build_matching_embedder([["politics"]], ["politics", "sport"], dim=64)
    sim = similarity_matrix([["politics"]], ["politics", "sport"], embed)
    assert sim[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert abs(sim[0, 1]) < 0.5


def test_similarity_hand_vectors():
    vectors = {
        "ka": np.array([1.0, 0.0]),
        "kb": np.array([1.0, 1.0]),
        "na": np.array([0.0, 2.0]),
        "nb": np.array([3.0, 0.0]),
    }
    sim = similarity_matrix([["ka"], ["kb"]], ["na", "nb"], lambda t: vectors[t])
    expected = np.array(
        [
            [0.0, 1.0],
            [1 / np.sqrt(2), 1 / np.sqrt(2)],
        ]
    )
    assert np.allclose(sim, expected, atol=1e-12)


def test_similarity_degenerate_rejected():
    vectors = {"kw": np.array([0.0, 0.0]), "name": np.array([1.0, 0.0])}
    with pytest.raises(OsldError, match="degenerate"):
        similarity_matrix([["kw"]], ["name"], lambda t: vectors[t])


def test_match_discovered_picks_best_assignment():
    discovered = {
        "stage1_cluster0": ["culture", "culture3", "culture9"],
        "stage1_cluster1": ["travel", "travel2"],
    }
    result = match_discovered(discovered, ["travel", "culture"], dim=128, seed=0)
    assert result.mapping == {
        "stage1_cluster0": "culture",
        "stage1_cluster1": "travel",
    }
    assert result.rename("stage1_cluster0") == "culture"
    assert result.rename("alpha") == "alpha"


# --- grouped metrics ----------------------------------------------------


def test_perfect_predictions_all_ones():
    golds = {f"d{i}": c for i, c in enumerate(["a", "a", "b", "b", "e", "e"])}
    preds = dict(golds)
    sm = grouped_metrics(preds, golds, known_set=["a", "b"], stage_new_set=["e"])
    for gm in sm.groups.values():
        assert gm.accuracy == 1.0
        assert gm.macro_f1 == 1.0
    assert sm.groups["overall"].count == 6
    assert sm.groups["known"].count == 4
    assert sm.groups["unknown"].count == 2


def test_frozen_baseline_scores_zero_on_unknown():
    golds = {"1": "a", "2": "e", "3": "e", "4": "f"}
    preds = {"1": "a", "2": "a", "3": "b", "4": "a"}  # only known names emitted
    sm = grouped_metrics(preds, golds, known_set=["a", "b"], stage_new_set=["e", "f"])
    assert sm.groups["unknown"].accuracy == 0.0
    assert sm.groups["unknown"].macro_f1 == 0.0


def test_hand_confusion_macro_f1():
    # six samples, three classes, one confusion (c2 sample predicted c3):
    # F1: c1 = 1.0, c2 = 2/3, c3 = 0.8 -> macro = 0.822222...
    golds = {"a": "c1", "b": "c1", "c": "c2", "d": "c2", "e": "c3", "f": "c3"}
    preds = {"a": "c1", "b": "c1", "c": "c2", "d": "c3", "e": "c3", "f": "c3"}
    sm = grouped_metrics(preds, golds, known_set=["c1", "c2", "c3"], stage_new_set=[])
    overall = sm.groups["overall"]
    assert overall.accuracy == pytest.approx(5 / 6)
    assert overall.macro_f1 == pytest.approx((1.0 + 2 / 3 + 0.8) / 3, abs=1e-12)


def test_macro_f1_only_over_gold_present_classes():
    golds = {"a": "x", "b": "x"}
    preds = {"a": "x", "b": "ghost"}  # ghost never appears in golds
    sm = grouped_metrics(preds, golds, known_set=["x"], stage_new_set=[])
    # single gold class x: precision 1, recall 0.5 -> F1 = 2/3
    assert sm.groups["overall"].macro_f1 == pytest.approx(2 / 3)


def test_missing_prediction_rejected():
    with pytest.raises(OsldError, match="missing prediction"):
        grouped_metrics({}, {"a": "x"}, known_set=["x"], stage_new_set=[])


def test_group_partition_disjoint_and_covering():
    golds = {
        "1": "known_a", "2": "old_new", "3": "cur_new", "4": "cur_new", "5": "known_b",
    }
    preds = {k: "known_a" for k in golds}
    sm = grouped_metrics(
        preds, golds, known_set=["known_a", "known_b"], stage_new_set=["cur_new"]
    )
    counts = {g: sm.groups[g].count for g in sm.groups}
    assert counts["overall"] == 5
    assert counts["known"] == 2
    assert counts["unknown"] == 2  # "old_new" counts only toward overall


def test_renaming_never_touches_known_accuracy():
    golds = {"1": "a", "2": "b", "3": "new1"}
    raw = {"1": "a", "2": "b", "3": "stage1_cluster0"}
    match = MatchResult(
        mapping={"stage1_cluster0": "new1"}, similarity=np.zeros((1, 1)),
        total_similarity=0.0,
    )
    renamed = {k: match.rename(v) for k, v in raw.items()}
    before = grouped_metrics(raw, golds, ["a", "b"], ["new1"])
    after = grouped_metrics(renamed, golds, ["a", "b"], ["new1"])
    assert before.groups["known"].accuracy == after.groups["known"].accuracy == 1.0
    assert after.groups["unknown"].accuracy == 1.0


def test_report_serialization_and_table():
    sm = StageMetrics(
        stage="test1",
        groups={
            "overall": GroupMetrics(4, 0.75, 0.7),
            "known": GroupMetrics(2, 1.0, 1.0),
            "unknown": GroupMetrics(2, 0.5, 0.5),
        },
        confusion={"a": {"a": 2}},
        discovered_k=2,
    )
    report = EvaluationReport(stages=[sm], validation_accuracy=0.9)
    blob = report.as_dict()
    assert blob["stages"][0]["groups"]["known"]["accuracy"] == 1.0
    table = report.to_table()
    assert "overall" in table and "unknown" in table and "test1" in table
