import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madst.metrics import (TurnResult, avg_slot, domain_f1, dontcare_accuracy, evaluate_results, joint_goal,
                           per_slot_accuracy, turn_buckets)

SLOTS = ["hotel-area", "hotel-name", "restaurant-food", "taxi-leaveat", "train-day", "attraction-type"]
VALUES = ["none", "dontcare", "centre", "north", "italian", "17:45", "monday"]


def result(gold, pred, dialog="d", turn=0):
    return TurnResult(dialog, turn, dict(gold), dict(pred))


def random_results(rng, n=100, slots=SLOTS):
    out = []
    for i in range(n):
        gold = {s: VALUES[rng.integers(len(VALUES))] for s in slots}
        pred = {s: (gold[s] if rng.random() < 0.7 else VALUES[rng.integers(len(VALUES))]) for s in slots}
        out.append(result(gold, pred, f"d{i // 5}", i % 5))
    return out


def test_all_correct():
    rs = [result({"hotel-area": "north", "hotel-name": "none"}, {"hotel-area": "north", "hotel-name": "none"})]
    assert joint_goal(rs) == 1.0 and avg_slot(rs) == 1.0


def test_half_joint():
    ok = result({"hotel-area": "north"}, {"hotel-area": "north"})
    bad = result({"hotel-area": "north"}, {"hotel-area": "south"})
    assert joint_goal([ok, bad]) == 0.5


def test_one_wrong_slot_of_thirty():
    gold = {f"hotel-s{i}": "x" for i in range(30)}
    pred = dict(gold, **{"hotel-s7": "y"})
    rs = [result(gold, pred)]
    assert joint_goal(rs) == 0.0
    assert avg_slot(rs) == pytest.approx(29 / 30)


def test_all_none_counts_as_correct():
    gold = {s: "none" for s in SLOTS}
    assert joint_goal([result(gold, gold)]) == 1.0


def test_normalized_values_compare_equal():
    assert joint_goal([result({"hotel-area": "center"}, {"hotel-area": "Centre"})]) == 1.0


def test_domain_f1_cases():
    rs = [result({"hotel-area": "north", "hotel-name": "none", "taxi-leaveat": "none"},
                 {"hotel-area": "north", "hotel-name": "alpha", "taxi-leaveat": "none"})]
    f1 = domain_f1(rs)
    assert f1 == {"hotel": pytest.approx(2 / 3)}
    assert "taxi" not in f1


def test_five_turn_dialog_by_hand():
    rs = [result({"a-x": "1", "a-y": "none"}, {"a-x": "1", "a-y": "none"}, turn=0),
          result({"a-x": "1", "a-y": "2"}, {"a-x": "1", "a-y": "none"}, turn=1),
          result({"a-x": "1", "a-y": "2"}, {"a-x": "1", "a-y": "2"}, turn=2),
          result({"a-x": "3", "a-y": "2"}, {"a-x": "1", "a-y": "3"}, turn=3),
          result({"a-x": "dontcare", "a-y": "2"}, {"a-x": "dontcare", "a-y": "2"}, turn=4)]
    assert joint_goal(rs) == pytest.approx(3 / 5)
    assert avg_slot(rs) == pytest.approx(7 / 10)
    assert per_slot_accuracy(rs) == {"a-x": pytest.approx(4 / 5), "a-y": pytest.approx(3 / 5)}
    assert turn_buckets(rs) == {0: (1.0, 1.0), 1: (0.0, 0.5), 2: (1.0, 1.0), 3: (0.0, 0.0), 4: (1.0, 1.0)}
    assert dontcare_accuracy(rs) == 1.0
    # tp: 1+1+2+0+2 = 6 (dontcare counts as a value); fp: turn 3 both = 2; fn: turn 1 a-y, turn 3 both = 3
    assert domain_f1(rs) == {"a": pytest.approx(12 / 17)}


def test_mismatched_slot_sets_and_empty_input():
    with pytest.raises(ValueError):
        result({"hotel-area": "x"}, {"hotel-name": "x"})
    with pytest.raises(ValueError):
        joint_goal([])


def brute_force(results):
    joint = np.mean([all(r.gold[s] == r.pred[s] for s in r.gold) for r in results])
    cells = [r.gold[s] == r.pred[s] for r in results for s in r.gold]
    slot = sum(cells) / len(cells)
    per = {s: sum(r.gold[s] == r.pred[s] for r in results) / len(results) for s in SLOTS}
    return joint, slot, per


def test_metrics_match_brute_force_recount():
    rs = random_results(np.random.default_rng(7))
    joint, slot, per = brute_force(rs)
    report = evaluate_results(rs)
    assert report.joint_goal == joint
    assert report.avg_slot == slot
    assert report.per_slot_acc == per
    assert report.n_turns == 100


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 30))
def test_joint_never_exceeds_slot_and_is_order_invariant(seed, n):
    rng = np.random.default_rng(seed)
    rs = random_results(rng, n)
    j, s = joint_goal(rs), avg_slot(rs)
    assert 0.0 <= j <= s <= 1.0
    perm = [rs[i] for i in rng.permutation(n)]
    assert joint_goal(perm) == j
    assert avg_slot(perm) == pytest.approx(s, abs=1e-15)
    assert domain_f1(perm) == pytest.approx(domain_f1(rs))


def test_report_serialization(tmp_path):
    report = evaluate_results(random_results(np.random.default_rng(0), 10))
    report.save(tmp_path / "m.json")
    report.save_per_slot_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["slot", "accuracy"] and len(rows) == len(SLOTS) + 1
    accs = [float(r[1]) for r in rows[1:]]
    assert accs == sorted(accs, reverse=True)
