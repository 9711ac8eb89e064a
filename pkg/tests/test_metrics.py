import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masktriage.classifier import (DECISION_CLS_FALLBACK, DECISION_MASK_VOTE, PredictionOutcome)
from masktriage.evaluation import (BINARY_POSITIVE, CLASS_WEIGHTED, EvalReport, FoldMetrics,
                                   compute_prf, decompose_by_decision_path,
                                   paired_battery, read_report, stratified_folds, write_report)
from masktriage.labels import NON_SECURITY, SECURITY


def brute_force_prf(pairs, positive, weighting):
    """Independent recount: tally the four cells by looping, then apply the
    textbook formulas (support-weighted for the weighted variant)."""
    def one_class(pos):
        tp = sum(1 for p, t in pairs if p == pos and t == pos)
        fp = sum(1 for p, t in pairs if p == pos and t != pos)
        fn = sum(1 for p, t in pairs if p != pos and t == pos)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
        return precision, recall, f1

    if weighting == BINARY_POSITIVE:
        return one_class(positive)
    total = len(pairs)
    out = [0.0, 0.0, 0.0]
    for label in (SECURITY, NON_SECURITY):
        support = sum(1 for _, t in pairs if t == label)
        values = one_class(label)
        for i in range(3):
            out[i] += values[i] * support / total
    return tuple(out)


def outcome(final, path, issue_id="x"):
    masks = [[0.9, 0.1]] if path == DECISION_MASK_VOTE else []
    tally = {SECURITY: 0, NON_SECURITY: 0}
    if masks:
        tally[final] = 1
    return PredictionOutcome(issue_id=issue_id, per_mask_probabilities=masks,
                             cls_probabilities=[0.6, 0.4], vote_tally=tally,
                             final_label=final, decision_path=path, max_confidence=0.9)


class TestComputePrf:
    def test_arithmetic(self):
        pairs = ([("security", "security")] * 3 + [("security", "non_security")]
                 + [("non_security", "security")])
        p, r, f, flag = compute_prf(pairs)
        assert (p, r, f) == (0.75, 0.75, 0.75)
        assert not flag

    def test_perfect_predictions(self):
        pairs = [(SECURITY, SECURITY), (NON_SECURITY, NON_SECURITY)]
        assert compute_prf(pairs)[:3] == (1.0, 1.0, 1.0)

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            compute_prf([])

    def test_zero_denominator_flagged(self):
        pairs = [(NON_SECURITY, SECURITY), (NON_SECURITY, SECURITY)]
        p, r, f, flag = compute_prf(pairs)
        assert (p, r, f) == (0.0, 0.0, 0.0)
        assert flag

    def test_oracle_equivalence_500_random_sets(self):
        rng = random.Random(23)
        labels = [SECURITY, NON_SECURITY]
        for _ in range(500):
            pairs = [(rng.choice(labels), rng.choice(labels))
                     for _ in range(rng.randint(1, 100))]
            for weighting in (BINARY_POSITIVE, CLASS_WEIGHTED):
                got = compute_prf(pairs, weighting=weighting)
                want = brute_force_prf(pairs, SECURITY, weighting)
                for g, w in zip(got[:3], want):
                    assert abs(g - w) <= 1e-12


class TestFoldMetrics:
    def test_consistent_with_confusion(self):
        pairs = [(SECURITY, SECURITY)] * 6 + [(NON_SECURITY, SECURITY)] * 2 \
            + [(NON_SECURITY, NON_SECURITY)] * 7 + [(SECURITY, NON_SECURITY)]
        fold = FoldMetrics.from_pairs(0, pairs)
        matrix = np.array(fold.confusion)
        assert matrix.sum() == len(pairs)
        recomputed = brute_force_prf(pairs, SECURITY, CLASS_WEIGHTED)
        assert abs(fold.precision - recomputed[0]) < 1e-12
        assert abs(fold.recall - recomputed[1]) < 1e-12
        assert abs(fold.f1 - recomputed[2]) < 1e-12


class TestDecomposition:
    def test_subsets_sum_to_overall(self):
        outcomes = [outcome(SECURITY, DECISION_MASK_VOTE) for _ in range(7)]
        outcomes += [outcome(NON_SECURITY, DECISION_CLS_FALLBACK) for _ in range(3)]
        truths = [SECURITY] * 5 + [NON_SECURITY] * 5
        parts = decompose_by_decision_path(outcomes, truths)
        total = np.array(parts["mask_subset"]["confusion"]) + np.array(parts["cls_subset"]["confusion"])
        assert (total == np.array(parts["overall"]["confusion"])).all()
        assert parts["mask_subset"]["count"] == 7
        assert parts["cls_subset"]["count"] == 3

    def test_all_fallback_zero_mask_subset(self):
        outcomes = [outcome(SECURITY, DECISION_CLS_FALLBACK) for _ in range(4)]
        parts = decompose_by_decision_path(outcomes, [SECURITY] * 4)
        assert np.array(parts["mask_subset"]["confusion"]).sum() == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from([SECURITY, NON_SECURITY]),
                              st.sampled_from([DECISION_MASK_VOTE, DECISION_CLS_FALLBACK]),
                              st.sampled_from([SECURITY, NON_SECURITY])),
                    min_size=0, max_size=40))
    def test_identity_property(self, rows):
        outcomes = [outcome(f, p) for f, p, _ in rows]
        truths = [t for _, _, t in rows]
        parts = decompose_by_decision_path(outcomes, truths)
        total = np.array(parts["mask_subset"]["confusion"]) + np.array(parts["cls_subset"]["confusion"])
        assert (total == np.array(parts["overall"]["confusion"])).all()


class TestStratifiedFolds:
    def test_balance_within_one(self):
        labels = [SECURITY, NON_SECURITY] * 50
        assignment = stratified_folds(labels, folds=10, seed=1)
        for fold in range(10):
            sec = sum(1 for lab, f in zip(labels, assignment) if f == fold and lab == SECURITY)
            non = sum(1 for lab, f in zip(labels, assignment) if f == fold and lab == NON_SECURITY)
            assert abs(sec - non) <= 1
            assert sec + non == 10

    def test_partition(self):
        labels = [SECURITY] * 9 + [NON_SECURITY] * 9
        assignment = stratified_folds(labels, folds=3, seed=0)
        assert len(assignment) == 18
        assert set(assignment) == {0, 1, 2}

    def test_fold_count_validation(self):
        with pytest.raises(ValueError):
            stratified_folds([SECURITY] * 4, folds=1, seed=0)
        with pytest.raises(ValueError):
            stratified_folds([SECURITY] * 4, folds=5, seed=0)


class TestEvalReport:
    def make_report(self):
        rng = random.Random(5)
        folds = []
        for i in range(10):
            pairs = [(rng.choice([SECURITY, NON_SECURITY]), rng.choice([SECURITY, NON_SECURITY]))
                     for _ in range(20)]
            folds.append(FoldMetrics.from_pairs(i, pairs))
        decomposition = decompose_by_decision_path(
            [outcome(SECURITY, DECISION_MASK_VOTE)], [SECURITY])
        return EvalReport.from_folds(folds, decomposition, initial_weights_digest="d" * 64)

    def test_mean_matches_folds_exactly(self):
        report = self.make_report()
        mean_f1 = float(np.mean([f.f1 for f in report.folds]))
        assert abs(report.means["f1"] - mean_f1) <= 1e-12
        std_f1 = float(np.std([f.f1 for f in report.folds], ddof=1))
        assert abs(report.stds["f1"] - std_f1) <= 1e-12

    def test_round_trip(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.json"
        write_report(path, report)
        assert read_report(path) == report

    def test_paper_aggregates_survive_serialization(self, tmp_path):
        # format fixture: the best published cross-validation row is carried
        # through the report file unchanged
        report = self.make_report()
        report.means.update({"precision": 0.9849, "recall": 0.9924, "f1": 0.9880})
        report.decomposition["mask_subset"].update({"precision": 0.7464, "recall": 0.7020})
        report.decomposition["cls_subset"].update({"precision": 0.6373, "recall": 0.6341})
        path = tmp_path / "report.json"
        write_report(path, report)
        loaded = read_report(path)
        assert (loaded.means["precision"], loaded.means["recall"], loaded.means["f1"]) == \
            (0.9849, 0.9924, 0.9880)
        assert loaded.decomposition["mask_subset"]["precision"] == 0.7464
        assert loaded.decomposition["cls_subset"]["precision"] == 0.6373


class TestPairedBattery:
    def test_dispatch_and_threshold(self):
        rng = random.Random(11)
        base = [0.9 + rng.gauss(0, 0.01) for _ in range(10)]
        worse = [v - 0.08 + rng.gauss(0, 0.01) for v in base]
        battery = paired_battery({"precision": (base, worse),
                                  "recall": (base, worse),
                                  "f1": (base, worse)})
        assert abs(battery["threshold"] - 0.05 / 3) < 1e-15
        for entry in battery["metrics"].values():
            assert entry["test"] in ("paired_t", "wilcoxon_exact", "wilcoxon_normal_approx")
            assert entry["significant"]
            assert "shapiro" in entry
            assert "variance_ratio" in entry

    def test_degenerate_pairs_not_significant(self):
        same = [0.5] * 6
        battery = paired_battery({"f1": (same, same)})
        assert battery["metrics"]["f1"]["test"] == "degenerate"
        assert not battery["metrics"]["f1"]["significant"]
