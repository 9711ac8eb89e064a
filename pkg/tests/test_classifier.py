import math

import pytest
import torch

from masktriage.classifier import (DECISION_CLS_FALLBACK, DECISION_MASK_VOTE,
                                   TrainConfig, decide, fine_tune, load_model, predict,
                                   predict_batch, read_predictions, save_model,
                                   write_predictions)
from masktriage.errors import SchemaError
from masktriage.labels import NON_SECURITY, SECURITY
from masktriage.masking import apply_masks
from masktriage.preprocess import PreprocessedIssue

from conftest import make_toy_issues, make_toy_lexicon


def toy_masked(n=120, seed=0):
    lexicon = make_toy_lexicon()
    return [apply_masks(issue, lexicon) for issue in make_toy_issues(n, seed)]


def quick_config(encoder_dir, epochs=2, seed=7, lr=1e-3, **kw):
    return TrainConfig(epochs=epochs, batch_size=16, learning_rate=lr,
                       max_sequence_length=16, seed=seed, encoder_id=str(encoder_dir), **kw)


class TestDecide:
    """Enumerated vote-pattern table for the decision rule (up to 5 masks)."""

    CASES = [
        # ([per-mask security probabilities], cls security prob, expected label, path)
        ([0.9, 0.6, 0.2], 0.5, SECURITY, DECISION_MASK_VOTE),          # 2-1 majority
        ([0.1, 0.2, 0.8], 0.9, NON_SECURITY, DECISION_MASK_VOTE),      # 1-2 majority beats cls
        ([0.7, 0.4], 0.1, SECURITY, DECISION_MASK_VOTE),               # 1-1 tie, mean 0.55
        ([0.9, 0.1], 0.8, SECURITY, DECISION_MASK_VOTE),               # 1-1 tie, mean 0.5, cls breaks
        ([0.9, 0.1], 0.2, NON_SECURITY, DECISION_MASK_VOTE),           # 1-1 tie, mean 0.5, cls breaks
        ([], 0.51, SECURITY, DECISION_CLS_FALLBACK),                   # threshold rule
        ([], 0.5, NON_SECURITY, DECISION_CLS_FALLBACK),                # not strictly greater
        ([], 0.49, NON_SECURITY, DECISION_CLS_FALLBACK),
        ([0.8], 0.1, SECURITY, DECISION_MASK_VOTE),                    # single vote
        ([0.2, 0.3, 0.4, 0.9, 0.1], 0.9, NON_SECURITY, DECISION_MASK_VOTE),  # 2-3
        ([0.6, 0.7, 0.8, 0.2, 0.1], 0.1, SECURITY, DECISION_MASK_VOTE),      # 3-2
        ([0.6, 0.6, 0.4, 0.4], 0.9, SECURITY, DECISION_MASK_VOTE),     # 2-2 tie, mean 0.5... cls
    ]

    @pytest.mark.parametrize("mask_sec, cls_sec, expected, path", CASES)
    def test_vote_table(self, mask_sec, cls_sec, expected, path):
        per_mask = [[p, 1.0 - p] for p in mask_sec]
        final, got_path, tally, confidence = decide(per_mask, [cls_sec, 1.0 - cls_sec])
        assert final == expected
        assert got_path == path
        assert tally[SECURITY] + tally[NON_SECURITY] == len(mask_sec)
        assert 0.0 <= confidence <= 1.0

    def test_vote_counts(self):
        per_mask = [[0.9, 0.1], [0.6, 0.4], [0.2, 0.8]]
        _, _, tally, _ = decide(per_mask, [0.5, 0.5])
        assert tally == {SECURITY: 2, NON_SECURITY: 1}

    def test_monotone_transform_invariance(self):
        # squaring preserves per-mask argmax; the vote tally and the decision
        # must not change when there is a strict majority
        per_mask = [[0.9, 0.1], [0.6, 0.4], [0.2, 0.8]]
        transformed = [[p * p / (p * p + q * q), q * q / (p * p + q * q)] for p, q in per_mask]
        a = decide(per_mask, [0.5, 0.5])
        b = decide(transformed, [0.5, 0.5])
        assert a[0] == b[0] and a[2] == b[2]


class TestFineTune:
    def test_config_echoed_in_snapshot(self, toy_encoder_dir):
        model = fine_tune(toy_masked(40), quick_config(toy_encoder_dir, epochs=1))
        assert model.config_snapshot["epochs"] == 1
        assert model.config_snapshot["batch_size"] == 16

    def test_loss_decreases_on_separable_corpus(self, toy_encoder_dir):
        model = fine_tune(toy_masked(200, seed=2), quick_config(toy_encoder_dir, epochs=2))
        losses = model.history["epoch_losses"]
        assert losses[0] > losses[1]

    def test_initial_loss_near_ln2(self, toy_encoder_dir):
        model = fine_tune(toy_masked(64), quick_config(toy_encoder_dir, epochs=1))
        first_batch = model.history["first_epoch_batch_losses"][0]
        assert abs(first_batch - math.log(2)) < 0.15

    def test_empty_train_set_rejected(self, toy_encoder_dir):
        with pytest.raises(ValueError):
            fine_tune([], quick_config(toy_encoder_dir))

    def test_inconsistent_pseudo_labels_rejected(self, toy_encoder_dir):
        bad = toy_masked(8)
        bad[0].pseudo_labels = [NON_SECURITY] * len(bad[0].pseudo_labels)
        if not bad[0].pseudo_labels:
            pytest.skip("first instance had no masks")
        with pytest.raises(ValueError):
            fine_tune(bad, quick_config(toy_encoder_dir))

    def test_cls_only_instances_train_fine(self, toy_encoder_dir):
        instances = toy_masked(16)
        cls_only = [i for i in instances if not i.mask_positions]
        masked = [i for i in instances if i.mask_positions]
        model = fine_tune(cls_only + masked[:4] if cls_only else masked,
                          quick_config(toy_encoder_dir, epochs=1))
        assert model.history["epoch_losses"]

    def test_deterministic_digest_and_trajectory(self, toy_encoder_dir):
        config = quick_config(toy_encoder_dir, epochs=1)
        a = fine_tune(toy_masked(48), config)
        b = fine_tune(toy_masked(48), quick_config(toy_encoder_dir, epochs=1))
        assert a.initial_weights_digest == b.initial_weights_digest
        for x, y in zip(a.history["first_epoch_batch_losses"],
                        b.history["first_epoch_batch_losses"]):
            assert abs(x - y) < 1e-4

    def test_sequence_cap_validated(self, toy_encoder_dir):
        config = quick_config(toy_encoder_dir)
        config.max_sequence_length = 10_000
        with pytest.raises(ValueError):
            fine_tune(toy_masked(8), config)


@pytest.fixture(scope="module")
def model(toy_encoder_dir):
    return fine_tune(toy_masked(200, seed=3), quick_config(toy_encoder_dir, epochs=4))


class TestPredict:

    def test_probabilities_sum_to_one(self, model):
        for inst in toy_masked(12):
            out = predict(model, inst)
            for probs in out.per_mask_probabilities + [out.cls_probabilities]:
                assert abs(sum(probs) - 1.0) < 1e-6
                assert all(0.0 <= p <= 1.0 for p in probs)

    def test_vote_counts_match_mask_count(self, model):
        for inst in toy_masked(12):
            out = predict(model, inst)
            assert sum(out.vote_tally.values()) == len(out.per_mask_probabilities)
            expected_path = DECISION_MASK_VOTE if inst.mask_positions else DECISION_CLS_FALLBACK
            assert out.decision_path == expected_path

    def test_learns_the_separable_classes(self, model):
        instances = toy_masked(80, seed=9)
        outcomes = predict_batch(model, instances)
        accuracy = sum(o.final_label == i.truth_label
                       for o, i in zip(outcomes, instances)) / len(instances)
        assert accuracy > 0.85

    def test_batch_equals_single(self, model):
        instances = toy_masked(32, seed=5)
        batched = predict_batch(model, instances, batch_size=8)
        singles = [predict(model, inst) for inst in instances]
        assert [o.final_label for o in batched] == [o.final_label for o in singles]
        assert [o.decision_path for o in batched] == [o.decision_path for o in singles]
        assert [o.issue_id for o in batched] == [o.issue_id for o in singles]

    def test_empty_batch(self, model):
        assert predict_batch(model, []) == []

    def test_truncation_drops_tail_masks(self, model):
        tokens = ["attacker"] * 20 + ["exploit"]
        inst = apply_masks(PreprocessedIssue("t#1", tokens, SECURITY), make_toy_lexicon())
        assert inst.mask_positions == [20]
        out = predict(model, inst)  # max_sequence_length 16: mask falls off
        assert out.decision_path == DECISION_CLS_FALLBACK
        assert out.per_mask_probabilities == []

    def test_predictions_round_trip(self, model, tmp_path):
        outcomes = predict_batch(model, toy_masked(10))
        path = tmp_path / "pred.jsonl"
        write_predictions(path, outcomes)
        assert read_predictions(path) == outcomes


class TestCheckpoint:
    def test_save_load_identical_logits(self, toy_encoder_dir, tmp_path):
        model = fine_tune(toy_masked(64), quick_config(toy_encoder_dir, epochs=1))
        save_model(model, tmp_path / "ckpt")
        loaded = load_model(tmp_path / "ckpt")
        probe = toy_masked(16, seed=8)
        for a, b in zip(predict_batch(model, probe), predict_batch(loaded, probe)):
            for pa, pb in zip(a.cls_probabilities, b.cls_probabilities):
                assert abs(pa - pb) < 1e-6
            assert a.final_label == b.final_label
        assert loaded.initial_weights_digest == model.initial_weights_digest

    def test_digest_chain_validated(self, toy_encoder_dir, tmp_path):
        model = fine_tune(toy_masked(32), quick_config(toy_encoder_dir, epochs=1))
        out = save_model(model, tmp_path / "ckpt")
        weights = torch.load(out / "head.pt", weights_only=True)
        weights["bias"] = weights["bias"] + 1.0
        torch.save(weights, out / "head.pt")
        with pytest.raises(SchemaError):
            load_model(out)

    def test_not_a_checkpoint(self, tmp_path):
        with pytest.raises(SchemaError):
            load_model(tmp_path)
