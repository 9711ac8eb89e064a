import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masktriage.labels import NON_SECURITY, SECURITY
from masktriage.masking import (HINT_CLS_ONLY, HINT_HAS_MASKS, MASK_TOKEN, MaskedInstance,
                                apply_masks, apply_masks_label_free, apply_random_masks,
                                read_masked, write_masked)
from masktriage.preprocess import PreprocessedIssue
from masktriage.surrogates import RandomKeywordLists

from conftest import make_toy_lexicon


def preprocessed(tokens, label=SECURITY, issue_id="x/y#0"):
    return PreprocessedIssue(issue_id=issue_id, tokens=list(tokens), label=label)


LEXICON = make_toy_lexicon()


class TestApplyMasks:
    def test_direct_substitution(self):
        inst = apply_masks(preprocessed(["null", "pointer", "dereference", "exploit"]), LEXICON)
        assert inst.mask_positions == [3]
        assert inst.pseudo_labels == [SECURITY]
        assert inst.tokens == ["null", "pointer", "dereference", MASK_TOKEN]
        assert inst.decision_hint == HINT_HAS_MASKS

    def test_no_hit_degrades_to_cls_only(self):
        inst = apply_masks(preprocessed(["just", "words"]), LEXICON)
        assert inst.mask_positions == []
        assert inst.decision_hint == HINT_CLS_ONLY
        assert inst.tokens == ["just", "words"]

    def test_every_occurrence_masked(self):
        inst = apply_masks(preprocessed(["exploit", "via", "exploit"]), LEXICON)
        assert inst.mask_positions == [0, 2]
        assert inst.pseudo_labels == [SECURITY, SECURITY]

    def test_other_class_keywords_untouched(self):
        inst = apply_masks(preprocessed(["button", "overflow"], label=SECURITY), LEXICON)
        assert inst.tokens == ["button", MASK_TOKEN]

    def test_unlabeled_issue_rejected(self):
        with pytest.raises(ValueError):
            apply_masks(preprocessed(["exploit"], label=None), LEXICON)


class TestApplyRandomMasks:
    LISTS = RandomKeywordLists(
        keywords={SECURITY: {"window", "handle"}, NON_SECURITY: {"panel", "dialog"}},
        k=2, seed=0,
    )

    def test_random_list_position_masked(self):
        inst = apply_random_masks(preprocessed(["open", "window", "now"]), self.LISTS)
        assert inst.mask_positions == [1]
        assert inst.pseudo_labels == [SECURITY]

    def test_disjoint_list_gives_cls_only(self):
        inst = apply_random_masks(preprocessed(["open", "door"]), self.LISTS)
        assert inst.decision_hint == HINT_CLS_ONLY

    def test_disjoint_from_lexicon_masking(self):
        issue = preprocessed(["exploit", "window"])
        surrogate = apply_masks(issue, LEXICON)
        randomized = apply_random_masks(issue, self.LISTS)
        assert not set(surrogate.mask_positions) & set(randomized.mask_positions)


class TestLabelFreeMasking:
    def test_masks_union_of_both_classes(self):
        issue = preprocessed(["button", "overflow", "plain"], label=None)
        inst = apply_masks_label_free(issue, LEXICON)
        assert inst.mask_positions == [0, 1]
        assert inst.pseudo_labels == [None, None]
        assert inst.truth_label is None

    def test_truth_label_carried_when_known(self):
        inst = apply_masks_label_free(preprocessed(["exploit"], label=SECURITY), LEXICON)
        assert inst.truth_label == SECURITY


WORD = st.sampled_from(["exploit", "overflow", "breach", "button", "layout",
                        "theme", "plain", "word", "filler"])


class TestInvariants:
    @settings(max_examples=250, deadline=None)
    @given(st.lists(WORD, max_size=20), st.sampled_from([SECURITY, NON_SECURITY]))
    def test_mask_count_equals_brute_force_and_unmask_restores(self, tokens, label):
        inst = apply_masks(preprocessed(tokens, label=label), LEXICON)
        own = LEXICON.keywords(label)
        assert len(inst.mask_positions) == sum(1 for t in tokens if t in own)
        assert inst.unmask() == tokens
        assert all(p == label for p in inst.pseudo_labels)
        other = LEXICON.keywords(SECURITY if label == NON_SECURITY else NON_SECURITY)
        for i, tok in enumerate(inst.tokens):
            if i not in inst.mask_positions and tok in other:
                assert tok == tokens[i]

    def test_consistency_validation(self):
        with pytest.raises(ValueError):
            MaskedInstance(issue_id="x", tokens=["a"], mask_positions=[0],
                           pseudo_labels=[], truth_label=SECURITY,
                           decision_hint=HINT_HAS_MASKS)
        with pytest.raises(ValueError):
            MaskedInstance(issue_id="x", tokens=["a"], mask_positions=[],
                           pseudo_labels=[], truth_label=SECURITY,
                           decision_hint=HINT_HAS_MASKS)
        with pytest.raises(ValueError):
            MaskedInstance(issue_id="x", tokens=["a", MASK_TOKEN], mask_positions=[0],
                           pseudo_labels=[SECURITY], truth_label=SECURITY,
                           decision_hint=HINT_HAS_MASKS, masked_tokens=["b"])


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = random.Random(1)
        instances = []
        for i in range(40):
            tokens = rng.choices(["exploit", "plain", "button", "word"], k=rng.randint(1, 10))
            label = SECURITY if i % 2 else NON_SECURITY
            instances.append(apply_masks(preprocessed(tokens, label=label, issue_id=f"r#{i}"), LEXICON))
        path = tmp_path / "masked.jsonl"
        write_masked(path, instances)
        assert read_masked(path) == instances
