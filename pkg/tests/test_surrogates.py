import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masktriage.errors import ShortfallError
from masktriage.labels import NON_SECURITY, SECURITY
from masktriage.surrogates import (RakeResult, rake_extract, read_lexicon, read_random_lists,
                                   resolve_conflicts, sample_random_keywords, select_top_k,
                                   write_lexicon, write_random_lists)

STOPS = {"and", "the", "of", "a"}


def brute_force_rake(docs, stops):
    """Independent degree/frequency recount: enumerate runs doc by doc,
    tally every occurrence by hand, then score words and phrases."""
    runs = []
    for doc in docs:
        run = []
        for token in list(doc) + [None]:
            if token is None or token in stops:
                if run:
                    runs.append(tuple(run))
                run = []
            else:
                run.append(token)
    degree, freq = {}, {}
    for run in runs:
        for word in run:
            degree[word] = degree.get(word, 0) + len(run)
            freq[word] = freq.get(word, 0) + 1
    word_scores = {w: degree[w] / freq[w] for w in degree}
    phrase_scores = {}
    for run in set(runs):
        phrase_scores[" ".join(run)] = sum(word_scores[w] for w in run)
    return word_scores, phrase_scores


class TestRakeExtract:
    def test_single_word_doc(self):
        result = rake_extract([["security"]], STOPS)
        assert result.phrases == [("security", 1.0)]
        assert result.word_scores == {"security": 1.0}

    def test_degree_frequency_hand_computed(self):
        # two "buffer overflow" runs split by a stop word: each word has
        # degree 4 over frequency 2, so the phrase scores 4.0
        result = rake_extract([["buffer", "overflow", "and", "buffer", "overflow"]], {"and"})
        assert result.phrases == [("buffer overflow", 4.0)]
        assert result.word_scores == {"buffer": 2.0, "overflow": 2.0}

    def test_empty_doc_list_is_error(self):
        with pytest.raises(ValueError):
            rake_extract([], STOPS)

    def test_all_stop_word_docs_empty_result(self):
        result = rake_extract([["the", "and"], ["of"]], STOPS)
        assert result.phrases == [] and result.word_scores == {}

    def test_scores_non_increasing_and_ties_lexicographic(self):
        result = rake_extract([["alpha", "beta", "the", "gamma"]], STOPS)
        scores = [s for _, s in result.phrases]
        assert scores == sorted(scores, reverse=True)
        equal_pairs = [p for p, s in result.phrases if s == scores[0]]
        assert equal_pairs == sorted(equal_pairs)

    def test_oracle_equivalence_randomized(self):
        rng = random.Random(5)
        vocab = ["buffer", "overflow", "exploit", "ui", "click", "and", "the", "patch"]
        for _ in range(200):
            docs = [
                [rng.choice(vocab) for _ in range(rng.randint(1, 20))]
                for _ in range(rng.randint(1, 4))
            ]
            if all(all(t in STOPS for t in doc) for doc in docs):
                continue
            result = rake_extract(docs, STOPS)
            want_words, want_phrases = brute_force_rake(docs, STOPS)
            assert result.word_scores == want_words
            assert dict(result.phrases) == want_phrases


class TestResolveConflicts:
    def test_higher_score_wins(self):
        sec = RakeResult(phrases=[], word_scores={"token": 8.0})
        non = RakeResult(phrases=[], word_scores={"token": 5.0})
        out = resolve_conflicts(sec, non)
        assert out[SECURITY] == [("token", 8.0)]
        assert out[NON_SECURITY] == []

    def test_exact_ties_discarded(self):
        sec = RakeResult(phrases=[], word_scores={"build": 3.0})
        non = RakeResult(phrases=[], word_scores={"build": 3.0})
        out = resolve_conflicts(sec, non)
        assert out[SECURITY] == [] and out[NON_SECURITY] == []

    def test_single_class_passthrough(self):
        sec = RakeResult(phrases=[], word_scores={"exploit": 4.0})
        non = RakeResult(phrases=[], word_scores={"widget": 2.0})
        out = resolve_conflicts(sec, non)
        assert out[SECURITY] == [("exploit", 4.0)]
        assert out[NON_SECURITY] == [("widget", 2.0)]

    @settings(max_examples=50, deadline=None)
    @given(st.dictionaries(st.sampled_from("abcdefgh"), st.floats(0, 10), max_size=8),
           st.dictionaries(st.sampled_from("abcdefgh"), st.floats(0, 10), max_size=8))
    def test_disjoint_union_no_score_gain(self, sec_scores, non_scores):
        out = resolve_conflicts(RakeResult([], sec_scores), RakeResult([], non_scores))
        sec_words = {w for w, _ in out[SECURITY]}
        non_words = {w for w, _ in out[NON_SECURITY]}
        assert not sec_words & non_words
        assert sec_words | non_words <= set(sec_scores) | set(non_scores)
        for w, s in out[SECURITY]:
            assert s == sec_scores[w]
        for w, s in out[NON_SECURITY]:
            assert s == non_scores[w]


def scored(n, start=100.0):
    return [(f"kw{i:03d}", start - i) for i in range(n)]


class TestSelectTopK:
    def test_selection_arithmetic(self):
        lex = select_top_k({SECURITY: scored(60), NON_SECURITY: scored(55)}, k=50)
        assert len(lex.entries[SECURITY]) == 50
        assert lex.entries[SECURITY][0].rank == 1
        assert lex.entries[SECURITY][0].score == 100.0
        assert not lex.truncated[SECURITY]

    def test_deny_promotes_next_keyword(self):
        lex = select_top_k({SECURITY: scored(10), NON_SECURITY: []}, k=5, deny={"kw000"})
        assert lex.entries[SECURITY][0].keyword == "kw001"
        assert lex.entries[SECURITY][0].rank == 1

    def test_truncation_sets_warning(self):
        lex = select_top_k({SECURITY: scored(30), NON_SECURITY: scored(50)}, k=50)
        assert len(lex.entries[SECURITY]) == 30
        assert lex.truncated[SECURITY]
        assert not lex.truncated[NON_SECURITY]

    def test_nonempty_allow_restricts(self):
        lex = select_top_k({SECURITY: scored(10), NON_SECURITY: []}, k=5,
                           allow={"kw003", "kw007"})
        assert [e.keyword for e in lex.entries[SECURITY]] == ["kw003", "kw007"]

    def test_ranks_contiguous_scores_non_increasing(self):
        lex = select_top_k({SECURITY: scored(20), NON_SECURITY: scored(20)}, k=10)
        for entries in lex.entries.values():
            assert [e.rank for e in entries] == list(range(1, len(entries) + 1))
            scores = [e.score for e in entries]
            assert scores == sorted(scores, reverse=True)

    def test_round_trip(self, tmp_path):
        lex = select_top_k({SECURITY: scored(8), NON_SECURITY: scored(6)}, k=5,
                           provenance={"preprocessed": "abc123"})
        path = tmp_path / "lexicon.json"
        write_lexicon(path, lex)
        assert read_lexicon(path) == lex


class TestRandomKeywords:
    def make_vocab(self, n=120):
        shared = {f"word{i:03d}" for i in range(n)}
        return {SECURITY: set(shared), NON_SECURITY: set(shared)}

    def make_lexicon(self):
        return select_top_k({SECURITY: scored(5), NON_SECURITY: scored(5, start=40.0)}, k=5)

    def test_disjointness_invariants(self):
        lists = sample_random_keywords(self.make_vocab(), self.make_lexicon(), k=50, seed=9)
        sec, non = lists.keywords[SECURITY], lists.keywords[NON_SECURITY]
        assert len(sec) == len(non) == 50
        assert not sec & non
        assert not (sec | non) & self.make_lexicon().all_keywords()

    def test_deterministic(self):
        a = sample_random_keywords(self.make_vocab(), self.make_lexicon(), k=50, seed=4)
        b = sample_random_keywords(self.make_vocab(), self.make_lexicon(), k=50, seed=4)
        assert a == b

    def test_shortfall(self):
        with pytest.raises(ShortfallError):
            sample_random_keywords(self.make_vocab(n=30), self.make_lexicon(), k=50, seed=1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariants_over_seeds(self, seed):
        lex = self.make_lexicon()
        lists = sample_random_keywords(self.make_vocab(), lex, k=20, seed=seed)
        assert not lists.keywords[SECURITY] & lists.keywords[NON_SECURITY]
        assert not (lists.keywords[SECURITY] | lists.keywords[NON_SECURITY]) & lex.all_keywords()

    def test_round_trip(self, tmp_path):
        lists = sample_random_keywords(self.make_vocab(), self.make_lexicon(), k=10, seed=2)
        path = tmp_path / "random.json"
        write_random_lists(path, lists)
        assert read_random_lists(path) == lists
