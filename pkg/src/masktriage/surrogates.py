"""Per-class keyword mining: RAKE scoring, cross-class conflict resolution,
top-k lexicon selection, and random keyword sampling for the masking ablation.

Keywords are single lemmas: multi-word candidate phrases are decomposed into
member words and the degree/frequency word score carries through selection,
because masking downstream operates token-wise.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import SchemaError, ShortfallError
from .labels import LABEL_ORDER, NON_SECURITY, SECURITY


@dataclass
class RakeResult:
    """RAKE output for one class: scored phrases plus the scored-word table."""

    phrases: list[tuple[str, float]]
    word_scores: dict[str, float]

    @property
    def vocabulary(self) -> set[str]:
        return set(self.word_scores)


def rake_extract(docs: Sequence[Sequence[str]], stop_words: Iterable[str]) -> RakeResult:
    """Score keywords for one class of documents.

    Candidate phrases are maximal token runs containing no stop words. Each
    word scores degree/frequency, where every occurrence of the word adds its
    run's length to the degree and one to the frequency. A phrase scores the
    sum of its member word scores. Phrases come back sorted by score
    descending, ties broken lexicographically.
    """
    if not docs:
        raise ValueError("rake_extract needs at least one document")
    stops = set(stop_words)

    runs: list[tuple[str, ...]] = []
    for doc in docs:
        current: list[str] = []
        for token in doc:
            if token in stops:
                if current:
                    runs.append(tuple(current))
                    current = []
            else:
                current.append(token)
        if current:
            runs.append(tuple(current))

    degree: dict[str, float] = {}
    freq: dict[str, int] = {}
    for run in runs:
        for word in run:
            degree[word] = degree.get(word, 0.0) + len(run)
            freq[word] = freq.get(word, 0) + 1

    word_scores = {w: degree[w] / freq[w] for w in degree}

    phrase_scores: dict[str, float] = {}
    for run in set(runs):
        phrase_scores[" ".join(run)] = sum(word_scores[w] for w in run)
    phrases = sorted(phrase_scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return RakeResult(phrases=phrases, word_scores=word_scores)


def resolve_conflicts(
    security: RakeResult, non_security: RakeResult
) -> dict[str, list[tuple[str, float]]]:
    """Make the per-class keyword pools disjoint.

    A keyword scored in both classes goes to the class with the strictly
    higher score; exact ties are discarded from both. Scores pass through
    unchanged. Each returned list is sorted by score descending, ties
    lexicographic.
    """
    sec, non = security.word_scores, non_security.word_scores
    out_sec: dict[str, float] = {}
    out_non: dict[str, float] = {}
    for word, score in sec.items():
        if word in non:
            if score > non[word]:
                out_sec[word] = score
            elif score < non[word]:
                out_non[word] = non[word]
            # equal scores: dropped from both
        else:
            out_sec[word] = score
    for word, score in non.items():
        if word not in sec:
            out_non[word] = score
    order = lambda d: sorted(d.items(), key=lambda kv: (-kv[1], kv[0]))
    return {SECURITY: order(out_sec), NON_SECURITY: order(out_non)}


@dataclass
class LexiconEntry:
    keyword: str
    score: float
    rank: int


@dataclass
class SurrogateLexicon:
    """Ranked per-class keyword lists; the vocabulary masked during training."""

    entries: dict[str, list[LexiconEntry]]
    k: int
    truncated: dict[str, bool] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def keywords(self, label: str) -> set[str]:
        return {e.keyword for e in self.entries.get(label, [])}

    def all_keywords(self) -> set[str]:
        out: set[str] = set()
        for label in self.entries:
            out |= self.keywords(label)
        return out

    def to_dict(self) -> dict:
        doc = {
            label: [
                {"keyword": e.keyword, "score": e.score, "rank": e.rank}
                for e in self.entries.get(label, [])
            ]
            for label in LABEL_ORDER
        }
        doc["k"] = self.k
        doc["truncated"] = dict(self.truncated)
        doc["provenance"] = dict(self.provenance)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SurrogateLexicon":
        try:
            entries = {
                label: [
                    LexiconEntry(keyword=e["keyword"], score=float(e["score"]), rank=int(e["rank"]))
                    for e in doc[label]
                ]
                for label in LABEL_ORDER
            }
            return cls(
                entries=entries,
                k=int(doc["k"]),
                truncated=dict(doc.get("truncated", {})),
                provenance=dict(doc.get("provenance", {})),
            )
        except KeyError as exc:
            raise SchemaError(f"lexicon document missing field {exc}") from exc


def select_top_k(
    disjoint: dict[str, list[tuple[str, float]]],
    k: int,
    allow: Iterable[str] = (),
    deny: Iterable[str] = (),
    provenance: Optional[dict] = None,
) -> SurrogateLexicon:
    """Keep the k best keywords per class after list-based vetting.

    The deny list removes keywords outright; a nonempty allow list restricts
    selection to its members (deny still wins on overlap). Fewer than k
    survivors truncates the class list and sets its warning flag.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    allow_set = {w.lower() for w in allow}
    deny_set = {w.lower() for w in deny}
    entries: dict[str, list[LexiconEntry]] = {}
    truncated: dict[str, bool] = {}
    for label, scored in disjoint.items():
        survivors = [
            (w, s) for w, s in scored
            if w not in deny_set and (not allow_set or w in allow_set)
        ]
        top = survivors[:k]
        entries[label] = [
            LexiconEntry(keyword=w, score=s, rank=i + 1) for i, (w, s) in enumerate(top)
        ]
        truncated[label] = len(top) < k
    return SurrogateLexicon(entries=entries, k=k, truncated=truncated,
                            provenance=dict(provenance or {}))


@dataclass
class RandomKeywordLists:
    """Seeded per-class random keyword sets for the ablation condition:
    mutually exclusive across classes and disjoint from the mined lexicon."""

    keywords: dict[str, set[str]]
    k: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "keywords": {label: sorted(self.keywords.get(label, set())) for label in LABEL_ORDER},
            "k": self.k,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RandomKeywordLists":
        try:
            return cls(
                keywords={label: set(doc["keywords"][label]) for label in LABEL_ORDER},
                k=int(doc["k"]),
                seed=int(doc["seed"]),
            )
        except KeyError as exc:
            raise SchemaError(f"random keyword document missing field {exc}") from exc


def sample_random_keywords(
    vocabulary: dict[str, set[str]],
    lexicon: SurrogateLexicon,
    k: int,
    seed: int,
) -> RandomKeywordLists:
    """Draw k random keywords per class from the scored vocabulary,
    excluding every lexicon keyword and keeping the class sets disjoint."""
    excluded = lexicon.all_keywords()
    rng = random.Random(seed)
    chosen: dict[str, set[str]] = {}
    taken: set[str] = set()
    for label in LABEL_ORDER:
        pool = sorted((vocabulary.get(label, set()) - excluded) - taken)
        if len(pool) < k:
            raise ShortfallError(
                f"class {label!r} has {len(pool)} random-keyword candidates, need {k}",
                pool=label, available=len(pool), requested=k,
            )
        picked = set(rng.sample(pool, k))
        chosen[label] = picked
        taken |= picked
    return RandomKeywordLists(keywords=chosen, k=k, seed=seed)


def write_lexicon(path: str | Path, lexicon: SurrogateLexicon) -> None:
    Path(path).write_text(json.dumps(lexicon.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def read_lexicon(path: str | Path) -> SurrogateLexicon:
    return SurrogateLexicon.from_dict(json.loads(Path(path).read_text("utf-8")))


def write_random_lists(path: str | Path, lists: RandomKeywordLists) -> None:
    Path(path).write_text(json.dumps(lists.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def read_random_lists(path: str | Path) -> RandomKeywordLists:
    return RandomKeywordLists.from_dict(json.loads(Path(path).read_text("utf-8")))
