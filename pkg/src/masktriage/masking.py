"""Keyword masking: replace lexicon occurrences in a token stream with the
[MASK] sentinel and record per-mask pseudo-labels for training.

Masking operates on the lemmatized word stream, before any subword encoding,
so each keyword occurrence yields exactly one mask position and one vote at
inference time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import SchemaError
from .preprocess import PreprocessedIssue
from .surrogates import RandomKeywordLists, SurrogateLexicon

MASK_TOKEN = "[MASK]"
HINT_HAS_MASKS = "has_masks"
HINT_CLS_ONLY = "cls_only"


@dataclass
class MaskedInstance:
    issue_id: str
    tokens: list[str]
    mask_positions: list[int]
    pseudo_labels: list[str]
    truth_label: Optional[str]
    decision_hint: str = HINT_CLS_ONLY
    # Original token per mask position, kept so masking stays reversible.
    masked_tokens: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.mask_positions) != len(self.pseudo_labels):
            raise ValueError("one pseudo-label per mask position required")
        if self.masked_tokens and len(self.masked_tokens) != len(self.mask_positions):
            raise ValueError("one original token per mask position required")
        expected_hint = HINT_HAS_MASKS if self.mask_positions else HINT_CLS_ONLY
        if self.decision_hint != expected_hint:
            raise ValueError(
                f"decision_hint {self.decision_hint!r} inconsistent with "
                f"{len(self.mask_positions)} mask positions"
            )
        positions = set(self.mask_positions)
        for i, tok in enumerate(self.tokens):
            if (tok == MASK_TOKEN) != (i in positions):
                raise ValueError(f"token {i} disagrees with mask positions")

    def unmask(self) -> list[str]:
        """Restore the pre-masking token stream."""
        restored = list(self.tokens)
        for pos, original in zip(self.mask_positions, self.masked_tokens):
            restored[pos] = original
        return restored

    def to_json(self) -> str:
        return json.dumps(
            {
                "issue_id": self.issue_id,
                "tokens": self.tokens,
                "mask_positions": self.mask_positions,
                "pseudo_labels": self.pseudo_labels,
                "truth_label": self.truth_label,
                "decision_hint": self.decision_hint,
                "masked_tokens": self.masked_tokens,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "MaskedInstance":
        obj = json.loads(line)
        try:
            return cls(
                issue_id=obj["issue_id"],
                tokens=list(obj["tokens"]),
                mask_positions=[int(i) for i in obj["mask_positions"]],
                pseudo_labels=list(obj["pseudo_labels"]),
                truth_label=obj["truth_label"],
                decision_hint=obj["decision_hint"],
                masked_tokens=list(obj.get("masked_tokens", [])),
            )
        except KeyError as exc:
            raise SchemaError(f"masked record missing field {exc}") from exc


def _mask_tokens(issue_id: str, tokens: list[str], keyword_set: set[str],
                 pseudo_label: Optional[str], truth_label: Optional[str]) -> MaskedInstance:
    masked: list[str] = []
    positions: list[int] = []
    originals: list[str] = []
    for i, tok in enumerate(tokens):
        if tok in keyword_set:
            masked.append(MASK_TOKEN)
            positions.append(i)
            originals.append(tok)
        else:
            masked.append(tok)
    labels = [pseudo_label] * len(positions) if pseudo_label is not None else [None] * len(positions)
    return MaskedInstance(
        issue_id=issue_id,
        tokens=masked,
        mask_positions=positions,
        pseudo_labels=labels,
        truth_label=truth_label,
        decision_hint=HINT_HAS_MASKS if positions else HINT_CLS_ONLY,
        masked_tokens=originals,
    )


def apply_masks(issue: PreprocessedIssue, lexicon: SurrogateLexicon) -> MaskedInstance:
    """Mask every occurrence of the issue's own-class keywords.

    Each masked position gets the issue's class as its pseudo-label; keywords
    of the other class stay visible. An issue with no occurrence degrades to
    a cls_only instance with its tokens untouched.
    """
    if issue.label is None:
        raise ValueError(f"issue {issue.issue_id} has no label; cannot assign pseudo-labels")
    own = lexicon.keywords(issue.label)
    return _mask_tokens(issue.issue_id, issue.tokens, own, issue.label, issue.label)


def apply_random_masks(issue: PreprocessedIssue, random_lists: RandomKeywordLists) -> MaskedInstance:
    """Same contract as apply_masks with the class's random keyword list."""
    if issue.label is None:
        raise ValueError(f"issue {issue.issue_id} has no label; cannot assign pseudo-labels")
    own = set(random_lists.keywords.get(issue.label, set()))
    return _mask_tokens(issue.issue_id, issue.tokens, own, issue.label, issue.label)


def apply_masks_label_free(issue: PreprocessedIssue,
                           source: SurrogateLexicon | RandomKeywordLists) -> MaskedInstance:
    """Masking that does not consult the class label.

    Occurrences of either class's keywords are masked, as at inference time
    where the true class is unknown; votes at those positions decide the
    label downstream. Pseudo-labels stay unset, so these instances are for
    prediction only. The truth label, when the issue carries one, is kept
    for scoring.
    """
    if isinstance(source, SurrogateLexicon):
        keywords = source.all_keywords()
    else:
        keywords = set().union(*source.keywords.values()) if source.keywords else set()
    return _mask_tokens(issue.issue_id, issue.tokens, keywords, None, issue.label)


def write_masked(path: str | Path, instances: Iterable[MaskedInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")


def read_masked(path: str | Path) -> list[MaskedInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(MaskedInstance.from_json(line))
    return out
