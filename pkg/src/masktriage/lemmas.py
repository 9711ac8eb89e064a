"""Rule-based part-of-speech tagging and lemmatization.

Ships a deterministic, dictionary-light English lemmatizer so token streams
are reproducible across machines with no model downloads. The tagger is a
coarse four-way classifier (noun / verb / adjective / other) driven by
irregular-form tables, suffix shape, and a one-token context window; the
lemmatizer dispatches suffix-stripping rules on the assigned tag.
"""

from __future__ import annotations

from .errors import BackendUnavailableError

NOUN = "n"
VERB = "v"
ADJ = "a"
OTHER = "o"

# Irregular verb form -> base form. Checked before any suffix rule.
IRREGULAR_VERBS = {
    "am": "be", "is": "be", "are": "be", "was": "be", "were": "be",
    "been": "be", "being": "be",
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do", "doing": "do",
    "goes": "go", "went": "go", "gone": "go", "going": "go",
    "got": "get", "gotten": "get", "getting": "get",
    "made": "make", "making": "make",
    "said": "say", "saying": "say",
    "saw": "see", "seen": "see", "seeing": "see",
    "took": "take", "taken": "take", "taking": "take",
    "came": "come", "coming": "come",
    "ran": "run", "running": "run",
    "found": "find", "finding": "find",
    "gave": "give", "given": "give", "giving": "give",
    "knew": "know", "known": "know", "knowing": "know",
    "thought": "think", "thinking": "think",
    "wrote": "write", "written": "write", "writing": "write",
    "broke": "break", "broken": "break", "breaking": "break",
    "threw": "throw", "thrown": "throw", "throwing": "throw",
    "built": "build", "building": "build",
    "sent": "send", "sending": "send",
    "kept": "keep", "keeping": "keep",
    "left": "leave", "leaving": "leave",
    "felt": "feel", "feeling": "feel",
    "held": "hold", "holding": "hold",
    "meant": "mean", "meaning": "mean",
    "met": "meet", "meeting": "meet",
    "paid": "pay", "paying": "pay",
    "led": "lead", "leading": "lead",
    "lost": "lose", "losing": "lose",
    "ate": "eat", "eaten": "eat",
    "chose": "choose", "chosen": "choose", "choosing": "choose",
    "froze": "freeze", "frozen": "freeze", "freezing": "freeze",
    "hung": "hang", "hanging": "hang",
    "hid": "hide", "hidden": "hide", "hiding": "hide",
    "added": "add", "adding": "add", "adds": "add",
    "set": "set", "setting": "set",
    "put": "put", "putting": "put",
    "let": "let", "letting": "let",
    "cut": "cut", "cutting": "cut",
    "shut": "shut", "shutting": "shut",
    "hit": "hit", "hitting": "hit",
    "ridden": "ride", "rode": "ride",
    "rose": "rise", "risen": "rise", "rising": "rise",
    "fell": "fall", "fallen": "fall", "falling": "fall",
    "became": "become", "becoming": "become",
    "began": "begin", "begun": "begin", "beginning": "begin",
    "caught": "catch", "catching": "catch",
    "bought": "buy", "buying": "buy",
    "brought": "bring", "bringing": "bring",
    "taught": "teach", "teaching": "teach",
    "understood": "understand", "understanding": "understand",
    "read": "read", "reading": "read",
}

# Irregular noun plural -> singular.
IRREGULAR_NOUNS = {
    "men": "man", "women": "woman", "children": "child",
    "feet": "foot", "teeth": "tooth", "mice": "mouse", "geese": "goose",
    "people": "person", "lives": "life", "leaves": "leaf",
    "wolves": "wolf", "shelves": "shelf", "halves": "half", "knives": "knife",
    "indices": "index", "vertices": "vertex", "matrices": "matrix",
    "appendices": "appendix",
    "analyses": "analysis", "crises": "crisis", "theses": "thesis",
    "hypotheses": "hypothesis", "bases": "base",
    "criteria": "criterion", "phenomena": "phenomenon",
    "caches": "cache", "niches": "niche",
    "data": "data", "media": "media", "series": "series",
    "queries": "query", "proxies": "proxy", "dependencies": "dependency",
}

# Words ending in -ing that are ordinary nouns, not gerunds.
ING_NOUNS = frozenset({
    "thing", "something", "anything", "nothing", "everything",
    "string", "substring", "warning", "morning", "evening",
    "spring", "ring", "king", "sibling", "ceiling", "during",
    "timing", "padding", "encoding", "heading",
})

# Singular-looking endings that must never lose a trailing "s".
_NO_STRIP_S = ("ss", "us", "is", "os", "ys")

_DETERMINERS = frozenset({"the", "a", "an", "this", "that", "these", "those",
                          "my", "your", "our", "their", "its", "each", "every"})
_MODALS = frozenset({"to", "will", "would", "can", "could", "should",
                     "must", "may", "might", "shall", "cannot"})

_VOWELS = "aeiou"
_KEEP_DOUBLE = frozenset({"ll", "ss", "zz", "ff", "ee", "oo"})


def _undouble(stem: str) -> str:
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS \
            and stem[-2:] not in _KEEP_DOUBLE:
        return stem[:-1]
    return stem


def _restore_e(stem: str) -> str:
    # Suffix stripping leaves a truncated stem for e-final verbs
    # ("saving" -> "sav"); these shapes reliably want the "e" back.
    if not stem:
        return stem
    last = stem[-1]
    if last in "vucz":
        return stem + "e"
    if len(stem) >= 2 and stem[-2] not in _VOWELS and last in "sg" and stem[-2] != "n":
        return stem + "e"
    return stem


def _verb_lemma(word: str) -> str:
    if word in IRREGULAR_VERBS:
        return IRREGULAR_VERBS[word]
    if word.endswith("ying") and len(word) > 5:
        return word[:-3]
    if word.endswith("ing") and len(word) > 4:
        stem = word[:-3]
        if len(stem) < 2:
            return word
        undoubled = _undouble(stem)
        if undoubled != stem:
            return undoubled
        return _restore_e(stem)
    if word.endswith("ied") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("eed"):
        return word[:-1]
    if word.endswith("ed") and len(word) > 3:
        stem = word[:-2]
        undoubled = _undouble(stem)
        if undoubled != stem:
            return undoubled
        if stem.endswith("e"):
            return stem
        return _restore_e(stem)
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("ses", "xes", "zes", "ches", "shes")) and len(word) > 4:
        return word[:-2]
    if word.endswith("s") and not word.endswith(_NO_STRIP_S) and len(word) > 3:
        return word[:-1]
    return word


def _noun_lemma(word: str) -> str:
    if word in IRREGULAR_NOUNS:
        return IRREGULAR_NOUNS[word]
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("ses", "xes", "zes", "ches", "shes")) and len(word) > 4:
        return word[:-2]
    if word.endswith("s") and not word.endswith(_NO_STRIP_S) and len(word) > 3:
        return word[:-1]
    return word


def _adj_lemma(word: str) -> str:
    if word.endswith("iest") and len(word) > 5:
        return word[:-4] + "y"
    if word.endswith("ier") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("est") and len(word) > 4:
        return _undouble(word[:-3])
    if word.endswith("er") and len(word) > 3:
        return _undouble(word[:-2])
    return word


def tag_tokens(tokens: list[str]) -> list[str]:
    """Assign a coarse POS tag to each token using shape plus one token of left context."""
    tags: list[str] = []
    prev = ""
    for tok in tokens:
        if tok in IRREGULAR_VERBS:
            tag = VERB
        elif tok in IRREGULAR_NOUNS:
            tag = NOUN
        elif tok.endswith("ly"):
            tag = OTHER
        elif tok.endswith("ing") and tok not in ING_NOUNS and len(tok) > 4:
            tag = NOUN if prev in _DETERMINERS else VERB
        elif tok.endswith("ed") and len(tok) > 3:
            tag = VERB
        elif tok.endswith(("ous", "ful", "ive", "able", "ible", "al", "ic")):
            tag = ADJ
        elif tok.endswith(("er", "est")) and prev in _DETERMINERS:
            tag = ADJ
        elif prev in _MODALS:
            tag = VERB
        elif tok.endswith("s") and prev in _DETERMINERS:
            tag = NOUN
        elif tok.endswith("s") and not tok.endswith(_NO_STRIP_S) and prev and prev not in _DETERMINERS:
            # "it crashes", "the app fails": verb-like third person after a
            # non-determiner; both readings strip the same suffix anyway.
            tag = VERB
        else:
            tag = NOUN
        tags.append(tag)
        prev = tok
    return tags


def lemma_for(token: str, tag: str) -> str:
    if tag == VERB:
        return _verb_lemma(token)
    if tag == NOUN:
        return _noun_lemma(token)
    if tag == ADJ:
        return _adj_lemma(token)
    return token


def stable_lemma(token: str, tag: str) -> str:
    """Lemmatize to a fixpoint.

    A single strip can land on another inflected-looking form ("settings" ->
    "setting" -> "set"); iterating keeps the whole pipeline idempotent. The
    first step honors the sequence-assigned tag, later steps re-tag the bare
    token.
    """
    seen = lemma_for(token, tag)
    while True:
        nxt = lemma_for(seen, tag_tokens([seen])[0])
        if nxt == seen:
            return seen
        seen = nxt


class Lemmatizer:
    """POS-aware lemmatizer facade.

    Only the ``builtin`` backend ships with the package; naming any other
    backend fails hard rather than silently degrading.
    """

    def __init__(self, backend: str = "builtin"):
        if backend != "builtin":
            raise BackendUnavailableError(
                f"lemmatizer backend {backend!r} is not available; only 'builtin' ships"
            )
        self.backend = backend

    def lemmatize(self, tokens: list[str]) -> list[str]:
        tags = tag_tokens(tokens)
        return [stable_lemma(tok, tag) for tok, tag in zip(tokens, tags)]
