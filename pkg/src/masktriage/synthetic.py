"""Seeded synthetic issue corpus for end-to-end pipeline checks.

Generates templated raw issues (markdown scaffolding, URLs, code noise) whose
surviving token stream is planned exactly. Class-indicative marker words are
injected only into the longer documents of their own class, so the
degree/frequency keyword scores rank them above the shared filler vocabulary
and the mined lexicon recovers them. Filler words carry a softer
class-conditional distribution: enough aggregate signal to classify a
document, too little for any single filler to act as a shortcut. A
configurable fraction of documents also carries one marker of the opposite
class, which punishes classifiers that lean on visible marker words.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import date, timedelta

from .ingest import IssueReport, LabeledCorpus
from .labels import NON_SECURITY, SECURITY
from .preprocess import Preprocessor

SEC_MARKERS = [
    "exploit", "payload", "malware", "rootkit", "botnet", "backdoor",
    "firewall", "cipher", "intrusion", "breach", "forgery", "spoof",
    "hijack", "ransom", "trojan", "adware", "spyware", "privilege",
    "escalation", "credential", "disclosure", "overflow", "injection",
    "bypass", "tamper", "phish", "keylogger", "honeypot", "sandbox",
    "exfiltration", "cryptography", "plaintext", "keystore", "nonce",
    "entropy", "handshake", "certificate", "revocation", "signature",
    "checksum", "integrity", "authentication", "authorization",
    "vulnerability", "weakness", "mitigation",
]

NON_MARKERS = [
    "button", "layout", "theme", "palette", "widget", "toolbar",
    "sidebar", "tooltip", "dropdown", "checkbox", "slider", "scrollbar",
    "font", "margin", "padding", "icon", "banner", "carousel",
    "breadcrumb", "pagination", "locale", "translation", "currency",
    "calendar", "timezone", "notification", "bookmark", "avatar",
    "profile", "dashboard", "gallery", "thumbnail", "caption",
    "subtitle", "playlist", "shortcut", "gesture", "animation",
    "transition", "gradient", "contrast", "brightness", "opacity",
    "alignment", "wizard", "preview",
]

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z",
           "br", "dr", "gl", "kl", "pl", "pr", "st", "tr", "vr"]
_NUCLEI = ["a", "e", "i", "o", "u"]
_CODAS = ["", "k", "l", "m", "n", "p", "t", "x"]
# Endings the lemmatizer would strip; pseudo-words must be lemma fixpoints.
_BAD_ENDINGS = ("s", "ly", "ing", "ed", "er", "est", "ous", "ful", "ive",
                "able", "ible", "al", "ic", "ies", "ves")


def _pseudo_words(count: int, seed: int) -> list[str]:
    """Deterministic pronounceable filler vocabulary.

    Stands in for project-specific jargon: every word is a lemmatizer
    fixpoint, is no stop word, and collides with no marker."""
    rng = random.Random(seed)
    reserved = set(SEC_MARKERS) | set(NON_MARKERS)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        n_syll = rng.choice((2, 2, 3))
        word = "".join(
            rng.choice(_ONSETS) + rng.choice(_NUCLEI) + (rng.choice(_CODAS) if s == n_syll - 1 else "")
            for s in range(n_syll)
        )
        if word in seen or word in reserved or len(word) < 4:
            continue
        if word.endswith(_BAD_ENDINGS):
            continue
        seen.add(word)
        words.append(word)
    return words


_FILLERS = _pseudo_words(890, seed=7)
SEC_LEAN = _FILLERS[:45]
NON_LEAN = _FILLERS[45:90]
# neutral vocabulary is heavy-tailed: a small head supplies most neutral
# tokens, a long tail of rare types fills the rest, mirroring real issue
# text where random keyword draws land mostly on rare words
NEUTRAL_HEAD = _FILLERS[90:120]
NEUTRAL_TAIL = _FILLERS[120:]
NEUTRAL = NEUTRAL_HEAD + NEUTRAL_TAIL


@dataclass
class SyntheticConfig:
    """Three document tiers per class.

    Standard documents (rich or terse context) carry their own class's
    marker words in plain prose, one unbroken keyword run per document.
    Ambiguity documents carry a few markers of the *opposite* class over
    own-class context, the synthetic analogue of a complex report whose
    surface vocabulary points the wrong way; they are also peppered with the
    connective DELIMITER word, which the keyword miner treats as a stop
    word, so their keyword runs are short. Every marker therefore scores
    the full document length in its own class and a short run length in the
    other, which keeps conflict resolution deterministic without giving the
    classifier any length cue: all documents have the same token count.
    """

    n_issues: int = 1000
    seed: int = 20240101
    rich_rate: float = 0.50
    terse_rate: float = 0.20   # remainder is the ambiguity tier
    doc_len: int = 44
    markers_rich_min: int = 2
    markers_rich_max: int = 3
    markers_terse_min: int = 1
    markers_terse_max: int = 2
    decoys_min: int = 3
    decoys_max: int = 4
    delimiters_min: int = 4
    delimiters_max: int = 5
    rich_lean_in: float = 0.50
    rich_lean_off: float = 0.16
    terse_lean_in: float = 0.28
    terse_lean_off: float = 0.12
    ambiguity_lean_in: float = 0.40
    ambiguity_lean_off: float = 0.14
    repo: str = "synthetic/corpus"
    window_start: str = "2022-01-01"
    window_end: str = "2024-03-01"


# Connective planted in ambiguity documents; the keyword miner excludes it
# as a stop word, so it delimits candidate keyword runs.
DELIMITER = "via"


def _plan_tokens(rng: random.Random, label: str, config: SyntheticConfig,
                 filler_queue: list[str], marker_queue: list[str]) -> list[str]:
    own_markers, other_markers = (
        (SEC_MARKERS, NON_MARKERS) if label == SECURITY else (NON_MARKERS, SEC_MARKERS)
    )
    own_lean, other_lean = (
        (SEC_LEAN, NON_LEAN) if label == SECURITY else (NON_LEAN, SEC_LEAN)
    )
    roll = rng.random()
    length = config.doc_len
    tokens: list[str] = []
    if roll < config.rich_rate:
        lean_in, lean_off = config.rich_lean_in, config.rich_lean_off
        n = rng.randint(config.markers_rich_min, config.markers_rich_max)
        tokens += [rng.choice(own_markers) for _ in range(n)]
    elif roll < config.rich_rate + config.terse_rate:
        lean_in, lean_off = config.terse_lean_in, config.terse_lean_off
        n = rng.randint(config.markers_terse_min, config.markers_terse_max)
        tokens += [rng.choice(own_markers) for _ in range(n)]
    else:
        lean_in, lean_off = config.ambiguity_lean_in, config.ambiguity_lean_off
        tokens += [DELIMITER] * rng.randint(config.delimiters_min, config.delimiters_max)
        # the queue guarantees every marker at least one off-class
        # occurrence inside a delimited (short-run) document
        n = rng.randint(config.decoys_min, config.decoys_max)
        for j in range(n):
            if j == 0 and marker_queue:
                tokens.append(marker_queue.pop())
            else:
                tokens.append(rng.choice(other_markers))
        # plant queued filler types so every filler also occurs in a
        # delimited document of this class, keeping its keyword score below
        # the full-length marker score
        planted = min(10, len(filler_queue), length - len(tokens))
        tokens += [filler_queue.pop() for _ in range(planted)]
    for _ in range(length - len(tokens)):
        draw = rng.random()
        if draw < lean_in:
            tokens.append(rng.choice(own_lean))
        elif draw < lean_in + lean_off:
            tokens.append(rng.choice(other_lean))
        elif rng.random() < 0.7:
            tokens.append(rng.choice(NEUTRAL_HEAD))
        else:
            tokens.append(rng.choice(NEUTRAL_TAIL))
    rng.shuffle(tokens)
    return tokens


def _decorate(rng: random.Random, title_tokens: list[str], body_tokens: list[str]) -> tuple[str, str]:
    """Wrap the planned tokens in markdown noise that preprocessing strips.

    Every decoration either keeps the planned words verbatim (headings,
    checklists) or contributes no surviving token at all (fenced code, hex
    URLs, digit runs, HTML tags)."""
    title = " ".join(title_tokens)
    # leading zero keeps the blob hex-like under the >=1 digit rule
    hex_blob = f"0{rng.randrange(16**7):07x}"
    chunks = [body_tokens[i : i + 8] for i in range(0, len(body_tokens), 8)]
    lines = []
    for j, chunk in enumerate(chunks):
        text = " ".join(chunk)
        if j == 0:
            lines.append(f"## {text}")
        elif j == 1:
            lines.append(f"- [ ] {text}")
        else:
            lines.append(text)
    lines.append("")
    lines.append("```")
    lines.append("x = f(y[2]) + 1;")
    lines.append("```")
    lines.append(f"https://tracker.example/{hex_blob}/17 <br> 4042")
    return title, "\n".join(lines)


def generate_synthetic_corpus(config: SyntheticConfig, validate: bool = True) -> LabeledCorpus:
    """Balanced labeled corpus of templated raw issues.

    With validate=True, each issue is run through the default preprocessing
    pipeline and its surviving token stream is checked against the plan, so
    vocabulary drift fails loudly here instead of downstream.
    """
    if config.n_issues % 2 != 0:
        raise ValueError("n_issues must be even for a balanced corpus")
    rng = random.Random(config.seed)
    start = date.fromisoformat(config.window_start)
    end = date.fromisoformat(config.window_end)
    span = (end - start).days

    pre = Preprocessor() if validate else None
    all_fillers = SEC_LEAN + NON_LEAN + NEUTRAL
    filler_queues = {}
    marker_queues = {}
    for label in (SECURITY, NON_SECURITY):
        queue = list(all_fillers)
        rng.shuffle(queue)
        filler_queues[label] = queue
        other = NON_MARKERS if label == SECURITY else SEC_MARKERS
        mqueue = list(other)
        rng.shuffle(mqueue)
        marker_queues[label] = mqueue

    issues: list[IssueReport] = []
    for i in range(config.n_issues):
        label = SECURITY if i % 2 == 0 else NON_SECURITY
        tokens = _plan_tokens(rng, label, config, filler_queues[label], marker_queues[label])
        title_tokens, body_tokens = tokens[:5], tokens[5:]
        title, body = _decorate(rng, title_tokens, body_tokens)
        created = start + timedelta(days=rng.randrange(span + 1))
        issue = IssueReport(
            id=f"{config.repo}#{i}",
            repo=config.repo,
            title=title,
            body=body,
            tags=["bug", "security"] if label == SECURITY else ["bug", "enhancement"],
            created_at=created.isoformat(),
            is_pull_request=False,
            label=label,
        )
        if pre is not None:
            survived = pre.preprocess(issue.id, issue.title, issue.body).tokens
            if survived != tokens:
                raise AssertionError(
                    f"issue {issue.id}: planned tokens do not survive preprocessing; "
                    f"planned={tokens[:8]}..., survived={survived[:8]}..."
                )
        issues.append(issue)
    provenance = {"generator": "synthetic", "config": dict(config.__dict__)}
    return LabeledCorpus.from_issues(issues, provenance=provenance)
