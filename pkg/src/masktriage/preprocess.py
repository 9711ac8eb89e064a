"""Four-stage text preprocessing: structure stripping, normalization,
non-natural-language filtering, and POS-aware lemmatization.

Raw issue text goes in, a lowercase lemma stream comes out. Every stage is a
pure function; the `Preprocessor` wires them together with a versioned
stop-word list so the same input always yields the same token stream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .errors import SchemaError
from .lemmas import Lemmatizer

_FENCE_RE = re.compile(r"^\s*(```|~~~)")
_HTML_TAG_RE = re.compile(r"<!--.*?-->|</?[a-zA-Z][^>\n]*>", re.DOTALL)
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_PATH_RE = re.compile(
    r"(?:(?<=\s)|^)"
    r"(?:~?/[\w.\-~/]+"          # absolute or home-rooted unix path
    r"|\.{1,2}/[\w.\-~/]+"       # relative ./ or ../ path
    r"|[A-Za-z]:\\[\w.\-\\]+"    # windows drive path
    r"|[\w.\-]+(?:/[\w.\-]+){2,}"  # bare a/b/c chains
    r")"
)
_HEADING_RE = re.compile(r"^\s{0,3}#{1,6}\s*")
_BULLET_RE = re.compile(r"^\s*(?:[-*+]|\d+[.)])\s+")
_CHECKBOX_RE = re.compile(r"\[[ xX]\]\s*")
_BLOCKQUOTE_RE = re.compile(r"^\s*>+\s?")
_EMPHASIS_RE = re.compile(r"[*_]{1,3}(?=\S)|(?<=\S)[*_]{1,3}")
_NORMALIZE_KEEP_RE = re.compile(r"[^a-z0-9\n-]")

# Tokens that flag a span as stack-trace or log output once the text has
# been normalized down to bare words.
_TRACE_TOKENS = frozenset({
    "at", "trace", "stack", "stacktrace", "backtrace", "traceback",
    "exception", "segfault", "sigsegv", "sigabrt", "errno", "panic",
    "java", "lang", "org", "com", "cpp", "py", "thread", "caused",
    "assertion", "fatal", "debug", "stderr", "stdout", "npe",
})
_TIMESTAMP_RE = re.compile(
    r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}|\d{2}:\d{2}:\d{2}[.,]\d+|^\[\d+"
)


def is_hex_like(token: str) -> bool:
    """Hex-blob heuristic: length >= 6, all hex digits, at least one numeral."""
    t = token.lower()
    if len(t) < 6:
        return False
    if not all(c in "0123456789abcdef" for c in t):
        return False
    return any(c.isdigit() for c in t)


def _url_replacement(match: re.Match) -> str:
    # Keep dictionary-like path words, drop the scheme, the host, and any
    # hex-like blob segments.
    url = match.group(0)
    rest = re.sub(r"^(?:https?://|www\.)", "", url, flags=re.IGNORECASE)
    parts = re.split(r"[/?&=#]+", rest)
    kept: list[str] = []
    for part in parts[1:]:  # parts[0] is the host
        for word in re.split(r"[^0-9a-zA-Z]+", part):
            if word and not is_hex_like(word):
                kept.append(word)
    return " ".join(kept)


def strip_structure(raw: str) -> str:
    """Remove markup scaffolding while keeping the prose.

    Drops fenced code blocks, HTML tags, heading and list markers, checkbox
    markers, filesystem paths, and raw URLs (URL path words survive unless
    they look like hex blobs). Lines in the same paragraph are joined with a
    single space; blank lines separate paragraphs in the output.
    """
    if not raw:
        return ""
    lines: list[str] = []
    in_fence = False
    for line in raw.splitlines():
        if _FENCE_RE.match(line):
            in_fence = not in_fence
            continue
        if in_fence:
            continue
        lines.append(line)

    text = "\n".join(lines)
    text = _HTML_TAG_RE.sub(" ", text)
    text = _URL_RE.sub(_url_replacement, text)
    text = _PATH_RE.sub(" ", text)

    paragraphs: list[str] = []
    current: list[str] = []
    for line in text.splitlines():
        line = _HEADING_RE.sub("", line)
        line = _BLOCKQUOTE_RE.sub("", line)
        line = _BULLET_RE.sub("", line)
        line = _CHECKBOX_RE.sub("", line)
        line = _EMPHASIS_RE.sub("", line)
        line = line.replace("|", " ").replace("`", " ")
        line = " ".join(line.split())
        if line:
            current.append(line)
        elif current:
            paragraphs.append(" ".join(current))
            current = []
    if current:
        paragraphs.append(" ".join(current))
    return "\n".join(paragraphs)


def normalize(text: str) -> str:
    """Lowercase and reduce to clean word tokens.

    Punctuation splits tokens, digit-bearing tokens disappear entirely,
    single-character leftovers are dropped, and runs of whitespace collapse.
    Paragraph boundaries (newlines) survive for the next stage.
    """
    if not text:
        return ""
    lowered = text.lower()
    spaced = _NORMALIZE_KEEP_RE.sub(" ", lowered)
    out_lines: list[str] = []
    for line in spaced.split("\n"):
        kept: list[str] = []
        for token in line.split():
            if any(c.isdigit() for c in token):
                continue
            token = re.sub(r"-{2,}", "-", token).strip("-")
            if len(token) < 2:
                continue
            kept.append(token)
        if kept:
            out_lines.append(" ".join(kept))
    return "\n".join(out_lines)


def _symbol_density(line: str) -> float:
    visible = [c for c in line if not c.isspace()]
    if not visible:
        return 0.0
    noisy = sum(1 for c in visible if not c.isalpha())
    return noisy / len(visible)


def _trace_score(line: str) -> float:
    tokens = line.split()
    if not tokens:
        return 0.0
    hits = 0
    for tok in tokens:
        low = tok.lower().strip(".,:;()[]")
        if low in _TRACE_TOKENS or is_hex_like(low):
            hits += 1
        elif len(low) >= 12 and (low.endswith("exception") or low.endswith("error")):
            hits += 1
    return hits / len(tokens)


def filter_non_natural_language(
    text: str,
    symbol_density_threshold: float = 0.30,
    trace_score_threshold: float = 0.50,
) -> str:
    """Drop spans that read as code or log output rather than prose.

    A span (line) goes when its symbol-plus-digit density exceeds the
    threshold, when stack-trace/log vocabulary dominates it, when it carries
    a log timestamp, or when it sits inside a fenced code block.
    """
    if not text:
        return ""
    kept: list[str] = []
    in_fence = False
    for line in text.split("\n"):
        if _FENCE_RE.match(line):
            in_fence = not in_fence
            continue
        if in_fence:
            continue
        if _symbol_density(line) > symbol_density_threshold:
            continue
        if _TIMESTAMP_RE.search(line):
            continue
        if _trace_score(line) >= trace_score_threshold:
            continue
        if line.strip():
            kept.append(line.strip())
    return "\n".join(kept)


def default_stopwords() -> frozenset[str]:
    text = resources.files("masktriage.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(parse_wordlist(text))


def parse_wordlist(text: str) -> list[str]:
    """One lowercase entry per line; '#' starts a comment."""
    words = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.append(line)
    return words


@dataclass
class PreprocessedIssue:
    issue_id: str
    tokens: list[str]
    label: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(
            {"issue_id": self.issue_id, "tokens": self.tokens, "label": self.label},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "PreprocessedIssue":
        obj = json.loads(line)
        try:
            return cls(issue_id=obj["issue_id"], tokens=list(obj["tokens"]), label=obj.get("label"))
        except KeyError as exc:
            raise SchemaError(f"preprocessed record missing field {exc}") from exc


@dataclass
class Preprocessor:
    """The full pipeline: strip -> normalize -> filter -> lemmatize."""

    stop_words: frozenset[str] = field(default_factory=default_stopwords)
    symbol_density_threshold: float = 0.30
    trace_score_threshold: float = 0.50
    lemmatizer: Lemmatizer = field(default_factory=Lemmatizer)

    def lemmatize_and_filter(self, text: str) -> list[str]:
        """Tokenize, lemmatize each token POS-aware, and drop stop words.

        Stop words are discarded both before and after lemmatization so that
        inflected forms whose lemma is a stop word ("were" -> "be") cannot
        leak through. Output tokens honor the stream invariants: length >= 2,
        lowercase letters plus internal hyphens only.
        """
        tokens = [t for t in text.split() if t not in self.stop_words]
        out: list[str] = []
        for lemma in self.lemmatizer.lemmatize(tokens):
            if lemma in self.stop_words:
                continue
            if len(lemma) < 2 or not re.fullmatch(r"[a-z]+(?:-[a-z]+)*", lemma):
                continue
            out.append(lemma)
        return out

    def tokens_from_raw(self, raw: str) -> list[str]:
        stripped = strip_structure(raw)
        normalized = normalize(stripped)
        filtered = filter_non_natural_language(
            normalized, self.symbol_density_threshold, self.trace_score_threshold
        )
        return self.lemmatize_and_filter(filtered)

    def preprocess(self, issue_id: str, title: str, body: str,
                   label: Optional[str] = None) -> PreprocessedIssue:
        # Title and body are joined with one space and processed as a unit.
        raw = f"{title} {body}" if title and body else (title or body)
        return PreprocessedIssue(issue_id=issue_id, tokens=self.tokens_from_raw(raw), label=label)


def preprocess_corpus(issues: Iterable, preprocessor: Optional[Preprocessor] = None) -> list[PreprocessedIssue]:
    pre = preprocessor or Preprocessor()
    return [pre.preprocess(i.id, i.title, i.body, i.label) for i in issues]


def write_preprocessed(path: str | Path, items: Iterable[PreprocessedIssue]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(item.to_json() + "\n")


def read_preprocessed(path: str | Path) -> list[PreprocessedIssue]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(PreprocessedIssue.from_json(line))
    return out
