"""Issue-tracker mining: fetch issue reports over a REST dialect, adjudicate
security labels from tags, apply inclusion criteria, and persist a balanced
labeled corpus.

Live fetching talks to a GitHub-style REST API with pagination, bounded
retries, and rate-limit handling. A recorded-fixture source replays canned
JSON payloads from a directory so the whole module is testable offline.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import time
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional, Protocol

from .errors import CredentialError, PipelineError, SchemaError, ShortfallError, TransportError
from .labels import NON_SECURITY, SECURITY
from .preprocess import parse_wordlist

LOGGER = logging.getLogger(__name__)

MATCH_EXACT = "exact"
MATCH_SLASH_SEGMENTS = "slash-segments"

# The twelve default security tags: the five core entries, the three
# severity-suffixed scoring tags plus their bare prefix, and the four
# synonym-derived entries (one of which, "risk", is already core).
DEFAULT_SECURITY_TAGS = frozenset({
    "security", "vulnerability", "risk", "cve", "cwe",
    "cvss", "cvss/high", "cvss/medium", "cvss/low",
    "exposure", "secure", "vulnerable",
})

TOKEN_ENV_VARS = ("GITHUB_TOKEN", "ISSUE_TRACKER_TOKEN")

CORPUS_FIELDS = ("id", "repo", "title", "body", "tags", "created_at", "is_pull_request", "label")


@dataclass
class IssueReport:
    """One raw issue report with its tags and adjudicated class label."""

    id: str
    repo: str
    title: str
    body: str
    tags: list[str]
    created_at: str
    is_pull_request: bool = False
    label: Optional[str] = None

    def created_date(self) -> date:
        return date.fromisoformat(self.created_at[:10])

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "repo": self.repo,
            "title": self.title,
            "body": self.body,
            "tags": list(self.tags),
            "created_at": self.created_at,
            "is_pull_request": self.is_pull_request,
            "label": self.label,
        }

    @classmethod
    def from_record(cls, record: dict) -> "IssueReport":
        missing = [f for f in CORPUS_FIELDS if f not in record]
        if missing:
            raise SchemaError(f"corpus record missing fields {missing}")
        return cls(
            id=record["id"],
            repo=record["repo"],
            title=record["title"],
            body=record["body"],
            tags=[t.lower() for t in record["tags"]],
            created_at=record["created_at"],
            is_pull_request=bool(record["is_pull_request"]),
            label=record["label"],
        )


@dataclass(frozen=True)
class SecurityTagSet:
    """The tags whose presence marks an issue as security-related."""

    tags: frozenset[str] = DEFAULT_SECURITY_TAGS
    match_mode: str = MATCH_SLASH_SEGMENTS
    degraded: bool = False

    def __post_init__(self):
        if self.match_mode not in (MATCH_EXACT, MATCH_SLASH_SEGMENTS):
            raise ValueError(f"unknown match mode {self.match_mode!r}")
        object.__setattr__(self, "tags", frozenset(t.lower() for t in self.tags))

    def matches(self, issue_tag: str) -> bool:
        tag = issue_tag.lower()
        if tag in self.tags:
            return True
        if self.match_mode == MATCH_SLASH_SEGMENTS and "/" in tag:
            return any(seg in self.tags for seg in tag.split("/") if seg)
        return False

    def content_hash(self) -> str:
        from .provenance import hash_text

        return hash_text(",".join(sorted(self.tags)) + "|" + self.match_mode)


@dataclass(frozen=True)
class ProjectFilter:
    """Repository-level inclusion thresholds. Disabled by default: the
    pipeline filters at the issue level instead."""

    min_stars: int = 1000
    active_within_days: int = 365
    exclude_forks: bool = True
    min_commits: int = 300
    min_contributors: int = 50
    min_merged_prs: int = 1
    enabled: bool = False

    def __post_init__(self):
        for name in ("min_stars", "active_within_days", "min_commits",
                     "min_contributors", "min_merged_prs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def accepts(self, profile: dict, today: Optional[date] = None) -> bool:
        if not self.enabled:
            return True
        today = today or datetime.now(timezone.utc).date()
        if profile.get("stars", 0) < self.min_stars:
            return False
        if self.exclude_forks and profile.get("fork", False):
            return False
        pushed = profile.get("pushed_at")
        if pushed:
            pushed_date = date.fromisoformat(str(pushed)[:10])
            if (today - pushed_date) > timedelta(days=self.active_within_days):
                return False
        if profile.get("commits", 0) < self.min_commits:
            return False
        if profile.get("contributors", 0) < self.min_contributors:
            return False
        if profile.get("merged_prs", 0) < self.min_merged_prs:
            return False
        return True


@dataclass(frozen=True)
class IssueFilter:
    """Issue-level inclusion criteria."""

    window_start: str = "2022-01-01"
    window_end: str = "2024-03-01"
    require_nonempty: bool = True
    exclude_prs: bool = True

    def accepts(self, issue: IssueReport) -> bool:
        if self.exclude_prs and issue.is_pull_request:
            return False
        if self.require_nonempty and (not issue.title.strip() or not issue.body.strip()):
            return False
        try:
            created = issue.created_date()
        except ValueError:
            return False
        if not (date.fromisoformat(self.window_start) <= created <= date.fromisoformat(self.window_end)):
            return False
        return True


def adjudicate_label(issue: IssueReport, tag_set: SecurityTagSet) -> str:
    """Security iff any issue tag matches the tag set; total over valid issues."""
    return SECURITY if any(tag_set.matches(t) for t in issue.tags) else NON_SECURITY


class SynonymDB(Protocol):
    def synonyms(self, term: str) -> set[str]: ...


class FileSynonymDB:
    """Synonym lookups backed by a JSON map of term -> [synonyms]."""

    def __init__(self, path: Optional[str | Path] = None):
        if path is None:
            text = resources.files("masktriage.data").joinpath("synonyms.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        table = json.loads(text)
        self._table = {
            k.lower(): {s.lower() for s in v}
            for k, v in table.items()
            if not k.startswith("_")
        }

    def synonyms(self, term: str) -> set[str]:
        return set(self._table.get(term.lower(), set()))


def expand_tagset(
    core_tags: Iterable[str],
    synonym_db: Optional[SynonymDB],
    allow_list: Iterable[str] = (),
    deny_list: Iterable[str] = (),
    match_mode: str = MATCH_SLASH_SEGMENTS,
) -> SecurityTagSet:
    """Grow the core tag set with vetted synonyms.

    Returns core + (synonyms-of-core intersected with the allow list) minus
    the deny list. The allow/deny files stand in for manual vetting of the
    candidates. A missing synonym database degrades to core + allow with the
    result flagged.
    """
    core = {t.lower() for t in core_tags}
    if not core:
        raise ValueError("core tag set must be nonempty")
    allow = {t.lower() for t in allow_list}
    deny = {t.lower() for t in deny_list}
    if allow & deny:
        raise ValueError(f"allow and deny lists overlap: {sorted(allow & deny)}")

    if synonym_db is None:
        LOGGER.warning("synonym database unavailable; tag set degraded to core + allow list")
        return SecurityTagSet(tags=frozenset((core | allow) - deny),
                              match_mode=match_mode, degraded=True)

    candidates: set[str] = set()
    for term in sorted(core):
        candidates |= synonym_db.synonyms(term)
    expanded = (core | (candidates & allow)) - deny
    return SecurityTagSet(tags=frozenset(expanded), match_mode=match_mode)


@dataclass
class LabeledCorpus:
    issues: list[IssueReport]
    class_counts: dict[str, int]
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_issues(cls, issues: list[IssueReport], provenance: Optional[dict] = None) -> "LabeledCorpus":
        ids = [i.id for i in issues]
        if len(ids) != len(set(ids)):
            raise PipelineError("corpus has duplicate issue ids")
        counts: dict[str, int] = {}
        for issue in issues:
            counts[issue.label or "unlabeled"] = counts.get(issue.label or "unlabeled", 0) + 1
        return cls(issues=list(issues), class_counts=counts, provenance=dict(provenance or {}))


def build_balanced_corpus(
    pools: dict[str, list[IssueReport]],
    per_class: int,
    seed: int,
    provenance: Optional[dict] = None,
) -> LabeledCorpus:
    """Seeded uniform sample of exactly `per_class` issues from each pool.

    Pools are canonically ordered by issue id before sampling, so the result
    is invariant under pool permutation for a fixed seed.
    """
    for label, pool in sorted(pools.items()):
        if len(pool) < per_class:
            raise ShortfallError(
                f"class {label!r} has {len(pool)} issues, need {per_class}",
                pool=label, available=len(pool), requested=per_class,
            )
    rng = random.Random(seed)
    chosen: list[IssueReport] = []
    for label in sorted(pools):
        ordered = sorted(pools[label], key=lambda i: i.id)
        picked = rng.sample(ordered, per_class)
        chosen.extend(replace(issue, label=label) for issue in sorted(picked, key=lambda i: i.id))
    prov = dict(provenance or {})
    prov.update({"per_class": per_class, "seed": seed})
    return LabeledCorpus.from_issues(chosen, provenance=prov)


def write_corpus(path: str | Path, corpus: LabeledCorpus) -> None:
    """One issue per line, fixed field set; provenance in a sidecar file."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for issue in corpus.issues:
            fh.write(json.dumps(issue.to_record(), ensure_ascii=False) + "\n")
    meta = {"provenance": corpus.provenance, "class_counts": corpus.class_counts}
    Path(str(path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8"
    )


def read_corpus(path: str | Path) -> LabeledCorpus:
    path = Path(path)
    issues = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                issues.append(IssueReport.from_record(json.loads(line)))
    meta_path = Path(str(path) + ".meta.json")
    provenance = {}
    if meta_path.exists():
        provenance = json.loads(meta_path.read_text("utf-8")).get("provenance", {})
    return LabeledCorpus.from_issues(issues, provenance=provenance)


# --- REST plumbing -----------------------------------------------------------

class Transport(Protocol):
    """Minimal HTTP GET abstraction so tests can script responses."""

    def get(self, url: str, params: dict, headers: dict) -> "TransportResponse": ...


@dataclass
class TransportResponse:
    status: int
    headers: dict
    body: object


class RequestsTransport:
    def __init__(self, timeout: float = 30.0):
        import requests

        self._session = requests.Session()
        self._timeout = timeout

    def get(self, url: str, params: dict, headers: dict) -> TransportResponse:
        import requests

        try:
            resp = self._session.get(url, params=params, headers=headers, timeout=self._timeout)
        except requests.RequestException as exc:
            raise ConnectionError(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        return TransportResponse(status=resp.status_code, headers=dict(resp.headers), body=body)


def resolve_token(env: Optional[dict] = None) -> str:
    env = env if env is not None else os.environ
    for name in TOKEN_ENV_VARS:
        value = env.get(name, "").strip()
        if value:
            return value
    raise CredentialError(
        f"no API credential found; set one of {', '.join(TOKEN_ENV_VARS)}"
    )


class IssueSource(Protocol):
    """Yields raw issue payload dicts, page by page."""

    def pages(self, repo_query: str, issue_filter: IssueFilter) -> Iterator[list[dict]]: ...

    def repo_profile(self, repo: str) -> dict: ...


class GitHubSource:
    """GitHub REST dialect with pagination, bounded retries, and rate-limit
    header handling. `repo_query` is either "owner/repo" or a search query
    for the issue search endpoint."""

    def __init__(
        self,
        token: Optional[str] = None,
        transport: Optional[Transport] = None,
        api_base: str = "https://api.github.com",
        per_page: int = 100,
        max_retries: int = 3,
        backoff_start: float = 1.0,
        sleep=time.sleep,
    ):
        self.token = token if token is not None else resolve_token()
        self.transport = transport or RequestsTransport()
        self.api_base = api_base.rstrip("/")
        self.per_page = per_page
        self.max_retries = max_retries
        self.backoff_start = backoff_start
        self._sleep = sleep

    def _headers(self) -> dict:
        return {
            "Accept": "application/vnd.github+json",
            "Authorization": f"Bearer {self.token}",
            "User-Agent": "masktriage",
        }

    def _get(self, url: str, params: dict) -> TransportResponse:
        delay = self.backoff_start
        last_error = "no attempt made"
        for attempt in range(self.max_retries):
            try:
                resp = self.transport.get(url, params=params, headers=self._headers())
            except ConnectionError as exc:
                last_error = str(exc)
                if attempt + 1 < self.max_retries:
                    self._sleep(delay)
                    delay *= 2
                continue
            if resp.status == 200:
                return resp
            if resp.status in (401,):
                raise CredentialError("API rejected the credential (HTTP 401)")
            if resp.status in (403, 429) and resp.headers.get("X-RateLimit-Remaining") == "0":
                reset = int(resp.headers.get("X-RateLimit-Reset", "0"))
                wait = max(0, reset - int(time.time())) + 1
                LOGGER.warning("rate limited; sleeping %ss", wait)
                self._sleep(wait)
                continue
            last_error = f"HTTP {resp.status}"
            if attempt + 1 < self.max_retries:
                self._sleep(delay)
                delay *= 2
        raise TransportError(f"request to {url} failed after {self.max_retries} attempts: {last_error}")

    def pages(self, repo_query: str, issue_filter: IssueFilter) -> Iterator[list[dict]]:
        if re.fullmatch(r"[\w.\-]+/[\w.\-]+", repo_query):
            url = f"{self.api_base}/repos/{repo_query}/issues"
            base_params = {"state": "all", "sort": "created", "direction": "desc"}
            extract = lambda body: body
        else:
            url = f"{self.api_base}/search/issues"
            query = f"{repo_query} created:{issue_filter.window_start}..{issue_filter.window_end}"
            base_params = {"q": query, "sort": "created", "order": "desc"}
            extract = lambda body: body.get("items", [])
        page = 1
        while True:
            params = dict(base_params, per_page=self.per_page, page=page)
            resp = self._get(url, params)
            items = extract(resp.body)
            if not isinstance(items, list):
                raise TransportError(f"unexpected payload shape from {url}")
            if not items:
                return
            yield items
            if len(items) < self.per_page:
                return
            page += 1

    def repo_profile(self, repo: str) -> dict:
        resp = self._get(f"{self.api_base}/repos/{repo}", {})
        body = resp.body if isinstance(resp.body, dict) else {}
        return {
            "stars": body.get("stargazers_count", 0),
            "fork": body.get("fork", False),
            "pushed_at": body.get("pushed_at"),
            "commits": body.get("commits", 0),
            "contributors": body.get("contributors", 0),
            "merged_prs": body.get("merged_prs", 0),
        }


class FixtureSource:
    """Replays recorded JSON payloads from a directory, in filename order.

    Each `*.json` file holds one page: either a list of issue objects or a
    search-style object with an `items` array. `repo_profile.json`, when
    present, supplies repository metadata.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise TransportError(f"fixture directory {directory} does not exist")

    def pages(self, repo_query: str, issue_filter: IssueFilter) -> Iterator[list[dict]]:
        for path in sorted(self.directory.glob("*.json")):
            if path.name == "repo_profile.json":
                continue
            body = json.loads(path.read_text("utf-8"))
            items = body.get("items", []) if isinstance(body, dict) else body
            if items:
                yield items

    def repo_profile(self, repo: str) -> dict:
        path = self.directory / "repo_profile.json"
        if path.exists():
            return json.loads(path.read_text("utf-8"))
        return {}


def parse_issue_payload(payload: dict, default_repo: str = "") -> IssueReport:
    repo = default_repo
    repo_url = payload.get("repository_url", "")
    if repo_url:
        repo = "/".join(repo_url.rstrip("/").split("/")[-2:])
    number = payload.get("number")
    issue_id = f"{repo}#{number}" if repo else str(number)
    tags = [
        (lbl.get("name", "") if isinstance(lbl, dict) else str(lbl)).lower()
        for lbl in payload.get("labels", [])
    ]
    return IssueReport(
        id=issue_id,
        repo=repo,
        title=payload.get("title") or "",
        body=payload.get("body") or "",
        tags=[t for t in tags if t],
        created_at=str(payload.get("created_at", ""))[:10],
        is_pull_request="pull_request" in payload,
        label=None,
    )


def fetch_issues(
    repo_query: str,
    issue_filter: IssueFilter,
    tag_set: SecurityTagSet,
    quota: int,
    project_filter: Optional[ProjectFilter] = None,
    source: Optional[IssueSource] = None,
) -> list[IssueReport]:
    """Fetch up to `quota` issues passing every enabled filter, labels adjudicated.

    Paginates until the quota is met or the source is exhausted; duplicate ids
    are dropped and the result is returned in canonical id order.
    """
    if quota <= 0:
        raise ValueError("quota must be positive")
    src = source or GitHubSource()
    project_filter = project_filter or ProjectFilter()

    profile_cache: dict[str, dict] = {}
    seen: dict[str, IssueReport] = {}
    for page in src.pages(repo_query, issue_filter):
        for payload in page:
            issue = parse_issue_payload(payload, default_repo=repo_query if "/" in repo_query else "")
            if not issue_filter.accepts(issue):
                continue
            if project_filter.enabled:
                if issue.repo not in profile_cache:
                    profile_cache[issue.repo] = src.repo_profile(issue.repo)
                if not project_filter.accepts(profile_cache[issue.repo]):
                    continue
            issue.label = adjudicate_label(issue, tag_set)
            if issue.id not in seen:
                seen[issue.id] = issue
            if len(seen) >= quota:
                break
        if len(seen) >= quota:
            break
    return sorted(seen.values(), key=lambda i: i.id)


def load_tag_file(path: str | Path) -> list[str]:
    """Tag / allow / deny list file: one lowercase tag per line, '#' comments."""
    return parse_wordlist(Path(path).read_text("utf-8"))
