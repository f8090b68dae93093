"""Forum dump ingestion into a canonical thread/post model, plus quote removal.

A corpus is an immutable, deterministically ordered collection of posts.
Position 0 of every thread is the product post; later positions are replies.
Reply bodies are cleaned with :func:`remove_quotes` before featurization so
the classifiers never see text the replier merely copied from earlier posts.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

logger = logging.getLogger(__name__)

# Canonical field names; a schema config maps external names onto these.
CANONICAL_FIELDS = ("post_id", "thread_id", "author", "timestamp", "body")

DEFAULT_SCHEMA = {name: name for name in CANONICAL_FIELDS + ("position",)}


class IngestError(Exception):
    """Fatal ingestion failure (unreadable file or zero valid lines)."""


@dataclass(frozen=True)
class Post:
    post_id: str
    thread_id: str
    author: str
    timestamp: int  # UTC epoch seconds
    body: str
    position: int  # 0-based index within thread; 0 = product post

    @property
    def is_product_post(self) -> bool:
        return self.position == 0


@dataclass
class IngestReport:
    total_lines: int = 0
    accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (line_no, reason)
    out_of_order_timestamps: int = 0

    @property
    def rejected_count(self) -> int:
        return len(self.rejected)


@dataclass(frozen=True)
class ForumStats:
    total_threads: int
    total_replies: int
    unique_authors: int
    total_messages: int
    date_range: Optional[tuple[int, int]]  # (min, max) timestamps, None if empty

    def to_dict(self) -> dict:
        return {
            "total_threads": self.total_threads,
            "total_replies": self.total_replies,
            "unique_authors": self.unique_authors,
            "total_messages": self.total_messages,
            "date_range": list(self.date_range) if self.date_range else None,
        }

    def to_table(self) -> str:
        rows = [
            ("Total threads", f"{self.total_threads:,}"),
            ("Total replies", f"{self.total_replies:,}"),
            ("Unique authors", f"{self.unique_authors:,}"),
            ("Total messages", f"{self.total_messages:,}"),
            ("Date range", _format_range(self.date_range)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _format_range(date_range: Optional[tuple[int, int]]) -> str:
    if date_range is None:
        return "-"
    from datetime import datetime, timezone

    lo, hi = (datetime.fromtimestamp(t, tz=timezone.utc) for t in date_range)
    return f"{lo:%m/%Y} - {hi:%m/%Y}"


class Corpus:
    """Immutable post collection, iterated sorted by (thread_id, position)."""

    def __init__(self, forum_name: str, posts: Iterable[Post],
                 ingest_report: IngestReport | None = None):
        self.forum_name = forum_name
        self.posts: tuple[Post, ...] = tuple(
            sorted(posts, key=lambda p: (p.thread_id, p.position))
        )
        self.ingest_report = ingest_report
        self._by_id = {p.post_id: p for p in self.posts}
        self._threads: dict[str, list[Post]] = {}
        for post in self.posts:
            self._threads.setdefault(post.thread_id, []).append(post)
        self.user_index: dict[str, tuple[Post, ...]] = {}
        by_user: dict[str, list[Post]] = {}
        for post in self.posts:
            by_user.setdefault(post.author, []).append(post)
        self.user_index = {u: tuple(ps) for u, ps in sorted(by_user.items())}

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self):
        return iter(self.posts)

    def get(self, post_id: str) -> Optional[Post]:
        return self._by_id.get(post_id)

    def thread(self, thread_id: str) -> tuple[Post, ...]:
        return tuple(self._threads.get(thread_id, ()))

    def thread_ids(self) -> tuple[str, ...]:
        return tuple(self._threads.keys())

    def product_posts(self) -> tuple[Post, ...]:
        return tuple(p for p in self.posts if p.position == 0)

    def replies(self) -> tuple[Post, ...]:
        return tuple(p for p in self.posts if p.position > 0)

    def prior_posts(self, reply: Post) -> tuple[Post, ...]:
        """Posts in the reply's thread with a smaller position."""
        return tuple(p for p in self.thread(reply.thread_id)
                     if p.position < reply.position)


def _coerce_timestamp(value, line_no: int) -> int:
    if isinstance(value, bool):
        raise ValueError(f"line {line_no}: timestamp must be a number")
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, str):
        try:
            return int(float(value))
        except ValueError:
            pass
        from datetime import datetime, timezone

        try:
            dt = datetime.fromisoformat(value)
        except ValueError:
            raise ValueError(f"line {line_no}: unparseable timestamp {value!r}")
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValueError(f"line {line_no}: unparseable timestamp {value!r}")


def load_schema_config(path: str | Path) -> dict[str, str]:
    """Schema config file: JSON object mapping canonical -> source field names."""
    mapping = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(mapping) - set(CANONICAL_FIELDS) - {"position"}
    if unknown:
        raise IngestError(f"schema config maps unknown fields: {sorted(unknown)}")
    schema = dict(DEFAULT_SCHEMA)
    schema.update(mapping)
    return schema


def ingest_records(records: Iterable[tuple[int, dict]], forum_name: str,
                   schema: dict[str, str] | None = None) -> Corpus:
    """Shared ingest core over (line_no, record) pairs; see ingest_jsonl."""
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    report = IngestReport()
    raw: list[tuple[str, str, str, int, str, Optional[int], int]] = []
    for line_no, record in records:
        report.total_lines += 1
        try:
            values = {}
            for canonical in CANONICAL_FIELDS:
                source = schema[canonical]
                if source not in record:
                    raise ValueError(f"line {line_no}: missing field {source!r}")
                values[canonical] = record[source]
            timestamp = _coerce_timestamp(values["timestamp"], line_no)
            position: Optional[int] = None
            if "position" in schema and schema["position"] in record:
                position = int(record[schema["position"]])
            raw.append((
                str(values["post_id"]), str(values["thread_id"]),
                str(values["author"]), timestamp, str(values["body"]),
                position, line_no,
            ))
            report.accepted += 1
        except (ValueError, TypeError) as exc:
            report.rejected.append((line_no, str(exc)))
    if report.total_lines == 0 or report.accepted == 0:
        raise IngestError(
            f"zero valid lines in input ({report.rejected_count} rejected)"
        )

    seen_ids: set[str] = set()
    deduped = []
    for row in raw:
        if row[0] in seen_ids:
            report.rejected.append((row[6], f"duplicate post_id {row[0]!r}"))
            report.accepted -= 1
            continue
        seen_ids.add(row[0])
        deduped.append(row)

    # Canonical positions: dense 0..n-1 per thread, ordered by explicit
    # position when mapped, else by timestamp, input order breaking ties.
    threads: dict[str, list] = {}
    for row in deduped:
        threads.setdefault(row[1], []).append(row)
    posts = []
    for rows in threads.values():
        rows.sort(key=lambda r: (r[5] if r[5] is not None else r[3], r[6]))
        last_ts = None
        for index, row in enumerate(rows):
            if last_ts is not None and row[3] < last_ts:
                report.out_of_order_timestamps += 1
            last_ts = row[3]
            posts.append(Post(post_id=row[0], thread_id=row[1], author=row[2],
                              timestamp=row[3], body=row[4], position=index))
    if report.rejected:
        logger.warning("ingest: rejected %d of %d lines",
                       report.rejected_count, report.total_lines)
    if report.out_of_order_timestamps:
        logger.warning("ingest: %d posts with timestamps out of order within "
                       "their thread", report.out_of_order_timestamps)
    return Corpus(forum_name, posts, ingest_report=report)


def ingest_jsonl(path: str | Path, schema: dict[str, str] | None = None,
                 forum_name: str | None = None) -> Corpus:
    """Ingest a JSON Lines dump (one post object per line).

    Malformed lines are counted and reported on the returned corpus's
    ``ingest_report``; the call is only fatal when the file is unreadable
    or no line at all is valid.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc

    def records():
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("not a JSON object")
            except ValueError as exc:
                record = {"__parse_error__": str(exc)}
            yield line_no, record

    return ingest_records(records(), forum_name or path.stem, schema)


def ingest_csv(path: str | Path, schema: dict[str, str] | None = None,
               forum_name: str | None = None) -> Corpus:
    """Thin CSV adapter over the JSONL ingest core (header row required)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    return ingest_records(((i, row) for i, row in enumerate(rows, start=2)),
                          forum_name or path.stem, schema)


def export_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSONL form; ingest(export(c)) is bit-exact."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for post in corpus.posts:
            handle.write(json.dumps({
                "post_id": post.post_id,
                "thread_id": post.thread_id,
                "author": post.author,
                "timestamp": post.timestamp,
                "body": post.body,
                "position": post.position,
            }, sort_keys=True, ensure_ascii=False) + "\n")


def corpus_stats(corpus: Corpus) -> ForumStats:
    threads = sum(1 for p in corpus.posts if p.position == 0)
    replies = len(corpus.posts) - threads
    authors = len({p.author for p in corpus.posts})
    if corpus.posts:
        times = [p.timestamp for p in corpus.posts]
        date_range: Optional[tuple[int, int]] = (min(times), max(times))
    else:
        date_range = None
    return ForumStats(total_threads=threads, total_replies=replies,
                      unique_authors=authors, total_messages=len(corpus.posts),
                      date_range=date_range)


# ---------------------------------------------------------------------------
# Quote removal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuoteConfig:
    # Shortest normalized substring treated as a quote. 40 chars keeps common
    # short phrases ("thanks, works great") from being deleted.
    min_quote_chars: int = 40
    # Optional per-forum pre-pass (e.g. a BBCode/HTML tag stripper) applied to
    # every body before matching.
    pre_pass: Optional[Callable[[str], str]] = None


def _normalize(text: str) -> str:
    """Collapse runs of whitespace to single spaces and trim."""
    return " ".join(text.split())


def _fold(text: str) -> str:
    """Length-preserving case fold for matching (indices must stay aligned)."""
    out = []
    for ch in text:
        folded = ch.casefold()
        out.append(folded if len(folded) == 1 else ch)
    return "".join(out)


def _match_intervals(reply: str, prior: str, min_len: int) -> list[tuple[int, int]]:
    """Intervals of `reply` covered by substrings of `prior` of length >= min_len.

    For each end position j, the longest common suffix of reply[:j+1] that
    occurs in `prior` covers [j-L+1, j]; the union over j with L >= min_len
    equals the union of all maximal matches of length >= min_len.
    """
    intervals: list[tuple[int, int]] = []
    n = len(reply)
    i = 0
    while i + min_len <= n:
        if reply[i:i + min_len] not in prior:
            i += 1
            continue
        # Binary search the longest match starting at i.
        lo, hi = min_len, n - i
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if reply[i:i + mid] in prior:
                lo = mid
            else:
                hi = mid - 1
        intervals.append((i, i + lo))
        i += 1
    return intervals


def _merge_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(a, b) for a, b in merged]


def remove_quotes(reply: Post, prior_posts_in_thread: list[Post] | tuple[Post, ...],
                  config: QuoteConfig | None = None) -> str:
    """Delete text the reply copied from earlier posts in its thread.

    Matching is on whitespace-normalized, case-folded text; every maximal
    matching run of at least ``min_quote_chars`` characters is removed and
    the survivors are re-joined with single spaces. The pass repeats until
    stable so that deletion seams cannot leave fresh quotes behind (this
    makes the operation idempotent). The result may be empty.
    """
    config = config or QuoteConfig()
    pre = config.pre_pass or (lambda s: s)
    priors = [_fold(_normalize(pre(p.body))) for p in prior_posts_in_thread]
    priors = [p for p in priors if len(p) >= config.min_quote_chars]
    text = _normalize(pre(reply.body))
    if not priors:
        return text

    while True:
        folded = _fold(text)
        intervals = []
        for prior in priors:
            intervals.extend(_match_intervals(folded, prior, config.min_quote_chars))
        if not intervals:
            return text
        keep = []
        cursor = 0
        for start, end in _merge_intervals(intervals):
            if cursor < start:
                keep.append(text[cursor:start])
            cursor = end
        if cursor < len(text):
            keep.append(text[cursor:])
        new_text = _normalize(" ".join(keep))
        if new_text == text:
            return text
        text = new_text
