"""Seeded synthetic forum generator with planted supply chains.

Keyword-bag text over pairwise-disjoint per-category vocabularies keeps the
classification tasks separable; user roles are kept disjoint (sellers never
buy, buyers never sell) so that with ground-truth labels the filtered link
set is exactly the planted set. Vouch noise is arranged so the unfiltered
baseline wrongly links through vouching repliers, mirroring the dominant
failure mode on real forums. Realism is a non-goal.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .classify import PRODUCT_CLASSES, ProductCategory, ReplyLabel
from .corpus import Corpus, Post
from .util import write_json

DAY = 86_400
HOUR = 3_600


class SynthConfigError(Exception):
    pass


# Label-discriminative reply wording; the {kw} slot takes a keyword of the
# thread's category so product terms appear in every label equally (and so
# stay non-discriminative for the reply task).
DEFAULT_REPLY_TEMPLATES: dict[str, list[str]] = {
    "buy": [
        "payment sent for the {kw} yesterday",
        "bought this {kw} and it runs fine",
        "purchased two of the {kw} thanks",
        "got my {kw} today already paid",
    ],
    "sell": [
        "selling my own {kw} for less pm me",
        "i can undercut that {kw} with a discount",
        "offering a similar {kw} cheap this week",
    ],
    "other": [
        "vouch this vendor is legit got nothing but respect",
        "can confirm the {kw} guy is trusted",
        "how exactly does the {kw} setup operate",
        "bump for a reliable {kw} vendor",
    ],
}


@dataclass
class SynthConfig:
    seed: int = 42
    docs_per_category: int = 40
    n_users: int = 400
    planted_chains: list[tuple[str, str, int]] = field(default_factory=list)
    vouch_reply_rate: float = 1.0  # mean vouch replies per thread
    buy_reply_rate: float = 0.6  # mean extra buy replies per regular thread
    sell_reply_rate: float = 0.3
    other_post_rate: float = 0.0  # extra `other` threads atop the uniform budget
    quote_reply_rate: float = 0.2  # chance a reply quotes the product post
    time_jitter: int = HOUR
    start_epoch: int = 1_230_768_000  # 2009-01-01 UTC
    span_months: int = 24
    keywords_per_category: int = 24
    words_per_post: tuple[int, int] = (10, 16)
    keyword_vocabularies: Optional[dict[str, list[str]]] = None
    reply_templates: Optional[dict[str, list[str]]] = None

    def validate(self) -> None:
        if self.docs_per_category < 1:
            raise SynthConfigError("docs_per_category must be >= 1")
        if self.span_months < 2:
            raise SynthConfigError("span_months must be >= 2")
        needed: dict[str, int] = {}
        for src, dst, count in self.planted_chains:
            for cat in (src, dst):
                if cat not in PRODUCT_CLASSES or cat == ProductCategory.OTHER.value:
                    raise SynthConfigError(
                        f"planted chain category {cat!r} is not a plantable "
                        f"product category")
            if count < 0:
                raise SynthConfigError("planted chain count must be >= 0")
            needed[src] = needed.get(src, 0) + count
            needed[dst] = needed.get(dst, 0) + count
        for cat, n in needed.items():
            if n > self.docs_per_category:
                raise SynthConfigError(
                    f"planted chains need {n} {cat} threads but only "
                    f"{self.docs_per_category} are budgeted")
        total_planted = sum(c for _, _, c in self.planted_chains)
        if self.n_users < 2 * total_planted + 3:
            raise SynthConfigError(
                f"n_users={self.n_users} too small for {total_planted} planted "
                f"chains (need >= {2 * total_planted + 3})")
        if self.keyword_vocabularies is not None:
            seen: set[str] = set()
            for cat, words in self.keyword_vocabularies.items():
                overlap = seen & set(words)
                if overlap:
                    raise SynthConfigError(
                        f"keyword vocabularies are not disjoint: {sorted(overlap)[:3]}")
                seen |= set(words)


@dataclass(frozen=True)
class PlantedLink:
    middle_user: str
    src_category: str
    dst_category: str
    purchase_reply: str
    sale_reply: str
    purchase_time: int
    sale_time: int

    def to_dict(self) -> dict:
        return {
            "middle_user": self.middle_user,
            "src_category": self.src_category,
            "dst_category": self.dst_category,
            "purchase_reply": self.purchase_reply,
            "sale_reply": self.sale_reply,
            "purchase_time": self.purchase_time,
            "sale_time": self.sale_time,
        }


@dataclass
class GroundTruth:
    post_categories: dict[str, str]  # product post id -> category
    reply_labels: dict[str, str]  # reply id -> buy/sell/other
    planted_links: list[PlantedLink]
    declared_stats: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "post_categories": self.post_categories,
            "reply_labels": self.reply_labels,
            "planted_links": [pl.to_dict() for pl in self.planted_links],
            "declared_stats": self.declared_stats,
        }


def _make_word(rng: random.Random, taken: set[str]) -> str:
    while True:
        length = rng.randint(5, 9)
        word = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz")
                       for _ in range(length))
        if word not in taken:
            taken.add(word)
            return word


def default_vocabularies(seed: int, keywords_per_category: int) -> dict[str, list[str]]:
    """Pairwise-disjoint pseudo-word vocabularies, one per product category."""
    rng = random.Random(f"{seed}/vocab")
    taken: set[str] = set()
    return {cat: [_make_word(rng, taken) for _ in range(keywords_per_category)]
            for cat in PRODUCT_CLASSES}


class _Generator:
    def __init__(self, config: SynthConfig):
        config.validate()
        self.config = config
        self.rng = random.Random(config.seed)
        self.vocab = config.keyword_vocabularies or default_vocabularies(
            config.seed, config.keywords_per_category)
        self.templates = config.reply_templates or DEFAULT_REPLY_TEMPLATES
        self.end_epoch = config.start_epoch + config.span_months * 30 * DAY
        self.posts: list[Post] = []
        self.post_categories: dict[str, str] = {}
        self.reply_labels: dict[str, str] = {}
        self.planted: list[PlantedLink] = []
        self._thread_seq = 0
        self._reply_seq: dict[str, int] = {}
        self._thread_replies: dict[str, list[tuple[str, str, int, str]]] = {}
        self._thread_meta: dict[str, tuple[str, str, int, str]] = {}

    # -- users ---------------------------------------------------------
    def _user_pools(self):
        total_planted = sum(c for _, _, c in self.config.planted_chains)
        users = [f"u{i:05d}" for i in range(self.config.n_users)]
        middles = users[:total_planted]
        terminals = users[total_planted:2 * total_planted]
        rest = users[2 * total_planted:]
        n_sellers = max(1, len(rest) // 2)
        n_buyers = max(1, (len(rest) - n_sellers) // 2)
        sellers = rest[:n_sellers]
        buyers = rest[n_sellers:n_sellers + n_buyers]
        vouchers = rest[n_sellers + n_buyers:] or rest[-1:]
        return middles, terminals, sellers, buyers, vouchers

    # -- text ----------------------------------------------------------
    def _product_body(self, category: str) -> str:
        lo, hi = self.config.words_per_post
        n_words = self.rng.randint(lo, hi)
        words = [self.rng.choice(self.vocab[category]) for _ in range(n_words)]
        body = " ".join(words)
        while len(body) < 48:  # keep bodies quotable (>= min_quote_chars)
            body += " " + self.rng.choice(self.vocab[category])
        return body

    def _reply_body(self, label: str, category: str, product_body: str) -> str:
        template = self.rng.choice(self.templates[label])
        text = template.format(kw=self.rng.choice(self.vocab[category]))
        if self.rng.random() < self.config.quote_reply_rate:
            text = product_body + " " + text
        return text

    # -- post emission -------------------------------------------------
    def _new_thread(self, category: str, author: str, timestamp: int) -> str:
        self._thread_seq += 1
        thread_id = f"t{self._thread_seq:05d}"
        post_id = thread_id
        body = self._product_body(category)
        self._thread_meta[thread_id] = (category, author, timestamp, body)
        self._thread_replies[thread_id] = []
        self.posts.append(Post(post_id=post_id, thread_id=thread_id,
                               author=author, timestamp=timestamp, body=body,
                               position=0))
        self.post_categories[post_id] = category
        return thread_id

    def _add_reply(self, thread_id: str, author: str, label: str,
                   timestamp: int) -> str:
        category, _, thread_time, product_body = self._thread_meta[thread_id]
        timestamp = max(timestamp, thread_time + 60)
        self._reply_seq[thread_id] = self._reply_seq.get(thread_id, 0) + 1
        post_id = f"{thread_id}-r{self._reply_seq[thread_id]:02d}"
        body = self._reply_body(label, category, product_body)
        self._thread_replies[thread_id].append((post_id, author, timestamp, body))
        self.reply_labels[post_id] = label
        return post_id

    def _count(self, rate: float) -> int:
        whole = int(rate)
        return whole + (1 if self.rng.random() < rate - whole else 0)

    def _jitter(self) -> int:
        if self.config.time_jitter <= 0:
            return 0
        return self.rng.randint(0, self.config.time_jitter)

    # -- main ----------------------------------------------------------
    def run(self) -> tuple[Corpus, GroundTruth]:
        config = self.config
        middles, terminals, sellers, buyers, vouchers = self._user_pools()

        budget = {cat: config.docs_per_category for cat in PRODUCT_CLASSES}
        budget[ProductCategory.OTHER.value] += int(
            config.other_post_rate * config.docs_per_category
            * (len(PRODUCT_CLASSES) - 1))

        # Planted chains first: seller S -> middle X (buy on a src thread),
        # then X authors a dst thread bought from by terminal Z.
        plant_index = 0
        for src, dst, count in config.planted_chains:
            for _ in range(count):
                middle = middles[plant_index]
                terminal = terminals[plant_index]
                plant_index += 1
                seller = self.rng.choice(sellers)
                base = self.rng.randint(config.start_epoch,
                                        self.end_epoch - 40 * DAY)
                src_thread = self._new_thread(src, seller, base)
                t_purchase = base + self.rng.randint(1, 5) * DAY + self._jitter()
                purchase_reply = self._add_reply(src_thread, middle, "buy",
                                                 t_purchase)
                t_dst_thread = t_purchase + self.rng.randint(2, 10) * DAY \
                    + self._jitter()
                dst_thread = self._new_thread(dst, middle, t_dst_thread)
                t_sale = t_dst_thread + self.rng.randint(1, 5) * DAY \
                    + self._jitter()
                sale_reply = self._add_reply(dst_thread, terminal, "buy", t_sale)
                for _ in range(self._count(config.vouch_reply_rate)):
                    self._add_reply(dst_thread, self.rng.choice(vouchers),
                                    "other",
                                    t_dst_thread + self.rng.randint(1, 20 * DAY))
                budget[src] -= 1
                budget[dst] -= 1
                self.planted.append(PlantedLink(
                    middle_user=middle, src_category=src, dst_category=dst,
                    purchase_reply=purchase_reply, sale_reply=sale_reply,
                    purchase_time=t_purchase, sale_time=t_sale))

        # Regular threads fill the remaining per-category budget.
        author_pool = sellers + vouchers
        for cat in PRODUCT_CLASSES:
            for _ in range(budget[cat]):
                author = self.rng.choice(author_pool)
                timestamp = self.rng.randint(config.start_epoch, self.end_epoch)
                thread_id = self._new_thread(cat, author, timestamp)
                for _ in range(self._count(config.buy_reply_rate)):
                    buyer = self.rng.choice(buyers)
                    self._add_reply(thread_id, buyer, "buy",
                                    timestamp + self.rng.randint(HOUR, 20 * DAY))
                for _ in range(self._count(config.sell_reply_rate)):
                    self._add_reply(thread_id, self.rng.choice(vouchers), "sell",
                                    timestamp + self.rng.randint(HOUR, 20 * DAY))
                for _ in range(self._count(config.vouch_reply_rate)):
                    voucher = self.rng.choice(vouchers)
                    if voucher == author:
                        continue
                    self._add_reply(thread_id, voucher, "other",
                                    timestamp + self.rng.randint(HOUR, 20 * DAY))

        if config.vouch_reply_rate > 0:
            self._ensure_baseline_noise(vouchers)

        # Replies take thread positions in chronological order.
        for thread_id, replies in self._thread_replies.items():
            replies.sort(key=lambda r: (r[2], r[0]))
            for position, (post_id, author, timestamp, body) in enumerate(
                    replies, start=1):
                self.posts.append(Post(post_id=post_id, thread_id=thread_id,
                                       author=author, timestamp=timestamp,
                                       body=body, position=position))

        corpus = Corpus(f"synthetic-{config.seed}", self.posts)
        n_threads = len(self._thread_meta)
        n_replies = len(self.posts) - n_threads
        truth = GroundTruth(
            post_categories=self.post_categories,
            reply_labels=self.reply_labels,
            planted_links=sorted(self.planted,
                                 key=lambda p: (p.middle_user, p.purchase_reply)),
            declared_stats={
                "total_threads": n_threads,
                "total_replies": n_replies,
                "total_messages": len(self.posts),
                "unique_authors": len({p.author for p in self.posts}),
            })
        return corpus, truth

    def _ensure_baseline_noise(self, vouchers: Sequence[str]) -> None:
        """Guarantee at least one baseline-only (vouch-made) link pattern:
        a non-other thread author who earlier vouched on another non-other
        thread and whose own thread has a later reply."""
        non_other = sorted(
            (tid for tid, meta in self._thread_meta.items()
             if meta[0] != ProductCategory.OTHER.value),
            key=lambda tid: self._thread_meta[tid][2])
        if len(non_other) < 2:
            return
        for own in reversed(non_other):
            category, author, own_time, _ = self._thread_meta[own]
            for target in non_other:
                t_cat, t_author, t_time, _ = self._thread_meta[target]
                if target == own or t_author == author:
                    continue
                if t_time + HOUR < own_time:
                    self._add_reply(target, author, "other", t_time + HOUR)
                    replies = self._thread_replies[own]
                    if not any(ts > own_time for _, _, ts, _ in replies):
                        voucher = next((v for v in vouchers if v != author),
                                       None)
                        if voucher is None:
                            return
                        self._add_reply(own, voucher, "other", own_time + HOUR)
                    return
        return


def generate(config: SynthConfig) -> tuple[Corpus, GroundTruth]:
    """Deterministic synthetic corpus + ground truth for the given config."""
    return _Generator(config).run()


def write_outputs(corpus: Corpus, truth: GroundTruth, out_dir: str | Path) -> None:
    """corpus.jsonl in ingest format plus truth.json and per-task label maps."""
    from .corpus import export_jsonl

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_jsonl(corpus, out / "corpus.jsonl")
    write_json(out / "truth.json", truth.to_dict())
    write_json(out / "product_labels.json", truth.post_categories)
    write_json(out / "reply_labels.json", truth.reply_labels)


def load_synth_config(path: str | Path) -> SynthConfig:
    """Read a [synth] table from TOML; missing keys take the defaults."""
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - version dependent
        import tomli as tomllib
    with Path(path).open("rb") as handle:
        payload = tomllib.load(handle)
    section = payload.get("synth", payload)
    kwargs = {}
    for name in ("seed", "docs_per_category", "n_users", "vouch_reply_rate",
                 "buy_reply_rate", "sell_reply_rate", "other_post_rate",
                 "quote_reply_rate", "time_jitter", "start_epoch",
                 "span_months", "keywords_per_category"):
        if name in section:
            kwargs[name] = section[name]
    if "words_per_post" in section:
        kwargs["words_per_post"] = tuple(section["words_per_post"])
    if "planted_chains" in section:
        kwargs["planted_chains"] = [
            (str(src), str(dst), int(count))
            for src, dst, count in section["planted_chains"]]
    if "keyword_vocabularies" in section:
        kwargs["keyword_vocabularies"] = {
            str(k): [str(w) for w in v]
            for k, v in section["keyword_vocabularies"].items()}
    if "reply_templates" in section:
        kwargs["reply_templates"] = {
            str(k): [str(t) for t in v]
            for k, v in section["reply_templates"].items()}
    return SynthConfig(**kwargs)
