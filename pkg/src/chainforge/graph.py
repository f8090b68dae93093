"""Directed user-to-user interaction graph built from classified posts.

An edge seller -> buyer means the buyer left a purchase-indicating reply on
the seller's product thread; the reply's timestamp is the purchase time.
Filtered mode uses only buy-labeled replies; baseline mode takes every
reply (the no-reply-classifier comparison), with the other-product filter
applied in both. Replies by the thread author never create edges.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .classify import ProductCategory, ReplyLabel
from .corpus import Corpus

logger = logging.getLogger(__name__)

EDGES_SCHEMA_VERSION = "chainforge-edges/1"

MODE_FILTERED = "filtered"
MODE_BASELINE = "baseline"


class GraphError(Exception):
    pass


@dataclass(frozen=True, order=True)
class InteractionEdge:
    purchase_time: int
    sell_post: str
    buy_reply: str
    seller: str
    buyer: str
    category: str

    def to_dict(self) -> dict:
        return {
            "seller": self.seller, "buyer": self.buyer,
            "category": self.category, "sell_post": self.sell_post,
            "buy_reply": self.buy_reply, "purchase_time": self.purchase_time,
        }

    @classmethod
    def from_dict(cls, record: Mapping) -> "InteractionEdge":
        return cls(purchase_time=int(record["purchase_time"]),
                   sell_post=str(record["sell_post"]),
                   buy_reply=str(record["buy_reply"]),
                   seller=str(record["seller"]), buyer=str(record["buyer"]),
                   category=str(record["category"]))


@dataclass
class InteractionGraph:
    mode: str
    edges: tuple[InteractionEdge, ...]  # sorted by (purchase_time, post ids)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def nodes(self) -> tuple[str, ...]:
        users = {e.seller for e in self.edges} | {e.buyer for e in self.edges}
        return tuple(sorted(users))

    def edges_sold_by(self, user: str) -> tuple[InteractionEdge, ...]:
        return tuple(e for e in self.edges if e.seller == user)

    def edges_bought_by(self, user: str) -> tuple[InteractionEdge, ...]:
        return tuple(e for e in self.edges if e.buyer == user)

    def sellers_to(self) -> dict[str, list[str]]:
        """buyer -> sorted unique sellers (the BFS expansion relation)."""
        incoming: dict[str, set[str]] = {}
        for edge in self.edges:
            incoming.setdefault(edge.buyer, set()).add(edge.seller)
        return {u: sorted(s) for u, s in incoming.items()}

    def category_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for edge in self.edges:
            counts[edge.category] = counts.get(edge.category, 0) + 1
        return dict(sorted(counts.items()))

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "nodes": len(self.nodes),
            "edges": len(self.edges),
            "per_category": self.category_counts(),
            "skipped": dict(sorted(self.skipped.items())),
        }


def _category_value(label) -> str:
    if isinstance(label, ProductCategory):
        return label.value
    return str(label)


def _reply_value(label) -> str:
    if isinstance(label, ReplyLabel):
        return label.value
    return str(label)


def build(corpus: Corpus, product_labels: Mapping[str, object],
          reply_labels: Mapping[str, object],
          mode: str = MODE_FILTERED) -> InteractionGraph:
    """Construct the interaction graph from per-post labels.

    product_labels maps product-post ids to categories; reply_labels maps
    reply ids to buy/sell/other. Labeled replies on threads with missing or
    dangling product posts are skipped and counted, as are replies that
    predate their thread's product post.
    """
    if mode not in (MODE_FILTERED, MODE_BASELINE):
        raise GraphError(f"unknown mode {mode!r}")
    skipped = {
        "unlabeled_product_post": 0,
        "dangling_thread": 0,
        "other_product": 0,
        "self_reply": 0,
        "non_buy_reply": 0,
        "nonchronological_reply": 0,
        "unlabeled_reply": 0,
    }
    edges: list[InteractionEdge] = []
    for reply in corpus.replies():
        thread = corpus.thread(reply.thread_id)
        product_post = thread[0] if thread and thread[0].position == 0 else None
        if product_post is None:
            skipped["dangling_thread"] += 1
            continue
        if product_post.post_id not in product_labels:
            skipped["unlabeled_product_post"] += 1
            continue
        category = _category_value(product_labels[product_post.post_id])
        if category == ProductCategory.OTHER.value:
            skipped["other_product"] += 1
            continue
        if reply.author == product_post.author:
            skipped["self_reply"] += 1
            continue
        if mode == MODE_FILTERED:
            if reply.post_id not in reply_labels:
                skipped["unlabeled_reply"] += 1
                continue
            if _reply_value(reply_labels[reply.post_id]) != ReplyLabel.BUY.value:
                skipped["non_buy_reply"] += 1
                continue
        if reply.timestamp < product_post.timestamp:
            skipped["nonchronological_reply"] += 1
            continue
        edges.append(InteractionEdge(
            purchase_time=reply.timestamp, sell_post=product_post.post_id,
            buy_reply=reply.post_id, seller=product_post.author,
            buyer=reply.author, category=category))
    edges.sort()
    total_skipped = sum(skipped.values())
    if total_skipped:
        logger.info("graph build (%s): %d edges, %d replies skipped %s",
                    mode, len(edges), total_skipped,
                    {k: v for k, v in skipped.items() if v})
    return InteractionGraph(mode=mode, edges=tuple(edges), skipped=skipped)


def export_jsonl(graph: InteractionGraph, path: str | Path) -> None:
    """One JSON object per edge, preceded by a schema/mode header record."""
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(
            {"schema": EDGES_SCHEMA_VERSION, "mode": graph.mode},
            sort_keys=True) + "\n")
        for edge in graph.edges:
            handle.write(json.dumps(edge.to_dict(), sort_keys=True,
                                    ensure_ascii=False) + "\n")


def import_jsonl(path: str | Path) -> InteractionGraph:
    mode = MODE_FILTERED
    edges = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if "schema" in record:
                if record["schema"] != EDGES_SCHEMA_VERSION:
                    raise GraphError(
                        f"unsupported edges schema: expected "
                        f"{EDGES_SCHEMA_VERSION}, found {record['schema']!r}")
                mode = record.get("mode", MODE_FILTERED)
                continue
            edges.append(InteractionEdge.from_dict(record))
    edges.sort()
    return InteractionGraph(mode=mode, edges=tuple(edges))


def edges_from_dicts(records: Iterable[Mapping],
                     mode: str = MODE_FILTERED) -> InteractionGraph:
    edges = sorted(InteractionEdge.from_dict(r) for r in records)
    return InteractionGraph(mode=mode, edges=tuple(edges))
