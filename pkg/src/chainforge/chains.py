"""Supply-chain link discovery over the interaction graph.

A link is a (purchase edge, sale edge) pair sharing a middle user, the
purchase strictly before the sale. Exhaustive mode enumerates every such
pair; bfs mode reproduces the modified breadth-first search exactly,
including its single-discovery semantics (which can drop links for users
reachable from several frontier nodes — both modes exist for that reason).

Attenuation gives each of a middle user's n links weight 1/n, so every
user contributes total weight 1 to the aggregated category graph. Weights
are exact rationals; they only become floats at export time.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .graph import InteractionEdge, InteractionGraph

logger = logging.getLogger(__name__)

LINKS_SCHEMA_VERSION = "chainforge-links/1"

TRAVERSAL_EXHAUSTIVE = "exhaustive"
TRAVERSAL_BFS = "bfs"


class ChainError(Exception):
    pass


@dataclass(frozen=True)
class SupplyChainLink:
    middle_user: str
    purchase_edge: InteractionEdge  # someone sold to middle_user
    sale_edge: InteractionEdge  # middle_user sold to someone
    level: int  # BFS discovery level of the middle user
    weight: Optional[Fraction] = None  # set by attenuate()

    def __post_init__(self):
        if self.purchase_edge.buyer != self.middle_user \
                or self.sale_edge.seller != self.middle_user:
            raise ChainError("link edges do not share the middle user")
        if not self.purchase_edge.purchase_time < self.sale_edge.purchase_time:
            raise ChainError("purchase must strictly precede sale")

    @property
    def src_category(self) -> str:
        return self.purchase_edge.category

    @property
    def dst_category(self) -> str:
        return self.sale_edge.category

    @property
    def link_id(self) -> str:
        # A reply creates at most one edge, so the two reply ids identify it.
        return f"{self.purchase_edge.buy_reply}..{self.sale_edge.buy_reply}"

    def to_dict(self) -> dict:
        record = {
            "link_id": self.link_id,
            "middle_user": self.middle_user,
            "src_category": self.src_category,
            "dst_category": self.dst_category,
            "level": self.level,
            "purchase": self.purchase_edge.to_dict(),
            "sale": self.sale_edge.to_dict(),
        }
        if self.weight is not None:
            record["weight"] = float(self.weight)
            record["weight_num"] = self.weight.numerator
            record["weight_den"] = self.weight.denominator
        return record

    @classmethod
    def from_dict(cls, record: Mapping) -> "SupplyChainLink":
        weight = None
        if "weight_num" in record:
            weight = Fraction(int(record["weight_num"]), int(record["weight_den"]))
        elif "weight" in record and record["weight"] is not None:
            weight = Fraction(record["weight"]).limit_denominator(10 ** 9)
        return cls(middle_user=str(record["middle_user"]),
                   purchase_edge=InteractionEdge.from_dict(record["purchase"]),
                   sale_edge=InteractionEdge.from_dict(record["sale"]),
                   level=int(record["level"]), weight=weight)


@dataclass(frozen=True)
class AttenuationWeights:
    middle_user: str
    link_count: int

    @property
    def weight(self) -> Fraction:
        return Fraction(1, self.link_count)


@dataclass(frozen=True)
class ChainNode:
    category: str
    level: int


@dataclass
class SupplyChainGraph:
    nodes: tuple[ChainNode, ...]
    edges: tuple[tuple[ChainNode, ChainNode, Fraction, tuple[str, ...]], ...]

    def total_weight(self) -> Fraction:
        return sum((e[2] for e in self.edges), Fraction(0))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"category": n.category, "level": n.level}
                      for n in self.nodes],
            "edges": [{
                "src_category": src.category, "src_level": src.level,
                "dst_category": dst.category, "dst_level": dst.level,
                "weight": float(weight),
                "weight_num": weight.numerator,
                "weight_den": weight.denominator,
                "links": list(links),
            } for src, dst, weight, links in self.edges],
        }


# ---------------------------------------------------------------------------
# Traversal
# ---------------------------------------------------------------------------

def discovery_levels(graph: InteractionGraph) -> dict[str, int]:
    """BFS discovery level per user, walking seller relations backwards.

    Mirrors the modified BFS's traversal structure: seed the lowest-id
    undiscovered user at level 0, expand each frontier over the undiscovered
    users who sold to it, discover each user exactly once.
    """
    sellers_to = graph.sellers_to()
    levels: dict[str, int] = {}
    for seed in graph.nodes:  # sorted; already-discovered seeds are skipped
        if seed in levels:
            continue
        levels[seed] = 0
        frontier = [seed]
        depth = 0
        while frontier:
            depth += 1
            next_frontier = []
            for user in frontier:
                for seller in sellers_to.get(user, ()):
                    if seller not in levels:
                        levels[seller] = depth
                        next_frontier.append(seller)
            frontier = next_frontier
    return levels


def _valid_pairs(purchases: Sequence[InteractionEdge],
                 sales: Sequence[InteractionEdge],
                 max_gap_seconds: Optional[int]) -> list[tuple[InteractionEdge, InteractionEdge]]:
    pairs = []
    for purchase in purchases:
        for sale in sales:
            if purchase.purchase_time >= sale.purchase_time:
                continue
            if max_gap_seconds is not None \
                    and sale.purchase_time - purchase.purchase_time > max_gap_seconds:
                continue
            pairs.append((purchase, sale))
    return pairs


def find_links(graph: InteractionGraph, traversal: str = TRAVERSAL_EXHAUSTIVE,
               max_gap_seconds: Optional[int] = None) -> list[SupplyChainLink]:
    """Discover supply-chain links (unweighted).

    Exhaustive mode emits every chronologically valid pair per middle user
    and takes levels from a separate BFS pass. bfs mode follows the modified
    breadth-first search as written: frontier expansion over undiscovered
    sellers with the bought-then-sold guard W > 0, each user emitting links
    at most once.
    """
    if traversal == TRAVERSAL_EXHAUSTIVE:
        return _find_links_exhaustive(graph, max_gap_seconds)
    if traversal == TRAVERSAL_BFS:
        return _find_links_bfs(graph, max_gap_seconds)
    raise ChainError(f"unknown traversal {traversal!r}")


def _link_sort_key(link: SupplyChainLink):
    return (link.middle_user, link.purchase_edge.purchase_time,
            link.purchase_edge.buy_reply, link.sale_edge.purchase_time,
            link.sale_edge.buy_reply)


def _find_links_exhaustive(graph: InteractionGraph,
                           max_gap_seconds: Optional[int]) -> list[SupplyChainLink]:
    levels = discovery_levels(graph)
    bought: dict[str, list[InteractionEdge]] = {}
    sold: dict[str, list[InteractionEdge]] = {}
    for edge in graph.edges:
        bought.setdefault(edge.buyer, []).append(edge)
        sold.setdefault(edge.seller, []).append(edge)
    links = []
    for middle in sorted(set(bought) & set(sold)):
        for purchase, sale in _valid_pairs(bought[middle], sold[middle],
                                           max_gap_seconds):
            links.append(SupplyChainLink(middle_user=middle,
                                         purchase_edge=purchase,
                                         sale_edge=sale,
                                         level=levels[middle]))
    links.sort(key=_link_sort_key)
    return links


def _find_links_bfs(graph: InteractionGraph,
                    max_gap_seconds: Optional[int]) -> list[SupplyChainLink]:
    sellers_to = graph.sellers_to()
    bought: dict[str, list[InteractionEdge]] = {}
    sold: dict[str, list[InteractionEdge]] = {}
    sold_to: dict[tuple[str, str], list[InteractionEdge]] = {}
    for edge in graph.edges:
        bought.setdefault(edge.buyer, []).append(edge)
        sold.setdefault(edge.seller, []).append(edge)
        sold_to.setdefault((edge.seller, edge.buyer), []).append(edge)

    discovered: set[str] = set()
    links: list[SupplyChainLink] = []
    for seed in graph.nodes:
        if seed in discovered:
            continue
        discovered.add(seed)
        frontier = [seed]
        depth = 0
        while frontier:
            depth += 1
            next_frontier: list[str] = []
            for u_i in frontier:
                for u_j in sellers_to.get(u_i, ()):
                    if u_j in discovered:
                        continue
                    # W: items u_j bought and then sold (chronologically
                    # valid pairs over all of u_j's edges); emission guard.
                    w = len(_valid_pairs(bought.get(u_j, ()), sold.get(u_j, ()),
                                         max_gap_seconds))
                    if w <= 0:
                        continue
                    sales_to_ui = sold_to.get((u_j, u_i), [])
                    expanded = False
                    for u_k in sellers_to.get(u_j, ()):
                        if u_k in discovered:
                            continue
                        purchases_from_uk = sold_to.get((u_k, u_j), [])
                        for purchase, sale in _valid_pairs(
                                purchases_from_uk, sales_to_ui, max_gap_seconds):
                            links.append(SupplyChainLink(
                                middle_user=u_j, purchase_edge=purchase,
                                sale_edge=sale, level=depth))
                        expanded = True
                    if expanded:
                        discovered.add(u_j)
                        next_frontier.append(u_j)
            frontier = next_frontier
    links.sort(key=_link_sort_key)
    return links


# ---------------------------------------------------------------------------
# Attenuation and aggregation
# ---------------------------------------------------------------------------

def attenuation_weights(links: Sequence[SupplyChainLink]) -> dict[str, AttenuationWeights]:
    counts: dict[str, int] = {}
    for link in links:
        counts[link.middle_user] = counts.get(link.middle_user, 0) + 1
    return {user: AttenuationWeights(user, n) for user, n in sorted(counts.items())}


def attenuate(links: Sequence[SupplyChainLink]) -> list[SupplyChainLink]:
    """Weight each of a middle user's n links 1/n (exact rationals)."""
    weights = attenuation_weights(links)
    return [replace(link, weight=weights[link.middle_user].weight)
            for link in links]


def aggregate(links: Sequence[SupplyChainLink]) -> SupplyChainGraph:
    """Sum link weights into category-level edges between BFS-level nodes.

    A link's source node is (src_category, level+1) and its destination
    (dst_category, level), so consecutive links of one chain share nodes and
    chains flow toward level 0.
    """
    sums: dict[tuple[ChainNode, ChainNode], Fraction] = {}
    members: dict[tuple[ChainNode, ChainNode], list[str]] = {}
    for link in links:
        if link.weight is None:
            raise ChainError("aggregate requires attenuated links")
        src = ChainNode(link.src_category, link.level + 1)
        dst = ChainNode(link.dst_category, link.level)
        key = (src, dst)
        sums[key] = sums.get(key, Fraction(0)) + link.weight
        members.setdefault(key, []).append(link.link_id)
    node_set = {n for key in sums for n in key}
    nodes = tuple(sorted(node_set, key=lambda n: (n.level, n.category)))
    edges = tuple(
        (src, dst, sums[(src, dst)], tuple(sorted(members[(src, dst)])))
        for src, dst in sorted(sums, key=lambda k: (k[0].level, k[0].category,
                                                    k[1].level, k[1].category)))
    return SupplyChainGraph(nodes=nodes, edges=edges)


def filter_by_validation(links: Sequence[SupplyChainLink],
                         labels: Mapping[str, object],
                         relevant: Iterable[str] = ("related", "resell"),
                         ) -> list[SupplyChainLink]:
    """Keep links manually validated as relevant; unlabeled ones drop with
    a logged counter."""
    relevant_set = {str(v).lower() for v in relevant}
    kept = []
    unlabeled = 0
    for link in links:
        label = labels.get(link.link_id)
        if label is None:
            unlabeled += 1
            continue
        value = getattr(label, "value", label)
        if str(value).lower() in relevant_set:
            kept.append(link)
    if unlabeled:
        logger.warning("filter_by_validation: dropped %d unlabeled links", unlabeled)
    return kept


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def export_jsonl(links: Sequence[SupplyChainLink], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(json.dumps({"schema": LINKS_SCHEMA_VERSION},
                                sort_keys=True) + "\n")
        for link in links:
            handle.write(json.dumps(link.to_dict(), sort_keys=True,
                                    ensure_ascii=False) + "\n")


def import_jsonl(path: str | Path) -> list[SupplyChainLink]:
    links = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if "schema" in record:
                if record["schema"] != LINKS_SCHEMA_VERSION:
                    raise ChainError(
                        f"unsupported links schema: expected "
                        f"{LINKS_SCHEMA_VERSION}, found {record['schema']!r}")
                continue
            links.append(SupplyChainLink.from_dict(record))
    return links


def to_graphviz(chain_graph: SupplyChainGraph) -> str:
    """Graphviz-compatible edge list for third-party tooling."""
    lines = ["digraph supply_chain {"]
    for node in chain_graph.nodes:
        lines.append(f'  "{node.category}@{node.level}";')
    for src, dst, weight, _ in chain_graph.edges:
        lines.append(f'  "{src.category}@{src.level}" -> '
                     f'"{dst.category}@{dst.level}" [weight={float(weight):.6f}, '
                     f'label="{float(weight):.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
