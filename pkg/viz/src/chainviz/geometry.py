"""Pure layout computation for the three figure types.

Everything renderable is decided here (positions, widths, stack heights,
colors); the matplotlib layer only draws it. That keeps the numeric
contracts unit-testable without touching a backend: ribbon widths equal the
export's attenuated weights, trend stack heights equal the CSV percentages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .palette import color_for

NODE_GAP_FRACTION = 0.25  # vertical gap between nodes, relative to max height


class GeometryError(Exception):
    pass


@dataclass(frozen=True)
class NodeBox:
    category: str
    level: int
    x: float
    y0: float
    y1: float
    color: str
    originating_chains: float

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def label(self) -> str:
        if self.originating_chains > 0:
            return f"{self.category} ({self.originating_chains:g})"
        return self.category


@dataclass(frozen=True)
class Ribbon:
    src_category: str
    src_level: int
    dst_category: str
    dst_level: int
    width: float
    color: str
    x0: float
    x1: float
    src_y0: float
    src_y1: float
    dst_y0: float
    dst_y1: float


@dataclass
class AlluvialGeometry:
    levels: list[int]  # column order, highest level leftmost
    nodes: list[NodeBox]
    ribbons: list[Ribbon]

    def node(self, category: str, level: int) -> NodeBox:
        for box in self.nodes:
            if box.category == category and box.level == level:
                return box
        raise KeyError((category, level))


def alluvial_geometry(payload: dict) -> AlluvialGeometry:
    """Column per BFS level (chains flow left to right toward level 0),
    node heights and ribbon widths proportional to attenuated weight."""
    levels = list(payload["levels"])
    level_x = {level: float(i) for i, level in enumerate(levels)}
    heights = [n["total_weight"] for n in payload["nodes"]]
    gap = NODE_GAP_FRACTION * max(heights, default=1.0)

    boxes: dict[tuple[str, int], NodeBox] = {}
    for level in levels:
        cursor = 0.0
        for node in payload["nodes"]:
            if node["level"] != level:
                continue
            key = (node["category"], node["level"])
            boxes[key] = NodeBox(
                category=node["category"], level=node["level"],
                x=level_x[level], y0=cursor,
                y1=cursor + node["total_weight"],
                color=color_for(node["category"]),
                originating_chains=node["originating_chains"])
            cursor += node["total_weight"] + gap

    out_cursor = {key: box.y0 for key, box in boxes.items()}
    in_cursor = {key: box.y0 for key, box in boxes.items()}
    ribbons = []
    for flow in payload["flows"]:
        src_key = (flow["src_category"], flow["src_level"])
        dst_key = (flow["dst_category"], flow["dst_level"])
        if src_key not in boxes or dst_key not in boxes:
            raise GeometryError(f"flow references unknown node: "
                                f"{src_key} -> {dst_key}")
        width = float(flow["weight"])
        src_box, dst_box = boxes[src_key], boxes[dst_key]
        ribbons.append(Ribbon(
            src_category=flow["src_category"], src_level=flow["src_level"],
            dst_category=flow["dst_category"], dst_level=flow["dst_level"],
            width=width, color=color_for(flow["color_key"]),
            x0=src_box.x, x1=dst_box.x,
            src_y0=out_cursor[src_key], src_y1=out_cursor[src_key] + width,
            dst_y0=in_cursor[dst_key], dst_y1=in_cursor[dst_key] + width))
        out_cursor[src_key] += width
        in_cursor[dst_key] += width

    ordered = [boxes[key] for key in sorted(boxes, key=lambda k: (-k[1], k[0]))]
    return AlluvialGeometry(levels=levels, nodes=ordered, ribbons=ribbons)


@dataclass
class TrendsGeometry:
    months: list[str]
    categories: list[str]
    volume: list[int]
    bottoms: dict[str, list[float]]  # per category, aligned with months
    tops: dict[str, list[float]]
    warnings: list[str] = field(default_factory=list)

    def stack_height(self, category: str, index: int) -> float:
        return self.tops[category][index] - self.bottoms[category][index]


def _next_month(month: str) -> str:
    year, mon = int(month[:4]), int(month[5:7])
    mon += 1
    if mon == 13:
        mon, year = 1, year + 1
    return f"{year:04d}-{mon:02d}"


def trends_geometry(categories: list[str], rows: list[dict]) -> TrendsGeometry:
    """Cumulative percentage stack (CSV category order) plus volume series.

    Gaps in the month sequence become zero-volume entries with a warning;
    non-empty months whose percentages miss 100 by more than 0.1 warn too.
    """
    warnings: list[str] = []
    filled: list[dict] = []
    previous = None
    for row in rows:
        if previous is not None:
            expected = _next_month(previous)
            while expected < row["month"]:
                warnings.append(f"missing month {expected} rendered as zero")
                filled.append({"month": expected, "volume": 0,
                               "pct": {c: 0.0 for c in categories}})
                expected = _next_month(expected)
        filled.append(row)
        previous = row["month"]

    months = [row["month"] for row in filled]
    volume = [row["volume"] for row in filled]
    bottoms = {c: [] for c in categories}
    tops = {c: [] for c in categories}
    for row in filled:
        total = sum(row["pct"].values())
        if row["volume"] and abs(total - 100.0) > 0.1:
            warnings.append(f"month {row['month']}: percentages sum to "
                            f"{total:.2f}, not 100")
        cursor = 0.0
        for category in categories:
            bottoms[category].append(cursor)
            cursor += row["pct"][category]
            tops[category].append(cursor)
    for category in categories:
        color_for(category)  # palette completeness is fatal here, not at draw
    return TrendsGeometry(months=months, categories=categories, volume=volume,
                          bottoms=bottoms, tops=tops, warnings=warnings)


@dataclass
class ConfusionGeometry:
    class_names: list[str]
    matrix: list[list[int]]
    row_sums: list[int]
    normalized: list[list[float]]  # row-normalized shading values


def confusion_geometry(report: dict) -> ConfusionGeometry:
    matrix = report["confusion"]
    class_names = list(report["class_names"])
    if not matrix or not class_names:
        raise GeometryError("empty confusion matrix")
    if len(matrix) != len(class_names) \
            or any(len(row) != len(class_names) for row in matrix):
        raise GeometryError("confusion matrix is not square over class_names")
    row_sums = [sum(row) for row in matrix]
    normalized = [[cell / total if total else 0.0 for cell in row]
                  for row, total in zip(matrix, row_sums)]
    return ConfusionGeometry(class_names=class_names,
                             matrix=[list(row) for row in matrix],
                             row_sums=row_sums, normalized=normalized)
