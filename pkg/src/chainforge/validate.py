"""Manual link-validation round trip and the relevance/baseline reports.

Links go out as a CSV the reviewer fills in (with a JSON sidecar carrying
full post bodies), come back as a link_id -> label map, and are summarized
into attenuated-weight truth-level reports comparable across the filtered
algorithm output and the unfiltered sample baseline.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .chains import SupplyChainLink
from .corpus import Corpus, QuoteConfig, remove_quotes

logger = logging.getLogger(__name__)

REVIEW_FORMAT_VERSION = "chainforge-review/1"
REVIEW_COLUMNS = ["link_id", "middle_user", "src_category", "dst_category",
                  "purchase_time", "sale_time", "src_excerpt", "dst_excerpt",
                  "flags", "label"]
EXCERPT_CHARS = 500

MODE_ALGORITHM_OUTPUT = "algorithm_output"
MODE_SAMPLE_BASELINE = "sample_baseline"


class LinkValidationLabel(str, enum.Enum):
    RELATED = "related"
    RESELL = "resell"
    UNRELATED = "unrelated"
    LACK_OF_PRODUCT = "lack_of_product"
    LACK_OF_PURCHASE = "lack_of_purchase"


RELEVANT_LABELS = (LinkValidationLabel.RELATED, LinkValidationLabel.RESELL)


class ReviewError(Exception):
    pass


def _excerpt(corpus: Corpus, post_id: str,
             quote_config: QuoteConfig) -> tuple[str, Optional[str]]:
    """(excerpt, flag): quote-stripped, clipped body; flag set when the post
    is missing from the corpus."""
    post = corpus.get(post_id)
    if post is None:
        return "", f"missing_post:{post_id}"
    if post.position > 0:
        text = remove_quotes(post, corpus.prior_posts(post), quote_config)
    else:
        text = " ".join(post.body.split())
    return text[:EXCERPT_CHARS], None


def export_for_review(links: Sequence[SupplyChainLink], corpus: Corpus,
                      csv_path: str | Path,
                      sidecar_path: str | Path | None = None,
                      quote_config: QuoteConfig | None = None) -> None:
    """Write the review CSV (one row per link, empty label column) plus a
    JSON sidecar with the full untruncated bodies."""
    quote_config = quote_config or QuoteConfig()
    csv_path = Path(csv_path)
    sidecar = {}
    with csv_path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(f"# {REVIEW_FORMAT_VERSION} columns={','.join(REVIEW_COLUMNS)}\n")
        writer = csv.writer(handle)
        writer.writerow(REVIEW_COLUMNS)
        for link in links:
            flags = []
            src_excerpt, flag = _excerpt(corpus, link.purchase_edge.sell_post,
                                         quote_config)
            if flag:
                flags.append(flag)
            dst_excerpt, flag = _excerpt(corpus, link.sale_edge.sell_post,
                                         quote_config)
            if flag:
                flags.append(flag)
            writer.writerow([
                link.link_id, link.middle_user, link.src_category,
                link.dst_category, link.purchase_edge.purchase_time,
                link.sale_edge.purchase_time, src_excerpt, dst_excerpt,
                ";".join(flags), "",
            ])
            src_post = corpus.get(link.purchase_edge.sell_post)
            dst_post = corpus.get(link.sale_edge.sell_post)
            sidecar[link.link_id] = {
                "src_body": src_post.body if src_post else None,
                "dst_body": dst_post.body if dst_post else None,
            }
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".bodies.json")
    Path(sidecar_path).write_text(
        json.dumps(sidecar, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")


def import_labels(csv_path: str | Path) -> dict[str, LinkValidationLabel]:
    """Read reviewer labels back; case-insensitive, duplicates must agree.

    Rows with an empty label cell are simply not yet labeled and skipped;
    unknown label strings and conflicting duplicates are fatal, reported
    with their row numbers.
    """
    valid = {label.value: label for label in LinkValidationLabel}
    labels: dict[str, LinkValidationLabel] = {}
    bad_rows: list[tuple[int, str]] = []
    with Path(csv_path).open(newline="", encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "link_id" not in reader.fieldnames \
            or "label" not in reader.fieldnames:
        raise ReviewError("review file lacks link_id/label columns")
    for row_no, row in enumerate(reader, start=2):
        link_id = (row.get("link_id") or "").strip()
        raw = (row.get("label") or "").strip().lower().replace(" ", "_")
        if not link_id or not raw:
            continue
        if raw not in valid:
            bad_rows.append((row_no, raw))
            continue
        label = valid[raw]
        if link_id in labels and labels[link_id] != label:
            raise ReviewError(
                f"row {row_no}: conflicting labels for link {link_id!r}: "
                f"{labels[link_id].value} vs {label.value}")
        labels[link_id] = label
    if bad_rows:
        detail = ", ".join(f"row {r}: {v!r}" for r, v in bad_rows)
        raise ReviewError(f"unknown label strings rejected ({detail})")
    return labels


@dataclass
class RelevanceReport:
    mode: str  # algorithm_output | sample_baseline
    weight_by_label: dict[str, float]
    percent_by_label: dict[str, float]
    total_weight: float
    relevant_rate: float  # (related + resell) / total

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "weight_by_label": self.weight_by_label,
            "percent_by_label": self.percent_by_label,
            "total_weight": self.total_weight,
            "relevant_rate": self.relevant_rate,
        }

    def to_table(self) -> str:
        lines = [f"{'link type':<18} {'weight':>10} {'percent':>8}"]
        for label in LinkValidationLabel:
            weight = self.weight_by_label[label.value]
            pct = self.percent_by_label[label.value]
            lines.append(f"{label.value:<18} {weight:>10.2f} {pct:>7.1f}%")
        lines.append(f"{'TOTAL':<18} {self.total_weight:>10.2f} {100.0:>7.1f}%")
        lines.append(f"relevant rate: {self.relevant_rate:.3f}  (mode: {self.mode})")
        return "\n".join(lines)


def relevance_report(links: Sequence[SupplyChainLink],
                     labels: Mapping[str, LinkValidationLabel | str],
                     mode: str = MODE_ALGORITHM_OUTPUT) -> RelevanceReport:
    """Sum attenuated link weight per validation label.

    Every link must be labeled and attenuated; the report is only meaningful
    when complete.
    """
    if len(links) == 0:
        raise ReviewError("no links to report on")
    sums = {label.value: Fraction(0) for label in LinkValidationLabel}
    for link in links:
        if link.weight is None:
            raise ReviewError(f"link {link.link_id} is not attenuated")
        label = labels.get(link.link_id)
        if label is None:
            raise ReviewError(f"link {link.link_id} is unlabeled")
        value = getattr(label, "value", str(label)).lower()
        if value not in sums:
            raise ReviewError(f"link {link.link_id} has unknown label {value!r}")
        sums[value] += link.weight
    total = sum(sums.values(), Fraction(0))
    relevant = sums[LinkValidationLabel.RELATED.value] \
        + sums[LinkValidationLabel.RESELL.value]
    return RelevanceReport(
        mode=mode,
        weight_by_label={k: float(v) for k, v in sums.items()},
        percent_by_label={k: float(100 * v / total) for k, v in sums.items()},
        total_weight=float(total),
        relevant_rate=float(relevant / total),
    )


def report_from_weights(weight_by_label: Mapping[str, float],
                        mode: str = MODE_ALGORITHM_OUTPUT) -> RelevanceReport:
    """Report straight from per-label weight totals (no link objects)."""
    sums = {label.value: float(weight_by_label.get(label.value, 0.0))
            for label in LinkValidationLabel}
    total = sum(sums.values())
    if total <= 0:
        raise ReviewError("weights sum to zero")
    relevant = sums[LinkValidationLabel.RELATED.value] \
        + sums[LinkValidationLabel.RESELL.value]
    return RelevanceReport(
        mode=mode,
        weight_by_label=sums,
        percent_by_label={k: 100.0 * v / total for k, v in sums.items()},
        total_weight=total,
        relevant_rate=relevant / total,
    )


@dataclass(frozen=True)
class BaselineComparison:
    filtered_relevant_rate: float
    baseline_relevant_rate: float

    @property
    def improvement(self) -> float:
        return self.filtered_relevant_rate - self.baseline_relevant_rate

    def to_dict(self) -> dict:
        return {
            "filtered_relevant_rate": self.filtered_relevant_rate,
            "baseline_relevant_rate": self.baseline_relevant_rate,
            "improvement": self.improvement,
        }


def baseline_comparison(filtered_report: RelevanceReport,
                        baseline_report: RelevanceReport) -> BaselineComparison:
    if filtered_report.mode == baseline_report.mode:
        raise ReviewError(
            f"reports share mode tag {filtered_report.mode!r}; need one "
            f"algorithm_output and one sample_baseline")
    return BaselineComparison(
        filtered_relevant_rate=filtered_report.relevant_rate,
        baseline_relevant_rate=baseline_report.relevant_rate)


def sample_links(links: Sequence[SupplyChainLink], n: int,
                 seed: int = 0) -> list[SupplyChainLink]:
    """Seeded uniform sample without replacement (the paper reviewed a
    random 100 of the unfiltered links); attenuated weights ride along."""
    if n >= len(links):
        return list(links)
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(links), size=n, replace=False).tolist())
    return [links[i] for i in picked]
