"""Figure-backing data artifacts and end-to-end pipeline orchestration.

Produces the monthly product-trend series, the alluvial supply-chain export
consumed by the viz package, and runs the whole
ingest -> featurize -> classify -> graph -> chains -> report pipeline from
one TOML config, writing every artifact with a manifest. No images are
rendered here; that is the viz package's job.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from . import __version__
from .chains import (SupplyChainGraph, TRAVERSAL_EXHAUSTIVE, aggregate,
                     attenuate, find_links)
from .chains import export_jsonl as export_links_jsonl
from .classify import (LabeledExample, PRODUCT_CLASSES, REPLY_CLASSES,
                       TrainConfig, cross_validate, predict_many, train,
                       undersample)
from .corpus import Corpus, QuoteConfig, corpus_stats, ingest_jsonl, remove_quotes
from .featurize import TfidfModel, fit as tfidf_fit, transform_many
from .graph import MODE_BASELINE, MODE_FILTERED, build
from .graph import export_jsonl as export_edges_jsonl
from .util import read_json, sha256_file, stable_json_dumps, write_json
from .util import month_key, month_range

logger = logging.getLogger(__name__)

ALLUVIAL_SCHEMA_VERSION = "chainforge-alluvial/1"
METRICS_SCHEMA_VERSION = "chainforge-metrics/1"
MANIFEST_SCHEMA_VERSION = "chainforge-manifest/1"


class PipelineError(Exception):
    pass


# ---------------------------------------------------------------------------
# Trend series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrendBucket:
    month: str  # YYYY-MM, UTC calendar
    volume: int
    counts: dict[str, int]
    percentages: dict[str, float]


@dataclass
class TrendSeries:
    categories: list[str]
    buckets: list[TrendBucket]

    def to_csv(self) -> str:
        header = ["month", "volume"]
        header += [f"n_{c}" for c in self.categories]
        header += [f"pct_{c}" for c in self.categories]
        lines = [",".join(header)]
        for bucket in self.buckets:
            row = [bucket.month, str(bucket.volume)]
            row += [str(bucket.counts[c]) for c in self.categories]
            row += [repr(bucket.percentages[c]) for c in self.categories]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def trend_series(corpus: Corpus, product_labels: Mapping[str, object],
                 categories: Sequence[str] = PRODUCT_CLASSES) -> TrendSeries:
    """Monthly (UTC calendar) per-category product-post counts/percentages.

    Buckets span the whole corpus date range; months without any labeled
    product post are present with zero volume (their percentages are zero).
    """
    stats = corpus_stats(corpus)
    if stats.date_range is None:
        return TrendSeries(categories=list(categories), buckets=[])
    months = month_range(*stats.date_range)
    counts: dict[str, dict[str, int]] = {
        m: {c: 0 for c in categories} for m in months}
    unlabeled = 0
    for post in corpus.product_posts():
        label = product_labels.get(post.post_id)
        if label is None:
            unlabeled += 1
            continue
        value = getattr(label, "value", str(label))
        counts[month_key(post.timestamp)][value] += 1
    if unlabeled:
        logger.warning("trend_series: %d product posts without a label "
                       "were not counted", unlabeled)
    buckets = []
    for month in months:
        volume = sum(counts[month].values())
        percentages = {
            c: (100.0 * counts[month][c] / volume if volume else 0.0)
            for c in categories}
        buckets.append(TrendBucket(month=month, volume=volume,
                                   counts=dict(counts[month]),
                                   percentages=percentages))
    return TrendSeries(categories=list(categories), buckets=buckets)


# ---------------------------------------------------------------------------
# Alluvial export
# ---------------------------------------------------------------------------

def export_alluvial(chain_graph: SupplyChainGraph,
                    category_filter: Optional[Callable[[str], bool]] = None) -> dict:
    """Deterministic JSON payload for the alluvial renderer.

    The filter keeps a flow when either endpoint category passes (drops it
    only when both fail), generalizing the paper's vk/non-vk split. Node
    `originating_chains` is the node's outgoing minus incoming weight,
    clamped at zero: the chains that begin there.
    """
    flows = []
    out_weight: dict[tuple[str, int], Fraction] = {}
    in_weight: dict[tuple[str, int], Fraction] = {}
    for src, dst, weight, links in chain_graph.edges:
        if category_filter is not None \
                and not (category_filter(src.category)
                         or category_filter(dst.category)):
            continue
        flows.append({
            "src_category": src.category, "src_level": src.level,
            "dst_category": dst.category, "dst_level": dst.level,
            "weight": float(weight), "weight_num": weight.numerator,
            "weight_den": weight.denominator,
            "color_key": src.category, "links": list(links),
        })
        out_weight[(src.category, src.level)] = \
            out_weight.get((src.category, src.level), Fraction(0)) + weight
        in_weight[(dst.category, dst.level)] = \
            in_weight.get((dst.category, dst.level), Fraction(0)) + weight
    flows.sort(key=lambda f: (-f["src_level"], f["src_category"],
                              f["dst_category"], f["dst_level"]))
    node_keys = sorted(set(out_weight) | set(in_weight),
                       key=lambda n: (-n[1], n[0]))
    nodes = []
    for category, level in node_keys:
        outgoing = out_weight.get((category, level), Fraction(0))
        incoming = in_weight.get((category, level), Fraction(0))
        nodes.append({
            "category": category, "level": level,
            "total_weight": float(max(outgoing, incoming)),
            "originating_chains": float(max(outgoing - incoming, Fraction(0))),
        })
    levels = sorted({n["level"] for n in nodes}, reverse=True)
    return {
        "schema_version": ALLUVIAL_SCHEMA_VERSION,
        "levels": levels,
        "nodes": nodes,
        "flows": flows,
    }


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def load_pipeline_config(path: str | Path) -> dict:
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - version dependent
        import tomli as tomllib
    with Path(path).open("rb") as handle:
        return tomllib.load(handle)


def _train_config(section: Mapping) -> TrainConfig:
    kwargs = {k: section[k] for k in
              ("l2_lambda", "learning_rate", "lr_decay", "epochs",
               "batch_size", "seed", "class_weighting") if k in section}
    return TrainConfig(**kwargs)


def _quote_config(config: Mapping) -> QuoteConfig:
    section = config.get("quotes", {})
    return QuoteConfig(min_quote_chars=section.get("min_quote_chars", 40))


def _clean_reply_texts(corpus: Corpus, quote_config: QuoteConfig) -> dict[str, str]:
    return {reply.post_id: remove_quotes(reply, corpus.prior_posts(reply),
                                         quote_config)
            for reply in corpus.replies()}


def _label_task(task: str, corpus: Corpus, texts: dict[str, str],
                annotations: Mapping[str, str], class_names: Sequence[str],
                train_config: TrainConfig, featurize_params: Mapping,
                mode: str, kfold_k: int,
                train_transform=None):
    """Train a task's classifier and produce a label for every post.

    kfold mode re-predicts every annotated post out-of-fold (the paper's
    honest end-to-end protocol); fill mode keeps annotations and predicts
    only unannotated posts. Returns (labels, metrics, tfidf, model).
    """
    post_ids = sorted(texts)
    annotated = [pid for pid in post_ids if pid in annotations]
    if not annotated:
        raise PipelineError(f"{task}: no annotated posts")
    tfidf = tfidf_fit([texts[pid] for pid in post_ids],
                      n_min=featurize_params.get("n_min", 2),
                      n_max=featurize_params.get("n_max", 5),
                      min_df=featurize_params.get("min_df", 2),
                      max_features=featurize_params.get("max_features", 200_000))
    vectors = dict(zip(post_ids, transform_many(tfidf, [texts[pid] for pid in post_ids])))
    class_index = {name: i for i, name in enumerate(class_names)}
    data = [LabeledExample(features=vectors[pid],
                           label=class_index[str(annotations[pid])],
                           source_post=pid)
            for pid in annotated]
    metrics, oof_predictions = cross_validate(
        data, train_config, class_names, k=kfold_k, seed=train_config.seed,
        train_transform=train_transform)
    full_train = train_transform(data) if train_transform else data
    model = train(full_train, train_config, class_names)
    model.feature_fingerprint = tfidf.fingerprint()

    labels: dict[str, str] = {}
    if mode == "kfold":
        for pid, pred in zip(annotated, oof_predictions):
            labels[pid] = class_names[pred]
    elif mode == "fill":
        for pid in annotated:
            labels[pid] = str(annotations[pid])
    else:
        raise PipelineError(f"unknown labels.mode {mode!r}")
    remaining = [pid for pid in post_ids if pid not in annotations]
    if remaining:
        predictions = predict_many(model, [vectors[pid] for pid in remaining])
        for pid, pred in zip(remaining, predictions):
            labels[pid] = class_names[int(pred)]
    return labels, metrics, tfidf, model


def _undersample_transform(section: Mapping, class_names: Sequence[str],
                           seed: int):
    if not section:
        return None
    shrink = class_names.index(str(section["class"]))
    if "below" in section:
        target: str | int = f"below:{class_names.index(str(section['below']))}"
    else:
        target = int(section["target"])
    return lambda data: undersample(data, shrink, target, seed=seed)


def run_pipeline(config: Mapping, config_path: str | Path | None = None) -> dict[str, Path]:
    """Run the full pipeline; returns {artifact name: path}.

    Every stage failure aborts with the stage name and cause. Reruns with an
    identical config produce byte-identical artifacts.
    """
    out_dir = Path(config.get("report", {}).get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    stage = "config"
    try:
        corpus_section = config["corpus"]
        labels_section = config.get("labels", {})
        featurize_params = config.get("featurize", {})
        train_section = config.get("train", {})
        chains_section = config.get("chains", {})
        report_section = config.get("report", {})
        quote_config = _quote_config(config)
        train_config = _train_config(train_section)
        label_mode = labels_section.get("mode", "kfold")
        kfold_k = int(labels_section.get("kfold_k", 5))

        stage = "ingest"
        schema = None
        if corpus_section.get("schema"):
            from .corpus import load_schema_config
            schema = load_schema_config(corpus_section["schema"])
        corpus = ingest_jsonl(corpus_section["path"], schema=schema,
                              forum_name=corpus_section.get("name"))
        stats = corpus_stats(corpus)
        artifacts["stats.json"] = out_dir / "stats.json"
        write_json(artifacts["stats.json"], stats.to_dict())

        stage = "annotations"
        product_annotations = read_json(labels_section["products"])
        reply_annotations = read_json(labels_section["replies"])

        stage = "featurize+classify (product)"
        product_texts = {p.post_id: p.body for p in corpus.product_posts()}
        product_transform = _undersample_transform(
            train_section.get("undersample", {}), PRODUCT_CLASSES,
            train_config.seed)
        product_labels, product_metrics, product_tfidf, product_model = _label_task(
            "product", corpus, product_texts, product_annotations,
            PRODUCT_CLASSES, train_config, featurize_params, label_mode,
            kfold_k, product_transform)
        product_tfidf.save(out_dir / "tfidf_product.json")
        product_model.save(out_dir / "model_product.json")
        artifacts["tfidf_product.json"] = out_dir / "tfidf_product.json"
        artifacts["model_product.json"] = out_dir / "model_product.json"

        stage = "featurize+classify (reply)"
        reply_texts = _clean_reply_texts(corpus, quote_config)
        reply_labels, reply_metrics, reply_tfidf, reply_model = _label_task(
            "reply", corpus, reply_texts, reply_annotations, REPLY_CLASSES,
            train_config, featurize_params, label_mode, kfold_k, None)
        reply_tfidf.save(out_dir / "tfidf_reply.json")
        reply_model.save(out_dir / "model_reply.json")
        artifacts["tfidf_reply.json"] = out_dir / "tfidf_reply.json"
        artifacts["model_reply.json"] = out_dir / "model_reply.json"

        artifacts["metrics.json"] = out_dir / "metrics.json"
        write_json(artifacts["metrics.json"], {
            "schema_version": METRICS_SCHEMA_VERSION,
            "product": product_metrics.to_dict(),
            "reply": reply_metrics.to_dict(),
        })

        stage = "graph"
        filtered = build(corpus, product_labels, reply_labels, MODE_FILTERED)
        baseline = build(corpus, product_labels, reply_labels, MODE_BASELINE)
        artifacts["edges.jsonl"] = out_dir / "edges.jsonl"
        artifacts["edges_baseline.jsonl"] = out_dir / "edges_baseline.jsonl"
        export_edges_jsonl(filtered, artifacts["edges.jsonl"])
        export_edges_jsonl(baseline, artifacts["edges_baseline.jsonl"])

        stage = "chains"
        traversal = chains_section.get("traversal", TRAVERSAL_EXHAUSTIVE)
        max_gap_days = chains_section.get("max_gap_days")
        max_gap = int(max_gap_days * 86_400) if max_gap_days else None
        links = attenuate(find_links(filtered, traversal, max_gap))
        baseline_links = attenuate(find_links(baseline, traversal, max_gap))
        artifacts["links.jsonl"] = out_dir / "links.jsonl"
        artifacts["links_baseline.jsonl"] = out_dir / "links_baseline.jsonl"
        export_links_jsonl(links, artifacts["links.jsonl"])
        export_links_jsonl(baseline_links, artifacts["links_baseline.jsonl"])

        stage = "report"
        chain_graph = aggregate(links)
        categories = report_section.get("categories")
        predicate = (lambda c: c in set(categories)) if categories else None
        artifacts["alluvial.json"] = out_dir / "alluvial.json"
        write_json(artifacts["alluvial.json"],
                   export_alluvial(chain_graph, predicate))
        trends = trend_series(corpus, product_labels)
        artifacts["trends.csv"] = out_dir / "trends.csv"
        artifacts["trends.csv"].write_text(trends.to_csv(), encoding="utf-8")

        stage = "manifest"
        manifest = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "tool_version": __version__,
            "config_sha256": sha256_file(config_path) if config_path else
                _config_hash(config),
            "seeds": {"train": train_config.seed},
            "label_mode": label_mode,
            "traversal": traversal,
            "artifacts": {name: sha256_file(path)
                          for name, path in sorted(artifacts.items())},
        }
        manifest_path = out_dir / "manifest.json"
        write_json(manifest_path, manifest)
        artifacts["manifest.json"] = manifest_path
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"stage {stage!r} failed: {exc}") from exc
    return artifacts


def _config_hash(config: Mapping) -> str:
    from .util import sha256_bytes

    return sha256_bytes(stable_json_dumps(_plain(config)).encode("utf-8"))


def _plain(value):
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
