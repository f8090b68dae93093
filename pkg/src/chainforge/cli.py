"""chainforge command line.

Subcommands mirror the pipeline stages: ingest, synth, featurize, train,
eval, curve, graph, chains, review (export/import/report) and run (the full
pipeline from one TOML config). Run `chainforge <cmd> -h` for flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import chains as chains_mod
from . import classify, featurize, graph as graph_mod, report as report_mod
from . import synth as synth_mod
from . import validate as validate_mod
from .corpus import (Corpus, IngestError, QuoteConfig, corpus_stats,
                     ingest_csv, ingest_jsonl, load_schema_config,
                     remove_quotes)
from .util import read_json, write_json

logger = logging.getLogger(__name__)


def _load_corpus(path: str, schema_path: str | None = None,
                 fmt: str = "jsonl") -> Corpus:
    schema = load_schema_config(schema_path) if schema_path else None
    if fmt == "csv" or (fmt == "auto" and path.endswith(".csv")):
        return ingest_csv(path, schema=schema)
    return ingest_jsonl(path, schema=schema)


def _task_texts(corpus: Corpus, task: str,
                min_quote_chars: int = 40) -> dict[str, str]:
    if task == "product":
        return {p.post_id: p.body for p in corpus.product_posts()}
    config = QuoteConfig(min_quote_chars=min_quote_chars)
    return {r.post_id: remove_quotes(r, corpus.prior_posts(r), config)
            for r in corpus.replies()}


def _task_classes(task: str) -> list[str]:
    return classify.PRODUCT_CLASSES if task == "product" else classify.REPLY_CLASSES


def _labeled_examples(corpus: Corpus, task: str, labels_path: str,
                      tfidf: featurize.TfidfModel) -> list[classify.LabeledExample]:
    texts = _task_texts(corpus, task)
    annotations = read_json(labels_path)
    class_index = {name: i for i, name in enumerate(_task_classes(task))}
    post_ids = sorted(pid for pid in texts if pid in annotations)
    if not post_ids:
        raise SystemExit(f"no labeled {task} posts found")
    vectors = featurize.transform_many(tfidf, [texts[pid] for pid in post_ids])
    return [classify.LabeledExample(features=vec,
                                    label=class_index[str(annotations[pid])],
                                    source_post=pid)
            for pid, vec in zip(post_ids, vectors)]


def _train_config_from_args(args) -> classify.TrainConfig:
    return classify.TrainConfig(
        l2_lambda=args.l2_lambda, learning_rate=args.learning_rate,
        lr_decay=args.lr_decay, epochs=args.epochs,
        batch_size=args.batch_size, seed=args.seed,
        class_weighting=args.class_weighting)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--l2-lambda", dest="l2_lambda", type=float, default=1e-4)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float,
                        default=0.5)
    parser.add_argument("--lr-decay", dest="lr_decay", type=float, default=0.0)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--class-weighting", dest="class_weighting",
                        choices=["none", "balanced"], default="none")


# -- subcommand handlers ----------------------------------------------------

def cmd_ingest(args) -> int:
    corpus = _load_corpus(args.file, args.schema, args.format)
    stats = corpus_stats(corpus)
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2, sort_keys=True))
    else:
        print(stats.to_table())
        if corpus.ingest_report and corpus.ingest_report.rejected:
            print(f"rejected lines: {corpus.ingest_report.rejected_count}")
    if args.out:
        from .corpus import export_jsonl
        export_jsonl(corpus, args.out)
    return 0


def cmd_synth(args) -> int:
    config = synth_mod.load_synth_config(args.config) if args.config \
        else synth_mod.SynthConfig()
    corpus, truth = synth_mod.generate(config)
    synth_mod.write_outputs(corpus, truth, args.out)
    stats = corpus_stats(corpus)
    print(f"wrote {stats.total_messages} posts "
          f"({stats.total_threads} threads) to {args.out}")
    return 0


def cmd_featurize(args) -> int:
    corpus = _load_corpus(args.corpus, args.schema)
    texts = _task_texts(corpus, args.task)
    post_ids = sorted(texts)
    if args.action == "fit":
        model = featurize.fit([texts[pid] for pid in post_ids],
                              n_min=args.n_min, n_max=args.n_max,
                              min_df=args.min_df,
                              max_features=args.max_features)
        model.save(args.out)
        print(f"fitted tf-idf over {model.n_docs_fitted} docs, "
              f"{model.dimension} n-grams -> {args.out}")
    else:
        model = featurize.TfidfModel.load(args.model)
        with Path(args.out).open("w", encoding="utf-8") as handle:
            for pid in post_ids:
                vector = featurize.transform(model, texts[pid])
                handle.write(json.dumps({
                    "post_id": pid, "indices": list(vector.indices),
                    "values": list(vector.values),
                    "dimension": vector.dimension}, sort_keys=True) + "\n")
        print(f"transformed {len(post_ids)} docs -> {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = _load_corpus(args.corpus, args.schema)
    tfidf = featurize.TfidfModel.load(args.tfidf)
    data = _labeled_examples(corpus, args.task, args.labels, tfidf)
    model = classify.train(data, _train_config_from_args(args),
                           _task_classes(args.task))
    model.feature_fingerprint = tfidf.fingerprint()
    model.save(args.out)
    print(f"trained on {len(data)} examples, final loss "
          f"{model.final_loss:.6f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    corpus = _load_corpus(args.corpus, args.schema)
    tfidf = featurize.TfidfModel.load(args.tfidf)
    data = _labeled_examples(corpus, args.task, args.labels, tfidf)
    report, _ = classify.cross_validate(
        data, _train_config_from_args(args), _task_classes(args.task),
        k=args.kfold, seed=args.seed)
    print(report.to_table())
    if args.out:
        write_json(args.out, {"schema_version": report_mod.METRICS_SCHEMA_VERSION,
                              args.task: report.to_dict()})
    if args.confusion_csv:
        Path(args.confusion_csv).write_text(report.confusion_to_csv(),
                                            encoding="utf-8")
    return 0


def cmd_curve(args) -> int:
    corpus = _load_corpus(args.corpus, args.schema)
    tfidf = featurize.TfidfModel.load(args.tfidf)
    data = _labeled_examples(corpus, args.task, args.labels, tfidf)
    sizes = [int(s) for s in args.sizes.split(",")]
    points = classify.learning_curve(data, sizes, _train_config_from_args(args),
                                     _task_classes(args.task), k=args.kfold,
                                     seed=args.seed)
    rows = [{"size": p.size,
             "mean_weighted_f1": p.mean_weighted_f1,
             "std_weighted_f1": p.std_weighted_f1,
             "mean_non_other_precision": p.mean_non_other_precision,
             "std_non_other_precision": p.std_non_other_precision}
            for p in points]
    print(json.dumps(rows, indent=2))
    if args.out:
        write_json(args.out, rows)
    return 0


def cmd_graph(args) -> int:
    corpus = _load_corpus(args.corpus, args.schema)
    product_labels = read_json(args.product_labels)
    reply_labels = read_json(args.reply_labels)
    built = graph_mod.build(corpus, product_labels, reply_labels, args.mode)
    graph_mod.export_jsonl(built, args.out)
    print(json.dumps(built.summary(), indent=2, sort_keys=True))
    return 0


def cmd_chains(args) -> int:
    built = graph_mod.import_jsonl(args.edges)
    max_gap = int(args.max_gap * 86_400) if args.max_gap else None
    links = chains_mod.find_links(built, args.traversal, max_gap)
    links = chains_mod.attenuate(links)
    chains_mod.export_jsonl(links, args.out)
    middles = {link.middle_user for link in links}
    print(f"{len(links)} links through {len(middles)} middle users -> {args.out}")
    if args.alluvial:
        chain_graph = chains_mod.aggregate(links)
        write_json(args.alluvial, report_mod.export_alluvial(chain_graph))
        print(f"alluvial export -> {args.alluvial}")
    if args.graphviz:
        chain_graph = chains_mod.aggregate(links)
        Path(args.graphviz).write_text(chains_mod.to_graphviz(chain_graph),
                                       encoding="utf-8")
    return 0


def cmd_review(args) -> int:
    if args.action == "export":
        links = chains_mod.import_jsonl(args.links)
        corpus = _load_corpus(args.corpus, args.schema)
        validate_mod.export_for_review(links, corpus, args.out)
        print(f"{len(links)} links -> {args.out}")
    elif args.action == "import":
        labels = validate_mod.import_labels(args.review)
        write_json(args.out, {k: v.value for k, v in sorted(labels.items())})
        print(f"{len(labels)} labels -> {args.out}")
    else:  # report
        links = chains_mod.import_jsonl(args.links)
        if args.baseline_sample:
            links = validate_mod.sample_links(links, args.baseline_sample,
                                              seed=args.seed)
        labels = {k: v for k, v in read_json(args.labels).items()}
        rep = validate_mod.relevance_report(links, labels, mode=args.mode)
        print(rep.to_table())
        if args.out:
            write_json(args.out, rep.to_dict())
    return 0


def cmd_run(args) -> int:
    config = report_mod.load_pipeline_config(args.config)
    artifacts = report_mod.run_pipeline(config, config_path=args.config)
    for name in sorted(artifacts):
        print(f"{name}: {artifacts[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainforge",
        description="Reconstruct supply chains from forum thread dumps.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a dump and print forum stats")
    p.add_argument("file")
    p.add_argument("--schema", help="JSON field-name mapping file")
    p.add_argument("--format", choices=["auto", "jsonl", "csv"], default="auto")
    p.add_argument("--json", action="store_true", help="stats as JSON")
    p.add_argument("--out", help="write canonical JSONL here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="TOML with a [synth] table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="fit or apply a tf-idf model")
    p.add_argument("action", choices=["fit", "transform"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema")
    p.add_argument("--task", choices=["product", "reply"], default="product")
    p.add_argument("--model", help="existing model (transform)")
    p.add_argument("--out", required=True)
    p.add_argument("--n-min", dest="n_min", type=int, default=2)
    p.add_argument("--n-max", dest="n_max", type=int, default=5)
    p.add_argument("--min-df", dest="min_df", type=int, default=2)
    p.add_argument("--max-features", dest="max_features", type=int,
                   default=200_000)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a task classifier")
    p.add_argument("--task", choices=["product", "reply"], required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema")
    p.add_argument("--labels", required=True, help="JSON post_id -> label")
    p.add_argument("--tfidf", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="stratified k-fold evaluation")
    p.add_argument("--task", choices=["product", "reply"], required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema")
    p.add_argument("--labels", required=True)
    p.add_argument("--tfidf", required=True)
    p.add_argument("--kfold", type=int, default=5)
    p.add_argument("--out", help="metrics JSON")
    p.add_argument("--confusion-csv", dest="confusion_csv")
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="learning curve over training sizes")
    p.add_argument("--task", choices=["product", "reply"], required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema")
    p.add_argument("--labels", required=True)
    p.add_argument("--tfidf", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated sizes")
    p.add_argument("--kfold", type=int, default=5)
    p.add_argument("--out")
    _add_train_flags(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("graph", help="build the interaction graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema")
    p.add_argument("--product-labels", dest="product_labels", required=True)
    p.add_argument("--reply-labels", dest="reply_labels", required=True)
    p.add_argument("--mode", choices=["filtered", "baseline"],
                   default="filtered")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("chains", help="discover and attenuate supply-chain links")
    p.add_argument("--edges", required=True)
    p.add_argument("--traversal", choices=["exhaustive", "bfs"],
                   default="exhaustive")
    p.add_argument("--max-gap", dest="max_gap", type=float, default=None,
                   help="max purchase->sale gap in days (default: unbounded)")
    p.add_argument("--out", required=True)
    p.add_argument("--alluvial", help="also write the alluvial export here")
    p.add_argument("--graphviz", help="also write a Graphviz edge list here")
    p.set_defaults(func=cmd_chains)

    p = sub.add_parser("review", help="manual validation round trip")
    p.add_argument("action", choices=["export", "import", "report"])
    p.add_argument("--links")
    p.add_argument("--corpus")
    p.add_argument("--schema")
    p.add_argument("--review", help="filled review CSV (import)")
    p.add_argument("--labels", help="labels JSON (report)")
    p.add_argument("--mode", choices=[validate_mod.MODE_ALGORITHM_OUTPUT,
                                      validate_mod.MODE_SAMPLE_BASELINE],
                   default=validate_mod.MODE_ALGORITHM_OUTPUT)
    p.add_argument("--baseline-sample", dest="baseline_sample", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("run", help="full pipeline from a TOML config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (IngestError, report_mod.PipelineError, validate_mod.ReviewError,
            chains_mod.ChainError, graph_mod.GraphError,
            featurize.FeaturizeError, classify.TrainingError,
            synth_mod.SynthConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
