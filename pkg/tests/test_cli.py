import json

import pytest

from chainforge.cli import main
from chainforge.synth import SynthConfig, generate, write_outputs


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("clidata")
    corpus, truth = generate(SynthConfig(
        seed=13, docs_per_category=8, n_users=100,
        planted_chains=[("crypter", "ddos_service", 2)]))
    write_outputs(corpus, truth, data_dir)
    return data_dir


def test_synth_and_ingest(tmp_path, capsys):
    config = tmp_path / "synth.toml"
    config.write_text("[synth]\nseed = 3\ndocs_per_category = 4\n"
                      "n_users = 60\n")
    out = tmp_path / "data"
    assert main(["synth", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "corpus.jsonl").exists()
    capsys.readouterr()
    assert main(["ingest", str(out / "corpus.jsonl"), "--json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["total_threads"] == 56  # 14 categories x 4 docs
    assert main(["ingest", str(out / "corpus.jsonl")]) == 0
    assert "Total messages" in capsys.readouterr().out


def test_ingest_missing_file_is_error(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "nope.jsonl")]) == 2
    assert "error" in capsys.readouterr().err


def test_featurize_train_eval_flow(dataset, tmp_path, capsys):
    tfidf_path = tmp_path / "tfidf.json"
    assert main(["featurize", "fit", "--corpus", str(dataset / "corpus.jsonl"),
                 "--task", "product", "--out", str(tfidf_path)]) == 0
    model_path = tmp_path / "model.json"
    assert main(["train", "--task", "product",
                 "--corpus", str(dataset / "corpus.jsonl"),
                 "--labels", str(dataset / "product_labels.json"),
                 "--tfidf", str(tfidf_path), "--out", str(model_path),
                 "--epochs", "4"]) == 0
    assert model_path.exists()
    metrics_path = tmp_path / "metrics.json"
    assert main(["eval", "--task", "product",
                 "--corpus", str(dataset / "corpus.jsonl"),
                 "--labels", str(dataset / "product_labels.json"),
                 "--tfidf", str(tfidf_path), "--kfold", "3",
                 "--epochs", "4", "--out", str(metrics_path),
                 "--confusion-csv", str(tmp_path / "confusion.csv")]) == 0
    payload = json.loads(metrics_path.read_text())
    assert "product" in payload
    assert (tmp_path / "confusion.csv").read_text().startswith("truth")


def test_graph_chains_review_flow(dataset, tmp_path, capsys):
    edges_path = tmp_path / "edges.jsonl"
    assert main(["graph", "--corpus", str(dataset / "corpus.jsonl"),
                 "--product-labels", str(dataset / "product_labels.json"),
                 "--reply-labels", str(dataset / "reply_labels.json"),
                 "--mode", "filtered", "--out", str(edges_path)]) == 0
    links_path = tmp_path / "links.jsonl"
    alluvial_path = tmp_path / "alluvial.json"
    assert main(["chains", "--edges", str(edges_path),
                 "--traversal", "exhaustive", "--out", str(links_path),
                 "--alluvial", str(alluvial_path)]) == 0
    assert json.loads(alluvial_path.read_text())["schema_version"] \
        .startswith("chainforge-alluvial")

    review_path = tmp_path / "review.csv"
    assert main(["review", "export", "--links", str(links_path),
                 "--corpus", str(dataset / "corpus.jsonl"),
                 "--out", str(review_path)]) == 0
    lines = review_path.read_text().splitlines()
    filled = []
    for line in lines:
        if line.startswith("#") or line.startswith("link_id"):
            filled.append(line)
        else:
            filled.append(line + "related")
    review_path.write_text("\n".join(filled) + "\n")

    labels_path = tmp_path / "labels.json"
    assert main(["review", "import", "--review", str(review_path),
                 "--out", str(labels_path)]) == 0
    assert main(["review", "report", "--links", str(links_path),
                 "--labels", str(labels_path),
                 "--out", str(tmp_path / "relevance.json")]) == 0
    relevance = json.loads((tmp_path / "relevance.json").read_text())
    assert relevance["relevant_rate"] == pytest.approx(1.0)


def test_run_pipeline_from_toml(dataset, tmp_path, capsys):
    out_dir = tmp_path / "out"
    config = tmp_path / "pipeline.toml"
    config.write_text(f"""
[corpus]
path = "{dataset / 'corpus.jsonl'}"
name = "synthetic"

[labels]
products = "{dataset / 'product_labels.json'}"
replies = "{dataset / 'reply_labels.json'}"
mode = "kfold"
kfold_k = 3

[featurize]
n_min = 2
n_max = 4

[train]
seed = 42
epochs = 4

[report]
out_dir = "{out_dir}"
""")
    assert main(["run", "--config", str(config)]) == 0
    assert (out_dir / "manifest.json").exists()
    manifest = json.loads((out_dir / "manifest.json").read_text())
    from chainforge.util import sha256_file
    assert manifest["config_sha256"] == sha256_file(config)


def test_curve_command(dataset, tmp_path):
    tfidf_path = tmp_path / "tfidf.json"
    main(["featurize", "fit", "--corpus", str(dataset / "corpus.jsonl"),
          "--task", "reply", "--out", str(tfidf_path)])
    out = tmp_path / "curve.json"
    assert main(["curve", "--task", "reply",
                 "--corpus", str(dataset / "corpus.jsonl"),
                 "--labels", str(dataset / "reply_labels.json"),
                 "--tfidf", str(tfidf_path), "--sizes", "12,40",
                 "--kfold", "3", "--epochs", "3", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert [r["size"] for r in rows] == [12, 40]


def test_baseline_sample_report(dataset, tmp_path):
    edges_path = tmp_path / "edges_baseline.jsonl"
    main(["graph", "--corpus", str(dataset / "corpus.jsonl"),
          "--product-labels", str(dataset / "product_labels.json"),
          "--reply-labels", str(dataset / "reply_labels.json"),
          "--mode", "baseline", "--out", str(edges_path)])
    links_path = tmp_path / "links_baseline.jsonl"
    main(["chains", "--edges", str(edges_path), "--out", str(links_path)])
    from chainforge.chains import import_jsonl
    links = import_jsonl(links_path)
    labels = {l.link_id: "lack_of_purchase" for l in links}
    labels_path = tmp_path / "labels.json"
    labels_path.write_text(json.dumps(labels))
    assert main(["review", "report", "--links", str(links_path),
                 "--labels", str(labels_path), "--mode", "sample_baseline",
                 "--baseline-sample", "5", "--seed", "1",
                 "--out", str(tmp_path / "baseline.json")]) == 0
    payload = json.loads((tmp_path / "baseline.json").read_text())
    assert payload["mode"] == "sample_baseline"
    assert payload["relevant_rate"] == 0.0
