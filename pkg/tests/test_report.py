import json
from fractions import Fraction

import pytest

from chainforge.chains import aggregate, attenuate, find_links
from chainforge.corpus import Corpus
from chainforge.graph import InteractionEdge, InteractionGraph, MODE_FILTERED
from chainforge.report import (ALLUVIAL_SCHEMA_VERSION, PipelineError,
                               export_alluvial, run_pipeline, trend_series)
from chainforge.synth import SynthConfig, generate, write_outputs

from conftest import make_post

JAN_2010 = 1262304000  # 2010-01-01 UTC
FEB_2010 = 1264982400
MAR_2010 = 1267401600


def edge(seller, buyer, category="crypter", t=0, eid=None):
    eid = eid or f"{seller}{buyer}{t}"
    return InteractionEdge(purchase_time=t, sell_post=f"p{eid}",
                           buy_reply=f"r{eid}", seller=seller, buyer=buyer,
                           category=category)


def product_corpus(spec):
    """spec: list of (post_id, timestamp); one single-post thread each."""
    return Corpus("f", [make_post(post_id=pid, thread_id=pid, timestamp=ts,
                                  body="text", position=0)
                        for pid, ts in spec])


class TestTrendSeries:
    def test_single_month_split(self):
        posts = [(f"p{i}", JAN_2010 + i * 3600) for i in range(10)]
        labels = {f"p{i}": ("crypter" if i < 5 else "other")
                  for i in range(10)}
        series = trend_series(product_corpus(posts), labels)
        assert len(series.buckets) == 1
        bucket = series.buckets[0]
        assert bucket.month == "2010-01"
        assert bucket.volume == 10
        assert bucket.percentages["crypter"] == pytest.approx(50.0)
        assert bucket.percentages["other"] == pytest.approx(50.0)

    def test_three_month_hand_table(self):
        spec = [("a", JAN_2010), ("b", JAN_2010 + 86400),
                ("c", MAR_2010), ("d", MAR_2010 + 3600), ("e", MAR_2010 + 7200)]
        labels = {"a": "account", "b": "malware", "c": "account",
                  "d": "account", "e": "spam_tool"}
        series = trend_series(product_corpus(spec), labels)
        assert [b.month for b in series.buckets] == \
            ["2010-01", "2010-02", "2010-03"]
        jan, feb, mar = series.buckets
        assert (jan.volume, feb.volume, mar.volume) == (2, 0, 3)
        assert jan.counts["account"] == 1 and jan.counts["malware"] == 1
        assert mar.counts["account"] == 2 and mar.counts["spam_tool"] == 1
        assert mar.percentages["account"] == pytest.approx(200 / 3)

    def test_empty_months_present_with_zero_volume(self):
        spec = [("a", JAN_2010), ("b", MAR_2010)]
        series = trend_series(product_corpus(spec),
                              {"a": "account", "b": "account"})
        assert series.buckets[1].month == "2010-02"
        assert series.buckets[1].volume == 0
        assert all(v == 0.0 for v in series.buckets[1].percentages.values())

    def test_percentages_sum_to_100_on_nonempty_buckets(self):
        corpus, truth = generate(SynthConfig(seed=5, docs_per_category=6,
                                             n_users=60))
        series = trend_series(corpus, truth.post_categories)
        for bucket in series.buckets:
            if bucket.volume:
                assert sum(bucket.percentages.values()) == \
                    pytest.approx(100.0, abs=0.1)

    def test_csv_round_trip_values(self):
        spec = [("a", JAN_2010), ("b", JAN_2010 + 3600)]
        series = trend_series(product_corpus(spec),
                              {"a": "account", "b": "botnet"})
        csv_text = series.to_csv()
        header, row = csv_text.strip().splitlines()
        columns = dict(zip(header.split(","), row.split(",")))
        assert columns["month"] == "2010-01"
        assert columns["volume"] == "2"
        assert float(columns["pct_account"]) == pytest.approx(50.0)

    def test_empty_corpus(self):
        series = trend_series(Corpus("f", []), {})
        assert series.buckets == []


class TestExportAlluvial:
    @staticmethod
    def _graph():
        edges = [edge("D", "C", "account", t=0),
                 edge("C", "B", "social_booster", t=10),
                 edge("B", "A", "spam_tool", t=20)]
        graph = InteractionGraph(mode=MODE_FILTERED, edges=tuple(sorted(edges)))
        return aggregate(attenuate(find_links(graph)))

    def test_empty_graph_zero_flows(self):
        payload = export_alluvial(aggregate([]))
        assert payload["schema_version"] == ALLUVIAL_SCHEMA_VERSION
        assert payload["flows"] == []
        assert payload["nodes"] == []
        assert payload["levels"] == []

    def test_two_link_fixture_widths_equal_weights(self):
        chain_graph = self._graph()
        payload = export_alluvial(chain_graph)
        assert len(payload["flows"]) == 2
        by_pair = {(f["src_category"], f["dst_category"]): f
                   for f in payload["flows"]}
        assert by_pair[("account", "social_booster")]["weight"] == 1.0
        assert by_pair[("social_booster", "spam_tool")]["weight"] == 1.0
        for flow in payload["flows"]:
            assert flow["color_key"] == flow["src_category"]

    def test_levels_match_chain_levels(self):
        chain_graph = self._graph()
        payload = export_alluvial(chain_graph)
        exported = {(f["src_category"], f["src_level"],
                     f["dst_category"], f["dst_level"])
                    for f in payload["flows"]}
        from_graph = {(s.category, s.level, d.category, d.level)
                      for s, d, _, _ in chain_graph.edges}
        assert exported == from_graph
        assert payload["levels"] == sorted(payload["levels"], reverse=True)

    def test_originating_chain_counts(self):
        payload = export_alluvial(self._graph())
        nodes = {(n["category"], n["level"]): n for n in payload["nodes"]}
        assert nodes[("account", 3)]["originating_chains"] == 1.0
        assert nodes[("social_booster", 2)]["originating_chains"] == 0.0
        assert nodes[("spam_tool", 1)]["originating_chains"] == 0.0

    def test_category_filter_keeps_either_endpoint(self):
        payload = export_alluvial(self._graph(),
                                  category_filter=lambda c: c == "account")
        pairs = {(f["src_category"], f["dst_category"])
                 for f in payload["flows"]}
        assert pairs == {("account", "social_booster")}

    def test_distinct_weights_give_distinct_exports(self):
        base = self._graph()
        doubled_edges = tuple((s, d, w * 2, links)
                              for s, d, w, links in base.edges)
        from chainforge.chains import SupplyChainGraph
        doubled = SupplyChainGraph(nodes=base.nodes, edges=doubled_edges)
        assert json.dumps(export_alluvial(base), sort_keys=True) != \
            json.dumps(export_alluvial(doubled), sort_keys=True)

    def test_deterministic_json(self):
        a = json.dumps(export_alluvial(self._graph()), sort_keys=True)
        b = json.dumps(export_alluvial(self._graph()), sort_keys=True)
        assert a == b


EXPECTED_ARTIFACTS = [
    "alluvial.json", "edges.jsonl", "edges_baseline.jsonl", "links.jsonl",
    "links_baseline.jsonl", "manifest.json", "metrics.json",
    "model_product.json", "model_reply.json", "stats.json",
    "tfidf_product.json", "tfidf_reply.json", "trends.csv",
]


def pipeline_config(data_dir, out_dir, epochs=6):
    return {
        "corpus": {"path": str(data_dir / "corpus.jsonl"), "name": "synthetic"},
        "labels": {"products": str(data_dir / "product_labels.json"),
                   "replies": str(data_dir / "reply_labels.json"),
                   "mode": "kfold", "kfold_k": 3},
        "featurize": {"n_min": 2, "n_max": 4, "min_df": 2},
        "train": {"seed": 42, "epochs": epochs, "batch_size": 64,
                  "learning_rate": 0.5},
        "chains": {"traversal": "exhaustive"},
        "report": {"out_dir": str(out_dir)},
    }


@pytest.fixture(scope="module")
def synth_dataset(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("synthdata")
    corpus, truth = generate(SynthConfig(
        seed=42, docs_per_category=12, n_users=150,
        planted_chains=[("crypter", "ddos_service", 3),
                        ("account", "social_booster", 2)]))
    write_outputs(corpus, truth, data_dir)
    return data_dir, truth


class TestPipeline:
    def test_end_to_end_manifest_complete(self, synth_dataset, tmp_path):
        data_dir, truth = synth_dataset
        out = tmp_path / "out"
        artifacts = run_pipeline(pipeline_config(data_dir, out))
        assert sorted(artifacts) == sorted(EXPECTED_ARTIFACTS)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["schema_version"].startswith("chainforge-manifest")
        listed = set(manifest["artifacts"])
        assert listed == set(EXPECTED_ARTIFACTS) - {"manifest.json"}
        from chainforge.util import sha256_file
        for name, digest in manifest["artifacts"].items():
            assert sha256_file(out / name) == digest

    def test_rerun_is_byte_identical(self, synth_dataset, tmp_path):
        data_dir, _ = synth_dataset
        out = tmp_path / "a"
        config = pipeline_config(data_dir, out)
        run_pipeline(config)
        snapshot = {name: (out / name).read_bytes()
                    for name in EXPECTED_ARTIFACTS}
        run_pipeline(config)
        for name in EXPECTED_ARTIFACTS:
            assert (out / name).read_bytes() == snapshot[name], name
        # artifacts other than the manifest (which hashes the config,
        # including paths) are also independent of the output location
        other = tmp_path / "b"
        run_pipeline(pipeline_config(data_dir, other))
        for name in EXPECTED_ARTIFACTS:
            if name != "manifest.json":
                assert (other / name).read_bytes() == snapshot[name], name

    def test_stage_named_errors(self, synth_dataset, tmp_path):
        data_dir, _ = synth_dataset
        config = pipeline_config(data_dir, tmp_path / "out")
        config["corpus"]["path"] = str(tmp_path / "missing.jsonl")
        with pytest.raises(PipelineError, match="ingest"):
            run_pipeline(config)
        config = pipeline_config(data_dir, tmp_path / "out2")
        config["labels"]["products"] = str(tmp_path / "missing.json")
        with pytest.raises(PipelineError, match="annotations"):
            run_pipeline(config)

    def test_fill_mode_keeps_annotations(self, synth_dataset, tmp_path):
        data_dir, truth = synth_dataset
        out = tmp_path / "out"
        config = pipeline_config(data_dir, out)
        config["labels"]["mode"] = "fill"
        run_pipeline(config)
        # with full annotations and fill mode the graph uses truth labels,
        # so the filtered links are exactly the planted set
        from chainforge.chains import import_jsonl
        links = import_jsonl(out / "links.jsonl")
        found = {(l.middle_user, l.purchase_edge.buy_reply,
                  l.sale_edge.buy_reply) for l in links}
        planted = {(p.middle_user, p.purchase_reply, p.sale_reply)
                   for p in truth.planted_links}
        assert found == planted
