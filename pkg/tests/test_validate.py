import csv
import json
from fractions import Fraction

import pytest

from chainforge.chains import attenuate, find_links
from chainforge.corpus import Corpus
from chainforge.graph import InteractionEdge, InteractionGraph, MODE_FILTERED
from chainforge.validate import (BaselineComparison, LinkValidationLabel,
                                 MODE_ALGORITHM_OUTPUT, MODE_SAMPLE_BASELINE,
                                 ReviewError, baseline_comparison,
                                 export_for_review, import_labels,
                                 relevance_report, report_from_weights,
                                 sample_links)

from conftest import make_thread


def fixture_corpus_and_links():
    posts = make_thread("t1", "S", 100,
                        "selling a crypter fully undetected runtime included",
                        [("B", 150, "payment sent")])
    posts += make_thread("t2", "B", 200,
                         "offering ddos attacks strong booter for hire",
                         [("A1", 250, "bought an hour"),
                          ("A2", 300, "bought a day")])
    posts += make_thread("t3", "B", 400,
                         "offering malware loader pay per install",
                         [("A3", 450, "payment sent")])
    corpus = Corpus("fixture", posts)
    from chainforge.graph import build
    graph = build(corpus,
                  {"t1": "crypter", "t2": "ddos_service", "t3": "malware"},
                  {"t1-r1": "buy", "t2-r1": "buy", "t2-r2": "buy",
                   "t3-r1": "buy"})
    links = attenuate(find_links(graph))
    assert len(links) == 3  # middle B: purchase t1-r1 before 3 sales
    return corpus, links


def read_review_rows(path):
    lines = [l for l in path.read_text(encoding="utf-8").splitlines()
             if not l.startswith("#")]
    return list(csv.DictReader(lines))


class TestExportForReview:
    def test_three_link_fixture_rows_and_excerpts(self, tmp_path):
        corpus, links = fixture_corpus_and_links()
        path = tmp_path / "review.csv"
        export_for_review(links, corpus, path)
        rows = read_review_rows(path)
        assert len(rows) == 3
        by_id = {r["link_id"]: r for r in rows}
        for link in links:
            row = by_id[link.link_id]
            assert row["middle_user"] == "B"
            assert row["src_category"] == "crypter"
            assert row["src_excerpt"].startswith("selling a crypter")
            assert row["label"] == ""
        sidecar = json.loads((tmp_path / "review.bodies.json").read_text())
        assert set(sidecar) == {l.link_id for l in links}

    def test_empty_links_header_only(self, tmp_path):
        corpus, _ = fixture_corpus_and_links()
        path = tmp_path / "review.csv"
        export_for_review([], corpus, path)
        rows = read_review_rows(path)
        assert rows == []
        header = path.read_text().splitlines()[0]
        assert header.startswith("# chainforge-review/1")

    def test_missing_provenance_flagged_not_dropped(self, tmp_path):
        corpus, links = fixture_corpus_and_links()
        shrunk = Corpus("f", [p for p in corpus.posts if p.thread_id != "t1"])
        path = tmp_path / "review.csv"
        export_for_review(links, shrunk, path)
        rows = read_review_rows(path)
        assert len(rows) == 3
        assert all("missing_post:t1" in r["flags"] for r in rows)

    def test_excerpts_are_quote_stripped_and_clipped(self, tmp_path):
        corpus, links = fixture_corpus_and_links()
        path = tmp_path / "review.csv"
        export_for_review(links, corpus, path)
        for row in read_review_rows(path):
            assert len(row["src_excerpt"]) <= 500
            assert len(row["dst_excerpt"]) <= 500


class TestImportLabels:
    def test_roundtrip_labels_attach_to_same_ids(self, tmp_path):
        corpus, links = fixture_corpus_and_links()
        path = tmp_path / "review.csv"
        export_for_review(links, corpus, path)
        wanted = {link.link_id: label for link, label in
                  zip(links, ["related", "resell", "unrelated"])}
        rows = read_review_rows(path)
        for row in rows:
            row["label"] = wanted[row["link_id"]]
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        labels = import_labels(path)
        assert labels == {lid: LinkValidationLabel(lab)
                          for lid, lab in wanted.items()}

    def test_case_insensitive_and_spaces(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("link_id,label\nL1,Related\nL2,LACK OF PRODUCT\n")
        labels = import_labels(path)
        assert labels["L1"] is LinkValidationLabel.RELATED
        assert labels["L2"] is LinkValidationLabel.LACK_OF_PRODUCT

    def test_unknown_label_rejected_with_row_number(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("link_id,label\nL1,maybe\n")
        with pytest.raises(ReviewError, match=r"row 2.*maybe"):
            import_labels(path)

    def test_conflicting_duplicates_fatal(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("link_id,label\nL1,related\nL1,unrelated\n")
        with pytest.raises(ReviewError, match="conflicting"):
            import_labels(path)

    def test_agreeing_duplicates_accepted_once(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("link_id,label\nL1,resell\nL1,resell\n")
        assert import_labels(path) == {"L1": LinkValidationLabel.RESELL}

    def test_unlabeled_rows_skipped(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("link_id,label\nL1,related\nL2,\n")
        assert import_labels(path) == {"L1": LinkValidationLabel.RELATED}

    def test_row_reordering_is_stable(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_text("link_id,label\nL1,related\nL2,resell\n")
        b.write_text("link_id,label\nL2,resell\nL1,related\n")
        assert import_labels(a) == import_labels(b)


class TestRelevanceReport:
    def test_table6_hf_algorithm_output(self):
        report = report_from_weights(
            {"related": 37, "resell": 6, "unrelated": 34,
             "lack_of_product": 15, "lack_of_purchase": 28},
            mode=MODE_ALGORITHM_OUTPUT)
        paper = {"related": 31, "resell": 5, "unrelated": 28,
                 "lack_of_product": 12, "lack_of_purchase": 24}
        for label, pct in paper.items():
            assert abs(report.percent_by_label[label] - pct) <= 1.0
        assert sum(report.percent_by_label.values()) == pytest.approx(100, abs=0.1)

    def test_table6_antichat_algorithm_output(self):
        report = report_from_weights(
            {"related": 181, "resell": 77, "unrelated": 82,
             "lack_of_product": 57, "lack_of_purchase": 43})
        paper = {"related": 41, "resell": 17, "unrelated": 18,
                 "lack_of_product": 13, "lack_of_purchase": 10}
        for label, pct in paper.items():
            assert abs(report.percent_by_label[label] - pct) <= 1.0

    def test_single_user_links_contribute_exactly_one(self):
        _, links = fixture_corpus_and_links()
        labels = {l.link_id: LinkValidationLabel.RELATED for l in links}
        report = relevance_report(links, labels)
        assert report.weight_by_label["related"] == pytest.approx(1.0, abs=1e-12)
        assert report.relevant_rate == pytest.approx(1.0, abs=1e-12)

    def test_totals_match_attenuated_weights(self):
        _, links = fixture_corpus_and_links()
        labels = {links[0].link_id: "related", links[1].link_id: "unrelated",
                  links[2].link_id: "resell"}
        report = relevance_report(links, labels)
        expected_total = float(sum((l.weight for l in links), Fraction(0)))
        assert report.total_weight == pytest.approx(expected_total, abs=1e-9)

    def test_unlabeled_link_is_fatal(self):
        _, links = fixture_corpus_and_links()
        labels = {links[0].link_id: "related"}
        with pytest.raises(ReviewError, match="unlabeled"):
            relevance_report(links, labels)

    def test_unattenuated_link_is_fatal(self):
        corpus, _ = fixture_corpus_and_links()
        from chainforge.graph import build
        graph = build(corpus, {"t1": "crypter", "t2": "ddos_service",
                               "t3": "malware"},
                      {"t1-r1": "buy", "t2-r1": "buy", "t2-r2": "buy",
                       "t3-r1": "buy"})
        raw = find_links(graph)
        with pytest.raises(ReviewError, match="not attenuated"):
            relevance_report(raw, {l.link_id: "related" for l in raw})

    def test_label_upgrade_never_decreases_relevant_rate(self):
        _, links = fixture_corpus_and_links()
        labels = {links[0].link_id: "related", links[1].link_id: "unrelated",
                  links[2].link_id: "unrelated"}
        before = relevance_report(links, labels).relevant_rate
        labels[links[1].link_id] = "related"
        after = relevance_report(links, labels).relevant_rate
        assert after >= before

    def test_percentages_sum_to_100(self):
        _, links = fixture_corpus_and_links()
        labels = {links[0].link_id: "related", links[1].link_id: "resell",
                  links[2].link_id: "lack_of_purchase"}
        report = relevance_report(links, labels)
        assert sum(report.percent_by_label.values()) == pytest.approx(100,
                                                                      abs=0.1)
        assert "relevant rate" in report.to_table()


class TestBaselineComparison:
    def test_identical_mode_tags_error(self):
        r = report_from_weights({"related": 1}, mode=MODE_ALGORITHM_OUTPUT)
        with pytest.raises(ReviewError, match="mode tag"):
            baseline_comparison(r, r)

    def test_zero_delta_for_identical_rates(self):
        a = report_from_weights({"related": 1, "unrelated": 1},
                                mode=MODE_ALGORITHM_OUTPUT)
        b = report_from_weights({"related": 2, "unrelated": 2},
                                mode=MODE_SAMPLE_BASELINE)
        cmp = baseline_comparison(a, b)
        assert cmp.improvement == pytest.approx(0.0, abs=1e-12)

    def test_paper_headline_direction(self):
        filtered = report_from_weights(
            {"related": 37, "resell": 6, "unrelated": 34,
             "lack_of_product": 15, "lack_of_purchase": 28},
            mode=MODE_ALGORITHM_OUTPUT)
        baseline = report_from_weights(
            {"related": 4, "resell": 1, "unrelated": 1,
             "lack_of_product": 0, "lack_of_purchase": 30},
            mode=MODE_SAMPLE_BASELINE)
        cmp = baseline_comparison(filtered, baseline)
        assert filtered.relevant_rate == pytest.approx(0.36, abs=0.01)
        assert baseline.relevant_rate == pytest.approx(0.14, abs=0.01)
        assert cmp.improvement > 0

    def test_to_dict(self):
        cmp = BaselineComparison(0.36, 0.13)
        assert cmp.to_dict()["improvement"] == pytest.approx(0.23)


class TestSampleLinks:
    def test_seeded_and_uniform_without_replacement(self):
        _, links = fixture_corpus_and_links()
        sample = sample_links(links, 2, seed=3)
        assert len(sample) == 2
        assert sample == sample_links(links, 2, seed=3)
        assert len({l.link_id for l in sample}) == 2

    def test_oversized_sample_returns_all(self):
        _, links = fixture_corpus_and_links()
        assert sample_links(links, 100, seed=0) == list(links)
