import json

import pytest

from conftest import ABCD, PAPER1, PAPER2
from ctdnovelty.cli import main
from ctdnovelty.corpus import write_corpus
from ctdnovelty.synthetic import random_corpus, two_cluster_corpus


def write_records(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        write_corpus(records, fh)
    return str(path)


@pytest.fixture
def corpus(tmp_path):
    g = random_corpus(200, range(2000, 2004), vocab_size=50, mean_terms=5, seed=1)
    return write_records(tmp_path / "c.jsonl", g.records)


@pytest.fixture
def labelled(tmp_path):
    tc = two_cluster_corpus(seed=2, cluster_size=15, papers_per_year=40, n_novel=30, n_conventional=60)
    return write_records(tmp_path / "l.jsonl", tc.records)


def test_score_writes_csv_and_config(tmp_path, corpus):
    out = tmp_path / "s.csv"
    assert main(["score", "--corpus", corpus, "--method", "term_paper", "--method", "geo_distance",
                 "--out", str(out), "--workers", "1"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("paper_id,year,method,n_terms,ctd")
    assert len(lines) == 1 + 2 * 200
    cfg = json.loads((tmp_path / "s.csv.config.json").read_text())
    assert cfg["methods"] == ["term_paper", "geo_distance"] and cfg["window"] == 5
    assert "workers" not in cfg


def test_parallel_output_byte_identical(tmp_path, corpus):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["score", "--corpus", corpus, "--out", str(a), "--workers", "1"]) == 0
    assert main(["score", "--corpus", corpus, "--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file_then_flags(tmp_path, corpus):
    conf = tmp_path / "cfg.json"
    conf.write_text(json.dumps({"window": 2, "methods": ["term_term"], "format": "jsonl"}))
    out = tmp_path / "s.jsonl"
    assert main(["score", "--config", str(conf), "--corpus", corpus, "--window", "3", "--out", str(out)]) == 0
    echoed = json.loads((tmp_path / "s.jsonl.config.json").read_text())
    assert echoed["window"] == 3 and echoed["format"] == "jsonl"
    assert json.loads(out.read_text().splitlines()[0])["method"] == "term_term"
    conf.write_text(json.dumps({"windw": 2}))
    assert main(["score", "--config", str(conf), "--corpus", corpus, "--out", str(out)]) == 2


def test_matrix_override_worked_example(tmp_path):
    corpus = tmp_path / "t.jsonl"
    corpus.write_text("\n".join(json.dumps({"id": p, "year": 2000, "terms": list(ABCD)}) for p in ("p1", "p2")))
    override = tmp_path / "o.json"
    override.write_text(json.dumps({
        "p1": {"terms": list(ABCD), "matrix": PAPER1.tolist()},
        "p2": {"terms": list(ABCD), "matrix": PAPER2.tolist()},
    }))
    out = tmp_path / "s.csv"
    assert main(["score", "--corpus", str(corpus), "--matrix-override", str(override), "--out", str(out)]) == 0
    rows = [ln.split(",") for ln in out.read_text().splitlines()[1:]]
    assert [(r[0], float(r[4]), float(r[6])) for r in rows] == [("p1", 5.0, 3.0), ("p2", 9.0, 3.0)]
    assert all(r[2] == "override" and r[8] == "" for r in rows)
    override.write_text(json.dumps({"p1": {"matrix": [[0]]}}))
    assert main(["score", "--corpus", str(corpus), "--matrix-override", str(override), "--out", str(out)]) == 2


def test_embed_then_score(tmp_path, corpus):
    emb = tmp_path / "emb"
    assert main(["embed", "--corpus", corpus, "--out", str(emb), "--dim", "8", "--epochs", "2"]) == 0
    files = sorted(p.name for p in emb.glob("*.ctdemb"))
    # the first year has an empty window, so no table
    assert files == ["emb_2001_w5.ctdemb", "emb_2002_w5.ctdemb", "emb_2003_w5.ctdemb"]
    assert (emb / "config.json").exists()
    out = tmp_path / "s.csv"
    assert main(["score", "--corpus", corpus, "--method", "embed", "--embeddings", str(emb),
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 201


def test_embed_missing_is_actionable(tmp_path, corpus, capsys):
    assert main(["score", "--corpus", corpus, "--method", "embed", "--out", str(tmp_path / "s.csv")]) == 2
    assert "ctdnovelty embed" in capsys.readouterr().err


def test_build_net_caches(tmp_path, corpus, capsys):
    nets = tmp_path / "nets"
    assert main(["build-net", "--corpus", corpus, "--out", str(nets)]) == 0
    assert "4 built, 0 cached" in capsys.readouterr().err
    assert main(["build-net", "--corpus", corpus, "--out", str(nets)]) == 0
    assert "0 built, 4 cached" in capsys.readouterr().err
    assert main(["build-net", "--corpus", corpus, "--out", str(nets), "--force"]) == 0
    assert "4 built, 0 cached" in capsys.readouterr().err
    assert len(list(nets.glob("net_*_w5.ctdnet"))) == 4


def test_stats(tmp_path, corpus):
    out = tmp_path / "st"
    assert main(["stats", "--corpus", corpus, "--out", str(out)]) == 0
    counts = (out / "term_counts.csv").read_text().splitlines()
    assert counts[0] == "year,papers,mean_terms" and len(counts) == 5
    edges = (out / "edge_classes.csv").read_text().splitlines()
    assert edges[1].split(",")[-3] == "1.0"  # first year: every pair new


def test_match_and_eval(tmp_path, labelled):
    pairs = tmp_path / "pairs.csv"
    assert main(["match", "--corpus", labelled, "--out", str(pairs), "--key", "year", "--key", "venue"]) == 0
    lines = pairs.read_text().splitlines()
    assert lines[0] == "case_id,control_id,year,venue" and len(lines) > 10
    scores = tmp_path / "s.csv"
    assert main(["score", "--corpus", labelled, "--out", str(scores)]) == 0
    runs = tmp_path / "runs.csv"
    assert main(["eval", "--corpus", labelled, "--scores", str(scores), "--out", str(runs),
                 "--key", "year", "--measure", "ctd", "--measure", "mean_pairwise", "--runs", "3"]) == 0
    rows = runs.read_text().splitlines()
    assert len(rows) == 1 + 2 * (3 + 2)
    assert rows[1].startswith("term_term,ctd,0,")


def test_eval_without_labels(tmp_path, corpus, capsys):
    scores = tmp_path / "s.csv"
    main(["score", "--corpus", corpus, "--out", str(scores)])
    assert main(["eval", "--corpus", corpus, "--scores", str(scores), "--out", str(tmp_path / "r.csv")]) == 2
    assert "label" in capsys.readouterr().err


def test_bad_inputs_exit_two(tmp_path, capsys):
    assert main(["score", "--corpus", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "s.csv")]) == 2
    assert "cannot read corpus" in capsys.readouterr().err
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "year": 2000, "terms": ["x", "y"]}\n{"id": "b"}\n')
    assert main(["score", "--corpus", str(bad), "--out", str(tmp_path / "s.csv")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["score", "--corpus", str(bad)]) == 2


def test_per_paper_failure_exit_one(tmp_path):
    corpus = tmp_path / "t.jsonl"
    corpus.write_text(json.dumps({"id": "p1", "year": 2000, "terms": ["a", "b", "c"]}) + "\n"
                      + json.dumps({"id": "p2", "year": 2000, "terms": ["a", "b"]}) + "\n")
    override = tmp_path / "o.json"
    # a one-term override cannot be scored
    override.write_text(json.dumps({"p1": {"terms": ["a"], "matrix": [[0]]}}))
    out = tmp_path / "s.csv"
    assert main(["score", "--corpus", str(corpus), "--matrix-override", str(override), "--out", str(out)]) == 1
    assert len(out.read_text().splitlines()) == 2


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "ctdnovelty", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "build-net" in proc.stdout
