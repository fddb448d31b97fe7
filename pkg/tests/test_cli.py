import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import toy
from conftest import GOLDEN
from newscam.cli import main
from newscam.embeddings import load_embeddings
from newscam.synthetic import keyword_corpus, write_csv


@pytest.fixture(scope="module")
def tiny_csvs(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny")
    write_csv(d / "True.csv", [f"CITY (Reuters) - real story number {i}" for i in range(5)])
    write_csv(d / "Fake.csv", [f"fake story number {i}!" for i in range(5)])
    return d


@pytest.fixture(scope="module")
def keyword_split(tmp_path_factory):
    d = tmp_path_factory.mktemp("kw")
    corpus, _ = keyword_corpus(n_per_class=150, seed=0)
    write_csv(d / "True.csv", [doc.text for doc in corpus if doc.label == 1])
    write_csv(d / "Fake.csv", [doc.text for doc in corpus if doc.label == 0])
    assert main(["prepare", "--real-csv", str(d / "True.csv"), "--fake-csv", str(d / "Fake.csv"),
                 "--out", str(d / "prep")]) == 0
    return d / "prep" / "split.json"


def encoder_flags(res):
    return ["--weights", str(res / "weights.bin"), "--vocab", str(res / "vocab.txt"),
            "--num-heads", "2", "--max-length", "64"]


def test_prepare_split_sizes_and_determinism(tiny_csvs, tmp_path, capsys):
    args = ["prepare", "--real-csv", str(tiny_csvs / "True.csv"),
            "--fake-csv", str(tiny_csvs / "Fake.csv"), "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert "train 8 / test 2" in capsys.readouterr().out
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "split.json").read_text())
    b = json.loads((tmp_path / "b" / "split.json").read_text())
    assert a["train_indices"] == b["train_indices"]
    assert a["class_counts"] == {"0": 5, "1": 5}
    assert a["label_mapping"] == {"1": "real", "0": "fake"}
    assert (tmp_path / "a" / "prepare.manifest").read_text().startswith("command=prepare\n")


def test_linear_eval_tfidf_row(keyword_split, tmp_path):
    out = tmp_path / "m.json"
    assert main(["linear-eval", "--split", str(keyword_split), "--backend", "tfidf",
                 "--epochs", "40,80", "--out", str(out), "--head-out", str(tmp_path / "h.json")]) == 0
    result = json.loads(out.read_text())
    row = result["row"]
    assert set(row) == {"vectorizer", "notation", "ngram_type", "stop_word_removal",
                        "dimension", "test_accuracy"}
    assert row["vectorizer"] == "TF-IDF" and row["ngram_type"] == "unigram"
    assert row["stop_word_removal"] is True
    assert row["dimension"] <= 300
    assert row["test_accuracy"] >= 0.95
    assert len(result["grid"]) == 6
    head = json.loads((tmp_path / "h.json").read_text())
    assert head["dim"] == row["dimension"] and head["config"]["epochs"] in (40, 80)


def test_rerun_reproduces_output_bytes(keyword_split, tmp_path):
    out = tmp_path / "m.json"
    args = ["linear-eval", "--split", str(keyword_split), "--backend", "tfidf", "--ngram", "2",
            "--no-stopwords", "--epochs", "3", "--weight-decays", "0.1,0.001", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    out.unlink()
    assert main(["rerun", str(out) + ".manifest"]) == 0
    assert out.read_bytes() == first
    assert json.loads(first)["row"]["ngram_type"] == "bi-gram"


def test_config_file_with_flag_override(tiny_csvs, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# settings\nreal_csv={tiny_csvs / 'True.csv'}\n"
                   f"fake-csv={tiny_csvs / 'Fake.csv'}\nseed=5\nfraction=0.6\n")
    out = tmp_path / "p"
    assert main(["prepare", "--config", str(cfg), "--seed", "9", "--out", str(out)]) == 0
    manifest = json.loads((out / "split.json").read_text())
    assert manifest["seed"] == 9 and len(manifest["train_indices"]) == 6


def test_config_unknown_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n")
    assert main(["prepare", "--config", str(cfg)]) == 1
    assert "unknown setting" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["prepare", "--bogus"]) == 1
    assert main(["linear-eval", "--backend", "nope"]) == 1
    assert main(["prepare", "--real-csv", str(tmp_path / "missing.csv"),
                 "--fake-csv", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2
    assert "file not found" in capsys.readouterr().err


def test_cam_without_head_explains(tmp_path, capsys):
    assert main(["cam", "--backend", "bert", "--text", "x", "--out", str(tmp_path / "c.json")]) == 2
    assert "--head-out" in capsys.readouterr().err


def test_cam_matches_golden(toy_resources, tmp_path, capsys):
    out = tmp_path / "cam.json"
    assert main(["cam", "--head", str(GOLDEN / "head.json"), "--backend", "bert",
                 *encoder_flags(toy_resources), "--text", toy.TOY_SENTENCE,
                 "--out", str(out)]) == 0
    got = json.loads(out.read_text())
    want = json.loads((GOLDEN / "cam.json").read_text())
    assert got["tokens"] == want["tokens"]
    assert got["flags"] == want["flags"]
    assert got["class"] == want["class"] and got["class_source"] == "predicted"
    np.testing.assert_allclose(got["scores"], want["scores"], rtol=0, atol=1e-9)
    np.testing.assert_allclose(got["logits"], want["logits"], rtol=0, atol=1e-9)
    assert "\x1b[31m" in capsys.readouterr().out


def test_cam_zero_head_flags_earliest_tokens(toy_resources, tmp_path):
    head = tmp_path / "zero.json"
    head.write_text(json.dumps({"W": [[0.0] * 16] * 2, "b": [0.0, 0.0]}))
    out = tmp_path / "cam.json"
    assert main(["cam", "--head", str(head), "--backend", "bert", *encoder_flags(toy_resources),
                 "--text", toy.TOY_SENTENCE, "--class", "0", "--format", "html",
                 "--out", str(out)]) == 0
    got = json.loads(out.read_text())
    assert got["scores"] == [0.0] * 27
    assert got["flags"] == [True] * 3 + [False] * 24
    assert got["class_source"] == "flag"
    assert got["rendering"].startswith('<span class="cam-hot">president</span>')


def test_pca_csv(keyword_split, tmp_path):
    out = tmp_path / "pca.csv"
    assert main(["pca", "--split", str(keyword_split), "--backend", "tfidf",
                 "--out", str(out)]) == 0
    with out.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    pts = np.array([[float(r["pc1"]), float(r["pc2"])] for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    np.testing.assert_allclose(pts.mean(axis=0), 0, atol=1e-12)
    c0, c1 = pts[labels == 0].mean(axis=0), pts[labels == 1].mean(axis=0)
    within = np.sqrt(np.mean([np.sum((pts[labels == k] - c) ** 2, axis=1).mean()
                              for k, c in ((0, c0), (1, c1))]))
    assert np.linalg.norm(c0 - c1) > 4 * within


def test_corr_matches_golden(toy_resources, tmp_path):
    out = tmp_path / "corr"
    assert main(["corr", *encoder_flags(toy_resources), "--text", toy.TOY_SENTENCE,
                 "--out", str(out)]) == 0
    want = json.loads((GOLDEN / "corr.json").read_text())
    for name, key in (("corr_static.csv", "static"), ("corr_encoder.csv", "encoder")):
        with (out / name).open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][1:] == want["tokens"]
        m = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        np.testing.assert_allclose(m, want[key], rtol=0, atol=1e-9)
        np.testing.assert_array_equal(m, m.T)
        np.testing.assert_array_equal(np.diag(m), 1.0)
    static = np.loadtxt(out / "corr_static.csv", delimiter=",", skiprows=1, usecols=range(1, 28))
    the = [i for i, t in enumerate(want["tokens"]) if t == "the"]
    assert static[the[0], the[1]] == 1.0


def test_extract_word_embeddings(toy_resources, toy_weights, tmp_path):
    out = tmp_path / "words.txt"
    assert main(["extract-word-embeddings", *encoder_flags(toy_resources), "--out", str(out)]) == 0
    table = load_embeddings(out)
    assert table.tokens == toy.vocab().tokens
    np.testing.assert_array_equal(table.vectors, toy_weights.word)


def test_static_backend_linear_eval(keyword_split, toy_resources, tmp_path):
    emb = tmp_path / "words.txt"
    assert main(["extract-word-embeddings", *encoder_flags(toy_resources), "--out", str(emb)]) == 0
    out = tmp_path / "m.json"
    assert main(["linear-eval", "--split", str(keyword_split), "--backend", "static",
                 "--embeddings", str(emb), "--epochs", "2", "--weight-decays", "0.1",
                 "--out", str(out)]) == 0
    result = json.loads(out.read_text())
    assert result["row"]["dimension"] == 16
    stats = result["representation_stats"]
    assert stats["documents"] == 300 and stats["skipped_tokens"] > 0


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "newscam.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "linear-eval" in r.stdout and "extract-word-embeddings" in r.stdout
