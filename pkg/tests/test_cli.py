import pytest

from spanmine.cli import main
from spanmine.evaluation import load_report
from spanmine.objective import load_params

IDENTITY = "toy:d=32,w=0,decay=1"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_index_then_search_reports_offsets(tmp_path, capsys):
    docs = tmp_path / "docs.txt"
    docs.write_text("a\tThe Valkyrie crossed the river.\nb\tNothing to see, here.\n")
    idx = tmp_path / "x.saix"
    code, out, _ = run(capsys, "index", "--input", str(docs), "--out", str(idx), "--encoder", IDENTITY, "--max-span", "5")
    assert code == 0 and "indexed 2 documents" in out
    code, out, _ = run(capsys, "search", "--index", str(idx), "--query", "valkyrie CROSSED", "--top-k", "1")
    assert code == 0
    doc_id, score, start, end, text = out.strip().split("\t")
    assert (doc_id, int(start), int(end), text) == ("a", 4, 20, "Valkyrie crossed")
    assert float(score) == pytest.approx(1.0, abs=1e-6)


def test_search_directory_input_and_top_k(tmp_path, capsys):
    d = tmp_path / "corpus"
    d.mkdir()
    for i in range(4):
        (d / f"doc{i}.txt").write_text(f"alpha beta gamma {i} delta")
    idx = tmp_path / "y.saix"
    assert main(["index", "--input", str(d), "--out", str(idx)]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "search", "--index", str(idx), "--query", "beta gamma", "--top-k", "3")
    assert code == 0 and len(out.strip().splitlines()) == 3


def test_search_empty_query(tmp_path, capsys):
    docs = tmp_path / "docs.txt"
    docs.write_text("one two\n")
    main(["index", "--input", str(docs), "--out", str(tmp_path / "i.saix")])
    code, _, err = run(capsys, "search", "--index", str(tmp_path / "i.saix"), "--query", " ... ")
    assert code == 2 and "no tokens" in err


def test_synth_eval_train(tmp_path, capsys):
    recs, trips = tmp_path / "r.tsv", tmp_path / "t.tsv"
    code, out, _ = run(capsys, "synth", "--count", "30", "--context-len", "5", "10",
                       "--out-records", str(recs), "--out-triples", str(trips))
    assert code == 0 and "30 records" in out

    report = tmp_path / "rep.tsv"
    code, out, _ = run(capsys, "eval", "--data", str(recs), "--max-span", "8", "--out", str(report))
    assert code == 0
    assert {line.split("\t")[0] for line in out.splitlines()} == {"full_context", "per_ngram", "single_pass", "williams"}
    assert len(load_report(report).comparisons) == 3

    code, out, _ = run(capsys, "eval", "--data", str(recs), "--setup", "single-pass", "--max-span", "8")
    assert code == 0 and out.startswith("single_pass")

    params = tmp_path / "p.stoy"
    code, out, _ = run(capsys, "train-toy", "--triples", str(trips), "--steps", "30", "--encoder", "toy:d=16",
                       "--out", str(params))
    assert code == 0 and out.splitlines()[-1].startswith("step 30")
    assert load_params(params).d == 16
    # trained parameters plug back in as an encoder
    assert main(["eval", "--data", str(recs), "--setup", "full", "--encoder", f"toy:params={params}"]) == 0


def test_bm25_with_cache(tmp_path, capsys):
    corpus = tmp_path / "c.txt"
    corpus.write_text("the cat sat on the mat\nthe dog sat\ncats and dogs\n")
    doc = tmp_path / "d.txt"
    doc.write_text("the cat sat on the mat")
    cache = tmp_path / "stats.tsv"
    args = ["bm25", "--corpus", str(corpus), "--query", "cat sat", "--doc", str(doc), "--stats-cache", str(cache)]
    _, first, _ = run(capsys, *args)
    assert cache.exists()
    corpus.unlink()  # second run must come from the cache
    _, second, _ = run(capsys, *args)
    assert first == second == "0.474917\n"


def test_missing_file_is_an_error(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--data", str(tmp_path / "nope.tsv"))
    assert code == 1 and "error" in err
