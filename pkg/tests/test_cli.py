import json

import pytest

from catmt import corpus
from catmt.cli import run
from catmt.corpus import CategoryPair, Dataset


def synthetic(n):
    return Dataset(CategoryPair(f"Topic {i}", f"Chủ đề {i}") for i in range(n))


def lines(path):
    return path.read_text(encoding="utf-8").splitlines()


def test_split_15000(tmp_path):
    src = tmp_path / "all.jsonl"
    corpus.save(synthetic(15000), src)
    assert run(["split", "--input", str(src), "--out-dir", str(tmp_path / "out"), "--ratios", "8:1:1", "--seed", "42"]) == 0
    sizes = [len(lines(tmp_path / "out" / f"{n}.jsonl")) for n in ("train", "val", "test")]
    assert sizes == [12000, 1500, 1500]
    first = (tmp_path / "out" / "train.jsonl").read_bytes()
    run(["split", "--input", str(src), "--out-dir", str(tmp_path / "again")])
    assert (tmp_path / "again" / "train.jsonl").read_bytes() == first


def test_encode_decode_roundtrip_bytes(tmp_path):
    text = "Phát triển con người\nLịch sử Oslo\nNhân quyền tại Nga\n"
    plain = tmp_path / "plain.txt"
    plain.write_text(text, encoding="utf-8")
    assert run(["encode", "-i", str(plain), "-o", str(tmp_path / "enc.txt")]) == 0
    assert lines(tmp_path / "enc.txt")[0] == "Ph@18t tri@80n con ng@44@106i"
    assert run(["decode", "-i", str(tmp_path / "enc.txt"), "-o", str(tmp_path / "dec.txt")]) == 0
    assert (tmp_path / "dec.txt").read_bytes() == plain.read_bytes()


def test_encode_stdin_stdout(monkeypatch, capsys):
    import io

    monkeypatch.setattr("sys.stdin", io.StringIO("Việt Nam"))
    assert run(["encode"]) == 0
    out = capsys.readouterr()
    assert out.out == "Vi@84t Nam"
    assert "effective config:" in out.err


def test_table(tmp_path):
    assert run(["table", "-o", str(tmp_path / "t.tsv")]) == 0
    rows = lines(tmp_path / "t.tsv")
    assert len(rows) == 134
    assert rows[0].split("\t")[:2] == ["1", "À"]


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        run(["split", "--out-dir", "x"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        run(["harvest", "--out", "x.jsonl"])  # neither --live nor --fixtures
    assert err.value.code == 2


def test_runtime_error_exits_1(tmp_path, capsys):
    assert run(["analyze", "--input", str(tmp_path / "missing.jsonl")]) == 1
    assert "catmt: error:" in capsys.readouterr().err
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"source": "A", "target": "B"}\nnot json\n', encoding="utf-8")
    assert run(["analyze", "--input", str(bad)]) == 1
    assert f"{bad}:2" in capsys.readouterr().err


def test_harvest_from_fixtures(tmp_path):
    from importlib import resources

    fixtures = resources.files("catmt.data").joinpath("fixtures/sample_entities.json")
    out = tmp_path / "pairs.jsonl"
    argv = ["harvest", "--fixtures", str(fixtures), "--out", str(out), "--target-count", "4",
            "--max-qid", "8", "--batch-size", "8", "--min-interval", "0", "--budget", "50"]
    assert run(argv) == 0
    ds = corpus.load(out)
    assert len(ds) == 4
    assert {p.source for p in ds} <= {"Human development", "History of Oslo", "2004 horror films", "Human rights in Russia"}
    first = out.read_bytes()
    assert run(argv) == 0
    assert out.read_bytes() == first
    assert run(argv[:-2] + ["--budget", "1", "--target-count", "9", "--strict"]) == 1


def test_analyze_json(tmp_path, toy_path, capsys):
    assert run(["analyze", "--input", str(toy_path), "-k", "3", "--json", str(tmp_path / "s.json")]) == 0
    stats = json.loads((tmp_path / "s.json").read_text(encoding="utf-8"))
    assert stats["vocab_source_sensitive"] > 0 and len(stats["top_source_words"]) == 3


def test_evaluate_identical(tmp_path, capsys):
    ref = tmp_path / "ref.txt"
    ref.write_text("Lịch sử Oslo\nPhát triển con người\n", encoding="utf-8")
    hyp = tmp_path / "hyp.txt"
    hyp.write_text("L@88ch s@122 Oslo\nPhát triển con người\n", encoding="utf-8")
    assert run(["evaluate", "--hyp", str(hyp), "--ref", str(ref), "--json", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["bleu"] == 1.0 and report["rouge_l"] == 1.0


def test_evaluate_line_mismatch(tmp_path):
    (tmp_path / "a").write_text("x\ny\n")
    (tmp_path / "b").write_text("x\n")
    assert run(["evaluate", "--hyp", str(tmp_path / "a"), "--ref", str(tmp_path / "b")]) == 1


def test_train_translate_evaluate_pipeline(tmp_path, toy, toy_path):
    ckpt = tmp_path / "toy.ckpt"
    assert run(["train", "--train", str(toy_path), "--out", str(ckpt), "--preset", "tiny", "--epochs", "200"]) == 0
    src = tmp_path / "src.txt"
    src.write_text("".join(p.source + "\n" for p in toy), encoding="utf-8")
    ref = tmp_path / "ref.txt"
    ref.write_text("".join(p.target + "\n" for p in toy), encoding="utf-8")
    assert run(["translate", "--checkpoint", str(ckpt), "-i", str(src), "-o", str(tmp_path / "hyp.txt")]) == 0
    assert run(["translate", "--checkpoint", str(ckpt), "-i", str(src), "-o", str(tmp_path / "beam.txt"),
                "--strategy", "beam", "--beam-size", "3"]) == 0
    assert run(["evaluate", "--hyp", str(tmp_path / "hyp.txt"), "--ref", str(ref), "--json", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["bleu"] >= 0.95 and report["rouge_l"] >= 0.95
    assert len(lines(tmp_path / "beam.txt")) == 64
