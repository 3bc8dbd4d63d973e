import hashlib
import json

import pytest

from nnlmir.cli import ENV_CONFIG, main

SMALL = ["--m0", "4", "--m1", "4", "--m2", "4", "--batch-size", "5"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data")]) == 0
    art = root / "art"
    assert main(["build-vocab", "--corpus", str(root / "data/corpus.jsonl"), "--out", str(art)]) == 0
    assert main(["build-index", "--corpus", str(root / "data/corpus.jsonl"), "--out", str(art)]) == 0
    return root


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_paramcount_output(capsys):
    assert main(["paramcount", "--arch", "M2Max", "--n", "5", "--m0", "100", "--m1", "100", "--m2", "100",
                 "--kappa", "4", "--vocab-size", "375219"]) == 0
    assert "M2Max\t170,000\t75,043,700" in capsys.readouterr().out


def test_gradcheck_exit_zero(capsys):
    assert main(["gradcheck", "--seed", "7", "--vocab", "20", "--dims", "4"]) == 0
    out = capsys.readouterr().out
    assert out.count("max relative error") == 9


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["build-vocab", "--out", str(tmp_path)]) == 1
    assert main(["build-vocab", "--corpus", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == 1
    assert main(["rerank", "--lambda", "1.5", "--out", str(tmp_path)]) == 1
    assert main(["paramcount"]) == 1
    assert list(tmp_path.iterdir()) == []


def test_data_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    out = tmp_path / "out"
    assert main(["build-vocab", "--corpus", str(bad), "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.slow
def test_numerical_error(data, tmp_path):
    args = ["train-lm", "--corpus", str(data / "data/corpus.jsonl"), "--vocab", str(data / "art/vocab.tsv"),
            "--out", str(tmp_path), "--steps", "50", "--lr0", "1e300", *SMALL]
    assert main(args) == 3
    assert not list(tmp_path.glob("*.ckpt"))


@pytest.mark.slow
def test_config_file_and_env(data, tmp_path, monkeypatch):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("min-count = 3\n")
    out1, out2, out3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    corpus = str(data / "data/corpus.jsonl")
    assert main(["build-vocab", "--config", str(cfg), "--corpus", corpus, "--out", str(out1)]) == 0
    assert (out1 / "vocab.tsv").read_text().startswith("# min_count 3\n")
    monkeypatch.setenv(ENV_CONFIG, str(cfg))
    assert main(["build-vocab", "--corpus", corpus, "--out", str(out2)]) == 0
    assert _digest(out1 / "vocab.tsv") == _digest(out2 / "vocab.tsv")
    # flags override the file
    assert main(["build-vocab", "--corpus", corpus, "--min-count", "7", "--out", str(out3)]) == 0
    assert (out3 / "vocab.tsv").read_text().startswith("# min_count 7\n")
    cfg.write_text("no-such-key = 1\n")
    assert main(["build-vocab", "--corpus", corpus, "--out", str(out3)]) == 1


@pytest.mark.slow
def test_pipeline_is_deterministic_and_lambda_zero_is_unigram(data, tmp_path):
    d, a = data / "data", data / "art"
    common = ["--corpus", str(d / "corpus.jsonl"), "--vocab", str(a / "vocab.tsv"), "--index", str(a / "index.bin"),
              "--topics", str(d / "topics.tsv"), "--qrels", str(d / "qrels.txt")]
    digests = []
    for run in ("x", "y"):
        out = tmp_path / run
        assert main(["train-lm", *common, *SMALL, "--steps", "30", "--out", str(out)]) == 0
        model = str(out / "M2.ckpt")
        assert main(["fit-docvecs", *common, "--model", model, "--mode", "sum", "--k", "10",
                     "--out", str(out)]) == 0
        assert main(["sweep", *common, "--model", model, "--docvecs", str(out / "M2-sum.docvecs"),
                     "--lambdas", "0", "--k", "10", "--out", str(out)]) == 0
        digests.append([_digest(out / f) for f in ("M2.ckpt", "M2.train.jsonl", "M2-sum.docvecs", "sweep.tsv")])
    assert digests[0] == digests[1]

    out = tmp_path / "x"
    rows = {line.split("\t")[0]: line.split("\t")[1:] for line in (out / "sweep.tsv").read_text().splitlines()}
    assert rows["M2#"] == rows["LM"] == rows["M2+"]
    assert main(["evaluate", "--qrels", str(d / "qrels.txt"), "--out", str(out / "ev"),
                 "--run", f"{out}/runs/M2-gen-l0-g0.5.run,{out}/runs/LM-g0.5.run"]) == 0
    recs = [json.loads(line) for line in (out / "ev/eval.jsonl").read_text().splitlines()]
    assert recs[0]["map"] == recs[1]["map"]
    assert float(rows["LM"][0]) == pytest.approx(recs[1]["map"], abs=5e-5)


@pytest.mark.slow
def test_rerank_without_model_at_lambda_zero(data, tmp_path):
    d, a = data / "data", data / "art"
    assert main(["rerank", "--index", str(a / "index.bin"), "--topics", str(d / "topics.tsv"), "--lambda", "0",
                 "--k", "10", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "LM-gen-l0-g0.5.run").read_text().splitlines()
    assert len(lines) == 500 and lines[0].split()[1] == "Q0"


@pytest.mark.slow
def test_pretrain_and_init(data, tmp_path):
    d, a = data / "data", data / "art"
    assert main(["pretrain", "--corpus", str(d / "corpus.jsonl"), "--vocab", str(a / "vocab.tsv"),
                 "--m0", "4", "--epochs", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "vectors.txt").read_text().split("\n", 1)[0].endswith(" 4")
    assert main(["train-lm", "--corpus", str(d / "corpus.jsonl"), "--vocab", str(a / "vocab.tsv"), *SMALL,
                 "--steps", "5", "--init", str(tmp_path / "pretrained.ckpt"), "--out", str(tmp_path)]) == 0
    assert main(["pretrain", "--vectors", str(tmp_path / "vectors.txt"), "--vocab", str(a / "vocab.tsv"),
                 "--m0", "5", "--out", str(tmp_path / "bad")]) == 2
