import math

import pytest

import ctxape


def test_metrics_examples():
    assert ctxape.levenshtein(["a", "b", "c"], ["a", "x", "c", "d"]) == 2
    t = ctxape.ter(["b", "a"], ["a", "b"])
    assert t["shifts"] == 1
    assert t["score"] == pytest.approx(0.5)
    assert ctxape.corpus_bleu([(["a", "b"], ["a", "b"])]) == pytest.approx(100.0)
    report = ctxape.evaluate(["ein Haus"], ["ein Haus"])
    assert report["ter"] == 0.0
    assert report["sentences"] == 1


def test_generate_and_vocabulary():
    c = ctxape.gen_synthetic("disambiguate", 10, seed=4)
    assert len(c["src"]) == len(c["mt"]) == len(c["pe"]) == 10
    v = ctxape.Vocabulary.build(c["src"] + c["mt"] + c["pe"], 100)
    assert v.tokens[:4] == ["<pad>", "<unk>", "<s>", "</s>"]
    assert v.decode(v.encode(c["pe"][0])) == c["pe"][0]
    with pytest.raises(ValueError):
        ctxape.gen_synthetic("reverse", 3)


def test_model_forward_decode_and_alignment(tmp_path):
    m = ctxape.Model(seed=3, d_model=8, n_heads=2, n_layers=1, d_ff=16, vocab_size=12, dropout=0.0)
    assert m.num_parameters == ctxape.param_count(d_model=8, n_heads=2, n_layers=1, d_ff=16, vocab_size=12)
    logits = m.forward([4, 5], [6, 7, 8], [ctxape.BOS, 9])
    assert len(logits) == 2 and len(logits[0]) == 12
    g = m.greedy([4, 5], [6, 7], max_len=5)
    b = m.beam([4, 5], [6, 7], beam=1, max_len=5)
    assert g["ids"] == b["ids"]
    assert m.logprob([4, 5], [6, 7], g["ids"]) == pytest.approx(g["logprob"], abs=1e-4)
    a = m.alignment([4, 5, 6], [7, 8])
    assert len(a) == 2 and all(math.isclose(sum(r), 1.0, abs_tol=1e-6) for r in a)

    path = str(tmp_path / "m.ckpt")
    m.save(path)
    back = ctxape.Model.load(path)
    assert back.forward([4, 5], [6, 7, 8], [ctxape.BOS, 9]) == logits
    with pytest.raises(ctxape.CheckpointError):
        (tmp_path / "bad.ckpt").write_bytes(b"nope")
        ctxape.Model.load(str(tmp_path / "bad.ckpt"))


def test_training_lowers_the_loss():
    m = ctxape.Model(seed=1, d_model=16, n_heads=2, n_layers=1, d_ff=32, vocab_size=10, dropout=0.0)
    data = [([4, 5, 6], [7, 8, 9], [7, 5, 9])]
    history = m.train(data, data, max_steps=60, warmup=20, eval_interval=20, patience=0, label_smoothing=0.0)
    assert history[-1]["dev_loss"] < history[0]["dev_loss"]
    assert set(history[0]) == {"step", "lr", "train_loss", "dev_loss", "dev_token_acc"}


def test_config_errors():
    with pytest.raises(ValueError):
        ctxape.Model(d_model=10, n_heads=3)
    with pytest.raises(ValueError):
        ctxape.Model(colour=1)
