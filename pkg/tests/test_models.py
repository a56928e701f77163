import json
import math

import numpy as np
import pytest
import torch

from aspectsim.dataset import PaperText, SampleSet
from aspectsim.labels import NONE, DocumentPair
from aspectsim.models import (
    MODEL_REGISTRY,
    ModelConfig,
    TrainedModel,
    TrainingError,
    VocabularyMismatchError,
    predict,
    train,
)
from aspectsim.models.encoding import WordTokenizer, encode_pair, paper_text, truncate_longest_first
from aspectsim.models.head import head_loss, head_loss_grad, multilabel_loss, threshold_labels
from aspectsim.models.lstm import LSTMPairClassifier, train_word_vectors, vectors_for

from synthetic import WORDS, toy_samples
from tiny_models import make_tiny_bert

A = PaperText("Parsing with grammars", "graph parser syntax")
B = PaperText("Speech translation", "speech translation encoder decoder")


@pytest.fixture(scope="module")
def bert_dir(tmp_path_factory):
    return make_tiny_bert(tmp_path_factory.mktemp("bert") / "tiny", extra_words=["parsing", "with", "grammars"])


@pytest.fixture(scope="module")
def bert_tokenizer(bert_dir):
    from transformers import AutoTokenizer

    return AutoTokenizer.from_pretrained(bert_dir)


@pytest.fixture(scope="module")
def word_tokenizer():
    return WordTokenizer.build([paper_text(A), paper_text(B)])


# configuration -----------------------------------------------------------


def test_config_defaults():
    t = ModelConfig.for_model("scibert")
    assert (t.epochs, t.learning_rate, t.batch_size, t.adam_epsilon) == (4, 2e-5, 8, 1e-8)
    assert t.checkpoint_name == MODEL_REGISTRY["scibert"]
    l = ModelConfig.for_model("lstm-baseline")
    assert (l.model_kind, l.epochs, l.learning_rate, l.batch_size) == ("lstm", 10, 1e-5, 8)
    assert (l.num_layers, l.hidden_size, l.attention, l.dropout) == (2, 100, True, 0.1)
    assert set(MODEL_REGISTRY) == {
        "bert-base", "scibert", "covid-bert", "roberta", "xlnet", "electra-discriminator", "lstm-baseline"
    }


def test_config_validation_and_hash(tmp_path):
    with pytest.raises(ValueError):
        ModelConfig(classification_threshold=1.0)
    with pytest.raises(ValueError):
        ModelConfig(model_kind="cnn")
    c = ModelConfig.for_model("bert-base", epochs=2)
    c.save(tmp_path / "c.json")
    data = json.loads((tmp_path / "c.json").read_text())
    assert data["config_hash"] == c.config_hash() != ModelConfig.for_model("bert-base").config_hash()
    assert ModelConfig.from_json(data) == c


# encoding ----------------------------------------------------------------


@pytest.mark.parametrize("tok", ["bert_tokenizer", "word_tokenizer"])
def test_encode_short_pair(tok, request):
    tokenizer = request.getfixturevalue(tok)
    enc = encode_pair(A, B, tokenizer)
    assert len(enc) < 512
    ids = list(enc.input_ids)
    sep = tokenizer.sep_token_id
    assert ids[0] == tokenizer.cls_token_id and ids[-1] == sep
    # exactly one separator between the two texts, plus the closing one
    assert ids.count(sep) == 2
    cut = ids.index(sep)
    seed_part = tokenizer.decode(ids[1:cut])
    target_part = tokenizer.decode(ids[cut + 1 : -1])
    assert "parsing" in seed_part and "graph" in seed_part
    assert "speech" in target_part and "parsing" not in target_part
    assert set(enc.token_type_ids[: cut + 1]) == {0} and set(enc.token_type_ids[cut + 1 :]) == {1}
    assert set(enc.attention_mask) == {1}


@pytest.mark.parametrize("tok", ["bert_tokenizer", "word_tokenizer"])
def test_encode_long_pair_capped_at_512(tok, request):
    tokenizer = request.getfixturevalue(tok)
    long_a = PaperText("graph", " ".join(["graph"] * 1000))
    long_b = PaperText("speech", " ".join(["speech"] * 1000))
    enc = encode_pair(long_a, long_b, tokenizer)
    assert len(enc) == 512
    assert list(enc.input_ids).count(tokenizer.sep_token_id) == 2
    enc = encode_pair(long_a, B, tokenizer, max_len=64)
    assert len(enc) == 64
    # the short side survives whole
    assert "decoder" in tokenizer.decode(list(enc.input_ids))


@pytest.mark.parametrize("tok", ["bert_tokenizer", "word_tokenizer"])
def test_encode_duplicate_and_direction(tok, request):
    tokenizer = request.getfixturevalue(tok)
    same = encode_pair(A, A, tokenizer)
    ids = list(same.input_ids)
    cut = ids.index(tokenizer.sep_token_id)
    assert ids[1:cut] == ids[cut + 1 : -1]
    assert encode_pair(A, B, tokenizer) != encode_pair(B, A, tokenizer)


def test_encode_empty_text_is_error(word_tokenizer):
    with pytest.raises(ValueError):
        encode_pair(PaperText("", " "), B, word_tokenizer)


def test_truncate_longest_first():
    a, b = list(range(10)), list(range(4))
    assert truncate_longest_first(a, b, 20) == (a, b)
    assert truncate_longest_first(a, b, 8) == (a[:4], b)
    assert truncate_longest_first(a, b, 7) == (a[:4], b[:3])
    x, y = truncate_longest_first(list(range(5)), list(range(5)), 9)
    assert (len(x), len(y)) == (5, 4)


def test_word_tokenizer_unknown_and_extended(tmp_path, word_tokenizer):
    ids = word_tokenizer.encode("graph zebra")
    assert ids[1] == word_tokenizer.unk_token_id
    ext = word_tokenizer.extended(["zebra", "graph"])
    assert len(ext) == len(word_tokenizer) + 1
    assert ext.encode("graph zebra")[0] == ids[0]
    word_tokenizer.save(tmp_path / "t.json")
    assert WordTokenizer.load(tmp_path / "t.json").vocab == word_tokenizer.vocab


def test_oov_words_get_subword_vectors():
    wv = train_word_vectors(["the parser parses parsed sentences"] * 5, dim=8, epochs=2)
    v = vectors_for(["parsers", "the"], wv)
    assert v.shape == (2, 8) and np.abs(v[0]).sum() > 0


# head ----------------------------------------------------------------------


def _rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12)


def test_head_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    W, b = rng.normal(size=(3, 5)), rng.normal(size=3)
    X = rng.normal(size=(7, 5))
    Y = (rng.random((7, 3)) < 0.4).astype(float)
    gW, gb = head_loss_grad(W, b, X, Y)
    eps = 1e-6
    numW = np.zeros_like(W)
    for i in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[i] += eps
        Wm[i] -= eps
        numW[i] = (head_loss(Wp, b, X, Y) - head_loss(Wm, b, X, Y)) / (2 * eps)
        numb = np.array([
            (head_loss(W, b + eps * e, X, Y) - head_loss(W, b - eps * e, X, Y)) / (2 * eps) for e in np.eye(3)
        ])
    assert _rel_err(gW, numW) < 1e-4
    assert _rel_err(gb, numb) < 1e-4


def test_head_gradient_matches_autograd():
    rng = np.random.default_rng(1)
    W, b, X = rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=(6, 4))
    Y = (rng.random((6, 3)) < 0.5).astype(float)
    tW = torch.tensor(W, requires_grad=True)
    tb = torch.tensor(b, requires_grad=True)
    loss = multilabel_loss(torch.tensor(X) @ tW.T + tb, torch.tensor(Y))
    loss.backward()
    assert loss.item() == pytest.approx(head_loss(W, b, X, Y), rel=1e-12)
    gW, gb = head_loss_grad(W, b, X, Y)
    assert _rel_err(tW.grad.numpy(), gW) < 1e-10 and _rel_err(tb.grad.numpy(), gb) < 1e-10


def test_loss_sums_over_classes_and_averages_over_batch():
    logits = torch.zeros(4, 11)
    targets = torch.zeros(4, 11)
    assert multilabel_loss(logits, targets).item() == pytest.approx(11 * math.log(2))


CLASSES = ("introduction", "related work", "discussion", "Other", NONE)


@pytest.mark.parametrize(
    "probs,expected",
    [
        ((0.05, 0.02, 0.01, 0.03, 0.9), {NONE}),
        ((0.55, 0.1, 0.6, 0.2, 0.05), {"introduction", "discussion"}),
        ((0.2, 0.2, 0.2, 0.2, 0.2), set()),
        ((0.5, 0.49, 0.0, 0.0, 0.0), {"introduction"}),
    ],
)
def test_thresholding(probs, expected):
    assert threshold_labels(probs, CLASSES, 0.5) == frozenset(expected)


# training ------------------------------------------------------------------


def lstm_config(**kw):
    kw.setdefault("epochs", 2)
    kw.setdefault("learning_rate", 1e-3)
    kw.setdefault("hidden_size", 16)
    kw.setdefault("embedding_dim", 16)
    return ModelConfig.for_model("lstm-baseline", **kw)


@pytest.fixture(scope="module")
def toy():
    return toy_samples(24, seed=11)


def test_lstm_shapes_and_probabilities(toy):
    model = train(lstm_config(epochs=1), toy.pairs, toy.papers, toy.vocab)
    preds = predict(model, toy.pairs, toy.papers)
    assert len(preds) == len(toy.pairs)
    for p in preds:
        assert len(p.probabilities) == 11
        assert all(0.0 <= x <= 1.0 and math.isfinite(x) for x in p.probabilities)
        assert p.labels == threshold_labels(p.probabilities, toy.vocab.classes, 0.5)
    assert [h["step"] for h in model.history] == list(range(len(model.history)))


def test_lstm_module_handles_attention_off():
    m = LSTMPairClassifier(np.ones((5, 6), np.float32), 11, hidden_size=4, attention=False)
    ids = torch.tensor([[2, 4, 5, 3, 0], [2, 6, 3, 7, 3]])
    out = m(ids, (ids != 0).long())
    assert out.shape == (2, 11)


def test_deterministic_loss_trajectory(toy):
    a = train(lstm_config(), toy.pairs, toy.papers, toy.vocab)
    b = train(lstm_config(), toy.pairs, toy.papers, toy.vocab)
    first = [h["loss"] for h in a.history if h["epoch"] == 0]
    assert np.allclose(first, [h["loss"] for h in b.history if h["epoch"] == 0], atol=1e-6, rtol=0)
    c = train(lstm_config(rng_seed=1), toy.pairs, toy.papers, toy.vocab)
    assert [h["loss"] for h in c.history] != [h["loss"] for h in a.history]


def test_transformer_deterministic_and_roundtrip(bert_dir, toy, tmp_path):
    cfg = ModelConfig(checkpoint_name=str(bert_dir), epochs=1, learning_rate=1e-3)
    a = train(cfg, toy.pairs, toy.papers, toy.vocab)
    b = train(cfg, toy.pairs, toy.papers, toy.vocab)
    assert np.allclose([h["loss"] for h in a.history], [h["loss"] for h in b.history], atol=1e-6, rtol=0)
    before = predict(a, toy.pairs, toy.papers)
    a.save(tmp_path / "m")
    log = (tmp_path / "m" / "training_log.jsonl").read_text().splitlines()
    assert len(log) == len(a.history) and set(json.loads(log[0])) == {"step", "epoch", "loss"}
    assert json.loads((tmp_path / "m" / "config.json").read_text())["config_hash"] == cfg.config_hash()
    after = predict(TrainedModel.load(tmp_path / "m"), toy.pairs, toy.papers)
    assert [p.labels for p in after] == [p.labels for p in before]
    assert np.allclose([p.probabilities for p in after], [p.probabilities for p in before], atol=1e-6)


def test_lstm_roundtrip_and_unseen_words(toy, tmp_path):
    model = train(lstm_config(epochs=1), toy.pairs, toy.papers, toy.vocab)
    model.save(tmp_path / "m")
    loaded = TrainedModel.load(tmp_path / "m")
    a, b = predict(model, toy.pairs, toy.papers), predict(loaded, toy.pairs, toy.papers)
    assert np.allclose([p.probabilities for p in a], [p.probabilities for p in b], atol=1e-6)
    papers = {"x": PaperText("Zebrafish genomics", "unseen vocabulary everywhere"), "y": A}
    [p] = predict(loaded, [DocumentPair("x", "y", {NONE})], papers)
    assert len(p.probabilities) == 11


def test_training_errors(toy):
    with pytest.raises(ValueError):
        train(lstm_config(), [], toy.papers, toy.vocab)
    bad = [DocumentPair(toy.pairs[0].seed_id, toy.pairs[0].target_id, {"acknowledgements"})]
    with pytest.raises(VocabularyMismatchError):
        train(lstm_config(), bad, toy.papers, toy.vocab)



def test_nan_loss_aborts_with_diagnostics(toy, monkeypatch):
    from aspectsim.models import training

    real = training.multilabel_loss
    calls = []

    def poisoned(logits, targets):
        calls.append(1)
        loss = real(logits, targets)
        return loss * float("nan") if len(calls) == 3 else loss

    monkeypatch.setattr(training, "multilabel_loss", poisoned)
    with pytest.raises(TrainingError, match=r"non-finite loss nan at epoch 0 step 2 .*previous losses \[\d"):
        train(lstm_config(), toy.pairs, toy.papers, toy.vocab)


def test_predict_vocab_mismatch(toy):
    from aspectsim.labels import LabelVocabulary

    model = train(lstm_config(epochs=1), toy.pairs, toy.papers, toy.vocab)
    other = LabelVocabulary(tuple(reversed(toy.vocab.positive_classes)))
    with pytest.raises(VocabularyMismatchError):
        predict(model, toy.pairs, toy.papers, vocab=other)


def test_unresolvable_checkpoint_is_fatal_before_training(toy, tmp_path):
    from aspectsim.models import ModelNotFoundError

    with pytest.raises(ModelNotFoundError):
        train(ModelConfig(checkpoint_name=str(tmp_path / "missing")), toy.pairs, toy.papers, toy.vocab)
