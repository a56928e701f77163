"""Training and inference for the pair classifiers."""

from __future__ import annotations

import json
import logging
import math
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..labels import LabelVocabulary
from .config import ModelConfig
from .encoding import EncodedPair, WordTokenizer, encode_pair, paper_text
from .head import multilabel_loss, threshold_labels
from .lstm import LSTMPairClassifier, load_word_vectors, train_word_vectors, vectors_for

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class ModelNotFoundError(RuntimeError):
    pass


class VocabularyMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionRecord:
    seed_id: str
    target_id: str
    probabilities: tuple[float, ...]
    labels: frozenset[str]

    def to_json(self, vocab: LabelVocabulary, gold=None) -> dict:
        d = {"seed_id": self.seed_id, "target_id": self.target_id}
        if gold is not None:
            d["gold"] = vocab.sort_labels(gold)
        d["pred"] = vocab.sort_labels(self.labels)
        d["probabilities"] = dict(zip(vocab.classes, self.probabilities))
        return d

    @classmethod
    def from_json(cls, d: Mapping, vocab: LabelVocabulary) -> PredictionRecord:
        return cls(
            d["seed_id"],
            d["target_id"],
            tuple(float(d["probabilities"][c]) for c in vocab.classes),
            frozenset(d["pred"]),
        )


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def load_transformer(checkpoint: str, num_labels: int):
    """Tokenizer and sequence-classification model for ``checkpoint`` (hub id or local dir)."""
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        model = AutoModelForSequenceClassification.from_pretrained(checkpoint, num_labels=num_labels)
    except (OSError, ValueError, RuntimeError) as exc:
        raise ModelNotFoundError(f"cannot resolve checkpoint {checkpoint!r}: {exc}") from exc
    return tokenizer, model


@dataclass
class TrainedModel:
    config: ModelConfig
    vocab: LabelVocabulary
    module: torch.nn.Module
    tokenizer: object
    history: list[dict] = field(default_factory=list)
    word_vectors: object = None  # gensim KeyedVectors, LSTM only

    @property
    def is_lstm(self) -> bool:
        return self.config.model_kind == "lstm"

    def epoch_losses(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for h in self.history:
            by_epoch.setdefault(h["epoch"], []).append(h["loss"])
        return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]

    def save(self, path: str | Path) -> None:
        """Weights, ``config.json`` (with config hash), ``vocab.json`` and ``training_log.jsonl``."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self.config.save(path / "config.json")
        (path / "vocab.json").write_text(json.dumps(self.vocab.to_json(), indent=2) + "\n", encoding="utf-8")
        with (path / "training_log.jsonl").open("w", encoding="utf-8") as fh:
            for h in self.history:
                fh.write(json.dumps(h) + "\n")
        if self.is_lstm:
            torch.save(self.module.state_dict(), path / "model.pt")
            self.tokenizer.save(path / "tokenizer.json")
            self.word_vectors.save(str(path / "word_vectors.kv"))
        else:
            self.module.save_pretrained(path / "encoder")
            self.tokenizer.save_pretrained(path / "encoder")

    @classmethod
    def load(cls, path: str | Path) -> TrainedModel:
        path = Path(path)
        if not (path / "config.json").exists():
            raise ModelNotFoundError(f"{path} is not a trained model directory")
        config = ModelConfig.from_json(json.loads((path / "config.json").read_text(encoding="utf-8")))
        vocab = LabelVocabulary.from_json(json.loads((path / "vocab.json").read_text(encoding="utf-8")))
        history = []
        log = path / "training_log.jsonl"
        if log.exists():
            history = [json.loads(x) for x in log.read_text(encoding="utf-8").splitlines() if x]
        wv = None
        if config.model_kind == "lstm":
            tokenizer = WordTokenizer.load(path / "tokenizer.json")
            wv = load_word_vectors(path / "word_vectors.kv")
            module = _build_lstm(config, np.zeros((len(tokenizer.words), wv.vector_size), np.float32), len(vocab))
            module.load_state_dict(torch.load(path / "model.pt", weights_only=True))
        else:
            tokenizer, module = load_transformer(str(path / "encoder"), len(vocab))
        module.eval()
        return cls(config, vocab, module, tokenizer, history, wv)


def _build_lstm(config: ModelConfig, vectors: np.ndarray, num_classes: int) -> LSTMPairClassifier:
    return LSTMPairClassifier(
        vectors,
        num_classes,
        hidden_size=config.hidden_size,
        num_layers=config.num_layers,
        dropout=config.dropout,
        attention=config.attention,
        freeze_embeddings=config.freeze_embeddings,
    )


def _pad(encoded: Sequence[EncodedPair], pad_id: int) -> dict[str, torch.Tensor]:
    width = max(len(e) for e in encoded)
    ids = torch.full((len(encoded), width), pad_id, dtype=torch.long)
    types = torch.zeros((len(encoded), width), dtype=torch.long)
    mask = torch.zeros((len(encoded), width), dtype=torch.long)
    for i, e in enumerate(encoded):
        n = len(e)
        ids[i, :n] = torch.tensor(e.input_ids)
        types[i, :n] = torch.tensor(e.token_type_ids)
        mask[i, :n] = torch.tensor(e.attention_mask)
    return {"input_ids": ids, "token_type_ids": types, "attention_mask": mask}


def _logits(model: TrainedModel | None, module, tokenizer, batch: dict, kind: str, extra=None) -> torch.Tensor:
    if kind == "lstm":
        return module(batch["input_ids"], batch["attention_mask"], extra)
    inputs = {"input_ids": batch["input_ids"], "attention_mask": batch["attention_mask"]}
    if "token_type_ids" in getattr(tokenizer, "model_input_names", ()):
        inputs["token_type_ids"] = batch["token_type_ids"]
    return module(**inputs).logits


def _label_matrix(pairs, vocab: LabelVocabulary) -> torch.Tensor:
    idx = vocab.class_index()
    y = torch.zeros((len(pairs), len(vocab)))
    for i, p in enumerate(pairs):
        for label in p.labels:
            y[i, idx[label]] = 1.0
    return y


def _check_labels(pairs, vocab: LabelVocabulary) -> None:
    for p in pairs:
        unknown = set(p.labels) - set(vocab.classes)
        if unknown:
            raise VocabularyMismatchError(
                f"pair {p.seed_id}->{p.target_id} has labels {sorted(unknown)} outside the vocabulary"
            )


def _lr_lambda(config: ModelConfig, total_steps: int):
    if config.schedule == "constant":
        return lambda step: 1.0
    if config.schedule != "linear":
        raise ValueError(f"unknown schedule {config.schedule!r}")
    warm = config.warmup_steps

    def f(step: int) -> float:
        if step < warm:
            return (step + 1) / warm
        return max(0.0, (total_steps - step) / max(1, total_steps - warm))

    return f


def train(
    config: ModelConfig,
    pairs: Sequence,
    papers: Mapping,
    vocab: LabelVocabulary,
    log_every: int = 0,
) -> TrainedModel:
    """Fit a pair classifier on ``pairs`` (objects with seed_id, target_id, labels).

    ``papers`` maps paper ids to objects with ``title`` and ``abstract``.
    The per-step loss history is kept on the returned model.
    """
    if not pairs:
        raise ValueError("cannot train on zero pairs")
    _check_labels(pairs, vocab)
    _seed_everything(config.rng_seed)

    word_vectors = None
    if config.model_kind == "transformer":
        tokenizer, module = load_transformer(config.checkpoint_name, len(vocab))
    else:
        ids = sorted({p.seed_id for p in pairs} | {p.target_id for p in pairs})
        texts = [paper_text(papers[i]) for i in ids]
        tokenizer = WordTokenizer.build(texts)
        if config.embedding_path:
            word_vectors = load_word_vectors(config.embedding_path)
        else:
            word_vectors = train_word_vectors(
                [papers[i].abstract or papers[i].title for i in ids],
                dim=config.embedding_dim,
                epochs=config.fasttext_epochs,
                seed=config.rng_seed,
            )
        torch.manual_seed(config.rng_seed)
        module = _build_lstm(config, vectors_for(tokenizer.words, word_vectors), len(vocab))

    encoded = [
        encode_pair(papers[p.seed_id], papers[p.target_id], tokenizer, config.max_length) for p in pairs
    ]
    y = _label_matrix(pairs, vocab)
    params = [p for p in module.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(
        params, lr=config.learning_rate, eps=config.adam_epsilon, weight_decay=config.weight_decay
    )
    steps_per_epoch = math.ceil(len(pairs) / config.batch_size)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, _lr_lambda(config, steps_per_epoch * config.epochs)
    )
    gen = torch.Generator().manual_seed(config.rng_seed)
    pad_id = tokenizer.pad_token_id if tokenizer.pad_token_id is not None else 0
    history: list[dict] = []
    step = 0
    module.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(pairs), generator=gen).tolist()
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = _pad([encoded[i] for i in idx], pad_id)
            logits = _logits(None, module, tokenizer, batch, config.model_kind)
            loss = multilabel_loss(logits, y[idx])
            if not torch.isfinite(loss):
                recent = [h["loss"] for h in history[-5:]]
                raise TrainingError(
                    f"non-finite loss {loss.item()} at epoch {epoch} step {step} "
                    f"(lr {scheduler.get_last_lr()[0]:.3g}, previous losses {recent})"
                )
            optimizer.zero_grad()
            loss.backward()
            if config.max_grad_norm:
                torch.nn.utils.clip_grad_norm_(params, config.max_grad_norm)
            optimizer.step()
            scheduler.step()
            history.append({"step": step, "epoch": epoch, "loss": loss.item()})
            step += 1
            if log_every and step % log_every == 0:
                logger.info("epoch %d step %d loss %.4f", epoch, step, loss.item())
        epoch_loss = np.mean([h["loss"] for h in history if h["epoch"] == epoch])
        logger.info("epoch %d mean loss %.4f", epoch, epoch_loss)
    module.eval()
    return TrainedModel(config, vocab, module, tokenizer, history, word_vectors)


def predict_probabilities(
    model: TrainedModel, pairs: Sequence[tuple], batch_size: int | None = None
) -> np.ndarray:
    """Sigmoid outputs for ``(seed_paper, target_paper)`` tuples, shape (n, |vocab|)."""
    tokenizer, extra = model.tokenizer, None
    if model.is_lstm:
        words = [w for s, t in pairs for x in (s, t) for w in WordTokenizer.tokenize(paper_text(x))]
        tokenizer = model.tokenizer.extended(words)
        new_words = tokenizer.words[len(model.tokenizer.words):]
        extra = torch.as_tensor(vectors_for(new_words, model.word_vectors))
    batch_size = batch_size or model.config.eval_batch_size
    pad_id = tokenizer.pad_token_id if tokenizer.pad_token_id is not None else 0
    out = []
    model.module.eval()
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            batch = _pad([encode_pair(s, t, tokenizer, model.config.max_length) for s, t in chunk], pad_id)
            logits = _logits(model, model.module, tokenizer, batch, model.config.model_kind, extra)
            out.append(torch.sigmoid(logits.double()).numpy())
    if not out:
        return np.zeros((0, len(model.vocab)))
    return np.concatenate(out)


def predict(
    model: TrainedModel,
    pairs: Sequence,
    papers: Mapping,
    vocab: LabelVocabulary | None = None,
    threshold: float | None = None,
) -> list[PredictionRecord]:
    """Thresholded predictions; an empty label set is a legal outcome."""
    if vocab is not None and vocab != model.vocab:
        raise VocabularyMismatchError("dataset vocabulary differs from the model's vocabulary")
    _check_labels([p for p in pairs if hasattr(p, "labels")], model.vocab)
    threshold = model.config.classification_threshold if threshold is None else threshold
    probs = predict_probabilities(model, [(papers[p.seed_id], papers[p.target_id]) for p in pairs])
    if probs.shape[1:] != (len(model.vocab),):
        raise VocabularyMismatchError(f"model emits {probs.shape[1]} classes, vocabulary has {len(model.vocab)}")
    return [
        PredictionRecord(
            p.seed_id,
            p.target_id,
            tuple(float(x) for x in row),
            threshold_labels(row, model.vocab.classes, threshold),
        )
        for p, row in zip(pairs, probs)
    ]
