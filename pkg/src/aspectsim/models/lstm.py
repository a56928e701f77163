"""Bidirectional LSTM pair classifier over fastText-initialized word vectors."""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from gensim.models import FastText, KeyedVectors
from gensim.models.fasttext import load_facebook_vectors

from .encoding import WordTokenizer


def _stable_hash(text: str) -> int:
    # python's str hash is salted per process; gensim seeds word vectors from it
    return zlib.crc32(text.encode("utf-8"))


def train_word_vectors(
    texts, dim: int = 100, epochs: int = 10, seed: int = 0, min_count: int = 1
) -> KeyedVectors:
    """fastText vectors trained on tokenized abstracts (subword n-grams 3-6)."""
    sentences = [WordTokenizer.tokenize(t) for t in texts]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ValueError("no text to train word vectors on")
    model = FastText(
        vector_size=dim,
        window=5,
        min_count=min_count,
        min_n=3,
        max_n=6,
        seed=seed,
        workers=1,
        hashfxn=_stable_hash,
    )
    model.build_vocab(corpus_iterable=sentences)
    model.train(corpus_iterable=sentences, total_examples=len(sentences), epochs=epochs)
    return model.wv


def load_word_vectors(path: str | Path) -> KeyedVectors:
    path = Path(path)
    if path.suffix == ".bin":
        return load_facebook_vectors(str(path))
    return KeyedVectors.load(str(path))


def vectors_for(words, wv: KeyedVectors) -> np.ndarray:
    """Vectors for ``words``; out-of-vocabulary words get their n-gram composition."""
    dim = wv.vector_size
    out = np.zeros((len(words), dim), dtype=np.float32)
    for i, w in enumerate(words):
        try:
            out[i] = wv[w]
        except KeyError:
            # plain word2vec-style vectors have no n-grams; leave the zero vector
            pass
    return out


class LSTMPairClassifier(nn.Module):
    def __init__(
        self,
        word_vectors: np.ndarray,
        num_classes: int,
        hidden_size: int = 100,
        num_layers: int = 2,
        dropout: float = 0.1,
        attention: bool = True,
        num_special: int = len(WordTokenizer.SPECIALS),
        freeze_embeddings: bool = False,
    ):
        super().__init__()
        dim = word_vectors.shape[1]
        self.num_special = num_special
        # initialized from fastText; special-token rows always have their own table
        vectors = torch.as_tensor(word_vectors, dtype=torch.float32)
        self.word_vectors = nn.Parameter(vectors.clone(), requires_grad=not freeze_embeddings)
        # fastText vectors from small corpora are tiny and share a dominant direction;
        # a fixed per-dimension standardization keeps the LSTM inputs well scaled
        if len(vectors) > 1:
            mean, std = vectors.mean(dim=0), vectors.std(dim=0)
        else:
            mean, std = torch.zeros(dim), torch.ones(dim)
        self.register_buffer("vec_mean", mean)
        self.register_buffer("vec_scale", torch.where(std > 1e-8, std, torch.ones_like(std)))
        self.special = nn.Embedding(num_special, dim)
        self.lstm = nn.LSTM(
            input_size=dim,
            hidden_size=hidden_size,
            num_layers=num_layers,
            batch_first=True,
            bidirectional=True,
            dropout=dropout if num_layers > 1 else 0.0,
        )
        self.use_attention = attention
        if attention:
            self.attn_proj = nn.Linear(2 * hidden_size, 2 * hidden_size)
            self.attn_score = nn.Linear(2 * hidden_size, 1, bias=False)
        self.dropout = nn.Dropout(dropout)
        self.classifier = nn.Linear(2 * hidden_size, num_classes)

    def embed(self, input_ids: torch.Tensor, extra_vectors: torch.Tensor | None = None) -> torch.Tensor:
        table = self.word_vectors
        if extra_vectors is not None and len(extra_vectors):
            table = torch.cat([table, extra_vectors.to(table.dtype)], dim=0)
        table = (table - self.vec_mean) / self.vec_scale
        is_special = input_ids < self.num_special
        words = table[(input_ids - self.num_special).clamp(min=0)]
        specials = self.special(input_ids.clamp(max=self.num_special - 1))
        return torch.where(is_special.unsqueeze(-1), specials, words)

    def forward(
        self,
        input_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        extra_vectors: torch.Tensor | None = None,
    ) -> torch.Tensor:
        x = self.embed(input_ids, extra_vectors)
        lengths = attention_mask.sum(dim=1)
        packed = nn.utils.rnn.pack_padded_sequence(
            x, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        packed_out, (h_n, _) = self.lstm(packed)
        if self.use_attention:
            out, _ = nn.utils.rnn.pad_packed_sequence(
                packed_out, batch_first=True, total_length=input_ids.shape[1]
            )
            scores = self.attn_score(torch.tanh(self.attn_proj(out))).squeeze(-1)
            scores = scores.masked_fill(attention_mask == 0, float("-inf"))
            weights = torch.softmax(scores, dim=1)
            features = torch.bmm(weights.unsqueeze(1), out).squeeze(1)
        else:
            features = torch.cat([h_n[-2], h_n[-1]], dim=1)
        return self.classifier(self.dropout(features))
