"""Pair encoding: seed text, separator, target text.

Both Hugging Face tokenizers and :class:`WordTokenizer` (the LSTM baseline's
spaCy word tokenizer) are driven through the same call,
``tokenizer(seed_text, target_text, truncation="longest_first", max_length=n)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import spacy


@dataclass(frozen=True)
class EncodedPair:
    input_ids: tuple[int, ...]
    token_type_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.input_ids)


def paper_text(paper) -> str:
    """``title: abstract`` for anything with ``title`` and ``abstract`` attributes."""
    title, abstract = (paper.title or "").strip(), (paper.abstract or "").strip()
    if not title and not abstract:
        raise ValueError("paper has neither title nor abstract")
    return f"{title}: {abstract}"


def encode_pair(seed, target, tokenizer, max_len: int = 512) -> EncodedPair:
    enc = tokenizer(
        paper_text(seed),
        paper_text(target),
        truncation="longest_first",
        max_length=max_len,
    )
    ids = tuple(enc["input_ids"])
    types = tuple(enc.get("token_type_ids") or (0,) * len(ids))
    mask = tuple(enc.get("attention_mask") or (1,) * len(ids))
    return EncodedPair(ids, types, mask)


def truncate_longest_first(a: list, b: list, budget: int) -> tuple[list, list]:
    """Drop tokens from the end of the longer sequence until both fit in ``budget``.

    On equal lengths the second sequence loses the token first.
    """
    la, lb = len(a), len(b)
    excess = la + lb - budget
    if excess <= 0:
        return a, b
    if budget < 0:
        raise ValueError("max_length leaves no room for the special tokens")
    cut = min(excess, abs(la - lb))
    if la > lb:
        la -= cut
    else:
        lb -= cut
    excess -= cut
    lb -= (excess + 1) // 2
    la -= excess // 2
    return a[:la], b[:lb]


_NLP = None


def _spacy_tokenizer():
    global _NLP
    if _NLP is None:
        _NLP = spacy.blank("en")
    return _NLP.tokenizer


class WordTokenizer:
    """Lowercased spaCy word tokenizer with a closed vocabulary.

    ``[CLS] seed [SEP] target [SEP]`` mirrors the BERT pair layout.  Unknown
    words map to ``[UNK]``; :meth:`extended` returns a copy that also knows
    a list of new words, which is how the LSTM gives unseen words their own
    subword-composed vectors at prediction time.
    """

    pad_token, unk_token, cls_token, sep_token = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
    SPECIALS = (pad_token, unk_token, cls_token, sep_token)
    pad_token_id, unk_token_id, cls_token_id, sep_token_id = range(4)

    def __init__(self, words: list[str]):
        self.words = list(words)
        self.vocab = {w: i for i, w in enumerate(self.SPECIALS)}
        for w in self.words:
            self.vocab.setdefault(w, len(self.vocab))
        self._itos = list(self.vocab)

    @staticmethod
    def tokenize(text: str) -> list[str]:
        return [t.text.lower() for t in _spacy_tokenizer()(text) if not t.is_space]

    @classmethod
    def build(cls, texts) -> WordTokenizer:
        seen: dict[str, None] = {}
        for text in texts:
            for tok in cls.tokenize(text):
                seen.setdefault(tok, None)
        return cls([w for w in seen if w not in cls.SPECIALS])

    def extended(self, words) -> WordTokenizer:
        new = [w for w in dict.fromkeys(words) if w not in self.vocab]
        return WordTokenizer(self.words + new) if new else self

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str, add_special_tokens: bool = False) -> list[int]:
        ids = [self.vocab.get(t, self.unk_token_id) for t in self.tokenize(text)]
        return [self.cls_token_id, *ids, self.sep_token_id] if add_special_tokens else ids

    def num_special_tokens_to_add(self, pair: bool = False) -> int:
        return 3 if pair else 2

    def __call__(self, text, text_pair=None, truncation="longest_first", max_length=None, **_):
        a = self.encode(text)
        b = self.encode(text_pair) if text_pair is not None else []
        if max_length is not None and truncation:
            a, b = truncate_longest_first(a, b, max_length - self.num_special_tokens_to_add(text_pair is not None))
        ids = [self.cls_token_id, *a, self.sep_token_id]
        types = [0] * len(ids)
        if text_pair is not None:
            ids += [*b, self.sep_token_id]
            types += [1] * (len(b) + 1)
        return {"input_ids": ids, "token_type_ids": types, "attention_mask": [1] * len(ids)}

    def convert_ids_to_tokens(self, ids) -> list[str]:
        return [self._itos[i] for i in ids]

    def decode(self, ids, skip_special_tokens: bool = False) -> str:
        toks = self.convert_ids_to_tokens(ids)
        if skip_special_tokens:
            toks = [t for t in toks if t not in self.SPECIALS]
        return " ".join(toks)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.words, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> WordTokenizer:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))
