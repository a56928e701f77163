"""Section-title normalization, label vocabulary and positive pair construction."""

from __future__ import annotations

import logging
import re
import unicodedata
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import PaperRecord, normalize_text_key

logger = logging.getLogger(__name__)

OTHER = "Other"
NONE = "None"

_NON_LETTERS = re.compile(r"[^a-z]+")
_APOSTROPHES = re.compile(r"['’ʼ]")
# "IV. ", "A) " style enumerators in front of a title
_ENUM_PREFIX = re.compile(r"^\s*(?:[ivxlc]+|[a-z])[.)]\s+", re.IGNORECASE)


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class VariantTable:
    """Maps normalized section variants to a canonical name, or to ``None`` (stop section)."""

    mapping: Mapping[str, str | None] = field(default_factory=dict)

    def canonical(self, name: str) -> str | None:
        return self.mapping.get(name, name)


def parse_variant_table(text: str, source: str = "<string>") -> VariantTable:
    mapping: dict[str, str | None] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'variant -> canonical'")
        left, right = (part.strip() for part in line.split("->", 1))
        if not left or _clean(left) != left or (right and _clean(right) != right):
            raise ValueError(f"{source}:{lineno}: entries must be lowercase letters and spaces")
        mapping[left] = right or None
    for variant, canonical in mapping.items():
        if canonical is not None and canonical != variant and canonical in mapping:
            raise ValueError(f"{source}: canonical {canonical!r} is also listed as a variant")
    return VariantTable(mapping)


def load_variant_table(path: str | Path | None = None) -> VariantTable:
    """Load a variant table; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("aspectsim").joinpath("data/section_variants.txt").read_text("utf-8")
        return parse_variant_table(text, "section_variants.txt")
    return parse_variant_table(Path(path).read_text(encoding="utf-8"), str(path))


_DEFAULT_TABLE: VariantTable | None = None


def default_variant_table() -> VariantTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_variant_table()
    return _DEFAULT_TABLE


def _clean(text: str) -> str:
    text = unicodedata.normalize("NFKD", text)
    text = "".join(ch for ch in text if not unicodedata.combining(ch)).lower()
    text = _APOSTROPHES.sub("", text).replace("&", " and ")
    return " ".join(_NON_LETTERS.sub(" ", text).split())


def normalize_section_title(raw: str, table: VariantTable | None = None) -> set[str]:
    """Return the canonical section names contained in a raw section title.

    >>> sorted(normalize_section_title("Conclusion and Future Work"))
    ['conclusion', 'future work']
    >>> normalize_section_title("5. RESULTS:")
    {'results'}
    """
    if table is None:
        table = default_variant_table()
    parts: list[list[str]] = [[]]
    for token in _clean(_ENUM_PREFIX.sub("", raw or "")).split():
        if token == "and":
            parts.append([])
        else:
            parts[-1].append(token)
    out = set()
    for words in parts:
        if not words:
            continue
        name = table.canonical(" ".join(words))
        if name:
            out.add(name)
    return out


@dataclass(frozen=True)
class LabelVocabulary:
    positive_classes: tuple[str, ...]
    other_class: str = OTHER
    none_class: str = NONE

    @property
    def classes(self) -> tuple[str, ...]:
        return (*self.positive_classes, self.other_class, self.none_class)

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, name: str) -> bool:
        return name in self.classes

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"{name!r} is not a vocabulary class") from None

    def class_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.classes)}

    def label_for_section(self, canonical: str) -> str:
        return canonical if canonical in self.positive_classes else self.other_class

    def sort_labels(self, labels: Iterable[str]) -> list[str]:
        idx = self.class_index()
        return sorted(labels, key=lambda name: idx[name])

    @staticmethod
    def display_name(name: str) -> str:
        return name[:1].upper() + name[1:]

    def to_json(self) -> dict:
        return {
            "positive_classes": list(self.positive_classes),
            "other_class": self.other_class,
            "none_class": self.none_class,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> LabelVocabulary:
        return cls(
            tuple(d["positive_classes"]),
            d.get("other_class", OTHER),
            d.get("none_class", NONE),
        )


def section_counts(pairs_raw: Iterable[tuple[str, str, str]]) -> Counter:
    """Count distinct (seed, target, section) instances per canonical section."""
    return Counter(section for _, _, section in set(pairs_raw))


def build_vocabulary(pairs_raw: Iterable[tuple[str, str, str]], top_k: int = 9) -> LabelVocabulary:
    """Keep the ``top_k`` most frequent sections as positive classes.

    Ties are broken lexicographically.  Everything else becomes Other at
    labeling time; None is appended as the last class.
    """
    counts = section_counts(pairs_raw)
    if not counts:
        raise VocabularyError("cannot build a vocabulary from zero citation instances")
    if len(counts) < top_k:
        raise VocabularyError(f"only {len(counts)} distinct sections, need at least top_k={top_k}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return LabelVocabulary(tuple(name for name, _ in ranked[:top_k]))


@dataclass(frozen=True)
class DocumentPair:
    seed_id: str
    target_id: str
    labels: frozenset[str]

    def __post_init__(self):
        if self.seed_id == self.target_id:
            raise ValueError(f"self-pair {self.seed_id!r}")
        if not self.labels:
            raise ValueError("a document pair needs at least one label")
        object.__setattr__(self, "labels", frozenset(self.labels))

    @property
    def is_negative(self) -> bool:
        return self.labels == frozenset({NONE})


class CitationResolver:
    """Resolve raw citation target references against a record store.

    A reference matches a record's ``paper_id``, one of its external ids
    (``doi:10.1/x`` or the bare value), or its normalized title.
    """

    def __init__(self, records: Iterable[PaperRecord]):
        self._by_key: dict[str, str] = {}
        for r in records:
            keys = [r.paper_id]
            for scheme, value in r.external_ids.items():
                keys.append(f"{scheme.lower()}:{value.strip().lower()}")
                keys.append(value.strip().lower())
            keys.append("title:" + normalize_text_key(r.title))
            for k in keys:
                self._by_key.setdefault(k, r.paper_id)

    def resolve(self, ref: str) -> str | None:
        ref = ref.strip()
        for key in (ref, ref.lower(), "title:" + normalize_text_key(ref)):
            if key in self._by_key:
                return self._by_key[key]
        return None


@dataclass
class PairStats:
    citations: int = 0
    unresolved: int = 0
    self_citations: int = 0
    unlabeled: int = 0
    instances: int = 0
    pairs: int = 0


def citation_instances(
    records: list[PaperRecord],
    table: VariantTable | None = None,
    stats: PairStats | None = None,
) -> list[tuple[str, str, str]]:
    """Distinct resolved (seed, target, canonical section) triples, in corpus order."""
    if stats is None:
        stats = PairStats()
    resolver = CitationResolver(records)
    seen: set[tuple[str, str, str]] = set()
    out = []
    for record in records:
        for cit in record.citations:
            stats.citations += 1
            target = resolver.resolve(cit.target_ref)
            if target is None:
                stats.unresolved += 1
                continue
            if target == record.paper_id:
                stats.self_citations += 1
                continue
            sections = normalize_section_title(cit.section_title_raw, table)
            if not sections:
                stats.unlabeled += 1
                continue
            for section in sorted(sections):
                triple = (record.paper_id, target, section)
                if triple not in seen:
                    seen.add(triple)
                    out.append(triple)
    stats.instances = len(out)
    return out


def pairs_from_instances(
    instances: Iterable[tuple[str, str, str]], vocab: LabelVocabulary
) -> list[DocumentPair]:
    labels: dict[tuple[str, str], set[str]] = {}
    for seed, target, section in instances:
        labels.setdefault((seed, target), set()).add(vocab.label_for_section(section))
    return [DocumentPair(s, t, frozenset(ls)) for (s, t), ls in labels.items()]


def build_positive_pairs(
    records: list[PaperRecord],
    vocab: LabelVocabulary,
    table: VariantTable | None = None,
    stats: PairStats | None = None,
) -> list[DocumentPair]:
    """One multi-label pair per ordered (citing, cited) combination.

    Citations to papers outside ``records`` and citations without a usable
    section title are dropped and counted in ``stats``.
    """
    if stats is None:
        stats = PairStats()
    pairs = pairs_from_instances(citation_instances(records, table, stats), vocab)
    stats.pairs = len(pairs)
    return pairs
