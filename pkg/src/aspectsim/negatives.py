"""Random negative (None) pairs under four dissimilarity constraints.

A pair of papers qualifies when they are not a positive pair in either
direction, no paper cites both of them, they share no author and they were
published in different venues.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field

from .corpus import PaperRecord, normalize_text_key
from .labels import NONE, CitationResolver, DocumentPair


class SamplingError(RuntimeError):
    def __init__(self, message: str, achieved: int):
        super().__init__(message)
        self.achieved = achieved


def normalize_author(name: str) -> str:
    return normalize_text_key(name)


def normalize_venue(venue: str) -> str:
    return normalize_text_key(venue)


@dataclass
class NegativeConstraintIndex:
    positive_pair_set: set[frozenset[str]] = field(default_factory=set)
    cocitation_index: dict[str, set[str]] = field(default_factory=dict)
    authors: dict[str, frozenset[str]] = field(default_factory=dict)
    venues: dict[str, str] = field(default_factory=dict)
    author_index: dict[str, set[str]] = field(default_factory=dict)
    venue_index: dict[str, set[str]] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        records: list[PaperRecord],
        positive_pairs: Iterable[DocumentPair] = (),
    ) -> NegativeConstraintIndex:
        """Build all indexes from the retained record store.

        Citations are resolved against ``records`` themselves, so every cited
        pair counts as a positive pair and every co-cited pair is recorded,
        whether or not a labeled positive sample came out of it.
        """
        idx = cls()
        resolver = CitationResolver(records)
        for r in records:
            idx.authors[r.paper_id] = frozenset(
                a for a in (normalize_author(x) for x in r.authors) if a
            )
            idx.venues[r.paper_id] = normalize_venue(r.venue)
            idx.cocitation_index.setdefault(r.paper_id, set())
            for a in idx.authors[r.paper_id]:
                idx.author_index.setdefault(a, set()).add(r.paper_id)
            if idx.venues[r.paper_id]:
                idx.venue_index.setdefault(idx.venues[r.paper_id], set()).add(r.paper_id)

        for r in records:
            cited = set()
            for c in r.citations:
                target = resolver.resolve(c.target_ref)
                if target is not None and target != r.paper_id:
                    cited.add(target)
                    idx.positive_pair_set.add(frozenset((r.paper_id, target)))
            for t in cited:
                idx.cocitation_index[t].update(cited - {t})
        for p in positive_pairs:
            idx.positive_pair_set.add(frozenset((p.seed_id, p.target_id)))
        return idx

    def violations(self, a: str, b: str) -> list[str]:
        """Names of the constraints the pair breaks (empty list: valid negative)."""
        if a == b:
            raise ValueError(f"self-pair {a!r} is never a negative candidate")
        for key in (a, b):
            if key not in self.authors:
                raise KeyError(f"unknown paper {key!r}")
        out = []
        if frozenset((a, b)) in self.positive_pair_set:
            out.append("positive_pair")
        if b in self.cocitation_index.get(a, ()):
            out.append("co_cited")
        if self.authors[a] & self.authors[b]:
            out.append("shared_author")
        # an unknown (empty) venue never counts as a shared venue
        if self.venues[a] and self.venues[a] == self.venues[b]:
            out.append("same_venue")
        return out


def is_valid_negative(a: str, b: str, idx: NegativeConstraintIndex) -> bool:
    return not idx.violations(a, b)


def negative_count(n_positive: int, ratio: float = 0.5) -> int:
    """Number of negatives to draw for ``n_positive`` positive pairs (rounded up)."""
    return math.ceil(n_positive * ratio)


@dataclass
class SamplerReport:
    requested: int = 0
    achieved: int = 0
    attempts: int = 0
    rejections: Counter = field(default_factory=Counter)

    def to_json(self) -> dict:
        return {
            "requested": self.requested,
            "achieved": self.achieved,
            "attempts": self.attempts,
            "rejections": dict(sorted(self.rejections.items())),
        }


def sample_negatives(
    records: list[PaperRecord],
    idx: NegativeConstraintIndex,
    count: int,
    rng_seed: int,
    attempt_factor: int = 100,
    report: SamplerReport | None = None,
) -> list[DocumentPair]:
    """Draw ``count`` distinct valid negatives by rejection sampling.

    Pairs are stored with ``seed_id < target_id``.  The output depends only on
    the record keys, the index, ``count`` and ``rng_seed``.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if report is None:
        report = SamplerReport()
    report.requested = count
    keys = sorted({r.paper_id for r in records})
    if count == 0:
        return []
    if len(keys) < 2:
        raise SamplingError("need at least two papers to sample negatives", 0)
    rng = random.Random(rng_seed)
    budget = attempt_factor * count
    seen: set[tuple[str, str]] = set()
    out: list[DocumentPair] = []
    while len(out) < count and report.attempts < budget:
        report.attempts += 1
        a, b = rng.sample(keys, 2)
        if b < a:
            a, b = b, a
        if (a, b) in seen:
            report.rejections["duplicate"] += 1
            continue
        broken = idx.violations(a, b)
        if broken:
            # histogram counts the first failing constraint only
            report.rejections[broken[0]] += 1
            continue
        seen.add((a, b))
        out.append(DocumentPair(a, b, frozenset({NONE})))
    report.achieved = len(out)
    if len(out) < count:
        raise SamplingError(
            f"attempt budget {budget} exhausted after {len(out)} of {count} negatives", len(out)
        )
    return out
