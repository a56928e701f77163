"""Sample persistence, stratified folds and label distribution statistics."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import PaperRecord
from .labels import DocumentPair, LabelVocabulary

logger = logging.getLogger(__name__)

SAMPLE_FIELDS = (
    "seed_id",
    "target_id",
    "seed_title",
    "seed_abstract",
    "target_title",
    "target_abstract",
    "labels",
)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class PaperText:
    title: str
    abstract: str


@dataclass
class SampleSet:
    pairs: list[DocumentPair]
    vocab: LabelVocabulary
    papers: dict[str, PaperText] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_records(
        cls,
        pairs: Iterable[DocumentPair],
        vocab: LabelVocabulary,
        records: Iterable[PaperRecord],
        provenance: Mapping | None = None,
    ) -> SampleSet:
        pairs = list(pairs)
        needed = {p.seed_id for p in pairs} | {p.target_id for p in pairs}
        papers = {
            r.paper_id: PaperText(r.title, r.abstract) for r in records if r.paper_id in needed
        }
        missing = needed - papers.keys()
        if missing:
            raise DatasetError(f"{len(missing)} pair endpoints have no record, e.g. {min(missing)!r}")
        return cls(pairs, vocab, papers, dict(provenance or {}))

    def __len__(self) -> int:
        return len(self.pairs)

    def subset(self, indices: Sequence[int]) -> SampleSet:
        pairs = [self.pairs[i] for i in indices]
        keep = {p.seed_id for p in pairs} | {p.target_id for p in pairs}
        return SampleSet(
            pairs,
            self.vocab,
            {k: v for k, v in self.papers.items() if k in keep},
            dict(self.provenance),
        )

    def label_matrix(self) -> np.ndarray:
        """Binary (n_pairs, n_classes) indicator matrix in vocabulary order."""
        idx = self.vocab.class_index()
        y = np.zeros((len(self.pairs), len(self.vocab)), dtype=np.int8)
        for i, p in enumerate(self.pairs):
            for label in p.labels:
                y[i, idx[label]] = 1
        return y


def _sample_line(s: SampleSet, p: DocumentPair) -> str:
    seed, target = s.papers[p.seed_id], s.papers[p.target_id]
    obj = {
        "seed_id": p.seed_id,
        "target_id": p.target_id,
        "seed_title": seed.title,
        "seed_abstract": seed.abstract,
        "target_title": target.title,
        "target_abstract": target.abstract,
        "labels": s.vocab.sort_labels(p.labels),
    }
    return json.dumps(obj, ensure_ascii=False)


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_dataset(samples: SampleSet, path: str | Path) -> None:
    """Write ``path`` (JSONL samples) and ``path.meta.json`` (vocabulary, provenance)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for p in samples.pairs:
            fh.write(_sample_line(samples, p) + "\n")
    meta = {"vocab": samples.vocab.to_json(), "provenance": samples.provenance}
    meta_path(path).write_text(
        json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_dataset(path: str | Path) -> SampleSet:
    path = Path(path)
    mp = meta_path(path)
    if not mp.exists():
        raise DatasetError(f"{mp}: missing dataset metadata")
    meta = json.loads(mp.read_text(encoding="utf-8"))
    vocab = LabelVocabulary.from_json(meta["vocab"])
    pairs: list[DocumentPair] = []
    papers: dict[str, PaperText] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            for name in SAMPLE_FIELDS:
                if name not in obj:
                    raise DatasetError(f"line {lineno}: missing {name}")
            labels = obj["labels"]
            if not isinstance(labels, list) or not labels:
                raise DatasetError(f"line {lineno}: labels must be a non-empty array")
            unknown = [x for x in labels if x not in vocab]
            if unknown:
                raise DatasetError(f"line {lineno}: unknown labels {unknown}")
            try:
                pairs.append(DocumentPair(obj["seed_id"], obj["target_id"], frozenset(labels)))
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from exc
            papers[obj["seed_id"]] = PaperText(obj["seed_title"], obj["seed_abstract"])
            papers[obj["target_id"]] = PaperText(obj["target_title"], obj["target_abstract"])
    return SampleSet(pairs, vocab, papers, meta.get("provenance") or {})


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# folds -------------------------------------------------------------------


@dataclass
class FoldAssignment:
    k: int
    seed: int
    assignment: list[int]

    def test_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]

    def fold_sizes(self) -> list[int]:
        counts = Counter(self.assignment)
        return [counts.get(f, 0) for f in range(self.k)]

    def to_json(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignment": list(self.assignment)}

    @classmethod
    def from_json(cls, d: Mapping) -> FoldAssignment:
        return cls(int(d["k"]), int(d["seed"]), [int(x) for x in d["assignment"]])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> FoldAssignment:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def iterative_stratification(y: np.ndarray, k: int, rng: random.Random) -> np.ndarray:
    """Multi-label iterative stratification over a binary label matrix.

    Repeatedly takes the label with the fewest unassigned samples and deals
    those samples out, each to the fold that most wants that label; ties go
    to the fold wanting the most samples overall, then to a random fold.
    Fold sizes are then evened out to differ by at most one (see
    :func:`_balance_sizes`).  Returns one fold id per row.
    """
    n, n_labels = y.shape
    y = y.astype(bool)
    fold_of = np.full(n, -1, dtype=np.int64)
    want_total = np.full(k, n / k)
    want_label = np.tile(y.sum(axis=0) / k, (k, 1))
    remaining = np.ones(n, dtype=bool)
    order = list(range(n))
    rng.shuffle(order)
    order_arr = np.array(order, dtype=np.int64)

    def assign(i: int, candidates: np.ndarray) -> None:
        best = candidates[want_total[candidates] == want_total[candidates].max()]
        f = int(best[0]) if len(best) == 1 else int(best[rng.randrange(len(best))])
        fold_of[i] = f
        remaining[i] = False
        want_total[f] -= 1
        want_label[f, y[i]] -= 1

    while remaining.any():
        counts = y[remaining].sum(axis=0)
        if not counts.any():
            # unlabeled leftovers go wherever the most room is
            for i in order_arr[remaining[order_arr]]:
                assign(int(i), np.arange(k))
            break
        present = np.flatnonzero(counts)
        label = int(present[np.argmin(counts[present])])
        for i in order_arr[remaining[order_arr] & y[order_arr, label]]:
            wants = want_label[:, label]
            assign(int(i), np.flatnonzero(wants == wants.max()))
    _balance_sizes(y, fold_of, k)
    return fold_of


def _balance_sizes(y: np.ndarray, fold_of: np.ndarray, k: int) -> None:
    """Move samples from oversized to undersized folds, in place.

    Each move takes the sample from the largest fold whose label vector best
    matches that fold's per-label surplus and the receiving fold's deficit.
    """
    n = len(fold_of)
    target = np.array([n // k + (1 if f < n % k else 0) for f in range(k)])
    yf = y.astype(np.float64)
    expected = yf.sum(axis=0) / k
    while True:
        sizes = np.bincount(fold_of, minlength=k)
        # the currently largest folds keep the larger targets
        rank = np.argsort(np.argsort(sizes, kind="stable"), kind="stable")
        surplus = sizes - np.sort(target)[rank]
        src, dst = int(np.argmax(surplus)), int(np.argmin(surplus))
        if surplus[src] <= 0:
            return
        members = np.flatnonzero(fold_of == src)
        excess = yf[fold_of == src].sum(axis=0) - expected
        deficit = expected - yf[fold_of == dst].sum(axis=0)
        # cost change of moving each member, summed absolute deviation over labels
        cand = yf[members]
        cost = (np.abs(excess - cand) - np.abs(excess) + np.abs(deficit - cand) - np.abs(deficit)).sum(axis=1)
        fold_of[members[int(np.argmin(cost))]] = dst


def stratified_folds(samples: SampleSet, k: int = 4, rng_seed: int = 0) -> FoldAssignment:
    n = len(samples.pairs)
    if k < 2:
        raise DatasetError("k must be at least 2")
    if k > n:
        raise DatasetError(f"k={k} exceeds the number of samples ({n})")
    y = samples.label_matrix()
    for name, count in zip(samples.vocab.classes, y.sum(axis=0)):
        if 0 < count < k:
            logger.warning("class %s has %d < k=%d samples; stratified best-effort", name, count, k)
    folds = iterative_stratification(y, k, random.Random(rng_seed))
    return FoldAssignment(k, rng_seed, folds.tolist())


# statistics --------------------------------------------------------------


@dataclass
class DistributionReport:
    class_counts: dict[str, int]
    label_histogram: dict[str, int]
    positives: int
    negatives: int

    def to_json(self) -> dict:
        return {
            "class_counts": self.class_counts,
            "label_histogram": self.label_histogram,
            "positives": self.positives,
            "negatives": self.negatives,
            "total": self.positives + self.negatives,
        }


def _cardinality_bucket(n: int) -> str:
    return ">=3" if n >= 3 else str(n)


def dataset_stats(samples: SampleSet) -> DistributionReport:
    counts = Counter(label for p in samples.pairs for label in p.labels)
    hist = Counter(_cardinality_bucket(len(p.labels)) for p in samples.pairs)
    negatives = sum(1 for p in samples.pairs if p.is_negative)
    return DistributionReport(
        class_counts={c: counts.get(c, 0) for c in samples.vocab.classes},
        label_histogram={b: hist[b] for b in ("1", "2", ">=3") if hist.get(b)},
        positives=len(samples.pairs) - negatives,
        negatives=negatives,
    )


def write_stats(report: DistributionReport, vocab: LabelVocabulary, out_dir: str | Path) -> None:
    """Write ``label_distribution.csv`` (class, count) and ``stats.json``."""
    out_dir = Path(out_dir)
    with (out_dir / "label_distribution.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "count"])
        for name, count in report.class_counts.items():
            w.writerow([vocab.display_name(name), count])
    (out_dir / "stats.json").write_text(
        json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
