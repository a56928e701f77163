"""Corpus-to-dataset composition: records -> labeled pairs -> negatives -> folds."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

from .corpus import PaperRecord
from .dataset import DistributionReport, FoldAssignment, SampleSet, dataset_stats, stratified_folds
from .labels import (
    LabelVocabulary,
    PairStats,
    VariantTable,
    build_vocabulary,
    citation_instances,
    pairs_from_instances,
    section_counts,
)
from .negatives import NegativeConstraintIndex, SamplerReport, negative_count, sample_negatives

logger = logging.getLogger(__name__)


@dataclass
class BuildResult:
    samples: SampleSet
    folds: FoldAssignment
    stats: DistributionReport
    pair_stats: PairStats
    sampler: SamplerReport
    section_counts: dict[str, int] = field(default_factory=dict)

    @property
    def vocab(self) -> LabelVocabulary:
        return self.samples.vocab

    def summary(self) -> dict:
        return {
            "distribution": self.stats.to_json(),
            "citations": asdict(self.pair_stats),
            "negative_sampling": self.sampler.to_json(),
            "fold_sizes": self.folds.fold_sizes(),
            "section_counts": self.section_counts,
        }


def build_dataset(
    records: list[PaperRecord],
    table: VariantTable | None = None,
    negative_ratio: float = 0.5,
    seed: int = 0,
    k: int = 4,
    top_k: int = 9,
    provenance: dict | None = None,
) -> BuildResult:
    """Label positives, draw constrained negatives and assign stratified folds.

    ``records`` should already be filtered and deduplicated.  Positive pairs
    are ordered by (seed, target); negatives follow in sampling order.
    """
    pair_stats = PairStats()
    instances = citation_instances(records, table, pair_stats)
    vocab = build_vocabulary(instances, top_k)
    positives = sorted(
        pairs_from_instances(instances, vocab), key=lambda p: (p.seed_id, p.target_id)
    )
    pair_stats.pairs = len(positives)
    logger.info("%d citation instances -> %d positive pairs", len(instances), len(positives))

    index = NegativeConstraintIndex.build(records, positives)
    sampler = SamplerReport()
    negatives = sample_negatives(
        records, index, negative_count(len(positives), negative_ratio), seed, report=sampler
    )
    logger.info("%d negatives in %d attempts", len(negatives), sampler.attempts)

    samples = SampleSet.from_records(positives + negatives, vocab, records, provenance)
    folds = stratified_folds(samples, k, seed)
    counts = section_counts(instances)
    return BuildResult(
        samples,
        folds,
        dataset_stats(samples),
        pair_stats,
        sampler,
        dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))),
    )
