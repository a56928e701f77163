"""Synthetic corpora and label sets for tests."""

from __future__ import annotations

import random

from aspectsim.corpus import PaperRecord, RawCitation
from aspectsim.labels import NONE, OTHER

SECTIONS = [
    "Introduction", "1 Introduction", "Related Work", "2. Related Works", "Experiments",
    "Results and Discussion", "Conclusion", "Conclusions and Future Work", "Background",
    "Evaluation", "Methods", "Acknowledgements", "Appendix", "",
]
VENUES = ["ACL", "EMNLP", "NAACL", "COLING", "EACL", "TACL", "CL", "LREC", "Interspeech", "ICML"]


def make_corpus(n_papers: int, seed: int, max_citations: int = 6) -> list[PaperRecord]:
    rng = random.Random(seed)
    authors = [f"Author {i}" for i in range(n_papers)]
    recs = []
    for i in range(n_papers):
        recs.append(
            PaperRecord(
                paper_id=f"P{i:04d}",
                title=f"Paper number {i} on topic {rng.randrange(20)}",
                abstract=f"We study problem {i}. " + " ".join(rng.choice("abcdefgh") for _ in range(5)),
                authors=rng.sample(authors, rng.randint(1, 3)),
                venue=rng.choice(VENUES),
                year=2000 + rng.randrange(20),
            )
        )
    for r in recs:
        for _ in range(rng.randint(0, max_citations)):
            t = rng.randrange(n_papers)
            r.citations.append(RawCitation(f"P{t:04d}", rng.choice(SECTIONS)))
    return recs


# class frequencies shaped like the ACL column of the label distribution
# (positive counts) plus None at half the positive pair count
ACL_SKEW = {
    "introduction": 16279, "related work": 12600, "experiment": 4025, "background": 1365,
    "results": 1181, "conclusion": 1158, "discussion": 1132, "evaluation": 971,
    "methods": 719, OTHER: 22249,
}


def skewed_label_sets(n: int, seed: int) -> list[frozenset[str]]:
    """Label sets with the ACL class skew: a third None, the rest multi-label positives."""
    rng = random.Random(seed)
    classes = list(ACL_SKEW)
    weights = [ACL_SKEW[c] for c in classes]
    out = []
    for _ in range(n):
        if rng.random() < 1 / 3:
            out.append(frozenset({NONE}))
            continue
        k = rng.choices([1, 2, 3, 4], weights=[80, 13, 5, 2])[0]
        labels = set()
        while len(labels) < k:
            labels.add(rng.choices(classes, weights)[0])
        out.append(frozenset(labels))
    return out


WORDS = (
    "graph parser corpus neural entity relation translation speech summary embedding "
    "attention encoder decoder lexicon syntax semantic dialogue question answer retrieval "
    "virus protein vaccine clinical genome cell infection immune model sampling"
).split()

TOY_VOCAB_CLASSES = tuple(c for c in ACL_SKEW if c != OTHER)


def toy_samples(n_pairs: int, seed: int, n_papers: int | None = None, words: int = 12):
    """A SampleSet of random-text papers and skewed label sets, for model tests."""
    from aspectsim.dataset import PaperText, SampleSet
    from aspectsim.labels import DocumentPair, LabelVocabulary

    rng = random.Random(seed)
    n_papers = n_papers or 2 * n_pairs
    papers = {
        f"T{i:04d}": PaperText(
            f"paper {i}", " ".join(rng.choice(WORDS) for _ in range(words))
        )
        for i in range(n_papers)
    }
    ids = sorted(papers)
    labels = skewed_label_sets(n_pairs, seed)
    pairs, seen = [], set()
    while len(pairs) < n_pairs:
        a, b = rng.sample(ids, 2)
        if (a, b) in seen:
            continue
        seen.add((a, b))
        pairs.append(DocumentPair(a, b, labels[len(pairs)]))
    return SampleSet(pairs, LabelVocabulary(TOY_VOCAB_CLASSES), papers)
