"""Regenerate the 50-paper golden corpus (the committed files are the fixture).

    python3 tests/fixtures/make_golden50.py
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).parent / "golden50" / "corpus"

SECTIONS = [
    "1 Introduction", "Introduction", "2. Related Work", "Related Works", "Background",
    "4 Experiments", "Results", "5. Results and Discussion", "Discussion", "Evaluation",
    "Methods", "3 Method", "Conclusion and Future Work", "Conclusions", "Error Analysis",
    "Appendix A", "Acknowledgements", "Data & Annotation",
]
VENUES = ["ACL", "EMNLP", "NAACL", "COLING", "EACL", "TACL", "CL", "LREC"]
TOPICS = ["parsing", "translation", "summarization", "tagging", "dialogue",
          "retrieval", "generation", "entailment", "coreference", "sentiment"]


def main():
    rng = random.Random(2020)
    papers = []
    for i in range(50):
        topic = rng.choice(TOPICS)
        papers.append({
            "paper_id": f"G{i:02d}",
            "title": f"A study of {topic} number {i}",
            "abstract": f"We investigate {topic} with method {i}. Results improve over baselines.",
            "authors": [f"Author {rng.randrange(80)}" for _ in range(rng.randint(1, 3))],
            "venue": rng.choice(VENUES),
            "year": 2010 + i % 10,
            "external_ids": {"doi": f"10.0000/g{i:02d}"},
        })
    # G47 has no abstract: filtered out, citations to it become unresolved
    papers[47]["abstract"] = ""
    # G48 duplicates G03 by title and year: the later copy is dropped
    papers[48]["title"] = papers[3]["title"].upper()
    papers[48]["year"] = papers[3]["year"]
    # G49 has no venue: never counts as sharing a venue
    papers[49]["venue"] = ""

    citations = []
    for i in range(50):
        for _ in range(rng.randint(1, 5)):
            t = rng.randrange(50)
            citations.append({"citing_id": f"G{i:02d}", "cited_id": f"G{t:02d}",
                              "section": rng.choice(SECTIONS)})
    # by-title and by-doi references, a repeat citation and an external target
    citations.append({"citing_id": "G00", "cited_title": papers[10]["title"], "section": "Introduction"})
    citations.append({"citing_id": "G01", "cited_id": "doi:10.0000/g11", "section": "Related Work"})
    citations.append({"citing_id": "G02", "cited_id": "G12", "section": "Evaluation"})
    citations.append({"citing_id": "G02", "cited_id": "G12", "section": "Evaluation"})
    citations.append({"citing_id": "G04", "cited_title": "Some Paper Outside The Corpus", "section": "Introduction"})
    citations.append({"citing_id": "G05", "cited_id": "G05", "section": "Introduction"})

    HERE.mkdir(parents=True, exist_ok=True)
    with (HERE / "papers.jsonl").open("w", encoding="utf-8") as fh:
        for p in papers:
            fh.write(json.dumps(p) + "\n")
    with (HERE / "citations.jsonl").open("w", encoding="utf-8") as fh:
        for c in citations:
            fh.write(json.dumps(c) + "\n")


if __name__ == "__main__":
    main()
