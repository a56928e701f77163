"""Corpus ingestion: parse citation-annotated corpora into :class:`PaperRecord`.

Two on-disk layouts are understood.

``acl_style``
    ``papers.jsonl`` with one paper per line and ``citations.jsonl`` with one
    citation per line (``citing_id``, ``cited_id`` or ``cited_title``,
    ``section``).  This mirrors the ACL Anthology Reference Corpus, where the
    citation data ships separately from the paper metadata.

``cord19_style``
    One S2ORC-style JSON parse per paper (``paper_id``, ``metadata``,
    ``abstract``, ``body_text`` with ``cite_spans``, ``bib_entries``), found
    recursively under the corpus root, plus an optional ``metadata.csv``
    keyed by ``sha`` that supplies abstract, journal, DOI and publish time.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

FORMATS = ("acl_style", "cord19_style")


class CorpusError(Exception):
    """Fatal ingestion error (unreadable file, unknown layout)."""


@dataclass(frozen=True)
class RawCitation:
    target_ref: str
    section_title_raw: str


@dataclass
class PaperRecord:
    paper_id: str
    title: str
    abstract: str = ""
    authors: list[str] = field(default_factory=list)
    venue: str = ""
    year: int | None = None
    external_ids: dict[str, str] = field(default_factory=dict)
    citations: list[RawCitation] = field(default_factory=list)

    def to_dict(self) -> dict:
        # field order is part of the JSONL contract
        return {
            "paper_id": self.paper_id,
            "external_ids": dict(sorted(self.external_ids.items())),
            "title": self.title,
            "abstract": self.abstract,
            "authors": list(self.authors),
            "venue": self.venue,
            "year": self.year,
            "citations": [
                {"target_ref": c.target_ref, "section_title_raw": c.section_title_raw}
                for c in self.citations
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> PaperRecord:
        paper_id = d.get("paper_id")
        if not isinstance(paper_id, str) or not paper_id:
            raise ValueError("paper_id must be a non-empty string")
        year = d.get("year")
        return cls(
            paper_id=paper_id,
            title=d.get("title") or "",
            abstract=d.get("abstract") or "",
            authors=[str(a) for a in d.get("authors") or []],
            venue=d.get("venue") or "",
            year=int(year) if year not in (None, "") else None,
            external_ids={str(k): str(v) for k, v in (d.get("external_ids") or {}).items()},
            citations=[
                RawCitation(str(c["target_ref"]), c.get("section_title_raw") or "")
                for c in d.get("citations") or []
            ],
        )


@dataclass
class ParseStats:
    papers: int = 0
    citations: int = 0
    warnings: int = 0


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc


def _iter_jsonl(path: Path, stats: ParseStats) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(_read_text(path).split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            stats.warnings += 1
            logger.warning("%s:%d: malformed JSON (%s), skipped", path, lineno, exc)
            continue
        if not isinstance(obj, dict):
            stats.warnings += 1
            logger.warning("%s:%d: expected an object, skipped", path, lineno)
            continue
        yield lineno, obj


def _parse_year(value) -> int | None:
    if value is None:
        return None
    m = re.search(r"\d{4}", str(value))
    return int(m.group()) if m else None


def _parse_acl(root: Path, stats: ParseStats) -> Iterator[PaperRecord]:
    papers_path = root / "papers.jsonl"
    citations_path = root / "citations.jsonl"
    if not papers_path.exists():
        raise CorpusError(f"cannot read {papers_path}: missing")

    by_citing: dict[str, list[RawCitation]] = {}
    if citations_path.exists():
        for lineno, obj in _iter_jsonl(citations_path, stats):
            citing = obj.get("citing_id")
            target = obj.get("cited_id") or obj.get("cited_title")
            if not citing or not target:
                stats.warnings += 1
                logger.warning("%s:%d: citation without endpoints, skipped", citations_path, lineno)
                continue
            by_citing.setdefault(str(citing), []).append(
                RawCitation(str(target), obj.get("section") or "")
            )

    for lineno, obj in _iter_jsonl(papers_path, stats):
        try:
            record = PaperRecord.from_dict({**obj, "citations": []})
        except (ValueError, TypeError, KeyError) as exc:
            stats.warnings += 1
            logger.warning("%s:%d: bad paper record (%s), skipped", papers_path, lineno, exc)
            continue
        record.citations = by_citing.get(record.paper_id, [])
        stats.papers += 1
        stats.citations += len(record.citations)
        yield record


def _author_name(author) -> str:
    if isinstance(author, str):
        return author.strip()
    parts = [author.get("first") or ""]
    parts.extend(author.get("middle") or [])
    parts.append(author.get("last") or "")
    return " ".join(p for p in parts if p).strip()


def _load_cord_metadata(root: Path) -> dict[str, dict]:
    path = root / "metadata.csv"
    if not path.exists():
        return {}
    rows: dict[str, dict] = {}
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                for sha in (row.get("sha") or "").split(";"):
                    if sha.strip():
                        rows[sha.strip()] = row
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    return rows


def _bib_target(entry: dict) -> str | None:
    other = entry.get("other_ids") or {}
    dois = other.get("DOI") or []
    if dois:
        return f"doi:{dois[0]}"
    title = (entry.get("title") or "").strip()
    return title or None


def _cord_record(obj: dict, meta: dict | None) -> PaperRecord:
    paper_id = obj["paper_id"]
    md = obj.get("metadata") or {}
    abstract = " ".join(
        p.get("text", "") for p in obj.get("abstract") or [] if isinstance(p, dict)
    ).strip()
    record = PaperRecord(
        paper_id=paper_id,
        title=(md.get("title") or "").strip(),
        abstract=abstract,
        authors=[a for a in (_author_name(x) for x in md.get("authors") or []) if a],
    )
    if meta:
        record.title = record.title or (meta.get("title") or "").strip()
        record.abstract = record.abstract or (meta.get("abstract") or "").strip()
        if not record.authors and meta.get("authors"):
            record.authors = [a.strip() for a in meta["authors"].split(";") if a.strip()]
        record.venue = (meta.get("journal") or "").strip()
        record.year = _parse_year(meta.get("publish_time"))
        if meta.get("doi"):
            record.external_ids["doi"] = meta["doi"].strip()
        if meta.get("cord_uid"):
            record.external_ids["cord_uid"] = meta["cord_uid"].strip()

    bib = obj.get("bib_entries") or {}
    for para in obj.get("body_text") or []:
        section = para.get("section") or ""
        for span in para.get("cite_spans") or []:
            entry = bib.get(span.get("ref_id") or "")
            if not entry:
                continue
            target = _bib_target(entry)
            if target:
                record.citations.append(RawCitation(target, section))
    return record


def _parse_cord(root: Path, stats: ParseStats) -> Iterator[PaperRecord]:
    meta = _load_cord_metadata(root)
    for path in sorted(root.rglob("*.json")):
        try:
            obj = json.loads(_read_text(path))
        except json.JSONDecodeError as exc:
            stats.warnings += 1
            logger.warning("%s: malformed JSON (%s), skipped", path, exc)
            continue
        try:
            record = _cord_record(obj, meta.get(obj.get("paper_id", "")))
        except (KeyError, TypeError, AttributeError) as exc:
            stats.warnings += 1
            logger.warning("%s: bad paper record (%s), skipped", path, exc)
            continue
        if not record.paper_id:
            stats.warnings += 1
            continue
        stats.papers += 1
        stats.citations += len(record.citations)
        yield record


def parse_corpus(
    corpus_path: str | Path, format: str, stats: ParseStats | None = None
) -> Iterator[PaperRecord]:
    """Yield one :class:`PaperRecord` per source paper, unfiltered.

    Malformed individual records are skipped and counted in ``stats.warnings``;
    an unreadable file raises :class:`CorpusError`.
    """
    root = Path(corpus_path)
    if not root.is_dir():
        raise CorpusError(f"corpus path {root} is not a directory")
    if stats is None:
        stats = ParseStats()
    if format == "acl_style":
        return _parse_acl(root, stats)
    if format == "cord19_style":
        return _parse_cord(root, stats)
    raise CorpusError(f"unknown corpus format {format!r}; expected one of {FORMATS}")


def normalize_text_key(text: str) -> str:
    return " ".join(text.lower().split())


def _dedup_keys(record: PaperRecord) -> list[tuple]:
    keys: list[tuple] = [("title", normalize_text_key(record.title), record.year)]
    keys.extend(
        ("id", scheme.lower(), value.strip().lower())
        for scheme, value in record.external_ids.items()
        if value.strip()
    )
    return keys


def filter_and_dedup(records: Iterable[PaperRecord]) -> list[PaperRecord]:
    """Drop text-less papers and duplicates; the first occurrence wins.

    Two records are duplicates when they share the normalized title+year key
    or any external id (or the same ``paper_id``).
    """
    seen: set[tuple] = set()
    kept = []
    for record in records:
        if not record.title.strip() or not record.abstract.strip():
            continue
        keys = _dedup_keys(record) + [("paper_id", record.paper_id)]
        if any(k in seen for k in keys):
            continue
        seen.update(keys)
        kept.append(record)
    return kept


def write_records(records: Iterable[PaperRecord], path: str | Path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> list[PaperRecord]:
    out = []
    for lineno, line in enumerate(_read_text(Path(path)).split("\n"), start=1):
        if not line.strip():
            continue
        try:
            out.append(PaperRecord.from_dict(json.loads(line)))
        except (ValueError, TypeError, KeyError) as exc:
            raise CorpusError(f"{path}:{lineno}: invalid record ({exc})") from exc
    return out
