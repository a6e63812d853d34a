"""Paper records: line-delimited ingestion, eligibility filtering, year index."""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

REQUIRED_FIELDS = ("id", "year", "terms")


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def normalize_term(term: str) -> str:
    # exact string identity after NFC + trim; no case folding
    return unicodedata.normalize("NFC", term).strip()


@dataclass(frozen=True)
class PaperRecord:
    id: str
    year: int
    terms: frozenset[str]
    venue: str | None = None
    field: str | None = None
    label: bool | None = None
    citations: int | None = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("empty id")
        if any(not t for t in self.terms):
            raise CorpusError(f"record {self.id!r} has an empty term")

    @classmethod
    def make(cls, id: str, year: int, terms: Iterable[str], **meta) -> "PaperRecord":
        cleaned = frozenset(t for t in (normalize_term(x) for x in terms) if t)
        return cls(id=id, year=int(year), terms=cleaned, **meta)

    @property
    def sorted_terms(self) -> tuple[str, ...]:
        return tuple(sorted(self.terms))

    def to_dict(self) -> dict:
        out: dict = {"id": self.id, "year": self.year, "terms": list(self.sorted_terms)}
        if self.venue is not None:
            out["venue"] = self.venue
        if self.field is not None:
            out["field"] = self.field
        if self.label is not None:
            out["label"] = int(self.label)
        if self.citations is not None:
            out["citations"] = self.citations
        return out


def _parse_label(value, lineno: int) -> bool | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    raise CorpusError(f"label must be 0 or 1, got {value!r}", lineno)


def parse_record(obj: dict, lineno: int = 0) -> PaperRecord:
    if not isinstance(obj, dict):
        raise CorpusError("record is not a JSON object", lineno)
    for name in REQUIRED_FIELDS:
        if name not in obj or obj[name] is None:
            raise CorpusError(f"missing required field '{name}'", lineno)

    rid = obj["id"]
    if not isinstance(rid, str) or not rid.strip():
        raise CorpusError("field 'id' must be a non-empty string", lineno)
    year = obj["year"]
    if isinstance(year, bool) or not isinstance(year, int):
        raise CorpusError(f"field 'year' must be an integer, got {year!r}", lineno)
    terms = obj["terms"]
    if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
        raise CorpusError("field 'terms' must be an array of strings", lineno)

    citations = obj.get("citations")
    if citations is not None and (isinstance(citations, bool) or not isinstance(citations, int) or citations < 0):
        raise CorpusError(f"field 'citations' must be a non-negative integer, got {citations!r}", lineno)
    venue = obj.get("venue")
    fld = obj.get("field")
    for name, value in (("venue", venue), ("field", fld)):
        if value is not None and not isinstance(value, str):
            raise CorpusError(f"field '{name}' must be a string", lineno)

    return PaperRecord.make(
        rid.strip(),
        year,
        terms,
        # empty strings are "unknown", never a match key
        venue=venue or None,
        field=fld or None,
        label=_parse_label(obj.get("label"), lineno),
        citations=citations,
    )


def iter_corpus(lines: Iterable[str]) -> Iterator[PaperRecord]:
    """Yield records from a line-delimited JSON stream, checking id uniqueness.

    Blank lines are skipped. Errors carry the 1-based line number.
    """
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed JSON ({exc.msg})", lineno) from None
        rec = parse_record(obj, lineno)
        if rec.id in seen:
            raise CorpusError(f"duplicate id {rec.id!r}", lineno)
        seen.add(rec.id)
        yield rec


def parse_corpus(lines: Iterable[str]) -> list[PaperRecord]:
    return list(iter_corpus(lines))


def read_corpus(path: str | Path) -> list[PaperRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def write_corpus(records: Iterable[PaperRecord], fh: TextIO) -> None:
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), sort_keys=True))
        fh.write("\n")


@dataclass
class EligibilityReport:
    kept: int = 0
    removed: Counter = field(default_factory=Counter)

    def summary(self) -> str:
        parts = [f"kept {self.kept}"]
        for reason in ("no_terms", "single_term", "year_out_of_range"):
            parts.append(f"{reason} {self.removed.get(reason, 0)}")
        return "eligibility: " + ", ".join(parts)


def filter_eligible(
    records: Iterable[PaperRecord],
    min_year: int | None = None,
    max_year: int | None = None,
) -> tuple[list[PaperRecord], EligibilityReport]:
    """Keep records with at least two terms (and inside the year range, if given)."""
    report = EligibilityReport()
    kept = []
    for rec in records:
        if (min_year is not None and rec.year < min_year) or (max_year is not None and rec.year > max_year):
            report.removed["year_out_of_range"] += 1
        elif len(rec.terms) == 0:
            report.removed["no_terms"] += 1
        elif len(rec.terms) == 1:
            report.removed["single_term"] += 1
        else:
            kept.append(rec)
    report.kept = len(kept)
    return kept, report


@dataclass(frozen=True)
class CorpusIndex:
    records_by_year: dict[int, tuple[PaperRecord, ...]]
    total_count: int

    @property
    def years(self) -> list[int]:
        return sorted(self.records_by_year)

    def __len__(self) -> int:
        return self.total_count

    def __iter__(self) -> Iterator[PaperRecord]:
        for year in self.years:
            yield from self.records_by_year[year]

    def in_years(self, start: int, end: int) -> Iterator[PaperRecord]:
        """Records with start <= year <= end, in year-then-input order."""
        for year in self.years:
            if start <= year <= end:
                yield from self.records_by_year[year]

    def by_id(self) -> dict[str, PaperRecord]:
        return {r.id: r for r in self}


def build_index(records: Sequence[PaperRecord] | Iterable[PaperRecord]) -> CorpusIndex:
    buckets: dict[int, list[PaperRecord]] = {}
    n = 0
    for rec in records:
        buckets.setdefault(rec.year, []).append(rec)
        n += 1
    return CorpusIndex({y: tuple(buckets[y]) for y in sorted(buckets)}, n)
