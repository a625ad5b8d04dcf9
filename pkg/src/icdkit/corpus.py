"""BRAT-annotated diagnosis records: parsing, statistics, and agreement.

Annotation files carry ``T`` lines (entity spans) and ``N`` lines
(references linking a span to an ICD code); all other line kinds are
ignored. Offsets are counted in Unicode code points and validated against
the text so encoding drift fails loudly instead of silently mis-slicing
Cyrillic text.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from icdkit.codes import IcdCode, parse_code
from icdkit.errors import (
    BadCodeError,
    DanglingReferenceError,
    InvalidFormatError,
    OffsetMismatchError,
    QuorumTooLowError,
)

_T_LINE_RE = re.compile(r"^(T\d+)\t(\S+) (\d+) (\d+)\t(.*)$")
_N_LINE_RE = re.compile(r"^(N\d+)\t(\S+) (T\d+) ([^:\t]+):(\S+)(?:\t(.*))?$")


@dataclass(frozen=True)
class Span:
    """A character span of a document, end-exclusive, in code points."""

    start: int
    end: int
    surface: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span offsets [{self.start}, {self.end})")


@dataclass(frozen=True)
class AnnotatedDocument:
    """One diagnosis record: its text plus code-linked entity spans.

    Spans may nest or overlap, and the same span may appear once per code
    it was linked to. Immutable after parsing, so documents can be
    processed in parallel without coordination.
    """

    doc_id: str
    text: str
    entities: tuple[tuple[Span, IcdCode], ...]

    def codes(self) -> list[IcdCode]:
        return [code for _, code in self.entities]


def parse_brat(text: str, ann: str, doc_id: str = "") -> AnnotatedDocument:
    """Parse a BRAT standoff pair (document text, annotation content).

    Yields one entity per ``N`` line; ``T`` lines without any reference
    are dropped, and a ``T`` line with several references produces one
    entity per reference so the multiplicity stays visible to the caller.

    Raises :class:`OffsetMismatchError` when a recorded surface disagrees
    with the text slice, :class:`DanglingReferenceError` when an ``N``
    line points at a missing span, and :class:`BadCodeError` for codes
    that do not parse.
    """
    spans: dict[str, Span] = {}
    order: dict[str, int] = {}
    entities: list[tuple[int, int, Span, IcdCode]] = []
    for lineno, line in enumerate(ann.splitlines(), start=1):
        if not line.strip():
            continue
        kind = line[0]
        if kind == "T":
            m = _T_LINE_RE.match(line)
            if m is None:
                raise InvalidFormatError(f"ann line {lineno}: malformed T line: {line!r}")
            tid, _label, start_text, end_text, surface = m.groups()
            start, end = int(start_text), int(end_text)
            if not (0 <= start < end <= len(text)):
                raise OffsetMismatchError(
                    f"ann line {lineno}: span [{start}, {end}) outside document of length {len(text)}"
                )
            slice_ = text[start:end]
            if slice_ != surface:
                raise OffsetMismatchError(
                    f"ann line {lineno}: surface {surface!r} != text slice {slice_!r}"
                )
            spans[tid] = Span(start, end, surface)
            order[tid] = lineno
        elif kind == "N":
            m = _N_LINE_RE.match(line)
            if m is None:
                raise InvalidFormatError(f"ann line {lineno}: malformed N line: {line!r}")
            _nid, _reftype, tid, _resource, code_text, _name = m.groups()
            if tid not in spans:
                raise DanglingReferenceError(f"ann line {lineno}: reference to missing {tid}")
            try:
                code = parse_code(code_text)
            except InvalidFormatError as exc:
                raise BadCodeError(f"ann line {lineno}: {exc}") from exc
            entities.append((order[tid], lineno, spans[tid], code))
    entities.sort(key=lambda item: (item[0], item[1]))
    return AnnotatedDocument(doc_id, text, tuple((span, code) for _, _, span, code in entities))


def parse_brat_file(txt_path: str | Path, ann_path: str | Path) -> AnnotatedDocument:
    txt_path = Path(txt_path)
    text = txt_path.read_text(encoding="utf-8")
    ann = Path(ann_path).read_text(encoding="utf-8")
    return parse_brat(text, ann, doc_id=txt_path.stem)


def read_corpus_dir(corpus_dir: str | Path) -> list[AnnotatedDocument]:
    """Parse every ``.txt``/``.ann`` pair under a directory, sorted by name."""
    corpus_dir = Path(corpus_dir)
    docs = []
    for txt_path in sorted(corpus_dir.glob("*.txt")):
        ann_path = txt_path.with_suffix(".ann")
        if not ann_path.exists():
            raise InvalidFormatError(f"missing annotation file for {txt_path.name}")
        docs.append(parse_brat_file(txt_path, ann_path))
    return docs


def render_ann(doc: AnnotatedDocument, label: str = "Disease", resource: str = "ICD10") -> str:
    """Re-serialize the entities the parser owns back to T/N lines.

    Parsing the result recovers the same (span, code) multiset, which is
    the round-trip contract; labels and reference names are not retained.
    A surface spanning a line break cannot be represented in the line
    format and is rejected.
    """
    lines = []
    for i, (span, code) in enumerate(doc.entities, start=1):
        if "\n" in span.surface or "\r" in span.surface:
            raise ValueError(f"entity at [{span.start}, {span.end}) spans a line break")
        lines.append(f"T{i}\t{label} {span.start} {span.end}\t{span.surface}")
        lines.append(f"N{i}\tReference T{i} {resource}:{code}\t{code}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class CorpusStats:
    n_records: int
    n_entities: int
    n_unique_codes: int
    mean_codes_per_record: float
    code_frequency: Mapping[IcdCode, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_entities": self.n_entities,
            "n_unique_codes": self.n_unique_codes,
            "mean_codes_per_record": self.mean_codes_per_record,
            "code_frequency": {str(code): n for code, n in self.code_frequency.items()},
        }


def corpus_stats(docs: Iterable[AnnotatedDocument]) -> CorpusStats:
    """Count records, entities, and per-code frequencies over a corpus.

    The mean is kept exact (rounding is a display concern); an empty
    corpus reports zeros with mean 0.
    """
    frequency: Counter[IcdCode] = Counter()
    n_records = 0
    for doc in docs:
        n_records += 1
        frequency.update(doc.codes())
    n_entities = sum(frequency.values())
    mean = n_entities / n_records if n_records else 0.0
    return CorpusStats(n_records, n_entities, len(frequency), mean, dict(frequency))


def _check_annotator_sets(records: Sequence[Sequence[frozenset | set]]) -> None:
    for i, record in enumerate(records):
        if len(record) < 2:
            raise ValueError(f"record {i}: agreement needs at least two annotators")


def iaa_ratio(
    records: Sequence[Sequence[set]],
    quorum: int = 2,
    per_record_mean: bool = False,
) -> float:
    """Agreement as accepted codes over all unique codes assigned.

    A code is accepted when at least ``quorum`` annotators assigned it to
    the record. The default pools counts globally: sum of accepted over
    all records divided by the sum of unique codes, 0 when nothing was
    assigned. ``per_record_mean`` switches to averaging the per-record
    ratio instead (records with no codes at all are skipped there).
    """
    if quorum < 2:
        raise QuorumTooLowError(f"quorum must be >= 2, got {quorum}")
    _check_annotator_sets(records)
    accepted_total = 0
    unique_total = 0
    per_record: list[float] = []
    for record in records:
        counts: Counter = Counter()
        for annotator_codes in record:
            counts.update(set(annotator_codes))
        unique = len(counts)
        accepted = sum(1 for n in counts.values() if n >= quorum)
        accepted_total += accepted
        unique_total += unique
        if unique:
            per_record.append(accepted / unique)
    if per_record_mean:
        return sum(per_record) / len(per_record) if per_record else 0.0
    return accepted_total / unique_total if unique_total else 0.0


def pairwise_jaccard(records: Sequence[Sequence[set]]) -> dict[tuple[int, int], float]:
    """Mean Jaccard similarity of code sets for each annotator pair.

    Annotators are indexed by their position, which must be consistent
    across records. A record where both annotators assigned nothing
    counts as full (vacuous) agreement of 1 for that pair.
    """
    if not records:
        return {}
    _check_annotator_sets(records)
    n_annotators = len(records[0])
    for i, record in enumerate(records):
        if len(record) != n_annotators:
            raise ValueError(f"record {i}: expected {n_annotators} annotators, got {len(record)}")
    result: dict[tuple[int, int], float] = {}
    for a in range(n_annotators):
        for b in range(a + 1, n_annotators):
            total = Fraction(0)
            for record in records:
                left, right = set(record[a]), set(record[b])
                union = left | right
                total += Fraction(len(left & right), len(union)) if union else Fraction(1)
            result[(a, b)] = float(total / len(records))
    return result
