"""EHR-level code aggregation and end-to-end coding metrics.

Mention-level pipelines emit one code per extracted entity, so a record's
prediction list usually repeats codes. Both lists are deduplicated into
sets before confusion counts are taken; micro metrics then sum the counts
across records. The relaxed variant truncates every code to its disease
group first and deduplicates after truncation, so two subcodes of one
group never count twice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from icdkit.codes import IcdCode, parse_code, truncate_to_group
from icdkit.errors import InvalidFormatError
from icdkit.metrics import ConfusionCounts, MetricsReport, micro_report, sum_counts


@dataclass(frozen=True)
class CodeSets:
    """Deduplicated predicted and gold code sets for one record."""

    predicted: frozenset[IcdCode]
    gold: frozenset[IcdCode]

    @classmethod
    def from_lists(cls, pred_codes: Iterable[IcdCode], gold_codes: Iterable[IcdCode]) -> "CodeSets":
        return cls(frozenset(pred_codes), frozenset(gold_codes))

    def counts(self) -> ConfusionCounts:
        tp = len(self.predicted & self.gold)
        return ConfusionCounts(tp, len(self.predicted) - tp, len(self.gold) - tp)


def aggregate_document(
    pred_codes: Sequence[IcdCode], gold_codes: Sequence[IcdCode]
) -> ConfusionCounts:
    """Deduplicate both code lists and count set overlap.

    Invariant to duplication and ordering of either input; a record with
    nothing predicted and nothing gold contributes (0, 0, 0) and is kept
    so per-record bookkeeping stays total.
    """
    return CodeSets.from_lists(pred_codes, gold_codes).counts()


def aggregate_relaxed(
    pred_codes: Sequence[IcdCode], gold_codes: Sequence[IcdCode]
) -> ConfusionCounts:
    """Aggregate after truncating every code to its disease group."""
    return aggregate_document(
        [truncate_to_group(code) for code in pred_codes],
        [truncate_to_group(code) for code in gold_codes],
    )


def corpus_micro(per_doc: Iterable[ConfusionCounts]) -> MetricsReport:
    """Sum per-record counts, then derive the micro metrics once."""
    return micro_report(sum_counts(per_doc))


def evaluate_coding(
    predictions: Mapping[str, Sequence[IcdCode]],
    gold: Mapping[str, Sequence[IcdCode]],
) -> dict[str, MetricsReport]:
    """Strict and relaxed micro metrics over a gold-keyed corpus.

    Every gold record participates; records without a prediction row are
    scored against an empty prediction.
    """
    strict = []
    relaxed = []
    for doc_id in gold:
        pred_codes = predictions.get(doc_id, ())
        strict.append(aggregate_document(pred_codes, gold[doc_id]))
        relaxed.append(aggregate_relaxed(pred_codes, gold[doc_id]))
    return {"strict": corpus_micro(strict), "relaxed": corpus_micro(relaxed)}


def read_code_predictions(path: str | Path) -> dict[str, list[IcdCode]]:
    """Load per-record code lists from JSONL rows of
    ``{"doc_id": ..., "codes": [...]}``. Duplicate rows for one record
    are concatenated (aggregation dedupes anyway)."""
    out: dict[str, list[IcdCode]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                doc_id = row["doc_id"]
                codes = [parse_code(text) for text in row["codes"]]
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
            out.setdefault(doc_id, []).extend(codes)
    return out


def write_code_predictions(path: str | Path, records: Mapping[str, Sequence[IcdCode]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for doc_id in records:
            row = {"doc_id": doc_id, "codes": [str(code) for code in records[doc_id]]}
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
