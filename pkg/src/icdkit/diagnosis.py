"""Multi-label diagnosis-prediction evaluation.

Metrics live on the test-set label space: training predictions carry many
more codes than the test set, so records are restricted to the codes the
test gold actually contains before anything is scored. Class weights are
the proportion of training EHRs carrying each code, renormalized over
that label space; each (record, code) pair is a binary outcome for the
micro confusion counts.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from icdkit.codes import IcdCode, parse_code
from icdkit.errors import InvalidFormatError
from icdkit.metrics import ConfusionCounts


@dataclass(frozen=True)
class MultiLabelRecord:
    record_id: str
    predicted: frozenset[IcdCode]
    gold: frozenset[IcdCode]


@dataclass(frozen=True)
class LabelSpace:
    """The evaluation label space with per-code prevalence weights.

    Codes are kept in canonical order. Weights sum to 1 unless every code
    had zero training count (then all weights are 0 and every code is
    flagged); zero-count codes are listed in ``zero_count_codes``.
    """

    codes: tuple[IcdCode, ...]
    weights: Mapping[IcdCode, float]
    zero_count_codes: tuple[IcdCode, ...] = ()

    def __post_init__(self) -> None:
        if set(self.weights) != set(self.codes):
            raise ValueError("weights must be defined exactly on the label space")
        total = sum(self.weights.values())
        if total and not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"weights sum to {total}, expected 1")

    def __len__(self) -> int:
        return len(self.codes)


def build_label_space(
    test_gold: Iterable[MultiLabelRecord],
    training_counts: Mapping[IcdCode, int],
) -> LabelSpace:
    """Label space = codes in the test gold, weighted by training EHR counts.

    Counts are renormalized over the space so the weights sum to 1. Codes
    missing from the counts (or counted zero) get weight 0 and are
    flagged rather than rejected.
    """
    codes: set[IcdCode] = set()
    for record in test_gold:
        codes.update(record.gold)
    ordered = tuple(sorted(codes))
    counts = {code: int(training_counts.get(code, 0)) for code in ordered}
    total = sum(counts.values())
    if total:
        weights = {code: counts[code] / total for code in ordered}
    else:
        weights = {code: 0.0 for code in ordered}
    zero = tuple(code for code in ordered if counts[code] == 0)
    if zero:
        warnings.warn(
            f"{len(zero)} label-space code(s) have zero training count and weight 0: "
            + ", ".join(str(code) for code in zero[:5]),
            stacklevel=2,
        )
    return LabelSpace(ordered, weights, zero)


@dataclass(frozen=True)
class RestrictionResult:
    records: tuple[MultiLabelRecord, ...]
    dropped_predicted: int
    dropped_gold: int


def restrict(records: Iterable[MultiLabelRecord], space: LabelSpace) -> RestrictionResult:
    """Drop out-of-space codes from both sides of every record.

    Prediction drops and gold drops are counted separately; applying the
    restriction twice changes nothing.
    """
    members = set(space.codes)
    restricted: list[MultiLabelRecord] = []
    dropped_predicted = 0
    dropped_gold = 0
    for record in records:
        kept_pred = record.predicted & members
        kept_gold = record.gold & members
        dropped_predicted += len(record.predicted) - len(kept_pred)
        dropped_gold += len(record.gold) - len(kept_gold)
        restricted.append(MultiLabelRecord(record.record_id, frozenset(kept_pred), frozenset(kept_gold)))
    return RestrictionResult(tuple(restricted), dropped_predicted, dropped_gold)


@dataclass(frozen=True)
class PerClassF1:
    scores: Mapping[IcdCode, float]
    no_support: frozenset[IcdCode]


def per_class_f1(records: Sequence[MultiLabelRecord], space: LabelSpace) -> PerClassF1:
    """Binary F1 per code over the records.

    A code that never occurs in gold or predictions scores 0 and is
    flagged as no-support instead of being silently excluded, which would
    inflate the weighted average.
    """
    scores: dict[IcdCode, float] = {}
    no_support: set[IcdCode] = set()
    for code in space.codes:
        tp = fp = fn = 0
        for record in records:
            in_pred = code in record.predicted
            in_gold = code in record.gold
            tp += in_pred and in_gold
            fp += in_pred and not in_gold
            fn += in_gold and not in_pred
        if tp + fp + fn == 0:
            no_support.add(code)
            scores[code] = 0.0
        else:
            scores[code] = 2 * tp / (2 * tp + fp + fn)
    return PerClassF1(scores, frozenset(no_support))


def weighted_f1(per_class: Mapping[IcdCode, float], space: LabelSpace) -> float:
    """Prevalence-weighted mean of per-class F1 over the label space."""
    return sum(space.weights[code] * per_class[code] for code in space.codes)


def micro_confusion(
    records: Sequence[MultiLabelRecord],
    space: LabelSpace | Sequence[IcdCode],
) -> ConfusionCounts:
    """Confusion totals over every (record, code) binary outcome.

    The four counts always sum to ``len(records) * n_codes``. ``space``
    may be a plain code sequence, which is how frequency-group confusion
    is counted: true negatives then range over the sub-space only, not
    the full label space.
    """
    codes = space.codes if isinstance(space, LabelSpace) else tuple(space)
    tp = fp = fn = tn = 0
    for record in records:
        for code in codes:
            in_pred = code in record.predicted
            in_gold = code in record.gold
            if in_pred and in_gold:
                tp += 1
            elif in_pred:
                fp += 1
            elif in_gold:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def frequency_split(
    test_code_counts: Mapping[IcdCode, int],
    fraction: float = 0.10,
    min_count: int = 15,
) -> tuple[list[IcdCode], list[IcdCode]]:
    """Most- and least-frequent code groups of the test set.

    Codes are ordered by count descending with ties broken by canonical
    code order, making the split reproducible. The top group is the first
    ``ceil(fraction * N)`` codes; the bottom group is the last
    ``ceil(fraction * N)`` filtered to counts of at least ``min_count``.
    """
    if not 0 < fraction <= 0.5:
        raise ValueError(f"fraction must be in (0, 0.5], got {fraction}")
    ranked = sorted(test_code_counts, key=lambda code: (-test_code_counts[code], code))
    if not ranked:
        return [], []
    n_take = math.ceil(fraction * len(ranked))
    top = ranked[:n_take]
    bottom = [code for code in ranked[-n_take:] if test_code_counts[code] >= min_count]
    return top, bottom


def read_records_jsonl(path: str | Path) -> list[MultiLabelRecord]:
    """Load ``{"record_id": ..., "gold": [...], "predicted": [...]}`` rows."""
    records: list[MultiLabelRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                record_id = row["record_id"]
                gold = frozenset(parse_code(text) for text in row["gold"])
                predicted = frozenset(parse_code(text) for text in row["predicted"])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
            if record_id in seen:
                raise InvalidFormatError(f"{path}:{lineno}: duplicate record_id {record_id!r}")
            seen.add(record_id)
            records.append(MultiLabelRecord(record_id, predicted, gold))
    return records


def read_training_counts_tsv(path: str | Path) -> dict[IcdCode, int]:
    """Read ``CODE<TAB>COUNT`` rows; ``#`` comments and blanks are skipped."""
    counts: dict[IcdCode, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InvalidFormatError(f"{path}:{lineno}: expected CODE<TAB>COUNT")
            try:
                code = parse_code(parts[0])
                count = int(parts[1])
            except (InvalidFormatError, ValueError) as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
            if count < 0:
                raise InvalidFormatError(f"{path}:{lineno}: negative count")
            counts[code] = counts.get(code, 0) + count
    return counts
