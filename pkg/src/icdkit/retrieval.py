"""Dense dictionary retrieval and candidate export for an external reranker.

The index holds one embedding per dictionary entry and answers exact
Euclidean top-k queries; at dictionary scale (tens of thousands of
entries) a full scan is fast, deterministic, and free of the recall
noise an approximate structure would add. Ties are broken by the lower
entry id so every ranking is reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from icdkit.codes import IcdCode, IcdDictionary, parse_code, truncate_to_group
from icdkit.errors import (
    DataError,
    DimensionMismatchError,
    InvalidFormatError,
    MissingVectorError,
    NonFiniteValueError,
    SelectionOutOfRangeError,
)

DEFAULT_CANDIDATES = 15


@dataclass(frozen=True)
class Hit:
    entry_id: int
    code: IcdCode
    distance: float


@dataclass(frozen=True)
class RankedCandidates:
    """Retrieval result for one query: hits sorted by distance, closest first."""

    query_id: str
    hits: tuple[Hit, ...]


class EmbeddingIndex:
    """Immutable store of dictionary-entry embeddings with exact top-k search.

    Row order equals entry id order, so the index can be queried from any
    number of threads and always returns the same ranking.
    """

    def __init__(self, codes: Sequence[IcdCode], matrix: np.ndarray):
        if matrix.ndim != 2:
            raise DimensionMismatchError("embedding matrix must be 2-D")
        if len(codes) != matrix.shape[0]:
            raise DimensionMismatchError(
                f"{len(codes)} codes for {matrix.shape[0]} vectors"
            )
        if not np.isfinite(matrix).all():
            raise NonFiniteValueError("embedding matrix contains non-finite values")
        self.codes: tuple[IcdCode, ...] = tuple(codes)
        self.matrix = matrix.astype(np.float64, copy=True)
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def build_index(
    dictionary: IcdDictionary,
    vectors: Mapping[int, Sequence[float]] | Iterable[tuple[int, Sequence[float]]],
) -> EmbeddingIndex:
    """Pair every dictionary entry with its vector and build the index.

    Every entry must have exactly one vector: a missing entry raises
    :class:`MissingVectorError`, duplicate or unknown ids raise
    :class:`InvalidFormatError`, inconsistent dimensions raise
    :class:`DimensionMismatchError`, and NaN/inf components raise
    :class:`NonFiniteValueError`.
    """
    pairs = vectors.items() if isinstance(vectors, Mapping) else vectors
    by_id: dict[int, list[float]] = {}
    dim: int | None = None
    for entry_id, vector in pairs:
        entry_id = int(entry_id)
        if entry_id < 0 or entry_id >= len(dictionary):
            raise InvalidFormatError(f"vector id {entry_id} has no dictionary entry")
        if entry_id in by_id:
            raise InvalidFormatError(f"duplicate vector for entry {entry_id}")
        values = [float(x) for x in vector]
        if dim is None:
            dim = len(values)
            if dim == 0:
                raise DimensionMismatchError("vectors must have at least one component")
        elif len(values) != dim:
            raise DimensionMismatchError(
                f"entry {entry_id}: expected dim {dim}, got {len(values)}"
            )
        by_id[entry_id] = values
    for entry in dictionary:
        if entry.entry_id not in by_id:
            raise MissingVectorError(f"no vector for entry {entry.entry_id} ({entry.code})")
    if not len(dictionary):
        return EmbeddingIndex((), np.zeros((0, 1)))
    matrix = np.array([by_id[i] for i in range(len(dictionary))], dtype=np.float64)
    if not np.isfinite(matrix).all():
        raise NonFiniteValueError("embedding file contains non-finite values")
    return EmbeddingIndex([e.code for e in dictionary], matrix)


def retrieve(
    index: EmbeddingIndex, query: Sequence[float], k: int, query_id: str = ""
) -> RankedCandidates:
    """Exact Euclidean top-k over the index, ties broken by lower entry id.

    Returns at most ``k`` hits with non-decreasing distances.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise DimensionMismatchError(f"query dim {q.shape} does not match index dim {index.dim}")
    if not np.isfinite(q).all():
        raise NonFiniteValueError("query contains non-finite values")
    diff = index.matrix - q
    dist_sq = (diff * diff).sum(axis=1)
    # stable argsort keeps row (= entry id) order among exact ties
    order = np.argsort(dist_sq, kind="stable")[:k]
    hits = tuple(
        Hit(int(i), index.codes[int(i)], float(np.sqrt(dist_sq[int(i)])))
        for i in order
    )
    return RankedCandidates(query_id=query_id, hits=hits)


def collapse_to_codes(cands: RankedCandidates) -> list[IcdCode]:
    """Unique codes of a hit list, keeping first-occurrence (best-rank) order."""
    return list(dict.fromkeys(hit.code for hit in cands.hits))


def _code_hit(cands: RankedCandidates, gold: IcdCode, k: int, mode: str) -> bool:
    codes = [hit.code for hit in cands.hits]
    if mode == "relaxed":
        codes = [truncate_to_group(code) for code in codes]
        gold = truncate_to_group(gold)
    unique = list(dict.fromkeys(codes))
    return gold in unique[:k]


def acc_at_k(
    queries: Iterable[tuple[RankedCandidates | Sequence[float], IcdCode]],
    k: int,
    mode: str = "strict",
    index: EmbeddingIndex | None = None,
) -> float:
    """Fraction of queries whose gold code appears among the top-k codes.

    Ranks are counted over unique codes (synonym entries collapsed), with
    deduplication applied after truncation in relaxed mode so two
    subcodes of one group occupy a single rank. Each query supplies
    either precomputed candidates or a raw vector; vectors require the
    ``index`` and are ranked against all of it before collapsing.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if mode not in ("strict", "relaxed"):
        raise ValueError(f"mode must be 'strict' or 'relaxed', got {mode!r}")
    total = 0
    hits = 0
    for query, gold in queries:
        if isinstance(query, RankedCandidates):
            cands = query
        else:
            if index is None:
                raise ValueError("vector queries need an index")
            cands = retrieve(index, query, k=max(len(index), 1))
        total += 1
        hits += _code_hit(cands, gold, k, mode)
    return hits / total if total else 0.0


def load_embeddings_jsonl(path: str | Path) -> list[tuple[int, list[float]]]:
    """Read ``{"id": int, "vector": [floats]}`` rows from a JSONL file."""
    rows: list[tuple[int, list[float]]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rows.append((int(row["id"]), [float(x) for x in row["vector"]]))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_embeddings_jsonl(path: str | Path, rows: Iterable[tuple[int, Sequence[float]]]) -> None:
    """Write embedding rows with 9 significant digits per component, enough
    for a bit-stable round-trip of 32-bit precision values."""
    with open(path, "w", encoding="utf-8") as handle:
        for entry_id, vector in rows:
            comps = ", ".join(format(float(x), ".9g") for x in vector)
            handle.write('{"id": %d, "vector": [%s]}\n' % (int(entry_id), comps))


def export_candidates(
    cands: RankedCandidates,
    dictionary: IcdDictionary,
    mention: str,
    mention_id: str | None = None,
) -> dict:
    """Shape one query's candidates as a reranker-facing record.

    Ranks are 1-based in retrieval order; each candidate carries the
    dictionary name behind its entry so the reranker sees surface forms,
    not just codes.
    """
    return {
        "mention": mention,
        "mention_id": mention_id if mention_id is not None else cands.query_id,
        "candidates": [
            {
                "rank": rank,
                "code": str(hit.code),
                "name": dictionary.entry(hit.entry_id).name,
                "distance": hit.distance,
            }
            for rank, hit in enumerate(cands.hits, start=1)
        ],
    }


def baseline_selection(candidate_records: Iterable[Mapping]) -> list[dict]:
    """The no-reranker baseline: select the rank-1 candidate of every record."""
    return [{"mention_id": rec["mention_id"], "selected_rank": 1} for rec in candidate_records]


def import_selection(
    candidate_records: Iterable[Mapping],
    selections: Iterable[Mapping],
) -> dict[str, IcdCode]:
    """Resolve reranker selections against exported candidate records.

    Each selection must name an exported mention and a 1-based rank
    within its candidate list; anything else raises
    :class:`SelectionOutOfRangeError` (bad rank) or :class:`DataError`
    (unknown mention).
    """
    by_mention = {rec["mention_id"]: rec["candidates"] for rec in candidate_records}
    resolved: dict[str, IcdCode] = {}
    for selection in selections:
        mention_id = selection["mention_id"]
        if mention_id not in by_mention:
            raise DataError(f"selection references unknown mention_id {mention_id!r}")
        rank = int(selection["selected_rank"])
        candidates = by_mention[mention_id]
        if rank < 1 or rank > len(candidates):
            raise SelectionOutOfRangeError(
                f"{mention_id}: selected rank {rank} of {len(candidates)} candidates"
            )
        resolved[mention_id] = parse_code(candidates[rank - 1]["code"])
    return resolved
