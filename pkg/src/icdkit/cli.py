"""Command-line entry point for reproducible batch runs.

Flags only pick the subcommand and the config file; everything that can
affect a metric lives in the JSON config so a run's provenance is fully
serializable. Every report embeds a hash of the resolved config, and
identical config plus inputs produce byte-identical reports: no wall
clock, no unordered iteration.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping

from icdkit import __version__
from icdkit.coding import evaluate_coding, read_code_predictions
from icdkit.codes import (
    IcdDictionary,
    load_dictionary_tsv,
    merge_synonyms,
    parse_code,
    read_dictionary_tsv,
)
from icdkit.corpus import corpus_stats, iaa_ratio, pairwise_jaccard, read_corpus_dir
from icdkit.diagnosis import (
    build_label_space,
    frequency_split,
    micro_confusion,
    per_class_f1,
    read_records_jsonl,
    read_training_counts_tsv,
    restrict,
    weighted_f1,
)
from icdkit.errors import ConfigError, DataError, IcdkitError, InvalidFormatError
from icdkit.metrics import sum_counts
from icdkit.ner import match_spans, micro_report, read_span_predictions
from icdkit.retrieval import (
    DEFAULT_CANDIDATES,
    acc_at_k,
    baseline_selection,
    build_index,
    export_candidates,
    import_selection,
    load_embeddings_jsonl,
    retrieve,
)

_PATH_KEYS = frozenset({
    "corpus_dir", "dictionary", "synonyms", "embeddings", "queries",
    "predictions", "gold", "candidates", "selection", "records",
    "training_counts", "annotator_sets", "output_dir",
})


@dataclass(frozen=True)
class Options:
    mode: str = "strict"
    k: int = DEFAULT_CANDIDATES
    quorum: int = 2
    fraction: float = 0.10
    min_count: int = 15
    per_record_mean: bool = False
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration; round-trips through its JSON file form."""

    paths: Mapping[str, Path]
    options: Options

    @classmethod
    def load(cls, config_path: str | Path) -> "RunConfig":
        config_path = Path(config_path)
        try:
            raw = json.loads(config_path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown_top = set(raw) - {"paths", "options"}
        if unknown_top:
            raise ConfigError(f"unknown config sections: {sorted(unknown_top)}")
        paths_raw = raw.get("paths", {})
        unknown_paths = set(paths_raw) - _PATH_KEYS
        if unknown_paths:
            raise ConfigError(f"unknown path keys: {sorted(unknown_paths)}")
        base = config_path.parent
        paths = {key: (base / value).resolve() for key, value in paths_raw.items()}
        options_raw = raw.get("options", {})
        unknown_options = set(options_raw) - set(Options.__dataclass_fields__)
        if unknown_options:
            raise ConfigError(f"unknown option keys: {sorted(unknown_options)}")
        try:
            options = Options(**options_raw)
        except TypeError as exc:
            raise ConfigError(f"bad options: {exc}") from exc
        if options.mode not in ("strict", "relaxed"):
            raise ConfigError(f"mode must be 'strict' or 'relaxed', got {options.mode!r}")
        if options.k < 1:
            raise ConfigError(f"k must be >= 1, got {options.k}")
        if options.quorum < 2:
            raise ConfigError(f"quorum must be >= 2, got {options.quorum}")
        if not 0 < options.fraction <= 0.5:
            raise ConfigError(f"fraction must be in (0, 0.5], got {options.fraction}")
        if options.min_count < 0:
            raise ConfigError(f"min_count must be >= 0, got {options.min_count}")
        return cls(paths, options)

    def to_dict(self) -> dict:
        return {
            "paths": {key: str(path) for key, path in sorted(self.paths.items())},
            "options": asdict(self.options),
        }

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def path(self, key: str, required: bool = True) -> Path | None:
        value = self.paths.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config is missing required path {key!r}")
            return None
        if key != "output_dir" and not value.exists():
            raise ConfigError(f"path {key!r} does not exist: {value}")
        return value

    def output_dir(self) -> Path:
        value = self.paths.get("output_dir")
        if value is None:
            raise ConfigError("config is missing required path 'output_dir'")
        return value


def _load_dictionary(config: RunConfig) -> IcdDictionary:
    dictionary = load_dictionary_tsv(config.path("dictionary"))
    synonyms_path = config.path("synonyms", required=False)
    if synonyms_path is not None:
        dictionary = merge_synonyms(dictionary, read_dictionary_tsv(synonyms_path))
    return dictionary


def _load_queries(config: RunConfig) -> list[dict]:
    path = config.path("queries")
    queries: list[dict] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                queries.append({
                    "mention_id": str(row["mention_id"]),
                    "mention": row.get("mention", ""),
                    "vector": [float(x) for x in row["vector"]],
                    "gold": row.get("gold"),
                })
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
    return queries


def _jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n" for row in rows)


def cmd_parse(config: RunConfig) -> tuple[dict, dict[str, str]]:
    docs = read_corpus_dir(config.path("corpus_dir"))
    parsed_rows = []
    code_rows = []
    for doc in docs:
        parsed_rows.append({
            "doc_id": doc.doc_id,
            "entities": [
                {"start": span.start, "end": span.end, "text": span.surface, "code": str(code)}
                for span, code in doc.entities
            ],
        })
        code_rows.append({"doc_id": doc.doc_id, "codes": [str(code) for code in doc.codes()]})
    results = {
        "n_records": len(docs),
        "n_entities": sum(len(doc.entities) for doc in docs),
        "files": {"entities": "parsed.jsonl", "codes": "doc_codes.jsonl"},
    }
    return results, {"parsed.jsonl": _jsonl(parsed_rows), "doc_codes.jsonl": _jsonl(code_rows)}


def cmd_stats(config: RunConfig) -> tuple[dict, dict[str, str]]:
    docs = read_corpus_dir(config.path("corpus_dir"))
    return corpus_stats(docs).as_dict(), {}


def cmd_agreement(config: RunConfig) -> tuple[dict, dict[str, str]]:
    path = config.path("annotator_sets")
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                records.append([frozenset(codes) for codes in row["annotators"]])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
    ratio = iaa_ratio(records, quorum=config.options.quorum,
                      per_record_mean=config.options.per_record_mean)
    jaccard = pairwise_jaccard(records)
    results = {
        "n_records": len(records),
        "quorum": config.options.quorum,
        "per_record_mean": config.options.per_record_mean,
        "iaa_ratio": ratio,
        "pairwise_jaccard": {f"{a + 1}-{b + 1}": value for (a, b), value in jaccard.items()},
    }
    return results, {}


def cmd_index(config: RunConfig) -> tuple[dict, dict[str, str]]:
    dictionary = _load_dictionary(config)
    index = build_index(dictionary, load_embeddings_jsonl(config.path("embeddings")))
    results = {
        "n_entries": len(index),
        "dim": index.dim,
        "n_codes": len(dictionary.codes),
        "dropped_duplicates": dictionary.dropped_duplicates,
    }
    return results, {}


def _run_retrieval(config: RunConfig) -> tuple[IcdDictionary, list[dict], list]:
    dictionary = _load_dictionary(config)
    index = build_index(dictionary, load_embeddings_jsonl(config.path("embeddings")))
    queries = _load_queries(config)
    ranked = [
        retrieve(index, query["vector"], config.options.k, query_id=query["mention_id"])
        for query in queries
    ]
    return dictionary, queries, ranked


def cmd_retrieve(config: RunConfig) -> tuple[dict, dict[str, str]]:
    _, queries, ranked = _run_retrieval(config)
    rows = [
        {
            "mention_id": query["mention_id"],
            "hits": [
                {"entry_id": hit.entry_id, "code": str(hit.code), "distance": hit.distance}
                for hit in cands.hits
            ],
        }
        for query, cands in zip(queries, ranked)
    ]
    results: dict = {"n_queries": len(queries), "k": config.options.k,
                     "files": {"hits": "retrieved.jsonl"}}
    labelled = [(cands, parse_code(query["gold"]))
                for query, cands in zip(queries, ranked) if query["gold"]]
    if labelled:
        ks = sorted({1, 5, config.options.k})
        results["acc_at_k"] = {
            mode: {str(k): acc_at_k(labelled, k, mode=mode) for k in ks if k <= config.options.k}
            for mode in ("strict", "relaxed")
        }
    return results, {"retrieved.jsonl": _jsonl(rows)}


def cmd_eval_ner(config: RunConfig) -> tuple[dict, dict[str, str]]:
    docs = read_corpus_dir(config.path("corpus_dir"))
    predictions = read_span_predictions(config.path("predictions"))
    known = {doc.doc_id for doc in docs}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise DataError(f"predictions reference unknown doc_ids: {unknown[:5]}")
    per_doc = []
    missing = 0
    for doc in docs:
        pred_spans = predictions.get(doc.doc_id)
        if pred_spans is None:
            missing += 1
            pred_spans = []
        # a span linked to several codes is still one gold mention
        gold_spans = list(dict.fromkeys((span.start, span.end) for span, _ in doc.entities))
        per_doc.append(match_spans(pred_spans, gold_spans))
    report = micro_report(sum_counts(per_doc))
    results = report.as_dict()
    results.update({"n_docs": len(docs), "n_docs_without_predictions": missing})
    return results, {}


def cmd_eval_coding(config: RunConfig) -> tuple[dict, dict[str, str]]:
    gold = read_code_predictions(config.path("gold"))
    predictions = read_code_predictions(config.path("predictions"))
    unknown = sorted(set(predictions) - set(gold))
    if unknown:
        raise DataError(f"predictions reference unknown doc_ids: {unknown[:5]}")
    reports = evaluate_coding(predictions, gold)
    results = {
        "n_docs": len(gold),
        "strict": reports["strict"].as_dict(),
        "relaxed": reports["relaxed"].as_dict(),
    }
    return results, {}


def cmd_eval_dp(config: RunConfig) -> tuple[dict, dict[str, str]]:
    records = read_records_jsonl(config.path("records"))
    training_counts = read_training_counts_tsv(config.path("training_counts"))
    space = build_label_space(records, training_counts)
    restriction = restrict(records, space)
    per_class = per_class_f1(restriction.records, space)
    confusion = micro_confusion(restriction.records, space)
    test_counts = {
        code: sum(code in record.gold for record in restriction.records)
        for code in space.codes
    }
    top, bottom = frequency_split(test_counts, fraction=config.options.fraction,
                                  min_count=config.options.min_count)

    def group_confusion(group):
        counts = micro_confusion(restriction.records, group)
        return {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn}

    results = {
        "n_records": len(records),
        "label_space_size": len(space),
        "weighted_f1": weighted_f1(per_class.scores, space),
        "per_class_f1": {str(code): per_class.scores[code] for code in space.codes},
        "no_support_codes": sorted(str(code) for code in per_class.no_support),
        "zero_weight_codes": [str(code) for code in space.zero_count_codes],
        "dropped_predicted": restriction.dropped_predicted,
        "dropped_gold": restriction.dropped_gold,
        "micro_confusion": {
            "tp": confusion.tp, "fp": confusion.fp,
            "fn": confusion.fn, "tn": confusion.tn,
            "total": len(restriction.records) * len(space),
        },
        "frequency_split": {
            "fraction": config.options.fraction,
            "min_count": config.options.min_count,
            "top": [str(code) for code in top],
            "bottom": [str(code) for code in bottom],
            # group confusion counts TN over the sub-space, not the full space
            "top_confusion": group_confusion(top),
            "bottom_confusion": group_confusion(bottom),
        },
    }
    return results, {}


def cmd_export_candidates(config: RunConfig) -> tuple[dict, dict[str, str]]:
    dictionary, queries, ranked = _run_retrieval(config)
    rows = [
        export_candidates(cands, dictionary, mention=query["mention"],
                          mention_id=query["mention_id"])
        for query, cands in zip(queries, ranked)
    ]
    results = {"n_mentions": len(rows), "k": config.options.k,
               "files": {"candidates": "candidates.jsonl"}}
    return results, {"candidates.jsonl": _jsonl(rows)}


def cmd_import_selection(config: RunConfig) -> tuple[dict, dict[str, str]]:
    candidates_path = config.path("candidates")
    candidate_records = []
    with open(candidates_path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                candidate_records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InvalidFormatError(f"{candidates_path}:{lineno}: {exc}") from exc
    selection_path = config.path("selection", required=False)
    if selection_path is None:
        selections = baseline_selection(candidate_records)
        baseline = True
    else:
        selections = []
        with open(selection_path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    selections.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise InvalidFormatError(f"{selection_path}:{lineno}: {exc}") from exc
        baseline = False
    resolved = import_selection(candidate_records, selections)
    rows = [{"mention_id": mention_id, "code": str(code)}
            for mention_id, code in resolved.items()]
    results = {
        "n_mentions": len(resolved),
        "baseline_rank1": baseline,
        "selected": {mention_id: str(code) for mention_id, code in resolved.items()},
        "files": {"resolved": "resolved.jsonl"},
    }
    return results, {"resolved.jsonl": _jsonl(rows)}


_COMMANDS: dict[str, Callable[[RunConfig], tuple[dict, dict[str, str]]]] = {
    "parse": cmd_parse,
    "stats": cmd_stats,
    "agreement": cmd_agreement,
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "eval-ner": cmd_eval_ner,
    "eval-coding": cmd_eval_coding,
    "eval-dp": cmd_eval_dp,
    "export-candidates": cmd_export_candidates,
    "import-selection": cmd_import_selection,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icdkit",
        description="ICD coding pipeline stages and evaluation, driven by a JSON config.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="path to the JSON run config")
    return parser


def run(command: str, config: RunConfig) -> dict:
    """Execute one subcommand: compute fully, then write report and artifacts."""
    handler = _COMMANDS[command]
    results, artifacts = handler(config)
    report = {
        "tool_version": __version__,
        "config_hash": config.hash(),
        "command": command,
        "results": results,
    }
    out_dir = config.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    for filename, content in artifacts.items():
        (out_dir / filename).write_text(content, encoding="utf-8")
    report_name = command.replace("-", "_") + ".json"
    report_text = json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    (out_dir / report_name).write_text(report_text, encoding="utf-8")
    return report


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.load(args.config)
        run(args.command, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IcdkitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
