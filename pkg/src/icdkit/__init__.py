"""Toolkit for ICD-10 clinical coding pipelines and their evaluation.

Covers the full evaluation chain: ICD code parsing and dictionaries,
BRAT-annotated diagnosis corpora, NER span matching, dense dictionary
retrieval with candidate export for an external reranker, EHR-level code
aggregation metrics, and multi-label diagnosis-prediction scoring.
"""

__version__ = "0.1.0"

from icdkit.codes import IcdCode, IcdDictionary, parse_code, truncate_to_group

__all__ = [
    "IcdCode",
    "IcdDictionary",
    "parse_code",
    "truncate_to_group",
    "__version__",
]
