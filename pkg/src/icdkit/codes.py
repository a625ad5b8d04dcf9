"""ICD-10 codes and the code -> disease-name dictionary.

A code is a Latin capital chapter letter, two group digits, and an
optional 1-2 digit subcode after the dot (``H10``, ``H10.0``, ``E11.9``).
Truncating a code to its disease group drops the subcode.
"""

from __future__ import annotations

import functools
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from icdkit.errors import EmptyInputError, InvalidFormatError

_CODE_RE = re.compile(r"^([A-Z])(\d{2})(?:\.(\d{1,2}))?$")
_WS_RE = re.compile(r"\s+")


@functools.total_ordering
@dataclass(frozen=True)
class IcdCode:
    """A validated ICD-10 code. Immutable and hashable.

    Codes order lexicographically by their canonical text rendering, so
    ``H10 < H10.0 < H11`` and sorting is stable across runs.
    """

    chapter: str
    group: str
    subcode: str | None = None

    def __str__(self) -> str:
        if self.subcode is None:
            return f"{self.chapter}{self.group}"
        return f"{self.chapter}{self.group}.{self.subcode}"

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, IcdCode):
            return NotImplemented
        return str(self) < str(other)


def parse_code(text: str) -> IcdCode:
    """Parse canonical ICD-10 text (``H10.0``) into an :class:`IcdCode`.

    Surrounding whitespace is tolerated; anything else that deviates from
    ``<letter><dd>`` or ``<letter><dd>.<d[d]>`` raises
    :class:`InvalidFormatError`. Rendering the result with ``str()``
    reproduces the canonical form.
    """
    stripped = text.strip()
    if not stripped:
        raise EmptyInputError("empty ICD code")
    m = _CODE_RE.match(stripped)
    if m is None:
        raise InvalidFormatError(f"not an ICD-10 code: {text!r}")
    chapter, group, subcode = m.groups()
    return IcdCode(chapter, group, subcode)


def truncate_to_group(code: IcdCode) -> IcdCode:
    """Drop the subcode, mapping a code to its higher-level disease group.

    Identity for codes that already sit at group level, and idempotent.
    """
    if code.subcode is None:
        return code
    return IcdCode(code.chapter, code.group, None)


def normalize_name(name: str) -> str:
    """Canonical form of a disease name: NFC, lowercase, collapsed spaces."""
    return _WS_RE.sub(" ", unicodedata.normalize("NFC", name).lower()).strip()


@dataclass(frozen=True)
class DictEntry:
    entry_id: int
    code: IcdCode
    name: str


class IcdDictionary:
    """Ordered (entry_id, code, name) triples backing entity linking.

    Entry ids are dense ``0..N-1`` in insertion order and never change
    once assigned; no two entries share a (code, normalized name) pair.
    Instances are immutable after construction and safe to share across
    worker threads.
    """

    def __init__(self, entries: Sequence[DictEntry], dropped_duplicates: int = 0):
        self.entries: tuple[DictEntry, ...] = tuple(entries)
        self.dropped_duplicates = dropped_duplicates
        index: dict[IcdCode, list[int]] = {}
        for position, entry in enumerate(self.entries):
            if entry.entry_id != position:
                raise ValueError(f"entry ids must be dense 0..N-1, got {entry.entry_id} at {position}")
            index.setdefault(entry.code, []).append(entry.entry_id)
        self._index = {code: tuple(ids) for code, ids in index.items()}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[DictEntry]:
        return iter(self.entries)

    def entry(self, entry_id: int) -> DictEntry:
        return self.entries[entry_id]

    def entry_ids(self, code: IcdCode) -> tuple[int, ...]:
        """Entry ids registered for a code, in insertion order."""
        return self._index.get(code, ())

    @property
    def codes(self) -> tuple[IcdCode, ...]:
        """Unique codes in first-occurrence order."""
        return tuple(self._index)

    def key_set(self) -> set[tuple[str, str]]:
        return {(str(e.code), e.name) for e in self.entries}


def load_dictionary(rows: Iterable[tuple[str, str]]) -> IcdDictionary:
    """Build a dictionary from (code text, name text) rows.

    Names are normalized, exact (code, name) duplicates are dropped, and
    insertion order is preserved. The count of dropped duplicates is
    reported on the returned dictionary. A row whose code does not parse
    raises :class:`InvalidFormatError` naming the 1-based row number.
    """
    entries: list[DictEntry] = []
    seen: set[tuple[IcdCode, str]] = set()
    dropped = 0
    for rownum, (code_text, name_text) in enumerate(rows, start=1):
        try:
            code = parse_code(code_text)
        except InvalidFormatError as exc:
            raise InvalidFormatError(f"row {rownum}: {exc}") from exc
        name = normalize_name(name_text)
        key = (code, name)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        entries.append(DictEntry(len(entries), code, name))
    return IcdDictionary(entries, dropped_duplicates=dropped)


def merge_synonyms(base: IcdDictionary, extra: Iterable[tuple[str, str]]) -> IcdDictionary:
    """Union a dictionary with extra synonym rows.

    Base entries keep their ids; genuinely new (code, name) pairs are
    appended in the order given. Rows already present in the base (or
    repeated within ``extra``) are dropped and counted.
    """
    entries = list(base.entries)
    seen = {(e.code, e.name) for e in entries}
    dropped = 0
    for rownum, (code_text, name_text) in enumerate(extra, start=1):
        try:
            code = parse_code(code_text)
        except InvalidFormatError as exc:
            raise InvalidFormatError(f"row {rownum}: {exc}") from exc
        name = normalize_name(name_text)
        key = (code, name)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        entries.append(DictEntry(len(entries), code, name))
    return IcdDictionary(entries, dropped_duplicates=dropped)


def read_dictionary_tsv(path: str | Path) -> list[tuple[str, str]]:
    """Read ``CODE<TAB>NAME`` rows from a UTF-8 TSV file.

    Lines starting with ``#`` and blank lines are ignored. A line without
    a tab raises :class:`InvalidFormatError` with the file line number.
    """
    rows: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if "\t" not in line:
                raise InvalidFormatError(f"{path}:{lineno}: expected CODE<TAB>NAME")
            code_text, name_text = line.split("\t", 1)
            try:
                parse_code(code_text)
            except InvalidFormatError as exc:
                raise InvalidFormatError(f"{path}:{lineno}: {exc}") from exc
            rows.append((code_text, name_text))
    return rows


def load_dictionary_tsv(path: str | Path) -> IcdDictionary:
    return load_dictionary(read_dictionary_tsv(path))
