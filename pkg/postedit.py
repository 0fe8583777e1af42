"""
Post-editing of decoder output: out-of-vocabulary tokens are looked up in a medical
dictionary first and sent to the external translator only when the dictionary has
no entry. Every other token is left byte-for-byte as the decoder produced it.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import pandas as pd
import requests

from decoder import OOV_CLOSE, OOV_OPEN, TranslationOutput, with_tokens
from translate_api import LIVE, TranslatorClient
from utils import ParseError, ValidationError, atomic_write

logger = logging.getLogger(__name__)

DICTIONARY = "dictionary"
EXTERNAL = "external"
NONE = "none"


@dataclass(frozen=True)
class MedicalDictionary:
    entries: dict = field(default_factory=dict)  # case-folded token tuple -> translations, by priority
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, translations in self.entries.items():
            if not key or tuple(token.casefold() for token in key) != key:
                raise ValidationError(f"dictionary key {key} must be non-empty and case-folded")
            if not translations or any(not text.strip() for text in translations):
                raise ValidationError(f"dictionary entry {' '.join(key)} has an empty translation")

    @classmethod
    def from_terms(cls, terms: dict, notes: Optional[dict] = None) -> "MedicalDictionary":
        """Build from {"source term": [translation, ...]}, folding keys and rejecting collisions."""
        entries, folded_notes = {}, {}
        for term, translations in terms.items():
            key = tuple(term.casefold().split())
            if key in entries:
                raise ValidationError(f"dictionary term {term!r} collides with another after case-folding")
            entries[key] = tuple([translations] if isinstance(translations, str) else translations)
            if notes and term in notes:
                folded_notes[key] = notes[term]
        return cls(entries, folded_notes)

    @property
    def max_key_len(self) -> int:
        return max((len(key) for key in self.entries), default=0)

    def lookup(self, tokens: Sequence[str]) -> Optional[tuple]:
        return self.entries.get(tuple(token.casefold() for token in tokens))


@dataclass(frozen=True)
class EditRecord:
    position: int
    original: str
    replacement: str
    source: str = NONE
    span: int = 1  # output positions consumed, starting at `position`
    alternatives: tuple = ()


@dataclass(frozen=True)
class PostEditReport:
    records: tuple = ()

    def count(self, source: str) -> int:
        return sum(1 for record in self.records if record.source == source)


def load_dictionary(path: str) -> MedicalDictionary:
    """TSV lines: term, translations separated by ';', optional provenance note."""
    entries, notes = {}, {}
    with open(path, "r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            columns = line.split("\t")
            if len(columns) not in (2, 3):
                raise ParseError(f"expected 2 or 3 tab-separated columns, found {len(columns)}", line=number, path=path)
            key = tuple(columns[0].casefold().split())
            translations = tuple(text.strip() for text in columns[1].split(";"))
            if not key:
                raise ParseError("empty dictionary term", line=number, path=path)
            if not translations or any(not text for text in translations):
                raise ParseError(f"empty translation for {columns[0]!r}", line=number, path=path)
            if key in entries:
                raise ParseError(f"duplicate dictionary term {columns[0]!r}", line=number, path=path)
            entries[key] = translations
            if len(columns) == 3 and columns[2].strip():
                notes[key] = columns[2].strip()
    logger.info(f"Loaded {len(entries)} dictionary entries from {path}")
    return MedicalDictionary(entries, notes)


def load_stub_map(path: str) -> dict:
    """TSV lines: term, translation. Backs the offline translator."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            columns = line.split("\t")
            if len(columns) != 2 or not columns[0] or not columns[1].strip():
                raise ParseError("expected term<TAB>translation", line=number, path=path)
            mapping[columns[0]] = columns[1].strip()
    return mapping


def _unmark(token: str) -> str:
    if len(token) > 2 and token.startswith(OOV_OPEN) and token.endswith(OOV_CLOSE):
        return token[1:-1]
    return token


def detect_oov(output: TranslationOutput) -> list:
    """Decoder pass-through positions plus any token wrapped in the OOV marker."""
    positions = set(output.oov_spans)
    positions.update(k for k, token in enumerate(output.tokens) if _unmark(token) != token)
    return sorted(positions)


def _dictionary_pass(tokens: list, positions: Sequence[int], dictionary: MedicalDictionary) -> tuple:
    """
    Longest match first over windows made only of OOV positions not yet consumed.
    Returns the slot list (None where a window consumed a position) and the records.
    """
    slots = list(tokens)
    open_positions = set(positions)
    records = {}
    k = dictionary.max_key_len
    for p in sorted(positions):
        if p not in open_positions:
            continue
        hit = None
        for length in range(min(k, len(open_positions)), 0, -1):
            for start in range(p - length + 1, p + 1):
                window = range(start, start + length)
                if all(q in open_positions for q in window):
                    translations = dictionary.lookup([tokens[q] for q in window])
                    if translations:
                        hit = (start, length, translations)
                        break
            if hit:
                break
        if hit is None:
            continue
        start, length, translations = hit
        original = " ".join(tokens[start:start + length])
        slots[start] = translations[0]
        for q in range(start, start + length):
            open_positions.discard(q)
            if q != start:
                slots[q] = None
        records[start] = EditRecord(start, original, translations[0], DICTIONARY, length, translations)
    for p in sorted(open_positions):
        records[p] = EditRecord(p, tokens[p], tokens[p], NONE)
    return slots, records


def _translate_terms(terms: Sequence[str], client: TranslatorClient, max_in_flight: int = 4) -> dict:
    """One request per distinct term; failures are logged and map to None."""

    def call(term):
        try:
            return client.translate(term)
        except requests.RequestException as exc:
            logger.warning(f"External translation of {term!r} failed: {exc.__class__.__name__}: {exc}")
            return None

    terms = sorted(set(terms))
    if not terms:
        return {}
    if client.mode != LIVE or max_in_flight <= 1:
        return {term: call(term) for term in terms}
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return dict(zip(terms, pool.map(call, terms)))


def _external_pass(slots: list, records: dict, translations: dict) -> None:
    for position in sorted(records):
        record = records[position]
        if record.source != NONE:
            continue
        text = translations.get(record.original)
        if text:
            slots[position] = text
            records[position] = EditRecord(position, record.original, text, EXTERNAL)


def _materialize(output: TranslationOutput, slots: list, records: dict) -> tuple:
    tokens, oov_spans = [], []
    for position, slot in enumerate(slots):
        if slot is None:
            continue
        if position in records and records[position].source == NONE:
            oov_spans.append(len(tokens))
        tokens.extend(slot.split() if position in records else [slot])
    report = PostEditReport(tuple(records[position] for position in sorted(records)))
    return with_tokens(output, tokens, oov_spans), report


def _start(output: TranslationOutput) -> tuple:
    return [_unmark(token) for token in output.tokens], detect_oov(output)


def apply_dictionary(output: TranslationOutput, dictionary: MedicalDictionary) -> tuple:
    """
    Replace OOV tokens covered by the dictionary with their first-priority translation.

    Returns:
        tuple[TranslationOutput, PostEditReport]: The edited output, whose oov_spans
        now list only the positions left unresolved, and one record per OOV window.
    """
    tokens, positions = _start(output)
    slots, records = _dictionary_pass(tokens, positions, dictionary)
    return _materialize(output, slots, records)


def resolve_with_external(
    output: TranslationOutput,
    positions: Optional[Sequence[int]],
    client: TranslatorClient,
    max_in_flight: int = 4,
) -> tuple:
    """Send each remaining OOV token to the external translator; unresolved tokens stay."""
    tokens, detected = _start(output)
    positions = detected if positions is None else sorted(positions)
    for position in positions:
        if not 0 <= position < len(tokens):
            raise ValidationError(f"OOV position {position} outside output of length {len(tokens)}")
    records = {p: EditRecord(p, tokens[p], tokens[p], NONE) for p in positions}
    translations = _translate_terms([tokens[p] for p in positions], client, max_in_flight)
    slots = list(tokens)
    _external_pass(slots, records, translations)
    return _materialize(output, slots, records)


def post_edit_pipeline(
    outputs: Sequence[TranslationOutput],
    dictionary: MedicalDictionary,
    client: Optional[TranslatorClient] = None,
    max_in_flight: int = 4,
) -> tuple:
    """
    Dictionary pass over every sentence, then one external pass over the terms the
    dictionary left unresolved. Report positions refer to the decoder output.

    Returns:
        tuple[list[TranslationOutput], list[PostEditReport]]
    """
    passes = []
    for output in outputs:
        tokens, positions = _start(output)
        slots, records = _dictionary_pass(tokens, positions, dictionary)
        passes.append((output, slots, records))

    remaining = [record.original for _, _, records in passes for record in records.values() if record.source == NONE]
    translations = _translate_terms(remaining, client, max_in_flight) if client is not None and remaining else {}

    edited, reports = [], []
    for output, slots, records in passes:
        _external_pass(slots, records, translations)
        result, report = _materialize(output, slots, records)
        edited.append(result)
        reports.append(report)
    logger.info(
        f"Post-edited {len(outputs)} sentences: "
        f"{sum(r.count(DICTIONARY) for r in reports)} dictionary, "
        f"{sum(r.count(EXTERNAL) for r in reports)} external, "
        f"{sum(r.count(NONE) for r in reports)} unresolved"
    )
    return edited, reports


def write_postedit_report(reports: Sequence[PostEditReport], path: str) -> None:
    rows = [
        (sentence, record.position, record.original, record.replacement, record.source)
        for sentence, report in enumerate(reports)
        for record in report.records
    ]
    frame = pd.DataFrame(rows, columns=["sentence", "position", "original", "replacement", "source"])
    with atomic_write(path) as file:
        frame.to_csv(file, sep="\t", index=False)
