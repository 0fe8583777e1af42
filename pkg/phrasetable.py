import logging
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from utils import ParseError, ValidationError, atomic_write
from wordalign import AlignmentMatrix, TranslationTable

logger = logging.getLogger(__name__)

SEPARATOR = " ||| "


@dataclass(frozen=True)
class PhrasePair:
    src: tuple
    tgt: tuple

    def __post_init__(self):
        if not self.src or not self.tgt:
            raise ValidationError("phrase pairs need tokens on both sides")


@dataclass(frozen=True)
class ExtractedPhrase:
    pair: PhrasePair
    src_span: tuple  # [start, end) over source positions
    tgt_span: tuple
    links: frozenset  # phrase-internal links, relative to the span starts


@dataclass(frozen=True)
class PhraseEntry:
    pair: PhrasePair
    phi_tgt_given_src: float
    phi_src_given_tgt: float
    lex_tgt_given_src: float
    lex_src_given_tgt: float

    @property
    def features(self) -> tuple:
        return (self.phi_tgt_given_src, self.lex_tgt_given_src, self.phi_src_given_tgt, self.lex_src_given_tgt)


class PhraseTable:
    """Phrase entries indexed by source phrase, each list sorted by target phrase."""

    def __init__(self, entries: Sequence[PhraseEntry] = (), max_len: int = 7):
        self.max_len = max_len
        self._by_src = {}
        for entry in entries:
            self._by_src.setdefault(entry.pair.src, []).append(entry)
        for src in self._by_src:
            self._by_src[src].sort(key=lambda entry: " ".join(entry.pair.tgt))
        self.src_words = {token for src in self._by_src for token in src}

    def get(self, src: Sequence[str]) -> list:
        return self._by_src.get(tuple(src), [])

    def lookup(self, src: Sequence[str], tgt: Sequence[str]) -> Optional[PhraseEntry]:
        for entry in self.get(src):
            if entry.pair.tgt == tuple(tgt):
                return entry
        return None

    def __contains__(self, src) -> bool:
        return tuple(src) in self._by_src

    def __iter__(self):
        for src in sorted(self._by_src, key=" ".join):
            yield from self._by_src[src]

    def __len__(self) -> int:
        return sum(len(entries) for entries in self._by_src.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, PhraseTable) and list(self) == list(other)


def extract_phrases(src: Sequence[str], tgt: Sequence[str], alignment: AlignmentMatrix, max_len: int = 7) -> list:
    """
    All phrase pairs consistent with the word alignment: at least one link inside,
    no link leaving the box, target spans grown over unaligned boundary words.
    Ordered by (src start, src end, tgt start, tgt end).
    """
    if alignment.src_len != len(src) or alignment.tgt_len != len(tgt):
        raise ValidationError("alignment dimensions do not match the sentence pair")
    links = alignment.links
    tgt_aligned = {j for _, j in links}
    found = []
    for s_start in range(len(src)):
        for s_end in range(s_start, min(len(src), s_start + max_len)):
            inside = [j for i, j in links if s_start <= i <= s_end]
            if not inside:
                continue
            t_start, t_end = min(inside), max(inside)
            if any(t_start <= j <= t_end and not s_start <= i <= s_end for i, j in links):
                continue
            fs = t_start
            while True:
                fe = t_end
                while True:
                    if fe - fs + 1 <= max_len:
                        found.append((s_start, s_end, fs, fe))
                    fe += 1
                    if fe >= len(tgt) or fe in tgt_aligned or fe - fs + 1 > max_len:
                        break
                fs -= 1
                if fs < 0 or fs in tgt_aligned or t_end - fs + 1 > max_len:
                    break
    found.sort()
    phrases = []
    for s_start, s_end, t_start, t_end in found:
        inner = frozenset(
            (i - s_start, j - t_start) for i, j in links if s_start <= i <= s_end and t_start <= j <= t_end
        )
        phrases.append(
            ExtractedPhrase(
                PhrasePair(tuple(src[s_start:s_end + 1]), tuple(tgt[t_start:t_end + 1])),
                (s_start, s_end + 1),
                (t_start, t_end + 1),
                inner,
            )
        )
    return phrases


def _lexical_weight(src, tgt, links, table: TranslationTable, tgt_given_src: bool) -> float:
    """
    Product over generated words of the average word translation probability over their
    links; unlinked generated words use NULL. `table` must be oriented accordingly.
    """
    generated, given = (tgt, src) if tgt_given_src else (src, tgt)
    weight = 1.0
    for g, word in enumerate(generated):
        partners = [i for i, j in links if j == g] if tgt_given_src else [j for i, j in links if i == g]
        if partners:
            weight *= sum(table.prob(given[p], word) for p in partners) / len(partners)
        else:
            weight *= table.prob(None, word)
    return weight


def build_table(
    pairs: Sequence[tuple],
    alignments: Sequence[AlignmentMatrix],
    lex_tgt_given_src: TranslationTable,
    lex_src_given_tgt: TranslationTable,
    max_len: int = 7,
) -> PhraseTable:
    """
    Count consistent phrase pairs over the corpus and score them.

    phi(t|s) = count(s,t) / count(s) and phi(s|t) symmetric. Each lexical weight is
    the maximum over the internal alignments the pair was seen with.

    Args:
        pairs (Sequence[tuple]): (source tokens, target tokens) per sentence.
        alignments (Sequence[AlignmentMatrix]): Symmetrized alignment per sentence.
        lex_tgt_given_src (TranslationTable): Word table trained source->target.
        lex_src_given_tgt (TranslationTable): Word table trained target->source.
    """
    if len(pairs) != len(alignments):
        raise ValidationError(f"{len(pairs)} sentence pairs but {len(alignments)} alignments")
    pair_counts = Counter()
    internal = {}
    for (src, tgt), alignment in zip(pairs, alignments):
        for phrase in extract_phrases(src, tgt, alignment, max_len):
            pair_counts[phrase.pair] += 1
            internal.setdefault(phrase.pair, set()).add(phrase.links)

    src_counts, tgt_counts = Counter(), Counter()
    for pair, count in pair_counts.items():
        src_counts[pair.src] += count
        tgt_counts[pair.tgt] += count

    floor = min(lex_tgt_given_src.floor, lex_src_given_tgt.floor)
    entries = []
    for pair, count in pair_counts.items():
        lex_fwd = max(_lexical_weight(pair.src, pair.tgt, links, lex_tgt_given_src, True) for links in internal[pair])
        lex_bwd = max(_lexical_weight(pair.src, pair.tgt, links, lex_src_given_tgt, False) for links in internal[pair])
        entries.append(
            PhraseEntry(
                pair,
                count / src_counts[pair.src],
                count / tgt_counts[pair.tgt],
                min(max(lex_fwd, floor), 1.0),
                min(max(lex_bwd, floor), 1.0),
            )
        )
    table = PhraseTable(entries, max_len)
    logger.info(f"Built phrase table with {len(table)} entries over {len(src_counts)} source phrases")
    return table


def save_table(table: PhraseTable, path: str) -> None:
    with atomic_write(path) as file:
        for entry in table:
            features = " ".join(f"{value:.6g}" for value in entry.features)
            file.write(f"{' '.join(entry.pair.src)}{SEPARATOR}{' '.join(entry.pair.tgt)}{SEPARATOR}{features}\n")


def load_table(path: str, max_len: int = 7) -> PhraseTable:
    entries = []
    with open(path, "r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(SEPARATOR.strip())
            if len(fields) != 3:
                raise ParseError(f"expected 3 '|||' fields, found {len(fields)}", line=number, path=path)
            src, tgt = tuple(fields[0].split()), tuple(fields[1].split())
            values = fields[2].split()
            if len(values) != 4:
                raise ParseError(f"expected 4 features, found {len(values)}", line=number, path=path)
            try:
                phi_ts, lex_ts, phi_st, lex_st = (float(v) for v in values)
            except ValueError as exc:
                raise ParseError(f"bad feature value in {values}", line=number, path=path) from exc
            if not src or not tgt:
                raise ParseError("empty phrase", line=number, path=path)
            entries.append(PhraseEntry(PhrasePair(src, tgt), phi_ts, phi_st, lex_ts, lex_st))
    return PhraseTable(entries, max_len)
