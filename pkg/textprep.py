import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from corpus import ParallelCorpus, make_brochure
from utils import ParseError, ValidationError, atomic_write

logger = logging.getLogger(__name__)

# Arabic-script punctuation that must split off even where unicode categories disagree
ARABIC_PUNCTUATION = {"،", "؟", "؛", "٪", "٫", "٬", "۔"}

# Arabic letter variants that leak into Sorani text from OCR or Arabic keyboards
ARABIC_TO_KURDISH = {
    "ي": "ی",
    "ى": "ی",
    "ك": "ک",
}

CLOSING = set(".,;:!?)]}%،؟؛")
OPENING = set("([{")


@dataclass(frozen=True)
class TokenizedSentence:
    tokens: tuple = ()
    was_truecased: bool = False

    def __post_init__(self):
        for token in self.tokens:
            if not token or any(ch.isspace() for ch in token):
                raise ValidationError(f"invalid token {token!r}")

    def __str__(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class TruecaseModel:
    best_form: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CleaningRules:
    min_tokens: int = 1
    max_tokens: int = 80
    max_length_ratio: float = 9.0

    def __post_init__(self):
        if self.min_tokens < 1:
            raise ValidationError("min_tokens must be >= 1")
        if self.min_tokens > self.max_tokens:
            raise ValidationError("min_tokens must not exceed max_tokens")


def _is_punct(ch: str) -> bool:
    return ch in ARABIC_PUNCTUATION or unicodedata.category(ch).startswith("P")


def normalize_script(text: str, table: Optional[dict] = None) -> str:
    for old, new in (ARABIC_TO_KURDISH if table is None else table).items():
        text = text.replace(old, new)
    return text


def tokenize(line: str) -> TokenizedSentence:
    """
    Whitespace tokenization that peels leading and trailing punctuation into their
    own tokens, one character each. Inner hyphens, apostrophes, decimal points and
    zero-width joiners stay inside the word.

    Example: "Take 2 tablets." -> [Take, 2, tablets, .]
    """
    tokens = []
    for chunk in line.split():
        head = []
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            head.append(chunk[start])
            start += 1
        tail = []
        while end > start and _is_punct(chunk[end - 1]):
            tail.append(chunk[end - 1])
            end -= 1
        tokens.extend(head)
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(reversed(tail))
    return TokenizedSentence(tuple(tokens))


def detokenize(tokens: Sequence[str]) -> str:
    text = ""
    for token in tokens:
        if not text:
            text = token
        elif token in CLOSING or text[-1] in OPENING:
            text += token
        else:
            text += " " + token
    return text


def _fold(token: str) -> str:
    return token.casefold()


def train_truecaser(sentences: Iterable[Sequence[str]]) -> TruecaseModel:
    """
    Count surface forms; the sentence-initial token counts half since its casing
    says little about the word.

    Raises:
        ValidationError: when there are no sentences.
    """
    counts = Counter()
    n_sentences = 0
    for tokens in sentences:
        n_sentences += 1
        for position, token in enumerate(tokens):
            counts[token] += 0.5 if position == 0 else 1.0
    if n_sentences == 0:
        raise ValidationError("cannot train a truecaser on an empty corpus")

    best_form = {}
    for form in sorted(counts):
        key = _fold(form)
        current = best_form.get(key)
        # sorted iteration makes the first maximal form the code-point smallest one
        if current is None or counts[form] > counts[current]:
            best_form[key] = form
    logger.info(f"Trained truecaser on {n_sentences} sentences, {len(best_form)} word types")
    return TruecaseModel(best_form=best_form, counts=dict(counts))


def truecase(sentence: Sequence[str], model: TruecaseModel) -> TokenizedSentence:
    tokens = list(sentence)
    if tokens:
        tokens[0] = model.best_form.get(_fold(tokens[0]), tokens[0])
    return TokenizedSentence(tuple(tokens), was_truecased=True)


def recase(sentence: Sequence[str], model: TruecaseModel) -> TokenizedSentence:
    """Restore sentence-initial capitalization for output whose first word is normally lowercase."""
    tokens = list(sentence)
    if tokens:
        first = tokens[0]
        best = model.best_form.get(_fold(first), first)
        if best == first and first[:1].islower():
            tokens[0] = first[:1].upper() + first[1:]
    return TokenizedSentence(tuple(tokens), was_truecased=False)


def save_truecaser(model: TruecaseModel, path: str) -> None:
    with atomic_write(path) as file:
        for key in sorted(model.best_form):
            form = model.best_form[key]
            file.write(f"{key}\t{form}\t{model.counts.get(form, 0):g}\n")


def load_truecaser(path: str) -> TruecaseModel:
    best_form, counts = {}, {}
    with open(path, "r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            columns = line.split("\t")
            if len(columns) != 3:
                raise ParseError(f"expected 3 columns, found {len(columns)}", line=number, path=path)
            key, form, count = columns
            try:
                counts[form] = float(count)
            except ValueError as exc:
                raise ParseError(f"bad count {count!r}", line=number, path=path) from exc
            best_form[key] = form
    return TruecaseModel(best_form=best_form, counts=counts)


def tokenize_corpus(corpus: ParallelCorpus, normalize_target: bool = True) -> ParallelCorpus:
    """Tokenize both sides, storing tokens space-joined; optionally normalize target script."""
    brochures = []
    for brochure in corpus.brochures:
        texts = []
        for pair in brochure.pairs:
            target = normalize_script(pair.target) if normalize_target else pair.target
            texts.append((str(tokenize(pair.source)), str(tokenize(target))))
        brochures.append(make_brochure(brochure.id, brochure.category, texts))
    return ParallelCorpus(tuple(brochures), corpus.variant_tag, corpus.rng_seed)


def _violation(src_len: int, tgt_len: int, rules: CleaningRules) -> Optional[str]:
    if src_len == 0 or tgt_len == 0:
        return "empty"
    if src_len < rules.min_tokens or tgt_len < rules.min_tokens:
        return "too_short"
    if src_len > rules.max_tokens or tgt_len > rules.max_tokens:
        return "too_long"
    if max(src_len, tgt_len) / min(src_len, tgt_len) > rules.max_length_ratio:
        return "ratio"
    return None


def clean_pairs(corpus: ParallelCorpus, rules: CleaningRules = CleaningRules()) -> tuple:
    """
    Drop pairs with an empty side, a side outside the token limits, or a token-count
    ratio above the limit. Brochures left without pairs are dropped.

    Returns:
        tuple[ParallelCorpus, Counter]: The cleaned corpus and removals per reason.
    """
    report = Counter()
    brochures = []
    for brochure in corpus.brochures:
        kept = []
        for pair in brochure.pairs:
            reason = _violation(len(pair.source.split()), len(pair.target.split()), rules)
            if reason:
                report[reason] += 1
            else:
                kept.append(pair.text)
        if kept:
            brochures.append(make_brochure(brochure.id, brochure.category, kept))
    if report:
        logger.info(f"Removed {sum(report.values())} pair(s): {dict(report)}")
    return ParallelCorpus(tuple(brochures), corpus.variant_tag, corpus.rng_seed), report
