"""
Interpolated Kneser-Ney n-gram language model with ARPA import/export.

The model is stored in backoff form: log10 P(w|h) for every observed n-gram and a
log10 backoff weight for every context. For interpolated Kneser-Ney that form is
exact, so scoring unseen n-grams by backing off reproduces the interpolated estimate.
"""
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from utils import ParseError, ValidationError, atomic_write

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
# log10 probability written for <s>, which is only ever a context
NO_PROB = -99.0

NGRAM_HEADER = re.compile(r"^ngram (\d+)=(\d+)$")
SECTION_HEADER = re.compile(r"^\\(\d+)-grams:$")


@dataclass
class NGramCounts:
    order: int = 3
    counts: Counter = field(default_factory=Counter)
    n_sentences: int = 0

    def of_order(self, n: int) -> dict:
        return {gram: c for gram, c in self.counts.items() if len(gram) == n}


@dataclass
class NGramModel:
    order: int
    probs: dict  # n-gram tuple -> log10 P(last | rest)
    backoffs: dict  # context tuple -> log10 backoff weight
    discounts: tuple = ()

    def __post_init__(self):
        self.vocab = {gram[0] for gram in self.probs if len(gram) == 1}

    def score_word(self, context: Sequence[str], word: str) -> float:
        """log10 P(word | context), backing off through shorter contexts."""
        if word not in self.vocab:
            word = UNK
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        penalty = 0.0
        for start in range(len(context) + 1):
            history = context[start:]
            gram = history + (word,)
            if gram in self.probs:
                return penalty + self.probs[gram]
            if history:
                penalty += self.backoffs.get(history, 0.0)
        return penalty + self.probs.get((UNK,), NO_PROB)

    def start_state(self) -> tuple:
        return (BOS,)

    def advance(self, state: tuple, word: str) -> tuple:
        """Next LM state (the last order-1 tokens) and log10 probability of `word`."""
        logprob = self.score_word(state, word)
        if word not in self.vocab:
            word = UNK
        keep = self.order - 1
        new_state = (state + (word,))[-keep:] if keep > 0 else ()
        return new_state, logprob

    def end_score(self, state: tuple) -> float:
        return self.score_word(state, EOS)

    def prob(self, context: Sequence[str], word: str) -> float:
        return 10 ** self.score_word(context, word)


def count_ngrams(sentences: Iterable[Sequence[str]], order: int = 3) -> NGramCounts:
    """
    Count 1..order-grams over sentences padded with <s> and </s>. <s> is never
    counted as a unigram, so unigram mass equals tokens plus sentences.
    """
    if order < 1:
        raise ValidationError("n-gram order must be >= 1")
    counts = Counter()
    n_sentences = 0
    for tokens in sentences:
        n_sentences += 1
        padded = (BOS,) + tuple(tokens) + (EOS,)
        for end in range(1, len(padded)):
            for n in range(1, order + 1):
                start = end - n + 1
                if start < 0:
                    break
                counts[padded[start:end + 1]] += 1
    return NGramCounts(order, counts, n_sentences)


def estimate_discounts(counts: NGramCounts, default: float = 0.75) -> tuple:
    """D_n = n1 / (n1 + 2 n2) from count-of-counts, falling back to `default` outside (0,1)."""
    discounts = []
    adjusted = _adjusted_counts(counts)
    for n in range(1, counts.order + 1):
        of_counts = Counter(c for gram, c in adjusted.items() if len(gram) == n)
        n1, n2 = of_counts.get(1, 0), of_counts.get(2, 0)
        d = n1 / (n1 + 2 * n2) if n1 + 2 * n2 else default
        discounts.append(d if 0 < d < 1 else default)
    return tuple(discounts)


def _adjusted_counts(counts: NGramCounts) -> dict:
    """Raw counts for the top order and for n-grams starting at <s>; continuation counts otherwise."""
    continuation = Counter()
    for gram in counts.counts:
        if len(gram) >= 2:
            continuation[gram[1:]] += 1
    adjusted = {}
    for gram, c in counts.counts.items():
        if len(gram) == counts.order or gram[0] == BOS:
            adjusted[gram] = c
        else:
            adjusted[gram] = continuation.get(gram, 0) or c
    return adjusted


def estimate_kn(counts: NGramCounts, discount=0.75) -> NGramModel:
    """
    Interpolated Kneser-Ney:
        P(w|h) = max(a(h,w) - D, 0) / a(h) + D * N1+(h,.) / a(h) * P(w|h')
    with a() the adjusted counts; the unigram level interpolates with a uniform
    distribution over the vocabulary plus <unk>.

    Args:
        counts (NGramCounts): Output of count_ngrams.
        discount (float | Sequence[float]): One D for all orders or one per order.
    """
    if not counts.counts:
        raise ValidationError("cannot estimate a language model from empty counts")
    if isinstance(discount, (int, float)):
        discounts = (float(discount),) * counts.order
    else:
        discounts = tuple(float(d) for d in discount)
        if len(discounts) != counts.order:
            raise ValidationError(f"need {counts.order} discounts, got {len(discounts)}")
    for d in discounts:
        if not 0 < d < 1:
            raise ValidationError(f"discount must be in (0,1), got {d}")

    adjusted = _adjusted_counts(counts)
    context_totals, context_types = Counter(), Counter()
    for gram, a in adjusted.items():
        context_totals[gram[:-1]] += a
        context_types[gram[:-1]] += 1

    vocab = sorted({gram[0] for gram in adjusted if len(gram) == 1} | {UNK})
    uniform = 1.0 / len(vocab)
    interpolated = {}

    def lower(gram):
        if len(gram) == 1:
            return interpolated.get(gram, 0.0)
        suffix = gram[1:]
        if suffix in interpolated:
            return interpolated[suffix]
        return _backoff_prob(suffix)

    def gamma(history):
        d = discounts[len(history)]
        return d * context_types[history] / context_totals[history]

    def _backoff_prob(gram):
        history = gram[:-1]
        if history in context_totals:
            return gamma(history) * lower(gram)
        return lower(gram)

    # unigrams first, then increasing order, so lower orders exist when needed
    unigram_gamma = gamma(())
    for word in vocab:
        a = adjusted.get((word,), 0)
        interpolated[(word,)] = max(a - discounts[0], 0) / context_totals[()] + unigram_gamma * uniform
    for n in range(2, counts.order + 1):
        d = discounts[n - 1]
        for gram in sorted(g for g in adjusted if len(g) == n):
            history = gram[:-1]
            interpolated[gram] = (
                max(adjusted[gram] - d, 0) / context_totals[history] + gamma(history) * lower(gram)
            )

    probs = {gram: math.log10(p) for gram, p in interpolated.items()}
    probs[(BOS,)] = NO_PROB
    backoffs = {}
    for history in context_totals:
        if history and len(history) < counts.order:
            backoffs[history] = math.log10(gamma(history))
    model = NGramModel(counts.order, probs, backoffs, discounts)
    logger.info(
        f"Estimated order-{counts.order} KN model: "
        + ", ".join(f"{n}-grams={sum(1 for g in probs if len(g) == n)}" for n in range(1, counts.order + 1))
    )
    return model


def logprob(model: NGramModel, sentence: Sequence[str]) -> float:
    state = model.start_state()
    total = 0.0
    for word in sentence:
        state, score = model.advance(state, word)
        total += score
    return total + model.end_score(state)


def perplexity(model: NGramModel, sentences: Sequence[Sequence[str]]) -> float:
    total, n_tokens = 0.0, 0
    for sentence in sentences:
        total += logprob(model, sentence)
        n_tokens += len(sentence) + 1
    if n_tokens == 0:
        raise ValidationError("perplexity needs at least one sentence")
    return 10 ** (-total / n_tokens)


def save_arpa(model: NGramModel, path: str) -> None:
    by_order = {n: sorted(g for g in model.probs if len(g) == n) for n in range(1, model.order + 1)}
    with atomic_write(path) as file:
        file.write("\n\\data\\\n")
        for n in range(1, model.order + 1):
            file.write(f"ngram {n}={len(by_order[n])}\n")
        for n in range(1, model.order + 1):
            file.write(f"\n\\{n}-grams:\n")
            for gram in by_order[n]:
                line = f"{model.probs[gram]:.6f}\t{' '.join(gram)}"
                if n < model.order:
                    line += f"\t{model.backoffs.get(gram, 0.0):.6f}"
                file.write(line + "\n")
        file.write("\n\\end\\\n")


def load_arpa(path: str) -> NGramModel:
    with open(path, "r", encoding="utf-8") as file:
        lines = [line.rstrip("\n") for line in file]
    declared = {}
    probs, backoffs = {}, {}
    section = None
    seen = Counter()
    ended = False
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text == "\\data\\":
            section = "data"
            continue
        if text == "\\end\\":
            ended = True
            break
        header = SECTION_HEADER.match(text)
        if header:
            section = int(header.group(1))
            if section not in declared:
                raise ParseError(f"section {section}-grams not declared in \\data\\", line=number, path=path)
            continue
        if section == "data":
            match = NGRAM_HEADER.match(text)
            if not match:
                raise ParseError(f"bad \\data\\ line {text!r}", line=number, path=path)
            declared[int(match.group(1))] = int(match.group(2))
            continue
        if section is None:
            raise ParseError("n-gram entry before any section header", line=number, path=path)
        columns = line.split("\t")
        if len(columns) not in (2, 3):
            raise ParseError(f"expected 2 or 3 tab-separated columns, found {len(columns)}", line=number, path=path)
        gram = tuple(columns[1].split())
        if len(gram) != section:
            raise ParseError(f"{len(gram)}-gram in the {section}-grams section", line=number, path=path)
        try:
            probs[gram] = float(columns[0])
            if len(columns) == 3:
                backoffs[gram] = float(columns[2])
        except ValueError as exc:
            raise ParseError(f"bad number in {line!r}", line=number, path=path) from exc
        seen[section] += 1
    if not ended:
        raise ParseError("missing \\end\\ marker", line=len(lines), path=path)
    for n, expected in declared.items():
        if seen[n] != expected:
            raise ParseError(f"\\data\\ declares {expected} {n}-grams but {seen[n]} follow", line=None, path=path)
    order = max(declared) if declared else 0
    if order < 1:
        raise ParseError("no n-gram counts declared", path=path)
    return NGramModel(order, probs, backoffs)
