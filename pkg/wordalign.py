"""
IBM Model 1 word alignment trained with EM, Viterbi link extraction and
symmetrization of the two directional alignments.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from nltk.translate.gdfa import grow_diag_final_and

from utils import ParseError, ValidationError, atomic_write

logger = logging.getLogger(__name__)

NULL = "<NULL>"
SRC2TGT = "src2tgt"
TGT2SRC = "tgt2src"


class VocabIndex:
    """Dense token ids. Id 0 is the NULL word and never maps to a real token."""

    def __init__(self, tokens: Sequence[str] = ()):
        self._ids = {}
        self._tokens = [NULL]
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self._ids:
            self._ids[token] = len(self._tokens)
            self._tokens.append(token)
        return self._ids[token]

    def id(self, token: str) -> Optional[int]:
        return self._ids.get(token)

    def token(self, token_id: int) -> str:
        return self._tokens[token_id]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens) - 1


@dataclass
class EMConfig:
    iterations: int = 5
    min_prob_floor: float = 1e-12
    convergence_epsilon: float = 1e-4
    jobs: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("EM needs at least one iteration")


@dataclass
class TranslationTable:
    """t(f|e) keyed by (e id, f id); e is the conditioning side of `direction`."""

    t: dict
    direction: str
    e_vocab: VocabIndex
    f_vocab: VocabIndex
    floor: float = 1e-12

    def prob(self, e_token: Optional[str], f_token: str) -> float:
        e_id = 0 if e_token is None or e_token == NULL else self.e_vocab.id(e_token)
        f_id = self.f_vocab.id(f_token)
        if e_id is None or f_id is None:
            return self.floor
        return self.t.get((e_id, f_id), self.floor)

    def row_sums(self) -> dict:
        sums = {}
        for (e_id, _), p in self.t.items():
            sums[e_id] = sums.get(e_id, 0.0) + p
        return sums

    def rows(self) -> dict:
        table = {}
        for (e_id, f_id), p in self.t.items():
            table.setdefault(self.e_vocab.token(e_id), {})[self.f_vocab.token(f_id)] = p
        return table


@dataclass(frozen=True)
class AlignmentMatrix:
    links: frozenset
    src_len: int
    tgt_len: int

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))
        for i, j in self.links:
            if not (0 <= i < self.src_len and 0 <= j < self.tgt_len):
                raise ValidationError(f"link {i}-{j} outside a {self.src_len}x{self.tgt_len} pair")

    def transpose(self) -> "AlignmentMatrix":
        return AlignmentMatrix(frozenset((j, i) for i, j in self.links), self.tgt_len, self.src_len)

    def to_text(self) -> str:
        return " ".join(f"{i}-{j}" for i, j in sorted(self.links))

    @classmethod
    def from_text(cls, text: str, src_len: int, tgt_len: int) -> "AlignmentMatrix":
        links = set()
        for item in text.split():
            i, sep, j = item.partition("-")
            if not sep:
                raise ValidationError(f"bad alignment link {item!r}")
            links.add((int(i), int(j)))
        return cls(frozenset(links), src_len, tgt_len)


def _encode(pairs, direction):
    e_vocab, f_vocab = VocabIndex(), VocabIndex()
    encoded = []
    for src, tgt in pairs:
        e_side, f_side = (src, tgt) if direction == SRC2TGT else (tgt, src)
        es = (0,) + tuple(e_vocab.add(tok) for tok in e_side)
        fs = tuple(f_vocab.add(tok) for tok in f_side)
        encoded.append((es, fs))
    return encoded, e_vocab, f_vocab


def _e_step(chunk, t):
    counts, totals = {}, {}
    log_likelihood = 0.0
    for es, fs in chunk:
        if not fs:
            continue
        for f in fs:
            denom = 0.0
            for e in es:
                denom += t[(e, f)]
            log_likelihood += math.log(denom)
            for e in es:
                c = t[(e, f)] / denom
                counts[(e, f)] = counts.get((e, f), 0.0) + c
                totals[e] = totals.get(e, 0.0) + c
        log_likelihood -= len(fs) * math.log(len(es))
    return counts, totals, log_likelihood


def _chunks(items, n):
    size = max(1, math.ceil(len(items) / n))
    return [items[k:k + size] for k in range(0, len(items), size)]


def _expectation(encoded, t, jobs, executor):
    if executor is None:
        return _e_step(encoded, t)
    counts, totals, log_likelihood = {}, {}, 0.0
    # merged in chunk order so the float sums do not depend on scheduling
    for part_counts, part_totals, part_ll in executor.map(_e_step, _chunks(encoded, jobs), [t] * jobs):
        for key, value in part_counts.items():
            counts[key] = counts.get(key, 0.0) + value
        for key, value in part_totals.items():
            totals[key] = totals.get(key, 0.0) + value
        log_likelihood += part_ll
    return counts, totals, log_likelihood


def _maximization(counts, totals, floor):
    t = {}
    for (e, f), c in counts.items():
        t[(e, f)] = max(c / totals[e], floor)
    sums = {}
    for (e, _), p in t.items():
        sums[e] = sums.get(e, 0.0) + p
    return {(e, f): p / sums[e] for (e, f), p in t.items()}


def train_ibm1(pairs: Sequence[tuple], config: EMConfig = EMConfig(), direction: str = SRC2TGT) -> tuple:
    """
    Train t(f|e) with EM over tokenized (source, target) pairs.

    Args:
        pairs (Sequence[tuple]): (source tokens, target tokens) per sentence pair.
        config (EMConfig): Iterations, probability floor, early-stop threshold, jobs.
        direction (str): "src2tgt" learns t(target|source), "tgt2src" the reverse.

    Returns:
        tuple[TranslationTable, list[float]]: The table and the corpus log-likelihood
        before each iteration and after the last one.
    """
    if direction not in (SRC2TGT, TGT2SRC):
        raise ValidationError(f"unknown alignment direction {direction}")
    if not pairs:
        raise ValidationError("cannot train word alignment on an empty corpus")
    encoded, e_vocab, f_vocab = _encode(pairs, direction)
    if not any(fs for _, fs in encoded):
        raise ValidationError("corpus has no tokens on the generated side")

    uniform = 1.0 / max(len(f_vocab), 1)
    t = {}
    for es, fs in encoded:
        for e in es:
            for f in fs:
                t[(e, f)] = uniform

    trace = []
    executor = ProcessPoolExecutor(max_workers=config.jobs) if config.jobs > 1 else None
    try:
        for iteration in range(config.iterations):
            counts, totals, log_likelihood = _expectation(encoded, t, config.jobs, executor)
            trace.append(log_likelihood)
            logger.info(f"IBM1 {direction} iteration {iteration + 1}: log-likelihood {log_likelihood:.4f}")
            t = _maximization(counts, totals, config.min_prob_floor)
            if len(trace) > 1 and trace[-2] != 0:
                change = abs(trace[-1] - trace[-2]) / abs(trace[-2])
                if change < config.convergence_epsilon:
                    logger.info(f"IBM1 {direction} converged after {iteration + 1} iterations")
                    break
        trace.append(_expectation(encoded, t, config.jobs, executor)[2])
    finally:
        if executor is not None:
            executor.shutdown()
    table = TranslationTable(t, direction, e_vocab, f_vocab, config.min_prob_floor)
    return table, trace


def alignment_posteriors(e_tokens: Sequence[str], f_tokens: Sequence[str], table: TranslationTable) -> list:
    """Per target position: posterior probabilities of [NULL, e_0, ..., e_{l-1}] generating it."""
    posteriors = []
    for f in f_tokens:
        scores = [table.prob(None, f)] + [table.prob(e, f) for e in e_tokens]
        total = sum(scores)
        posteriors.append([s / total for s in scores])
    return posteriors


def viterbi_align(e_tokens: Sequence[str], f_tokens: Sequence[str], table: TranslationTable) -> AlignmentMatrix:
    """
    Link every f position to its most probable e position. f stays unlinked only
    when NULL is strictly more probable than every real word; ties go to the smallest i.
    """
    links = set()
    for j, f in enumerate(f_tokens):
        best_i, best_p = None, -1.0
        for i, e in enumerate(e_tokens):
            p = table.prob(e, f)
            if p > best_p:
                best_i, best_p = i, p
        if best_i is not None and best_p >= table.prob(None, f):
            links.add((best_i, j))
    return AlignmentMatrix(frozenset(links), len(e_tokens), len(f_tokens))


def symmetrize(forward: AlignmentMatrix, backward: AlignmentMatrix, heuristic: str = "grow-diag-final-and") -> AlignmentMatrix:
    """
    Combine a source->target alignment with a target->source one.

    `backward` is given in its own orientation (target positions first) and is
    transposed before combining.
    """
    if backward.src_len != forward.tgt_len or backward.tgt_len != forward.src_len:
        raise ValidationError(
            f"forward is {forward.src_len}x{forward.tgt_len} but backward is {backward.src_len}x{backward.tgt_len}"
        )
    fwd = set(forward.links)
    transposed = backward.transpose()
    bwd = set(transposed.links)
    if heuristic == "intersection":
        links = fwd & bwd
    elif heuristic == "union":
        links = fwd | bwd
    elif heuristic == "grow-diag-final-and":
        grown = grow_diag_final_and(forward.src_len, forward.tgt_len, forward.to_text(), transposed.to_text())
        links = {(int(i), int(j)) for i, j in grown}
    else:
        raise ValidationError(f"unknown symmetrization heuristic {heuristic}")
    return AlignmentMatrix(frozenset(links), forward.src_len, forward.tgt_len)


def align_corpus(pairs: Sequence[tuple], forward: TranslationTable, backward: TranslationTable, heuristic: str = "grow-diag-final-and") -> list:
    alignments = []
    for src, tgt in pairs:
        fwd = viterbi_align(src, tgt, forward)
        bwd = viterbi_align(tgt, src, backward)
        alignments.append(symmetrize(fwd, bwd, heuristic))
    return alignments


def write_alignments(alignments: Sequence[AlignmentMatrix], path: str) -> None:
    with atomic_write(path) as file:
        for alignment in alignments:
            file.write(alignment.to_text() + "\n")


def read_alignments(path: str, pairs: Sequence[tuple]) -> list:
    with open(path, "r", encoding="utf-8") as file:
        lines = file.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != len(pairs):
        raise ParseError(f"{len(lines)} alignment lines for {len(pairs)} sentence pairs", path=path)
    alignments = []
    for number, (line, (src, tgt)) in enumerate(zip(lines, pairs), start=1):
        try:
            alignments.append(AlignmentMatrix.from_text(line, len(src), len(tgt)))
        except (ValueError, ValidationError) as exc:
            raise ParseError(str(exc), line=number, path=path) from exc
    return alignments


def save_ttable(table: TranslationTable, path: str) -> None:
    rows = []
    for (e_id, f_id), p in table.t.items():
        rows.append((table.e_vocab.token(e_id), table.f_vocab.token(f_id), p))
    rows.sort(key=lambda row: (row[0], -row[2], row[1]))
    with atomic_write(path) as file:
        for e, f, p in rows:
            file.write(f"{e}\t{f}\t{p!r}\n")


def load_ttable(path: str, direction: str = SRC2TGT, floor: float = 1e-12) -> TranslationTable:
    e_vocab, f_vocab = VocabIndex(), VocabIndex()
    t = {}
    with open(path, "r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            columns = line.split("\t")
            if len(columns) != 3:
                raise ParseError(f"expected 3 columns, found {len(columns)}", line=number, path=path)
            e, f, p = columns
            e_id = 0 if e == NULL else e_vocab.add(e)
            try:
                t[(e_id, f_vocab.add(f))] = float(p)
            except ValueError as exc:
                raise ParseError(f"bad probability {p!r}", line=number, path=path) from exc
    return TranslationTable(t, direction, e_vocab, f_vocab, floor)
