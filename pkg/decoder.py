"""
Phrase-based stack decoder.

Hypotheses are grouped in stacks by number of covered source words. Each stack is
recombined on (coverage, LM state, end of the last phrase) and histogram-pruned to
the beam size on score plus future score. All features live in natural-log space;
the LM's log10 scores are converted on the fly.
"""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

from lm import NGramModel
from phrasetable import PhraseTable
from utils import ParseError, ValidationError, atomic_write

logger = logging.getLogger(__name__)

LN10 = math.log(10)
# feature values are probabilities; anything at or below this is treated as this
MIN_FEATURE = 1e-300
OOV_OPEN, OOV_CLOSE = "⟦", "⟧"


@dataclass(frozen=True)
class FeatureWeights:
    w_phi_fwd: float = 0.2
    w_phi_bwd: float = 0.2
    w_lex_fwd: float = 0.2
    w_lex_bwd: float = 0.2
    w_lm: float = 0.5
    w_word_penalty: float = -1.0
    w_distortion: float = 0.3

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ValidationError(f"feature weight {name} must be finite, got {value}")

    @classmethod
    def from_config(cls, config) -> "FeatureWeights":
        return cls(**{name: getattr(config, name) for name in cls.__dataclass_fields__})

    def phrase_score(self, features: Sequence[float]) -> float:
        """Weighted log of the four phrase features, in table file order."""
        phi_fwd, lex_fwd, phi_bwd, lex_bwd = (math.log(max(value, MIN_FEATURE)) for value in features)
        return (
            self.w_phi_fwd * phi_fwd
            + self.w_lex_fwd * lex_fwd
            + self.w_phi_bwd * phi_bwd
            + self.w_lex_bwd * lex_bwd
        )


@dataclass(frozen=True)
class DecoderConfig:
    beam_size: int = 100
    distortion_limit: int = 6  # -1 = unlimited
    max_phrase_len: int = 7
    table_limit: int = 20  # 0 = keep every option

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValidationError("beam_size must be >= 1")
        if self.distortion_limit < -1:
            raise ValidationError("distortion_limit must be >= -1")
        if self.max_phrase_len < 1:
            raise ValidationError("max_phrase_len must be >= 1")
        if self.table_limit < 0:
            raise ValidationError("table_limit must be >= 0")

    @classmethod
    def from_config(cls, config) -> "DecoderConfig":
        return cls(config.beam_size, config.distortion_limit, config.max_phrase_len, config.table_limit)


@dataclass(frozen=True)
class Segment:
    src_span: tuple  # [start, end) in the source sentence
    tgt: tuple
    oov: bool = False


@dataclass(frozen=True)
class TranslationOutput:
    tokens: tuple = ()
    oov_spans: tuple = ()
    model_score: float = 0.0
    segmentation: tuple = ()

    def __post_init__(self):
        for position in self.oov_spans:
            if not 0 <= position < len(self.tokens):
                raise ValidationError(f"OOV position {position} outside output of length {len(self.tokens)}")


@dataclass(frozen=True)
class _Option:
    tgt: tuple
    features: tuple
    oov: bool
    score: float  # weighted phrase features plus word penalty


@dataclass
class Hypothesis:
    coverage: int  # bit i set when source word i is translated
    lm_state: tuple
    score: float
    future_cost: float
    last_end: int
    created: int
    back: Optional["Hypothesis"] = None
    segment: Optional[Segment] = None

    @property
    def key(self) -> tuple:
        return self.coverage, self.lm_state, self.last_end

    def segments(self) -> list:
        chain = []
        hyp = self
        while hyp.back is not None:
            chain.append(hyp.segment)
            hyp = hyp.back
        return chain[::-1]


def _lm_increment(model: NGramModel, state: tuple, tgt: Sequence[str], weights: FeatureWeights) -> tuple:
    total = 0.0
    for word in tgt:
        state, logprob = model.advance(state, word)
        total += logprob
    return state, weights.w_lm * LN10 * total


def _distortion(start: int, last_end: int, weights: FeatureWeights) -> float:
    return weights.w_distortion * -abs(start - last_end)


def _word_penalty(tgt: Sequence[str], weights: FeatureWeights) -> float:
    return weights.w_word_penalty * -len(tgt)


def collect_options(sentence: Sequence[str], table: PhraseTable, weights: FeatureWeights, config: DecoderConfig) -> dict:
    """
    Translation options per source span [i, j). Words that no source phrase contains,
    and words without a single-word entry, get a verbatim pass-through option.
    """
    options = {}
    n = len(sentence)
    max_len = min(config.max_phrase_len, table.max_len) if table.max_len else config.max_phrase_len
    for i in range(n):
        for j in range(i + 1, min(n, i + max_len) + 1):
            found = [
                _Option(entry.pair.tgt, entry.features, False, weights.phrase_score(entry.features) + _word_penalty(entry.pair.tgt, weights))
                for entry in table.get(sentence[i:j])
            ]
            if not found:
                continue
            found.sort(key=lambda option: (-option.score, option.tgt))
            if config.table_limit:
                found = found[: config.table_limit]
            options[(i, j)] = found
        if (i, i + 1) not in options:
            word = (sentence[i],)
            options[(i, i + 1)] = [_Option(word, (), True, _word_penalty(word, weights))]
    return options


def _future_table(n: int, options: dict, model: NGramModel, weights: FeatureWeights) -> dict:
    """Best estimated score per span, combining option scores with a context-free LM estimate."""
    best = {}
    for (i, j), span_options in options.items():
        estimates = []
        for option in span_options:
            lm = sum(model.score_word(option.tgt[:k], word) for k, word in enumerate(option.tgt))
            estimates.append(option.score + weights.w_lm * LN10 * lm)
        best[(i, j)] = max(estimates)
    for length in range(2, n + 1):
        for i in range(n - length + 1):
            j = i + length
            candidates = [best[(i, j)]] if (i, j) in best else []
            candidates.extend(best[(i, k)] + best[(k, j)] for k in range(i + 1, j))
            best[(i, j)] = max(candidates)
    return best


def _future_score(coverage: int, n: int, table: dict, cache: dict) -> float:
    if coverage in cache:
        return cache[coverage]
    total, start = 0.0, None
    for position in range(n + 1):
        covered = position == n or coverage >> position & 1
        if not covered and start is None:
            start = position
        elif covered and start is not None:
            total += table[(start, position)]
            start = None
    cache[coverage] = total
    return total


def _reachable(coverage: int, end: int, n: int, limit: int) -> bool:
    """Whether the first gap is still within the distortion limit of `end`."""
    if limit < 0:
        return True
    for position in range(n):
        if not coverage >> position & 1:
            return abs(position - end) <= limit
    return True


def _search(sentence, options, model, weights, config, distortion_limit) -> Optional[Hypothesis]:
    n = len(sentence)
    future_spans = _future_table(n, options, model, weights)
    cache = {}
    full = (1 << n) - 1
    created = 0
    start = Hypothesis(0, model.start_state(), 0.0, _future_score(0, n, future_spans, cache), 0, created)
    stacks = [dict() for _ in range(n + 1)]
    stacks[0][start.key] = start

    for size in range(n):
        ranked = sorted(stacks[size].values(), key=lambda hyp: (-(hyp.score + hyp.future_cost), hyp.created))
        for hyp in ranked[: config.beam_size]:
            for (i, j), span_options in options.items():
                mask = ((1 << j) - 1) ^ ((1 << i) - 1)
                if hyp.coverage & mask:
                    continue
                if distortion_limit >= 0 and abs(i - hyp.last_end) > distortion_limit:
                    continue
                coverage = hyp.coverage | mask
                if not _reachable(coverage, j, n, distortion_limit):
                    continue
                jump = _distortion(i, hyp.last_end, weights)
                future = _future_score(coverage, n, future_spans, cache)
                for option in span_options:
                    lm_state, lm = _lm_increment(model, hyp.lm_state, option.tgt, weights)
                    created += 1
                    new = Hypothesis(
                        coverage,
                        lm_state,
                        hyp.score + option.score + lm + jump,
                        future,
                        j,
                        created,
                        hyp,
                        Segment((i, j), option.tgt, option.oov),
                    )
                    stack = stacks[size + j - i]
                    current = stack.get(new.key)
                    if current is None or new.score > current.score:
                        stack[new.key] = new

    finals = []
    for hyp in stacks[n].values():
        if hyp.coverage == full:
            hyp.score += weights.w_lm * LN10 * model.end_score(hyp.lm_state)
            finals.append(hyp)
    if not finals:
        return None
    return min(finals, key=lambda hyp: (-hyp.score, hyp.created))


def decode(
    sentence: Sequence[str],
    table: PhraseTable,
    model: NGramModel,
    weights: FeatureWeights = FeatureWeights(),
    config: DecoderConfig = DecoderConfig(),
) -> TranslationOutput:
    """
    Best-scoring translation of one tokenized sentence.

    Args:
        sentence (Sequence[str]): Source tokens.
        table (PhraseTable): Translation options.
        model (NGramModel): Target language model.
        weights (FeatureWeights): Log-linear weights.
        config (DecoderConfig): Search settings.

    Returns:
        TranslationOutput: Tokens, pass-through positions, score and the segmentation used.
    """
    sentence = tuple(sentence)
    options = collect_options(sentence, table, weights, config)
    best = _search(sentence, options, model, weights, config, config.distortion_limit)
    if best is None:
        logger.warning(f"No complete hypothesis within distortion limit {config.distortion_limit}; decoding monotone")
        best = _search(sentence, options, model, weights, config, 0)

    tokens, oov_spans = [], []
    segmentation = tuple(best.segments())
    for segment in segmentation:
        if segment.oov:
            oov_spans.extend(range(len(tokens), len(tokens) + len(segment.tgt)))
        tokens.extend(segment.tgt)
    return TranslationOutput(tuple(tokens), tuple(oov_spans), best.score, segmentation)


def score_segmentation(
    source: Sequence[str],
    segmentation: Sequence[Segment],
    table: PhraseTable,
    model: NGramModel,
    weights: FeatureWeights = FeatureWeights(),
) -> float:
    """Re-score a segmentation from the feature definitions alone."""
    covered = set()
    score, state, last_end = 0.0, model.start_state(), 0
    for segment in segmentation:
        i, j = segment.src_span
        span = set(range(i, j))
        if covered & span or j > len(source) or i < 0:
            raise ValidationError(f"segment {segment.src_span} overlaps or leaves the sentence")
        covered |= span
        if segment.oov:
            if tuple(source[i:j]) != tuple(segment.tgt):
                raise ValidationError(f"pass-through segment {segment.src_span} does not copy its source")
            phrase = _word_penalty(segment.tgt, weights)
        else:
            entry = table.lookup(source[i:j], segment.tgt)
            if entry is None:
                raise ValidationError(f"no table entry for {source[i:j]} -> {segment.tgt}")
            phrase = weights.phrase_score(entry.features) + _word_penalty(segment.tgt, weights)
        state, lm = _lm_increment(model, state, segment.tgt, weights)
        score += phrase + lm + _distortion(i, last_end, weights)
        last_end = j
    if len(covered) != len(source):
        raise ValidationError("segmentation does not cover the whole sentence")
    return score + weights.w_lm * LN10 * model.end_score(state)


_worker_args = None


def _init_worker(table, model, weights, config):
    global _worker_args
    _worker_args = (table, model, weights, config)


def _decode_in_worker(sentence):
    return decode(sentence, *_worker_args)


def decode_corpus(
    sentences: Sequence[Sequence[str]],
    table: PhraseTable,
    model: NGramModel,
    weights: FeatureWeights = FeatureWeights(),
    config: DecoderConfig = DecoderConfig(),
    jobs: int = 1,
) -> list:
    """Decode every sentence; results keep input order whatever the number of workers."""
    sentences = [tuple(sentence) for sentence in sentences]
    if not sentences:
        return []
    logger.info(f"Decoding {len(sentences)} sentences with beam {config.beam_size} on {jobs} worker(s)")
    if jobs <= 1 or len(sentences) == 1:
        return [decode(sentence, table, model, weights, config) for sentence in sentences]
    chunksize = max(1, len(sentences) // (jobs * 4))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(table, model, weights, config)) as pool:
        return list(pool.map(_decode_in_worker, sentences, chunksize=chunksize))


def mark_oov(output: TranslationOutput) -> list:
    marked = set(output.oov_spans)
    return [f"{OOV_OPEN}{token}{OOV_CLOSE}" if k in marked else token for k, token in enumerate(output.tokens)]


def write_outputs(outputs: Sequence[TranslationOutput], path: str, report_path: Optional[str] = None, mark: bool = False) -> None:
    """One space-joined translation per line; optional JSON-lines report with score, segmentation and OOVs."""
    with atomic_write(path) as file:
        for output in outputs:
            file.write(" ".join(mark_oov(output) if mark else output.tokens) + "\n")
    if report_path is None:
        return
    with atomic_write(report_path) as file:
        for index, output in enumerate(outputs):
            record = {
                "index": index,
                "score": output.model_score,
                "oov_spans": list(output.oov_spans),
                "segmentation": [
                    {"src": list(segment.src_span), "tgt": list(segment.tgt), "oov": segment.oov}
                    for segment in output.segmentation
                ],
            }
            file.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_outputs(path: str, report_path: Optional[str] = None) -> list:
    """Inverse of write_outputs; marked tokens are unwrapped and recorded as OOV positions."""
    outputs = []
    with open(path, "r", encoding="utf-8") as file:
        lines = [line.rstrip("\n") for line in file]
    records = []
    if report_path is not None:
        with open(report_path, "r", encoding="utf-8") as file:
            for number, line in enumerate(file, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ParseError(f"bad JSON record: {exc.msg}", line=number, path=report_path) from exc
        if len(records) != len(lines):
            raise ParseError(f"{len(lines)} translations but {len(records)} report records", path=report_path)
    for index, line in enumerate(lines):
        tokens, oov = [], set()
        for k, token in enumerate(line.split()):
            if token.startswith(OOV_OPEN) and token.endswith(OOV_CLOSE) and len(token) > 2:
                token = token[1:-1]
                oov.add(k)
            tokens.append(token)
        score, segmentation = 0.0, ()
        if records:
            record = records[index]
            oov.update(record.get("oov_spans", []))
            score = record.get("score", 0.0)
            segmentation = tuple(
                Segment(tuple(item["src"]), tuple(item["tgt"]), item.get("oov", False))
                for item in record.get("segmentation", [])
            )
        outputs.append(TranslationOutput(tuple(tokens), tuple(sorted(oov)), score, segmentation))
    return outputs


def with_tokens(output: TranslationOutput, tokens: Sequence[str], oov_spans: Sequence[int] = ()) -> TranslationOutput:
    return replace(output, tokens=tuple(tokens), oov_spans=tuple(oov_spans))
