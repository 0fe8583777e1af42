"""
Corpus BLEU and the experiment harness: corpus variants, training, decoding and
scoring, plus the TSV tables that summarize runs.
"""
import dataclasses
import json
import logging
import math
import os
import shutil
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import pandas as pd

import corpus as corpora
from decoder import DecoderConfig, FeatureWeights, TranslationOutput, decode_corpus, with_tokens
from lm import NGramModel, count_ngrams, estimate_discounts, estimate_kn, load_arpa, save_arpa
from phrasetable import PhraseTable, build_table, load_table, save_table
from textprep import (
    CleaningRules,
    TruecaseModel,
    clean_pairs,
    load_truecaser,
    normalize_script,
    recase,
    save_truecaser,
    tokenize,
    tokenize_corpus,
    train_truecaser,
    truecase,
)
from utils import PipelineConfig, ValidationError, atomic_write, derive_seed
from wordalign import SRC2TGT, TGT2SRC, EMConfig, TranslationTable, align_corpus, load_ttable, save_ttable, train_ibm1

logger = logging.getLogger(__name__)

EXPERIMENTS = range(1, 8)
WEIGHT_GRID = (0.0, 0.1, 0.2, 0.5, 1.0)
WORD_PENALTY_GRID = (-2.0, -1.0, -0.5, 0.0, 0.5)

MODEL_FILES = {
    "src_truecaser": "truecase.src.tsv",
    "tgt_truecaser": "truecase.tgt.tsv",
    "forward": "ttable.src2tgt.tsv",
    "backward": "ttable.tgt2src.tsv",
    "table": "phrase-table.txt",
    "lm": "lm.arpa",
}


@dataclass(frozen=True)
class BleuReport:
    precisions: tuple
    brevity_penalty: float
    score: float
    candidate_length: int
    reference_length: int


@dataclass
class ExperimentReport:
    experiment_id: int
    variant_tag: str
    train_lines: int
    test_lines: int
    train_brochures: int
    test_brochures: int
    bleu: float = 0.0
    precisions: tuple = ()
    brevity_penalty: float = 0.0
    # wall clock, never written by save_report
    seconds: float = field(default=0.0, compare=False)
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PrePostReport:
    pre: BleuReport
    post: BleuReport

    @property
    def delta(self) -> float:
        return self.post.score - self.pre.score


@dataclass
class TrainedModels:
    src_truecaser: TruecaseModel
    tgt_truecaser: TruecaseModel
    forward: TranslationTable
    backward: TranslationTable
    table: PhraseTable
    lm: NGramModel


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[k:k + n]) for k in range(len(tokens) - n + 1))


def bleu(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    smooth: bool = False,
) -> BleuReport:
    """
    Corpus-level BLEU with a single reference per segment.

    Clipped n-gram matches and totals are summed over the corpus before dividing.
    Orders with no candidate n-grams (lines shorter than n) count as precision 1.
    Without smoothing the score is 0 as soon as one precision is 0; `smooth` adds
    one to matches and totals for n > 1. An empty candidate side gives a brevity
    penalty of 0.

    Raises:
        ValidationError: when the lists differ in length or are empty.
    """
    if len(candidates) != len(references):
        raise ValidationError(f"{len(candidates)} candidates but {len(references)} references")
    if not references:
        raise ValidationError("BLEU needs at least one reference")
    matches, totals = [0] * max_n, [0] * max_n
    candidate_length = reference_length = 0
    for candidate, reference in zip(candidates, references):
        candidate, reference = list(candidate), list(reference)
        candidate_length += len(candidate)
        reference_length += len(reference)
        for n in range(1, max_n + 1):
            cand_counts, ref_counts = _ngrams(candidate, n), _ngrams(reference, n)
            matches[n - 1] += sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
            totals[n - 1] += max(len(candidate) - n + 1, 0)

    precisions = []
    for n, (match, total) in enumerate(zip(matches, totals), start=1):
        if smooth and n > 1:
            match, total = match + 1, total + 1
        # an order with no candidate n-grams carries no evidence either way
        precisions.append(match / total if total else 1.0)

    if candidate_length == 0:
        brevity_penalty = 0.0
    elif candidate_length > reference_length:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1 - reference_length / candidate_length)

    if min(precisions) > 0:
        score = 100 * brevity_penalty * math.exp(sum(math.log(p) for p in precisions) / max_n)
    else:
        score = 0.0
    return BleuReport(tuple(precisions), brevity_penalty, min(score, 100.0), candidate_length, reference_length)


def _tokens(item) -> tuple:
    return tuple(item.tokens) if isinstance(item, TranslationOutput) else tuple(item)


def compare_pre_post(pre: Sequence, post: Sequence, references: Sequence[Sequence[str]]) -> PrePostReport:
    """BLEU before and after post-editing against the same references."""
    if not len(pre) == len(post) == len(references):
        raise ValidationError(f"length mismatch: {len(pre)} pre, {len(post)} post, {len(references)} references")
    report = PrePostReport(
        bleu([_tokens(item) for item in pre], references),
        bleu([_tokens(item) for item in post], references),
    )
    logger.info(f"BLEU before post-editing {report.pre.score:.2f}, after {report.post.score:.2f}")
    return report


def prepare_experiment(experiment_id: int, base: corpora.ParallelCorpus, train_fraction=0.9, seed: int = 0) -> tuple:
    """
    Build the corpus variant of an experiment and split it into (train, test).

    1 line split of the original order; 2 shuffled pairs, line split; 3 brochure
    split of the original order; 4 brochure split then sentences mixed per side;
    5 to 7 category grouping (then under- or oversampling for 6 and 7), brochure
    split, sentences mixed per side.
    """
    if experiment_id not in EXPERIMENTS:
        raise ValidationError(f"experiment id must be 1..7, got {experiment_id}")
    by_line = corpora.SplitSpec(train_fraction, "line", seed)
    by_brochure = corpora.SplitSpec(train_fraction, "brochure", seed)

    if experiment_id == 1:
        return corpora.split(base, by_line)
    if experiment_id == 2:
        return corpora.split(corpora.shuffle_aligned(base, derive_seed(seed, "shuffle")), by_line)
    if experiment_id == 3:
        return corpora.split(base, by_brochure)

    variant = base
    if experiment_id >= 5:
        variant = corpora.group_by_category(variant, derive_seed(seed, "group"))
    if experiment_id == 6:
        variant = corpora.undersample(variant, derive_seed(seed, "undersample"))
    elif experiment_id == 7:
        variant = corpora.oversample(variant, derive_seed(seed, "oversample"))
    train, test = corpora.split(variant, by_brochure)
    return (
        corpora.mix_sentences(train, derive_seed(seed, "mix/train")),
        corpora.mix_sentences(test, derive_seed(seed, "mix/test")),
    )


def _tokenized_pairs(corpus: corpora.ParallelCorpus) -> list:
    return [(tuple(pair.source.split()), tuple(pair.target.split())) for pair in corpus.pairs]


def train_models(train: corpora.ParallelCorpus, config: PipelineConfig = PipelineConfig(), jobs: int = 1) -> TrainedModels:
    """
    Tokenize, clean and truecase the training corpus, then train both IBM Model 1
    directions, symmetrize, build the phrase table and estimate the target LM.
    """
    tokenized = tokenize_corpus(train, normalize_target=config.normalize_arabic)
    cleaned, _ = clean_pairs(tokenized, CleaningRules(config.min_tokens, config.max_tokens, config.max_length_ratio))
    raw_pairs = _tokenized_pairs(cleaned)
    if not raw_pairs:
        raise ValidationError("no training pairs left after cleaning")

    src_truecaser = train_truecaser([src for src, _ in raw_pairs])
    tgt_truecaser = train_truecaser([tgt for _, tgt in raw_pairs])
    pairs = [
        (truecase(src, src_truecaser).tokens, truecase(tgt, tgt_truecaser).tokens) for src, tgt in raw_pairs
    ]

    em = EMConfig(config.em_iterations, config.em_min_prob_floor, config.em_convergence_epsilon, jobs)
    forward, _ = train_ibm1(pairs, em, SRC2TGT)
    backward, _ = train_ibm1(pairs, em, TGT2SRC)
    alignments = align_corpus(pairs, forward, backward, config.symmetrization)
    table = build_table(pairs, alignments, forward, backward, config.max_phrase_len)

    counts = count_ngrams([tgt for _, tgt in pairs], config.lm_order)
    discount = estimate_discounts(counts, config.lm_discount) if config.lm_estimate_discounts else config.lm_discount
    model = estimate_kn(counts, discount)
    return TrainedModels(src_truecaser, tgt_truecaser, forward, backward, table, model)


def save_models(models: TrainedModels, model_dir: str) -> None:
    """
    Write every model file into a staging directory beside `model_dir`, then move
    them into place. A failing saver leaves the previous files in `model_dir` untouched.
    """
    model_dir = os.path.abspath(model_dir)
    parent = os.path.dirname(model_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(dir=parent, prefix=".tmp-models-")
    try:
        path = lambda name: os.path.join(staging, MODEL_FILES[name])  # noqa: E731
        save_truecaser(models.src_truecaser, path("src_truecaser"))
        save_truecaser(models.tgt_truecaser, path("tgt_truecaser"))
        save_ttable(models.forward, path("forward"))
        save_ttable(models.backward, path("backward"))
        save_table(models.table, path("table"))
        save_arpa(models.lm, path("lm"))
        os.makedirs(model_dir, exist_ok=True)
        for name in MODEL_FILES.values():
            os.replace(os.path.join(staging, name), os.path.join(model_dir, name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info(f"Saved models to {model_dir}")


def load_models(model_dir: str, max_phrase_len: int = 7) -> TrainedModels:
    path = lambda name: os.path.join(model_dir, MODEL_FILES[name])  # noqa: E731
    return TrainedModels(
        load_truecaser(path("src_truecaser")),
        load_truecaser(path("tgt_truecaser")),
        load_ttable(path("forward"), SRC2TGT),
        load_ttable(path("backward"), TGT2SRC),
        load_table(path("table"), max_phrase_len),
        load_arpa(path("lm")),
    )


def prepare_sources(lines: Sequence[str], models: TrainedModels) -> list:
    return [truecase(tokenize(line).tokens, models.src_truecaser).tokens for line in lines]


def prepare_references(lines: Sequence[str], models: TrainedModels, normalize: bool = True) -> list:
    """References get the candidates' treatment: tokenize, truecase, then recase."""
    references = []
    for line in lines:
        tokens = tokenize(normalize_script(line) if normalize else line).tokens
        references.append(recase(truecase(tokens, models.tgt_truecaser).tokens, models.tgt_truecaser).tokens)
    return references


def translate(
    lines: Sequence[str],
    models: TrainedModels,
    weights: FeatureWeights = FeatureWeights(),
    config: DecoderConfig = DecoderConfig(),
    jobs: int = 1,
) -> list:
    """Decode raw source lines and recase the output."""
    outputs = decode_corpus(prepare_sources(lines, models), models.table, models.lm, weights, config, jobs)
    return [with_tokens(output, recase(output.tokens, models.tgt_truecaser).tokens, output.oov_spans) for output in outputs]


def run_experiment(
    experiment_id: int,
    base: corpora.ParallelCorpus,
    config: PipelineConfig = PipelineConfig(),
    seed: Optional[int] = None,
) -> ExperimentReport:
    """
    Run one experiment end to end: corpus variant, split, training, decoding of the
    test side and corpus BLEU against its references.
    """
    seed = config.seed if seed is None else seed
    started = time.perf_counter()
    train, test = prepare_experiment(experiment_id, base, config.train_fraction, seed)
    logger.info(
        f"Experiment {experiment_id}: {len(train)} training and {len(test)} test lines "
        f"({len(train.brochures)}/{len(test.brochures)} brochures)"
    )
    models = train_models(train, config, config.jobs)
    sources = [pair.source for pair in test.pairs]
    outputs = translate(sources, models, FeatureWeights.from_config(config), DecoderConfig.from_config(config), config.jobs)
    references = prepare_references([pair.target for pair in test.pairs], models, config.normalize_arabic)
    score = bleu([output.tokens for output in outputs], references)
    report = ExperimentReport(
        experiment_id=experiment_id,
        variant_tag=train.variant_tag.split("/")[0],
        train_lines=len(train),
        test_lines=len(test),
        train_brochures=len(train.brochures),
        test_brochures=len(test.brochures),
        bleu=score.score,
        precisions=score.precisions,
        brevity_penalty=score.brevity_penalty,
        seconds=time.perf_counter() - started,
        config={**dataclasses.asdict(config), "seed": seed},
    )
    logger.info(f"Experiment {experiment_id}: BLEU {report.bleu:.2f} in {report.seconds:.1f}s")
    return report


def tune_weights(
    sources: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    table: PhraseTable,
    model: NGramModel,
    weights: FeatureWeights = FeatureWeights(),
    config: DecoderConfig = DecoderConfig(),
    rounds: int = 1,
    jobs: int = 1,
) -> FeatureWeights:
    """
    Coordinate grid search over the feature weights, keeping a value only when it
    strictly improves corpus BLEU on the development set.
    """

    def evaluate(candidate: FeatureWeights) -> float:
        outputs = decode_corpus(sources, table, model, candidate, config, jobs)
        return bleu([output.tokens for output in outputs], references).score

    best = evaluate(weights)
    for round_number in range(rounds):
        improved = False
        for name in FeatureWeights.__dataclass_fields__:
            grid = WORD_PENALTY_GRID if name == "w_word_penalty" else WEIGHT_GRID
            for value in grid:
                if value == getattr(weights, name):
                    continue
                candidate = dataclasses.replace(weights, **{name: value})
                score = evaluate(candidate)
                if score > best:
                    best, weights, improved = score, candidate, True
        logger.info(f"Tuning round {round_number + 1}: dev BLEU {best:.2f}")
        if not improved:
            break
    return weights


def save_report(report: ExperimentReport, path: str) -> None:
    values = dataclasses.asdict(report)
    del values["seconds"]
    with atomic_write(path) as file:
        json.dump(values, file, ensure_ascii=False, indent=2, sort_keys=True)
        file.write("\n")


def load_report(path: str) -> ExperimentReport:
    with open(path, "r", encoding="utf-8") as file:
        values = json.load(file)
    values.pop("seconds", None)
    values["precisions"] = tuple(values.get("precisions", ()))
    return ExperimentReport(**values)


def write_experiment_table(reports: Sequence[ExperimentReport], path: str) -> pd.DataFrame:
    """One row per experiment: id, variant, split sizes and BLEU."""
    frame = pd.DataFrame(
        [
            {
                "experiment": report.experiment_id,
                "variant": report.variant_tag,
                "train_lines": report.train_lines,
                "test_lines": report.test_lines,
                "bleu": round(report.bleu, 2),
            }
            for report in sorted(reports, key=lambda report: report.experiment_id)
        ],
        columns=["experiment", "variant", "train_lines", "test_lines", "bleu"],
    )
    with atomic_write(path) as file:
        frame.to_csv(file, sep="\t", index=False)
    return frame


def write_pre_post_table(rows: Sequence[tuple], path: str) -> pd.DataFrame:
    """Rows of (name, PrePostReport) as name, BLEU before, BLEU after, delta."""
    frame = pd.DataFrame(
        [
            {
                "name": name,
                "before": round(report.pre.score, 2),
                "after": round(report.post.score, 2),
                "delta": round(report.delta, 2),
            }
            for name, report in rows
        ],
        columns=["name", "before", "after", "delta"],
    )
    with atomic_write(path) as file:
        frame.to_csv(file, sep="\t", index=False)
    return frame
