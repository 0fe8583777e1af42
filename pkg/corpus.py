import logging
import random
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import pandas as pd
from lxml import etree

from utils import (
    AlignmentError,
    CorpusEncodingError,
    ParseError,
    ValidationError,
    atomic_write,
)

logger = logging.getLogger(__name__)

XML_LANG = "{http://www.w3.org/XML/1998/namespace}lang"

# Trailing version / batch / revision suffixes, e.g. "amoxil_v2", "amoxil-batch7", "amoxil.rev3"
DEFAULT_STEM_PATTERN = r"(?:[-_. ](?:v|ver|version|rev|batch)\d+[a-z]?)+$"


@dataclass(frozen=True)
class SentencePair:
    source: str
    target: str
    origin_brochure: str = ""
    origin_line: int = 0

    def __post_init__(self):
        if "\n" in self.source or "\n" in self.target or "\r" in self.source or "\r" in self.target:
            raise ValidationError(
                f"sentence pair {self.origin_brochure}:{self.origin_line} contains a line break"
            )

    @property
    def text(self) -> tuple:
        return (self.source, self.target)


@dataclass(frozen=True)
class Brochure:
    id: str
    category: str = ""
    pairs: tuple = ()

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class ParallelCorpus:
    brochures: tuple = ()
    variant_tag: str = "original"
    rng_seed: int = 0

    def __post_init__(self):
        seen = set()
        for brochure in self.brochures:
            if brochure.id in seen:
                raise ValidationError(f"duplicate brochure id: {brochure.id}")
            seen.add(brochure.id)
            for line, pair in enumerate(brochure.pairs):
                if pair.origin_brochure != brochure.id or pair.origin_line != line:
                    raise ValidationError(
                        f"pair {pair.origin_brochure}:{pair.origin_line} is not stamped for "
                        f"brochure {brochure.id} line {line}"
                    )

    @property
    def pairs(self) -> list:
        return [pair for brochure in self.brochures for pair in brochure.pairs]

    def __len__(self) -> int:
        return sum(len(brochure) for brochure in self.brochures)

    def brochure(self, brochure_id: str) -> Brochure:
        for brochure in self.brochures:
            if brochure.id == brochure_id:
                return brochure
        raise KeyError(brochure_id)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: Fraction = Fraction(9, 10)
    granularity: str = "line"
    seed: int = 0

    def __post_init__(self):
        fraction = Fraction(self.train_fraction).limit_denominator(10**6)
        object.__setattr__(self, "train_fraction", fraction)
        if not 0 < fraction < 1:
            raise ValidationError(f"train_fraction must be in (0,1), got {fraction}")
        if self.granularity not in ("line", "brochure"):
            raise ValidationError(f"granularity must be line or brochure, got {self.granularity}")


@dataclass(frozen=True)
class Removal:
    brochure_id: str
    reason: str


def make_brochure(brochure_id: str, category: str, texts: Iterable) -> Brochure:
    """Builds a brochure from (source, target) tuples, stamping each pair's origin."""
    pairs = tuple(
        SentencePair(source, target, brochure_id, line)
        for line, (source, target) in enumerate(texts)
    )
    return Brochure(brochure_id, category, pairs)


def _rebrochure(brochure: Brochure, pairs: Iterable[SentencePair]) -> Brochure:
    return make_brochure(brochure.id, brochure.category, (pair.text for pair in pairs))


def _read_lines(path: str) -> list:
    with open(path, "rb") as file:
        raw = file.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusEncodingError(path, exc.start) from exc
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r") for line in lines]


def load_plaintext(src_path: str, tgt_path: str, brochure_id: str = "corpus") -> ParallelCorpus:
    """
    Load a line-aligned pair of plain text files as a single-brochure corpus.

    Raises:
        AlignmentError: when the files hold a different number of lines.
        CorpusEncodingError: when either file is not valid UTF-8.
    """
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(len(src_lines), len(tgt_lines))
    logger.info(f"Loaded {len(src_lines)} line pairs from {src_path} and {tgt_path}")
    if not src_lines:
        return ParallelCorpus(())
    return ParallelCorpus((make_brochure(brochure_id, "", zip(src_lines, tgt_lines)),))


def _parse_xml(path: str):
    try:
        return etree.parse(path)
    except etree.XMLSyntaxError as exc:
        raise ParseError(exc.msg, line=exc.lineno, path=path) from exc


def load_brochure_xml(path: str) -> ParallelCorpus:
    tree = _parse_xml(path)
    root = tree.getroot()
    if root.tag != "corpus":
        raise ParseError(f"expected <corpus> root, found <{root.tag}>", line=root.sourceline, path=path)
    brochures = []
    seen = set()
    for element in root.iter("brochure"):
        brochure_id = element.get("id")
        if not brochure_id:
            raise ParseError("brochure without id attribute", line=element.sourceline, path=path)
        if brochure_id in seen:
            raise ValidationError(f"{path}:{element.sourceline}: duplicate brochure id {brochure_id}")
        seen.add(brochure_id)
        texts = []
        for pair in element.iter("pair"):
            src = pair.find("src")
            tgt = pair.find("tgt")
            if src is None or tgt is None:
                raise ParseError("pair needs both <src> and <tgt>", line=pair.sourceline, path=path)
            texts.append((src.text or "", tgt.text or ""))
        brochures.append(make_brochure(brochure_id, element.get("category", ""), texts))
    logger.info(f"Loaded {len(brochures)} brochure(s) from {path}")
    return ParallelCorpus(tuple(brochures), variant_tag="tagged")


def load_tmx(path: str, src_lang: str = "en", tgt_lang: str = "ckb", brochure_id: str = "tmx") -> ParallelCorpus:
    """
    Read TMX 1.4 translation units. Language codes are matched case-insensitively
    on their primary subtag, so "en-US" matches "en".
    """
    tree = _parse_xml(path)
    texts = []

    def lang_of(tuv):
        lang = tuv.get(XML_LANG) or tuv.get("lang") or ""
        return lang.lower().split("-")[0]

    for tu in tree.getroot().iter("tu"):
        sides = {}
        for tuv in tu.iter("tuv"):
            seg = tuv.find("seg")
            sides[lang_of(tuv)] = "".join(seg.itertext()) if seg is not None else ""
        texts.append((sides.get(src_lang.lower(), ""), sides.get(tgt_lang.lower(), "")))
    logger.info(f"Loaded {len(texts)} translation unit(s) from {path}")
    if not texts:
        return ParallelCorpus(())
    return ParallelCorpus((make_brochure(brochure_id, "", texts),))


def save_plaintext(corpus: ParallelCorpus, src_path: str, tgt_path: str) -> None:
    with atomic_write(src_path) as src_file, atomic_write(tgt_path) as tgt_file:
        for pair in corpus.pairs:
            src_file.write(pair.source + "\n")
            tgt_file.write(pair.target + "\n")


def save_brochure_xml(corpus: ParallelCorpus, path: str) -> None:
    root = etree.Element("corpus")
    for brochure in corpus.brochures:
        attrs = {"id": brochure.id}
        if brochure.category:
            attrs["category"] = brochure.category
        element = etree.SubElement(root, "brochure", attrs)
        for pair in brochure.pairs:
            pair_element = etree.SubElement(element, "pair")
            etree.SubElement(pair_element, "src").text = pair.source
            etree.SubElement(pair_element, "tgt").text = pair.target
    with atomic_write(path, "wb") as file:
        file.write(etree.tostring(root, xml_declaration=True, encoding="UTF-8", pretty_print=True))


def tagged_line_count(corpus: ParallelCorpus) -> int:
    """Lines of the brochure-tagged text: a tag line before and after each brochure, plus the corpus tags."""
    return len(corpus) + 2 * len(corpus.brochures) + 2


def _is_incomplete(brochure: Brochure) -> bool:
    return not brochure.pairs or all(not pair.target.strip() for pair in brochure.pairs)


def clean_duplicates(
    corpora: Sequence[Brochure],
    resolution: Optional[Sequence[str]] = None,
    stem_pattern: str = DEFAULT_STEM_PATTERN,
) -> tuple:
    """
    Drop incomplete brochures and keep one brochure per duplicate group.

    Args:
        corpora (Sequence[Brochure]): Brochures in input order.
        resolution (Optional[Sequence[str]]): Brochure ids in preference order.
            Listed ids beat unlisted ones; among unlisted ids the last in input order wins.
        stem_pattern (str): Regex stripped from the end of an id to form its group key.

    Returns:
        tuple[ParallelCorpus, list[Removal]]: The cleaned corpus and every removal with its reason.
    """
    stem_regex = re.compile(stem_pattern, re.IGNORECASE)
    preference = {brochure_id: rank for rank, brochure_id in enumerate(resolution or [])}
    report = []

    complete = []
    for brochure in corpora:
        if _is_incomplete(brochure):
            report.append(Removal(brochure.id, "incomplete"))
        else:
            complete.append(brochure)

    groups = {}
    for position, brochure in enumerate(complete):
        key = stem_regex.sub("", brochure.id) or brochure.id
        groups.setdefault(key, []).append(position)

    def rank(position: int) -> tuple:
        brochure_id = complete[position].id
        if brochure_id in preference:
            return (0, preference[brochure_id])
        return (1, -position)

    kept_positions = set()
    for key, positions in groups.items():
        winner = min(positions, key=rank)
        kept_positions.add(winner)
        for position in positions:
            if position != winner:
                report.append(Removal(complete[position].id, "duplicate"))
    kept = tuple(brochure for position, brochure in enumerate(complete) if position in kept_positions)
    logger.info(
        f"Kept {len(kept)} of {len(corpora)} brochures "
        f"({sum(r.reason == 'duplicate' for r in report)} duplicate, "
        f"{sum(r.reason == 'incomplete' for r in report)} incomplete)"
    )
    return ParallelCorpus(kept, variant_tag="cleaned"), report


def write_removal_report(report: Sequence[Removal], path: str) -> None:
    frame = pd.DataFrame([(r.brochure_id, r.reason) for r in report], columns=["brochure_id", "reason"])
    with atomic_write(path) as file:
        frame.to_csv(file, sep="\t", header=False, index=False)


def shuffle_aligned(corpus: ParallelCorpus, seed: int = 0) -> ParallelCorpus:
    """Line-level shuffle of the whole corpus; every source keeps its target."""
    texts = [pair.text for pair in corpus.pairs]
    random.Random(seed).shuffle(texts)
    brochures = (make_brochure("shuffled", "", texts),) if texts else ()
    return ParallelCorpus(brochures, variant_tag="shuffled", rng_seed=seed)


def mix_sentences(corpus: ParallelCorpus, seed: int = 0) -> ParallelCorpus:
    """
    Interleave sentences across brochures: repeatedly pick a brochure uniformly among
    those with sentences left, then a random remaining sentence from it.
    """
    rng = random.Random(seed)
    pools = [[pair.text for pair in brochure.pairs] for brochure in corpus.brochures if brochure.pairs]
    mixed = []
    while pools:
        index = rng.randrange(len(pools))
        pool = pools[index]
        mixed.append(pool.pop(rng.randrange(len(pool))))
        if not pool:
            pools.pop(index)
    brochures = (make_brochure("mixed", "", mixed),) if mixed else ()
    return ParallelCorpus(brochures, variant_tag="mixed", rng_seed=seed)


def _require_categories(corpus: ParallelCorpus) -> None:
    for brochure in corpus.brochures:
        if not brochure.category:
            raise ValidationError(f"brochure {brochure.id} has no category label")


def _categories(corpus: ParallelCorpus) -> dict:
    groups = {}
    for brochure in corpus.brochures:
        groups.setdefault(brochure.category, []).append(brochure)
    return groups


def group_by_category(corpus: ParallelCorpus, seed: int = 0) -> ParallelCorpus:
    _require_categories(corpus)
    rng = random.Random(seed)
    groups = _categories(corpus)
    ordered = []
    for category in sorted(groups):
        members = list(groups[category])
        rng.shuffle(members)
        ordered.extend(members)
    return ParallelCorpus(tuple(ordered), variant_tag="categorized", rng_seed=seed)


def undersample(corpus: ParallelCorpus, seed: int = 0) -> ParallelCorpus:
    """Shrink every brochure to the size of the smallest brochure in its category."""
    _require_categories(corpus)
    rng = random.Random(seed)
    target_sizes = {
        category: min(len(b) for b in members) for category, members in _categories(corpus).items()
    }
    brochures = []
    for brochure in corpus.brochures:
        size = target_sizes[brochure.category]
        keep = sorted(rng.sample(range(len(brochure)), size))
        brochures.append(_rebrochure(brochure, (brochure.pairs[i] for i in keep)))
    result = ParallelCorpus(tuple(brochures), variant_tag="undersampled", rng_seed=seed)
    logger.info(f"Undersampled {len(corpus)} pairs to {len(result)}")
    return result


def oversample(corpus: ParallelCorpus, seed: int = 0) -> ParallelCorpus:
    """Grow every brochure to the size of the largest brochure in its category by resampling its own pairs."""
    _require_categories(corpus)
    rng = random.Random(seed)
    target_sizes = {
        category: max(len(b) for b in members) for category, members in _categories(corpus).items()
    }
    brochures = []
    for brochure in corpus.brochures:
        extra = target_sizes[brochure.category] - len(brochure)
        added = rng.choices(brochure.pairs, k=extra) if extra else []
        brochures.append(_rebrochure(brochure, list(brochure.pairs) + added))
    result = ParallelCorpus(tuple(brochures), variant_tag="oversampled", rng_seed=seed)
    logger.info(f"Oversampled {len(corpus)} pairs to {len(result)}")
    return result


def split(corpus: ParallelCorpus, spec: SplitSpec = SplitSpec()) -> tuple:
    """
    Prefix split into (train, test). No reshuffling happens here.

    Line granularity cuts the flat pair sequence after floor(fraction * N) pairs,
    possibly cutting one brochure in two. Brochure granularity assigns whole brochures.
    """
    if len(corpus) == 0:
        raise ValidationError("cannot split an empty corpus")
    if spec.granularity == "brochure":
        cut = int(spec.train_fraction * len(corpus.brochures))
        if cut == 0 or cut == len(corpus.brochures):
            raise ValidationError(
                f"train fraction {spec.train_fraction} leaves an empty side for {len(corpus.brochures)} brochures"
            )
        train = corpus.brochures[:cut]
        test = corpus.brochures[cut:]
    else:
        cut = int(spec.train_fraction * len(corpus))
        if cut == 0 or cut == len(corpus):
            raise ValidationError(
                f"train fraction {spec.train_fraction} leaves an empty side for {len(corpus)} lines"
            )
        train, test = [], []
        seen = 0
        for brochure in corpus.brochures:
            if seen + len(brochure) <= cut:
                train.append(brochure)
            elif seen >= cut:
                test.append(brochure)
            else:
                head = cut - seen
                train.append(_rebrochure(brochure, brochure.pairs[:head]))
                test.append(_rebrochure(brochure, brochure.pairs[head:]))
            seen += len(brochure)
    return (
        replace(corpus, brochures=tuple(train), variant_tag=f"{corpus.variant_tag}/train"),
        replace(corpus, brochures=tuple(test), variant_tag=f"{corpus.variant_tag}/test"),
    )
