"""
Length-based sentence alignment of two unaligned documents.

The dynamic program scores each bead by how well the character lengths of its two
sides agree (Gale & Church's normal model of length differences) plus a fixed prior
per bead kind. Results can be hand-corrected with merge / split / shift edits and
exported as plain text pairs, brochure XML or TMX.
"""
import logging
import math
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from lxml import etree

import corpus
from utils import ValidationError, atomic_write

logger = logging.getLogger(__name__)

# (source sentences, target sentences) per bead kind, in enumeration order
KINDS = {
    "0-1": (0, 1),
    "1-0": (1, 0),
    "1-1": (1, 1),
    "1-2": (1, 2),
    "2-1": (2, 1),
    "2-2": (2, 2),
}
PRIORS = {"0-1": 0.0099, "1-0": 0.0099, "1-1": 0.89, "1-2": 0.089, "2-1": 0.089, "2-2": 0.011}
# 1-1 wins ties, then enumeration order
SEARCH_ORDER = ("1-1", "0-1", "1-0", "1-2", "2-1", "2-2")

SENTENCE_END = re.compile(r"(?<=[.!?؟])\s+")


@dataclass(frozen=True)
class SegmentedDocument:
    sentences: tuple = ()
    lengths: tuple = ()

    @classmethod
    def from_sentences(cls, sentences: Sequence[str]) -> "SegmentedDocument":
        return cls(tuple(sentences), tuple(len(s) for s in sentences))

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class AlignParams:
    mean_ratio: float = 1.0
    variance: float = 6.8


@dataclass(frozen=True)
class Bead:
    kind: str
    src_span: tuple
    tgt_span: tuple
    cost: float


@dataclass(frozen=True)
class AlignmentResult:
    beads: tuple
    total_cost: float


@dataclass(frozen=True)
class Merge:
    index: int


@dataclass(frozen=True)
class Split:
    index: int
    src_at: int = 1
    tgt_at: Optional[int] = None


@dataclass(frozen=True)
class Shift:
    """Move the boundary between bead `index` and bead `index + 1` on one side.
    delta=+1 pulls the next bead's first sentence in, delta=-1 pushes the last one out."""
    index: int
    side: str = "src"
    delta: int = 1


Edit = Union[Merge, Split, Shift]


def segment(text: str) -> SegmentedDocument:
    sentences = []
    for line in text.splitlines():
        for piece in SENTENCE_END.split(line.strip()):
            if piece:
                sentences.append(piece)
    return SegmentedDocument.from_sentences(sentences)


def bead_cost(kind: str, src_len: int, tgt_len: int, params: AlignParams = AlignParams()) -> float:
    """Negative log probability of a bead given the summed character lengths of its sides."""
    mean = (src_len + tgt_len / params.mean_ratio) / 2
    if mean == 0:
        delta = 0.0
    else:
        delta = (src_len * params.mean_ratio - tgt_len) / math.sqrt(mean * params.variance)
    # two-tailed normal tail probability, floored to keep the log finite
    tail = max(math.erfc(abs(delta) / math.sqrt(2)), 1e-300)
    return -math.log(tail) - math.log(PRIORS[kind])


def _span_cost(kind, src_span, tgt_span, src, tgt, params):
    src_len = sum(src.lengths[src_span[0]:src_span[1]])
    tgt_len = sum(tgt.lengths[tgt_span[0]:tgt_span[1]])
    return bead_cost(kind, src_len, tgt_len, params)


def gale_church_align(
    src: SegmentedDocument, tgt: SegmentedDocument, params: AlignParams = AlignParams()
) -> AlignmentResult:
    if len(src) == 0 or len(tgt) == 0:
        raise ValidationError("both documents must contain at least one sentence")
    n, m = len(src), len(tgt)
    cost = np.full((n + 1, m + 1), np.inf)
    back = np.full((n + 1, m + 1), -1, dtype=np.int8)
    cost[0, 0] = 0.0
    src_prefix = np.concatenate(([0], np.cumsum(src.lengths)))
    tgt_prefix = np.concatenate(([0], np.cumsum(tgt.lengths)))

    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            best, best_kind = np.inf, -1
            for kind_index, kind in enumerate(SEARCH_ORDER):
                di, dj = KINDS[kind]
                if di > i or dj > j or not np.isfinite(cost[i - di, j - dj]):
                    continue
                candidate = cost[i - di, j - dj] + bead_cost(
                    kind,
                    int(src_prefix[i] - src_prefix[i - di]),
                    int(tgt_prefix[j] - tgt_prefix[j - dj]),
                    params,
                )
                if candidate < best:
                    best, best_kind = candidate, kind_index
            cost[i, j] = best
            back[i, j] = best_kind

    beads = []
    i, j = n, m
    while i > 0 or j > 0:
        kind = SEARCH_ORDER[back[i, j]]
        di, dj = KINDS[kind]
        step = float(cost[i, j] - cost[i - di, j - dj])
        beads.append(Bead(kind, (i - di, i), (j - dj, j), step))
        i, j = i - di, j - dj
    beads.reverse()
    # recompute bead costs directly so they match apply_edit's bookkeeping
    beads = [replace(b, cost=_span_cost(b.kind, b.src_span, b.tgt_span, src, tgt, params)) for b in beads]
    total = float(cost[n, m])
    logger.info(f"Aligned {n} x {m} sentences into {len(beads)} beads, cost {total:.3f}")
    return AlignmentResult(tuple(beads), total)


def _kind_of(src_span: tuple, tgt_span: tuple) -> str:
    kind = f"{src_span[1] - src_span[0]}-{tgt_span[1] - tgt_span[0]}"
    if kind not in KINDS:
        raise ValidationError(f"edit would produce an unsupported {kind} bead")
    return kind


def apply_edit(
    result: AlignmentResult,
    edit: Edit,
    src: SegmentedDocument,
    tgt: SegmentedDocument,
    params: AlignParams = AlignParams(),
) -> AlignmentResult:
    """
    Apply one manual correction and recompute the costs of the beads it touches.

    Raises:
        ValidationError: index out of range, or the edit would leave an empty or
            unsupported bead.
    """
    beads = list(result.beads)

    def make(src_span, tgt_span):
        kind = _kind_of(src_span, tgt_span)
        return Bead(kind, src_span, tgt_span, _span_cost(kind, src_span, tgt_span, src, tgt, params))

    if isinstance(edit, Merge):
        if not 0 <= edit.index < len(beads) - 1:
            raise ValidationError(f"merge index {edit.index} needs a following bead")
        first, second = beads[edit.index], beads[edit.index + 1]
        merged = make((first.src_span[0], second.src_span[1]), (first.tgt_span[0], second.tgt_span[1]))
        beads[edit.index:edit.index + 2] = [merged]
    elif isinstance(edit, Split):
        if not 0 <= edit.index < len(beads):
            raise ValidationError(f"split index {edit.index} out of range")
        bead = beads[edit.index]
        src_cut = bead.src_span[0] + edit.src_at
        tgt_at = edit.tgt_at if edit.tgt_at is not None else bead.tgt_span[1] - bead.tgt_span[0]
        tgt_cut = bead.tgt_span[0] + tgt_at
        if not (bead.src_span[0] <= src_cut <= bead.src_span[1] and bead.tgt_span[0] <= tgt_cut <= bead.tgt_span[1]):
            raise ValidationError("split point outside the bead")
        beads[edit.index:edit.index + 1] = [
            make((bead.src_span[0], src_cut), (bead.tgt_span[0], tgt_cut)),
            make((src_cut, bead.src_span[1]), (tgt_cut, bead.tgt_span[1])),
        ]
    elif isinstance(edit, Shift):
        if not 0 <= edit.index < len(beads) - 1:
            raise ValidationError(f"shift index {edit.index} has no following bead")
        if edit.side not in ("src", "tgt") or edit.delta not in (-1, 1):
            raise ValidationError("shift needs side src|tgt and delta +1|-1")
        first, second = beads[edit.index], beads[edit.index + 1]
        spans = {
            "src": [list(first.src_span), list(second.src_span)],
            "tgt": [list(first.tgt_span), list(second.tgt_span)],
        }
        boundary = spans[edit.side]
        boundary[0][1] += edit.delta
        boundary[1][0] += edit.delta
        if boundary[0][1] < boundary[0][0] or boundary[1][0] > boundary[1][1]:
            raise ValidationError("shift would move past the end of a bead")
        beads[edit.index:edit.index + 2] = [
            make(tuple(spans["src"][0]), tuple(spans["tgt"][0])),
            make(tuple(spans["src"][1]), tuple(spans["tgt"][1])),
        ]
    else:
        raise ValidationError(f"unknown edit {edit!r}")

    _check_coverage(beads, len(src), len(tgt))
    return AlignmentResult(tuple(beads), sum(b.cost for b in beads))


def _check_coverage(beads, n_src: int, n_tgt: int) -> None:
    src_at, tgt_at = 0, 0
    for bead in beads:
        if bead.src_span[0] != src_at or bead.tgt_span[0] != tgt_at:
            raise ValidationError("beads are not contiguous")
        src_at, tgt_at = bead.src_span[1], bead.tgt_span[1]
    if (src_at, tgt_at) != (n_src, n_tgt):
        raise ValidationError("beads do not cover both documents")


def _bead_texts(result, src, tgt):
    for bead in result.beads:
        yield (
            " ".join(src.sentences[bead.src_span[0]:bead.src_span[1]]),
            " ".join(tgt.sentences[bead.tgt_span[0]:bead.tgt_span[1]]),
            bead,
        )


def export(
    result: AlignmentResult,
    src: SegmentedDocument,
    tgt: SegmentedDocument,
    fmt: str,
    out_prefix: str,
    src_lang: str = "en",
    tgt_lang: str = "ckb",
) -> list:
    """
    Write the aligned documents.

    Args:
        fmt (str): "plaintext-pair" writes `<prefix>.<src_lang>` and `<prefix>.<tgt_lang>`,
            dropping beads with an empty side; "xml" writes `<prefix>.xml` in brochure XML;
            "tmx" writes `<prefix>.tmx`. XML and TMX keep one-sided beads with an empty variant.

    Returns:
        list[str]: Paths written.
    """
    _check_coverage(result.beads, len(src), len(tgt))
    if fmt == "plaintext-pair":
        src_path, tgt_path = f"{out_prefix}.{src_lang}", f"{out_prefix}.{tgt_lang}"
        with atomic_write(src_path) as src_file, atomic_write(tgt_path) as tgt_file:
            for src_text, tgt_text, bead in _bead_texts(result, src, tgt):
                if bead.kind in ("0-1", "1-0"):
                    continue
                src_file.write(src_text + "\n")
                tgt_file.write(tgt_text + "\n")
        return [src_path, tgt_path]
    if fmt == "xml":
        path = f"{out_prefix}.xml"
        texts = [(s, t) for s, t, _ in _bead_texts(result, src, tgt)]
        document = corpus.ParallelCorpus((corpus.make_brochure("aligned", "", texts),))
        corpus.save_brochure_xml(document, path)
        return [path]
    if fmt == "tmx":
        path = f"{out_prefix}.tmx"
        root = etree.Element("tmx", version="1.4")
        etree.SubElement(
            root,
            "header",
            creationtool="smt-toolkit-salign",
            creationtoolversion="1.0",
            segtype="sentence",
            datatype="plaintext",
            adminlang="en",
            srclang=src_lang,
            **{"o-tmf": "PlainText"},
        )
        body = etree.SubElement(root, "body")
        for src_text, tgt_text, _ in _bead_texts(result, src, tgt):
            tu = etree.SubElement(body, "tu")
            for lang, text in ((src_lang, src_text), (tgt_lang, tgt_text)):
                tuv = etree.SubElement(tu, "tuv", {corpus.XML_LANG: lang})
                etree.SubElement(tuv, "seg").text = text
        with atomic_write(path, "wb") as file:
            file.write(etree.tostring(root, xml_declaration=True, encoding="UTF-8", pretty_print=True))
        return [path]
    raise ValidationError(f"unknown export format {fmt}")
