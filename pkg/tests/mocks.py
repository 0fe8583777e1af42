import random
from unittest.mock import MagicMock

import requests

from corpus import ParallelCorpus, make_brochure


def _brochure(bid, category, size):
    return make_brochure(bid, category, [(f"{bid} line {k}", f"{bid} ڕستە {k}") for k in range(size)])


def full_size_corpus():
    """
    319 categorized brochures, 22,940 pairs, sized so every experiment chain reproduces
    the published split counts. Categories starting with "r" sort before those starting
    with "t"; the "t" brochures are the last 32 in category order.
    """
    r_block = [55] * 3 + [54] * 26  # 29 singles, 1,569 pairs
    r_singles = r_block + [54] * 28 + [53] * 225
    t_singles = [158] + [51] * 23 + [50] * 3

    r_labels = [f"r{k:04d}" for k in range(1, len(r_singles) + 1)]
    t_labels = [f"t{k:04d}" for k in range(1, len(t_singles) + 1)]
    r_block_labels = r_labels[: len(r_block)]

    head = [("rX", 10), ("rX", 10), ("rX", 3317), ("rP", 10), ("rP", 2259)]
    head += list(zip(r_labels[len(r_block):], r_singles[len(r_block):]))
    head += [("tX", 50), ("tX", 50), ("tP", 40)]
    head += list(zip(t_labels[1:], t_singles[1:]))
    tail = [("tX", 414), ("tP", 293), (t_labels[0], 158)]
    tail += list(zip(r_block_labels, r_block))

    brochures = [_brochure(f"b{k:03d}", category, size) for k, (category, size) in enumerate(head + tail, start=1)]
    return ParallelCorpus(tuple(brochures), variant_tag="tagged")


def small_categorized_corpus():
    """Four brochures in two categories: a 10/6 pair and a 3/3 pair."""
    return ParallelCorpus(
        (
            _brochure("a1", "antibiotic", 10),
            _brochure("a2", "antibiotic", 6),
            _brochure("p1", "painkiller", 3),
            _brochure("p2", "painkiller", 3),
        )
    )


def vocabulary(size, prefix="w"):
    return [f"{prefix}{k:02d}" for k in range(size)]


def random_sentences(n, vocab, seed=0, min_len=3, max_len=8):
    rng = random.Random(seed)
    return [" ".join(rng.choice(vocab) for _ in range(rng.randint(min_len, max_len))) for _ in range(n)]


def copy_language_corpus(n=5000, vocab_size=30, seed=0):
    """Target side identical to the source side."""
    sentences = random_sentences(n, vocabulary(vocab_size), seed)
    return ParallelCorpus((make_brochure("copy", "", [(s, s) for s in sentences]),))


def bijective_corpus(n=5000, vocab_size=50, seed=0):
    """Monotone word-for-word language: source word wNN always becomes kNN."""
    sentences = random_sentences(n, vocabulary(vocab_size), seed)
    texts = [(s, " ".join("k" + token[1:] for token in s.split())) for s in sentences]
    return ParallelCorpus((make_brochure("bijective", "", texts),))


def random_alignment_links(rng, src_len, tgt_len, density=0.3):
    return {(i, j) for i in range(src_len) for j in range(tgt_len) if rng.random() < density}


def write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as file:
        for line in lines:
            file.write(line + "\n")


class MockResponse:
    """Minimal stand-in for requests.Response"""

    def __init__(self, payload, status_code=200):
        self._payload = payload
        self.status_code = status_code

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"{self.status_code} error", response=self)


def translation_reply(text):
    return MockResponse({"data": {"translations": [{"translatedText": text}]}})


def mock_request_by_term(mapping):
    """A requests.request replacement answering from `mapping` by the posted term."""

    def request(method, url, headers=None, json=None, timeout=None):
        term = json["q"]
        if term not in mapping:
            return MockResponse({"error": "not found"}, status_code=404)
        return translation_reply(mapping[term])

    return MagicMock(side_effect=request)
