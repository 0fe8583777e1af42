import os
import random
import tempfile
import unittest

from tests.mocks import random_alignment_links
from phrasetable import (
    PhraseEntry,
    PhrasePair,
    PhraseTable,
    build_table,
    extract_phrases,
    load_table,
    save_table,
)
from utils import ParseError, ValidationError
from wordalign import SRC2TGT, TGT2SRC, AlignmentMatrix, TranslationTable, VocabIndex, train_ibm1


def consistent_boxes(links, src_len, tgt_len, max_len):
    """Every (src start, src end, tgt start, tgt end) box that passes the consistency test"""
    boxes = set()
    for s_start in range(src_len):
        for s_end in range(s_start, min(src_len, s_start + max_len)):
            for t_start in range(tgt_len):
                for t_end in range(t_start, min(tgt_len, t_start + max_len)):
                    inside = False
                    broken = False
                    for i, j in links:
                        src_in = s_start <= i <= s_end
                        tgt_in = t_start <= j <= t_end
                        inside |= src_in and tgt_in
                        broken |= src_in != tgt_in
                    if inside and not broken:
                        boxes.add((s_start, s_end, t_start, t_end))
    return boxes


def single_link_table(pairs):
    alignments = [AlignmentMatrix(frozenset({(0, 0)}), len(src), len(tgt)) for src, tgt in pairs]
    forward, _ = train_ibm1(pairs)
    backward, _ = train_ibm1(pairs, direction=TGT2SRC)
    return build_table(pairs, alignments, forward, backward)


class TestExtraction(unittest.TestCase):
    def test_diagonal(self):
        """A 2x2 diagonal alignment yields both words and the whole pair"""
        alignment = AlignmentMatrix(frozenset({(0, 0), (1, 1)}), 2, 2)
        phrases = extract_phrases(["a", "b"], ["x", "y"], alignment)
        self.assertEqual(
            [(p.pair.src, p.pair.tgt) for p in phrases],
            [(("a",), ("x",)), (("a", "b"), ("x", "y")), (("b",), ("y",))],
        )

    def test_unaligned_target_grows(self):
        """Unaligned target words at the boundary give extra phrase pairs"""
        alignment = AlignmentMatrix(frozenset({(0, 0)}), 1, 2)
        phrases = extract_phrases(["a"], ["x", "y"], alignment)
        self.assertEqual([p.tgt_span for p in phrases], [(0, 1), (0, 2)])
        self.assertEqual(phrases[1].links, frozenset({(0, 0)}))

    def test_crossing_link_blocks(self):
        """A link leaving the box makes the span inconsistent"""
        alignment = AlignmentMatrix(frozenset({(0, 1), (1, 0)}), 2, 2)
        spans = [(p.src_span, p.tgt_span) for p in extract_phrases(["a", "b"], ["x", "y"], alignment)]
        self.assertEqual(spans, [((0, 1), (1, 2)), ((0, 2), (0, 2)), ((1, 2), (0, 1))])

    def test_matches_brute_force(self):
        """Extraction equals the exhaustive consistency check on random alignments"""
        rng = random.Random(5)
        for case in range(150):
            src_len, tgt_len = rng.randint(1, 6), rng.randint(1, 6)
            max_len = rng.choice([2, 3, 7])
            links = random_alignment_links(rng, src_len, tgt_len)
            alignment = AlignmentMatrix(frozenset(links), src_len, tgt_len)
            src = [f"s{i}" for i in range(src_len)]
            tgt = [f"t{j}" for j in range(tgt_len)]
            with self.subTest(case=case):
                extracted = {
                    (p.src_span[0], p.src_span[1] - 1, p.tgt_span[0], p.tgt_span[1] - 1)
                    for p in extract_phrases(src, tgt, alignment, max_len)
                }
                self.assertEqual(extracted, consistent_boxes(links, src_len, tgt_len, max_len))

    def test_no_links_no_phrases(self):
        """An empty alignment extracts nothing"""
        self.assertEqual(extract_phrases(["a"], ["x"], AlignmentMatrix(frozenset(), 1, 1)), [])

    def test_dimension_mismatch(self):
        """The alignment must match the sentence lengths"""
        with self.assertRaises(ValidationError):
            extract_phrases(["a", "b"], ["x"], AlignmentMatrix(frozenset(), 1, 1))


class TestScoring(unittest.TestCase):
    def test_single_pair_all_ones(self):
        """One aligned word pair scores 1.0 on every feature"""
        table = single_link_table([(["x"], ["y"])])
        entry = table.lookup(["x"], ["y"])
        for value in entry.features:
            self.assertAlmostEqual(value, 1.0)

    def test_relative_frequencies(self):
        """phi counts phrase pairs against each side's total"""
        table = single_link_table([(["a"], ["x"]), (["a"], ["x"]), (["a"], ["y"])])
        self.assertAlmostEqual(table.lookup(["a"], ["x"]).phi_tgt_given_src, 2 / 3)
        self.assertAlmostEqual(table.lookup(["a"], ["y"]).phi_tgt_given_src, 1 / 3)
        self.assertAlmostEqual(table.lookup(["a"], ["x"]).phi_src_given_tgt, 1.0)

    def test_phi_sums_to_one(self):
        """phi(t|s) is a distribution for each source phrase"""
        table = single_link_table([(["a"], ["x"]), (["a"], ["y"]), (["b"], ["x"])])
        for src in (("a",), ("b",)):
            self.assertAlmostEqual(sum(e.phi_tgt_given_src for e in table.get(src)), 1.0)

    def test_lexical_weights(self):
        """Unlinked generated words are scored against NULL"""
        forward = TranslationTable({(1, 1): 0.5, (0, 2): 0.25}, SRC2TGT, VocabIndex(["a"]), VocabIndex(["x", "y"]))
        backward = TranslationTable({(1, 1): 0.8}, TGT2SRC, VocabIndex(["x", "y"]), VocabIndex(["a"]))
        pairs = [(["a"], ["x", "y"])]
        table = build_table(pairs, [AlignmentMatrix(frozenset({(0, 0)}), 1, 2)], forward, backward)
        entry = table.lookup(["a"], ["x", "y"])
        self.assertAlmostEqual(entry.lex_tgt_given_src, 0.125)
        self.assertAlmostEqual(entry.lex_src_given_tgt, 0.8)
        self.assertAlmostEqual(entry.phi_tgt_given_src, 0.5)

    def test_alignment_count_mismatch(self):
        """Every sentence pair needs an alignment"""
        forward, _ = train_ibm1([(["a"], ["x"])])
        with self.assertRaises(ValidationError):
            build_table([(["a"], ["x"])], [], forward, forward)


class TestPhraseTable(unittest.TestCase):
    def setUp(self):
        self.entries = [
            PhraseEntry(PhrasePair(("a",), ("y",)), 1 / 3, 1.0, 0.5, 0.25),
            PhraseEntry(PhrasePair(("a",), ("x",)), 2 / 3, 1.0, 0.5, 0.25),
            PhraseEntry(PhrasePair(("a", "b"), ("x", "z")), 1.0, 1.0, 0.1, 0.2),
        ]
        self.table = PhraseTable(self.entries)
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "phrase-table.txt")

    def tearDown(self):
        self.tmp.cleanup()

    def test_index(self):
        """Entries are grouped by source phrase and sorted by target"""
        self.assertEqual([e.pair.tgt for e in self.table.get(["a"])], [("x",), ("y",)])
        self.assertIn(("a", "b"), self.table)
        self.assertNotIn(("b",), self.table)
        self.assertEqual(len(self.table), 3)
        self.assertEqual(self.table.src_words, {"a", "b"})

    def test_empty_phrase_rejected(self):
        """Both sides of a phrase pair need tokens"""
        with self.assertRaises(ValidationError):
            PhrasePair((), ("x",))

    def test_file_format(self):
        """Lines hold both phrases and four features at six significant digits"""
        save_table(self.table, self.path)
        with open(self.path, encoding="utf-8") as file:
            lines = file.read().splitlines()
        self.assertEqual(lines[0], "a ||| x ||| 0.666667 0.5 1 0.25")
        self.assertEqual(len(lines), 3)

    def test_round_trip(self):
        """A saved table loads back with features equal to six digits"""
        save_table(self.table, self.path)
        loaded = load_table(self.path)
        for original, restored in zip(self.table, loaded):
            self.assertEqual(original.pair, restored.pair)
            for a, b in zip(original.features, restored.features):
                self.assertAlmostEqual(a, b, places=5)

    def test_save_load_save_fixed_point(self):
        """Saving a loaded table reproduces the file byte for byte and loads to the same entries"""
        table = single_link_table([(["a"], ["x"]), (["a"], ["x"]), (["a"], ["y"]), (["b", "c"], ["z", "w"])])
        save_table(table, self.path)
        first = load_table(self.path)
        second_path = os.path.join(self.tmp.name, "again.txt")
        save_table(first, second_path)
        with open(self.path, "rb") as a, open(second_path, "rb") as b:
            self.assertEqual(a.read(), b.read())
        self.assertEqual(list(load_table(second_path)), list(first))

    def test_bad_rows(self):
        """Missing fields or features are reported with their line"""
        for content in ("a ||| x\n", "a ||| x ||| 0.5 0.5 0.5\n", "a ||| x ||| 0.5 0.5 0.5 nope\n"):
            with self.subTest(content=content):
                with open(self.path, "w", encoding="utf-8") as file:
                    file.write(content)
                with self.assertRaises(ParseError) as ctx:
                    load_table(self.path)
                self.assertEqual(ctx.exception.line, 1)


if __name__ == "__main__":
    unittest.main()
