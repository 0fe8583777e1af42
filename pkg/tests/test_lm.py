import math
import os
import tempfile
import unittest

from lm import (
    BOS,
    EOS,
    UNK,
    count_ngrams,
    estimate_discounts,
    estimate_kn,
    load_arpa,
    logprob,
    perplexity,
    save_arpa,
)
from tests.mocks import random_sentences, vocabulary
from utils import ParseError, ValidationError


def split(lines):
    return [line.split() for line in lines]


class TestCounting(unittest.TestCase):
    def test_bigram_counts(self):
        """Sentences are padded, and <s> never counts as a unigram"""
        counts = count_ngrams([["a", "b"]], order=2)
        self.assertEqual(counts.of_order(1), {("a",): 1, ("b",): 1, (EOS,): 1})
        self.assertEqual(counts.of_order(2), {(BOS, "a"): 1, ("a", "b"): 1, ("b", EOS): 1})
        self.assertEqual(counts.n_sentences, 1)

    def test_unigram_mass(self):
        """Unigram mass is tokens plus sentences"""
        sentences = split(random_sentences(50, vocabulary(10), seed=2))
        counts = count_ngrams(sentences, order=3)
        expected = sum(len(s) for s in sentences) + len(sentences)
        self.assertEqual(sum(counts.of_order(1).values()), expected)

    def test_empty_sentence(self):
        """An empty sentence still contributes <s> </s>"""
        counts = count_ngrams([[]], order=2)
        self.assertEqual(counts.of_order(2), {(BOS, EOS): 1})

    def test_order_must_be_positive(self):
        """Order zero is rejected"""
        with self.assertRaises(ValidationError):
            count_ngrams([["a"]], order=0)

    def test_estimate_discounts(self):
        """D = n1 / (n1 + 2 n2) from count-of-counts"""
        counts = count_ngrams([["a"], ["b"], ["b"]], order=1)
        (discount,) = estimate_discounts(counts)
        self.assertAlmostEqual(discount, 1 / 3)


class TestKneserNey(unittest.TestCase):
    def test_unigram_hand_values(self):
        """A one-word corpus interpolates with a uniform distribution over three words"""
        model = estimate_kn(count_ngrams([["a"]], order=1), discount=0.5)
        self.assertAlmostEqual(model.prob((), "a"), 5 / 12, places=6)
        self.assertAlmostEqual(model.prob((), EOS), 5 / 12, places=6)
        self.assertAlmostEqual(model.prob((), UNK), 1 / 6, places=6)

    def test_bigram_hand_value(self):
        """P(b|a) on two copies of 'a b' with D = 0.5"""
        model = estimate_kn(count_ngrams(split(["a b", "a b"]), order=2), discount=0.5)
        self.assertAlmostEqual(model.prob(("a",), "b"), 0.822917, places=5)

    def test_distributions_normalize(self):
        """Every observed context gives a distribution over the vocabulary and <unk>"""
        sentences = split(random_sentences(40, vocabulary(6), seed=4, min_len=1, max_len=5))
        model = estimate_kn(count_ngrams(sentences, order=3), discount=0.7)
        words = sorted(model.vocab - {BOS})
        for context in [()] + sorted(model.backoffs):
            with self.subTest(context=context):
                self.assertAlmostEqual(sum(model.prob(context, w) for w in words), 1.0, places=6)

    def test_unknown_words_score_as_unk(self):
        """Out-of-vocabulary words score like <unk> and leave <unk> in the state"""
        model = estimate_kn(count_ngrams(split(["a b", "b a"]), order=2))
        state, score = model.advance(model.start_state(), "zzz")
        self.assertEqual(state, (UNK,))
        self.assertAlmostEqual(score, model.score_word((BOS,), UNK))

    def test_logprob_sums_steps(self):
        """Sentence log-probability includes the end-of-sentence step"""
        model = estimate_kn(count_ngrams(split(["a b", "b a"]), order=2))
        expected = model.score_word((BOS,), "a") + model.score_word(("a",), "b") + model.score_word(("b",), EOS)
        self.assertAlmostEqual(logprob(model, ["a", "b"]), expected)

    def test_perplexity_prefers_seen_order(self):
        """Word order seen in training is less perplexing than its reverse"""
        train = split(["take one tablet"] * 20 + ["take two tablets"] * 20)
        model = estimate_kn(count_ngrams(train, order=3))
        seen = perplexity(model, [["take", "one", "tablet"]])
        reversed_ = perplexity(model, [["tablet", "one", "take"]])
        self.assertGreaterEqual(seen, 1.0)
        self.assertLess(seen, reversed_)

    def test_per_order_discounts(self):
        """One discount per order is accepted"""
        model = estimate_kn(count_ngrams(split(["a b"]), order=2), discount=(0.4, 0.6))
        self.assertEqual(model.discounts, (0.4, 0.6))

    def test_invalid_discounts(self):
        """Discounts must lie in (0,1) and match the order"""
        counts = count_ngrams(split(["a b"]), order=2)
        for discount in (0.0, 1.0, (0.5,)):
            with self.subTest(discount=discount):
                with self.assertRaises(ValidationError):
                    estimate_kn(counts, discount=discount)

    def test_empty_counts(self):
        """There is nothing to estimate from no sentences"""
        with self.assertRaises(ValidationError):
            estimate_kn(count_ngrams([], order=2))

    def test_empty_perplexity(self):
        """Perplexity needs at least one sentence"""
        model = estimate_kn(count_ngrams(split(["a b"]), order=2))
        with self.assertRaises(ValidationError):
            perplexity(model, [])


class TestArpa(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "lm.arpa")
        sentences = split(random_sentences(30, vocabulary(8), seed=9))
        self.model = estimate_kn(count_ngrams(sentences, order=3))

    def tearDown(self):
        self.tmp.cleanup()

    def read(self, path):
        with open(path, encoding="utf-8") as file:
            return file.read()

    def test_layout(self):
        """The data section declares counts and <s> carries the sentinel probability"""
        save_arpa(self.model, self.path)
        text = self.read(self.path)
        self.assertIn("\\data\\\nngram 1=", text)
        self.assertIn("-99.000000\t<s>\t", text)
        self.assertTrue(text.endswith("\\end\\\n"))

    def test_fixed_point(self):
        """Loading and saving again reproduces the file byte for byte"""
        save_arpa(self.model, self.path)
        second = os.path.join(self.tmp.name, "again.arpa")
        save_arpa(load_arpa(self.path), second)
        self.assertEqual(self.read(self.path), self.read(second))

    def test_loaded_scores_match(self):
        """A loaded model scores sentences like the estimated one"""
        save_arpa(self.model, self.path)
        loaded = load_arpa(self.path)
        for sentence in split(random_sentences(10, vocabulary(8) + ["oov"], seed=10)):
            self.assertTrue(math.isclose(logprob(loaded, sentence), logprob(self.model, sentence), abs_tol=1e-4))

    def test_count_mismatch(self):
        """A declared count that disagrees with the section is a parse error"""
        save_arpa(self.model, self.path)
        n_unigrams = sum(1 for gram in self.model.probs if len(gram) == 1)
        text = self.read(self.path).replace(f"ngram 1={n_unigrams}\n", f"ngram 1={n_unigrams + 1}\n")
        with open(self.path, "w", encoding="utf-8") as file:
            file.write(text)
        with self.assertRaises(ParseError):
            load_arpa(self.path)

    def test_missing_end(self):
        """Files must close with the end marker"""
        save_arpa(self.model, self.path)
        text = self.read(self.path).replace("\\end\\\n", "")
        with open(self.path, "w", encoding="utf-8") as file:
            file.write(text)
        with self.assertRaises(ParseError):
            load_arpa(self.path)


if __name__ == "__main__":
    unittest.main()
