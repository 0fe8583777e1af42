import os
import tempfile
import unittest

from corpus import ParallelCorpus, make_brochure
from textprep import (
    CleaningRules,
    TokenizedSentence,
    clean_pairs,
    detokenize,
    load_truecaser,
    normalize_script,
    recase,
    save_truecaser,
    tokenize,
    tokenize_corpus,
    train_truecaser,
    truecase,
)
from utils import ParseError, ValidationError


class TestTokenize(unittest.TestCase):
    def test_example(self):
        """Trailing punctuation becomes its own token"""
        self.assertEqual(tokenize("Take 2 tablets.").tokens, ("Take", "2", "tablets", "."))

    def test_inner_characters_stay(self):
        """Hyphens, apostrophes and decimal points inside a word are kept"""
        self.assertEqual(tokenize("don't take 2.5 mg of x-ray (dye)").tokens,
                         ("don't", "take", "2.5", "mg", "of", "x-ray", "(", "dye", ")"))

    def test_arabic_punctuation(self):
        """Arabic question mark and comma split off Kurdish words"""
        self.assertEqual(tokenize("چۆنی؟ باشم،").tokens, ("چۆنی", "؟", "باشم", "،"))

    def test_concatenation_preserves_characters(self):
        """Joining tokens gives the input with all whitespace removed"""
        for line in ("Take 2 tablets.", "  (a)  b,c  ", "", "...", "«quote»"):
            with self.subTest(line=line):
                self.assertEqual("".join(tokenize(line).tokens), "".join(line.split()))

    def test_idempotent(self):
        """Tokenizing already tokenized text changes nothing"""
        for line in ("Take 2 tablets.", "Store below 25°C (77°F)!", "چۆنی؟ باشم."):
            with self.subTest(line=line):
                once = tokenize(line)
                self.assertEqual(tokenize(str(once)), once)

    def test_tokens_never_hold_whitespace(self):
        """TokenizedSentence rejects empty tokens and tokens with spaces"""
        for tokens in (("a b",), ("",)):
            with self.subTest(tokens=tokens):
                with self.assertRaises(ValidationError):
                    TokenizedSentence(tokens)

    def test_detokenize(self):
        """Closing punctuation attaches to the previous word, opening to the next"""
        self.assertEqual(detokenize(["Take", "(", "2", ")", "tablets", "."]), "Take (2) tablets.")


class TestTruecase(unittest.TestCase):
    def setUp(self):
        self.model = train_truecaser([
            ["The", "dose", "is", "low"],
            ["Take", "the", "dose"],
            ["Ask", "Paris", "the", "question"],
            ["the", "end"],
        ])

    def test_best_form(self):
        """Mid-sentence counts dominate the half-weight sentence-initial one"""
        self.assertEqual(self.model.best_form["the"], "the")
        self.assertEqual(self.model.best_form["paris"], "Paris")

    def test_tie_prefers_smallest_code_point(self):
        """Equal counts pick the form that sorts first"""
        model = train_truecaser([["x", "Abc"], ["y", "abc"]])
        self.assertEqual(model.best_form["abc"], "Abc")

    def test_truecase_first_token_only(self):
        """Only the sentence-initial token is rewritten"""
        result = truecase(["The", "Dose"], self.model)
        self.assertEqual(result.tokens, ("the", "Dose"))
        self.assertTrue(result.was_truecased)

    def test_unknown_first_token_kept(self):
        """A first token the model never saw is left alone"""
        self.assertEqual(truecase(["Zzz", "dose"], self.model).tokens, ("Zzz", "dose"))

    def test_recase(self):
        """Recasing capitalizes a normally lowercase first word but leaves proper nouns"""
        self.assertEqual(recase(["the", "dose"], self.model).tokens, ("The", "dose"))
        self.assertEqual(recase(["Paris", "end"], self.model).tokens, ("Paris", "end"))

    def test_round_trip(self):
        """Truecase then recase restores a sentence that starts with a common word"""
        sentence = ("The", "dose", "is", "low")
        self.assertEqual(recase(truecase(sentence, self.model).tokens, self.model).tokens, sentence)

    def test_empty_corpus(self):
        """Training needs at least one sentence"""
        with self.assertRaises(ValidationError):
            train_truecaser([])

    def test_save_load(self):
        """A saved truecaser loads back with the same best forms"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "truecase.tsv")
            save_truecaser(self.model, path)
            self.assertEqual(load_truecaser(path).best_form, self.model.best_form)

    def test_load_bad_row(self):
        """Rows without three columns report their line number"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "truecase.tsv")
            with open(path, "w", encoding="utf-8") as file:
                file.write("the\tthe\t3\nbroken\n")
            with self.assertRaises(ParseError) as ctx:
                load_truecaser(path)
            self.assertEqual(ctx.exception.line, 2)


class TestNormalizeScript(unittest.TestCase):
    def test_arabic_letters_mapped(self):
        """Arabic yeh and kaf become their Kurdish forms"""
        self.assertEqual(normalize_script("كي"), "کی")

    def test_custom_table(self):
        """A caller-supplied table replaces the default one"""
        self.assertEqual(normalize_script("abc", {"b": "x"}), "axc")


class TestCleaning(unittest.TestCase):
    def corpus(self, texts):
        return ParallelCorpus((make_brochure("b1", "", texts),))

    def test_reasons(self):
        """Each rule counts its own removals"""
        long_side = " ".join(["w"] * 81)
        cleaned, report = clean_pairs(self.corpus([
            ("a b", "c d"),
            ("a", ""),
            (long_side, long_side),
            (" ".join(["w"] * 10), "x"),
        ]))
        self.assertEqual(len(cleaned), 1)
        self.assertEqual(report, {"empty": 1, "too_long": 1, "ratio": 1})

    def test_ratio_at_limit_kept(self):
        """A ratio equal to the limit is allowed"""
        cleaned, report = clean_pairs(self.corpus([(" ".join(["w"] * 9), "x")]))
        self.assertEqual(len(cleaned), 1)
        self.assertFalse(report)

    def test_min_tokens(self):
        """Pairs shorter than min_tokens are too_short"""
        _, report = clean_pairs(self.corpus([("a", "b c")]), CleaningRules(min_tokens=2))
        self.assertEqual(report, {"too_short": 1})

    def test_empty_brochures_dropped(self):
        """A brochure losing every pair disappears"""
        cleaned, _ = clean_pairs(self.corpus([("a", "")]))
        self.assertEqual(cleaned.brochures, ())

    def test_invalid_rules(self):
        """min_tokens must be positive and not above max_tokens"""
        for kwargs in ({"min_tokens": 0}, {"min_tokens": 5, "max_tokens": 4}):
            with self.subTest(**kwargs):
                with self.assertRaises(ValidationError):
                    CleaningRules(**kwargs)

    def test_tokenize_corpus(self):
        """Both sides are tokenized and the target script normalized"""
        tokenized = tokenize_corpus(self.corpus([("Take it.", "كي؟")]))
        self.assertEqual(tokenized.pairs[0].text, ("Take it .", "کی ؟"))


if __name__ == "__main__":
    unittest.main()
