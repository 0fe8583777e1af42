import os
import tempfile
import unittest

from utils import (
    AlignmentError,
    CorpusEncodingError,
    ParseError,
    PipelineConfig,
    ValidationError,
    atomic_write,
    derive_seed,
    load_config,
    parse_overrides,
)


class TestSeeds(unittest.TestCase):
    def test_derive_seed_is_stable(self):
        """The same global seed and stage always give the same seed"""
        self.assertEqual(derive_seed(0, "shuffle"), derive_seed(0, "shuffle"))

    def test_derive_seed_separates_stages(self):
        """Different stages or global seeds give different 32 bit seeds"""
        seeds = {derive_seed(0, "shuffle"), derive_seed(0, "undersample"), derive_seed(1, "shuffle")}
        self.assertEqual(len(seeds), 3)
        for seed in seeds:
            self.assertLess(seed, 2**32)


class TestAtomicWrite(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "out.txt")

    def tearDown(self):
        self.tmp.cleanup()

    def test_writes_file(self):
        """Content appears at the target path once the block exits"""
        with atomic_write(self.path) as file:
            file.write("ژەم\n")
        with open(self.path, encoding="utf-8") as file:
            self.assertEqual(file.read(), "ژەم\n")

    def test_failure_keeps_previous_file(self):
        """An exception inside the block leaves the old file and no temp files"""
        with open(self.path, "w", encoding="utf-8") as file:
            file.write("old")
        with self.assertRaises(RuntimeError):
            with atomic_write(self.path) as file:
                file.write("new")
                raise RuntimeError("boom")
        with open(self.path, encoding="utf-8") as file:
            self.assertEqual(file.read(), "old")
        self.assertEqual(os.listdir(self.tmp.name), ["out.txt"])

    def test_creates_directories(self):
        """Missing parent directories are created"""
        nested = os.path.join(self.tmp.name, "a", "b", "out.txt")
        with atomic_write(nested) as file:
            file.write("x")
        self.assertTrue(os.path.exists(nested))


class TestConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "config.yaml")

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        with open(self.path, "w", encoding="utf-8") as file:
            file.write(text)

    def test_defaults(self):
        """Without a file every key keeps its default"""
        config = load_config()
        self.assertEqual(config.beam_size, 100)
        self.assertEqual(config.translator_mode, "offline-stub")

    def test_file_then_overrides(self):
        """Command-line overrides win over the file and are coerced to the field type"""
        self.write("beam_size: 20\nlm_discount: 0.5\nnormalize_arabic: false\n")
        config = load_config(self.path, parse_overrides(["beam_size=7", "granularity = brochure"]))
        self.assertEqual(config.beam_size, 7)
        self.assertEqual(config.lm_discount, 0.5)
        self.assertFalse(config.normalize_arabic)
        self.assertEqual(config.granularity, "brochure")

    def test_bool_strings(self):
        """Boolean keys accept the usual spellings"""
        config = load_config(overrides={"lm_estimate_discounts": "yes"})
        self.assertTrue(config.lm_estimate_discounts)

    def test_rejected_values(self):
        """Unknown keys, non-numbers and nested values are validation errors"""
        with self.assertRaises(ValidationError):
            load_config(overrides={"beam_width": "5"})
        with self.assertRaises(ValidationError):
            load_config(overrides={"beam_size": "many"})
        self.write("beam_size:\n  nested: 1\n")
        with self.assertRaises(ValidationError):
            load_config(self.path)

    def test_invalid_yaml_reports_line(self):
        """YAML syntax errors become parse errors with a line number"""
        self.write("beam_size: 5\nseed: [1, 2\n")
        with self.assertRaises(ParseError) as ctx:
            load_config(self.path)
        self.assertIsNotNone(ctx.exception.line)

    def test_parse_overrides(self):
        """Overrides must look like key=value"""
        self.assertEqual(parse_overrides(["a=b=c"]), {"a": "b=c"})
        with self.assertRaises(ValidationError):
            parse_overrides(["novalue"])

    def test_validate(self):
        """Out-of-range settings and missing paths are rejected"""
        cases = [
            {"train_fraction": 1.0},
            {"granularity": "page"},
            {"variant": 8},
            {"translator_mode": "psychic"},
            {"jobs": 0},
            {"dictionary_path": os.path.join(self.tmp.name, "missing.tsv")},
        ]
        for overrides in cases:
            with self.subTest(**overrides):
                with self.assertRaises(ValidationError):
                    PipelineConfig().with_overrides(overrides).validate()
        PipelineConfig(jobs=1).validate()


class TestErrors(unittest.TestCase):
    def test_parse_error_location(self):
        """Parse errors carry their path and line"""
        error = ParseError("bad row", line=3, path="table.txt")
        self.assertEqual((error.path, error.line), ("table.txt", 3))
        self.assertIn("table.txt:3:", str(error))
        self.assertIsInstance(error, ValidationError)

    def test_alignment_error_counts(self):
        """Line-count mismatches report both sides"""
        error = AlignmentError(10, 9)
        self.assertEqual((error.src_count, error.tgt_count), (10, 9))
        self.assertIn("10 vs 9", str(error))

    def test_encoding_error_offset(self):
        """Encoding errors name the byte offset"""
        error = CorpusEncodingError("corpus.src", 17)
        self.assertEqual(error.offset, 17)
        self.assertIn("17", str(error))


if __name__ == "__main__":
    unittest.main()
