import contextlib
import dataclasses
import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass, field, fields
from typing import Iterator, Optional

import yaml


class ValidationError(ValueError):
    """A value or file violates a documented contract."""


class ParseError(ValidationError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ""
        if path:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class AlignmentError(ValidationError):
    def __init__(self, src_count: int, tgt_count: int):
        self.src_count = src_count
        self.tgt_count = tgt_count
        super().__init__(
            f"source and target line counts differ: {src_count} vs {tgt_count}"
        )


class CorpusEncodingError(ValidationError):
    def __init__(self, path: str, offset: int):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: invalid UTF-8 at byte offset {offset}")


def derive_seed(global_seed: int, stage: str) -> int:
    """
    Seed for a single pipeline stage, so stages stay reproducible on their own.

    Args:
        global_seed (int): The seed from the pipeline config.
        stage (str): Stage name, e.g. "shuffle" or "undersample".

    Returns:
        int: A 32 bit seed derived from both values.
    """
    hash_object = hashlib.md5(f"{global_seed}:{stage}".encode())
    return int(hash_object.hexdigest()[:8], 16)


@contextlib.contextmanager
def atomic_write(path: str, mode: str = "w") -> Iterator:
    """
    Write to a temp file next to `path` and rename it into place on success.
    A failure leaves any previous file at `path` untouched.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        if "b" in mode:
            handle = os.fdopen(fd, mode)
        else:
            handle = os.fdopen(fd, mode, encoding="utf-8", newline="\n")
        with handle:
            yield handle
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


@dataclass
class PipelineConfig:
    # paths
    corpus_src: str = ""
    corpus_tgt: str = ""
    corpus_xml: str = ""
    model_dir: str = "models"
    output_dir: str = "outputs"
    dictionary_path: str = ""
    stub_map_path: str = ""

    # corpus preparation
    variant: int = 1
    train_fraction: float = 0.9
    granularity: str = "line"
    seed: int = 0

    # preprocessing
    normalize_arabic: bool = True
    min_tokens: int = 1
    max_tokens: int = 80
    max_length_ratio: float = 9.0

    # word alignment
    em_iterations: int = 5
    em_min_prob_floor: float = 1e-12
    em_convergence_epsilon: float = 1e-4
    symmetrization: str = "grow-diag-final-and"
    max_phrase_len: int = 7

    # language model
    lm_order: int = 3
    lm_discount: float = 0.75
    lm_estimate_discounts: bool = False

    # decoder
    beam_size: int = 100
    distortion_limit: int = 6
    table_limit: int = 20
    w_phi_fwd: float = 0.2
    w_phi_bwd: float = 0.2
    w_lex_fwd: float = 0.2
    w_lex_bwd: float = 0.2
    w_lm: float = 0.5
    w_word_penalty: float = -1.0
    w_distortion: float = 0.3

    # post-editing
    translator_mode: str = "offline-stub"
    translator_endpoint: str = "https://translation.googleapis.com/language/translate/v2"
    translator_token_env: str = "TRANSLATOR_API_TOKEN"
    translator_timeout: float = 10.0
    translator_max_in_flight: int = 4
    source_lang: str = "en"
    target_lang: str = "ckb"

    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise ValidationError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.granularity not in ("line", "brochure"):
            raise ValidationError(f"granularity must be line or brochure, got {self.granularity}")
        if self.variant not in range(1, 8):
            raise ValidationError(f"variant must be 1..7, got {self.variant}")
        if self.translator_mode not in ("live", "offline-stub"):
            raise ValidationError(f"translator_mode must be live or offline-stub, got {self.translator_mode}")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        for path_key in ("corpus_src", "corpus_tgt", "corpus_xml", "dictionary_path", "stub_map_path"):
            path = getattr(self, path_key)
            if path and not os.path.exists(path):
                raise ValidationError(f"{path_key} does not exist: {path}")

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        return dataclasses.replace(self, **_coerce(overrides))


def _coerce(values: dict) -> dict:
    types = {f.name: f.type for f in fields(PipelineConfig)}
    coerced = {}
    for key, value in values.items():
        if key not in types:
            raise ValidationError(f"unknown config key: {key}")
        kind = types[key]
        if kind in (bool, "bool"):
            if isinstance(value, str):
                value = value.strip().lower() in ("1", "true", "yes", "on")
            else:
                value = bool(value)
        elif kind in (int, "int", float, "float"):
            try:
                value = int(value) if kind in (int, "int") else float(value)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"config key {key} expects a number, got {value!r}") from exc
        else:
            value = "" if value is None else str(value)
        coerced[key] = value
    return coerced


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """
    Load a flat YAML config file and apply command-line overrides on top.

    Args:
        path (Optional[str]): YAML file holding a flat key-value mapping.
        overrides (Optional[dict]): `--set key=value` pairs, applied last.

    Returns:
        PipelineConfig: The merged config. Not yet validated.
    """
    logger = logging.getLogger(__name__)
    config = PipelineConfig()
    if path:
        with open(path, "r", encoding="utf-8") as file:
            try:
                values = yaml.safe_load(file) or {}
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                raise ParseError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None, path=path) from exc
        if not isinstance(values, dict):
            raise ValidationError(f"{path}: config must be a flat key-value mapping")
        for key, value in values.items():
            if isinstance(value, (dict, list)):
                raise ValidationError(f"{path}: config key {key} must hold a scalar")
        logger.info(f"Loaded {len(values)} config key(s) from {path}")
        config = config.with_overrides(values)
    if overrides:
        config = config.with_overrides(overrides)
    return config


def parse_overrides(pairs: Optional[list]) -> dict:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValidationError(f"override must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides
