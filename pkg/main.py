import argparse
import json
import logging
import os
import sys
from typing import Optional

import corpus as corpora
import evalmetrics
import postedit
import salign
from decoder import DecoderConfig, FeatureWeights, read_outputs, write_outputs
from textprep import tokenize
from translate_api import TranslatorClient
from utils import PipelineConfig, ValidationError, derive_seed, load_config, parse_overrides

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class CliParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for I/O errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _read_text_lines(path: str) -> list:
    with open(path, "r", encoding="utf-8") as file:
        return [line.rstrip("\n") for line in file]


def _load_corpus(config: PipelineConfig) -> corpora.ParallelCorpus:
    if config.corpus_xml:
        return corpora.load_brochure_xml(config.corpus_xml)
    if config.corpus_src and config.corpus_tgt:
        return corpora.load_plaintext(config.corpus_src, config.corpus_tgt)
    raise ValidationError("set corpus_xml, or corpus_src and corpus_tgt")


def _split_paths(output_dir: str, side: str) -> tuple:
    return os.path.join(output_dir, f"{side}.src"), os.path.join(output_dir, f"{side}.tgt")


def cmd_prepare(args, config: PipelineConfig) -> int:
    base = _load_corpus(config)
    cleaned, removals = corpora.clean_duplicates(base.brochures)
    corpora.write_removal_report(removals, os.path.join(config.output_dir, "removed.tsv"))
    variant = args.variant or config.variant
    train, test = evalmetrics.prepare_experiment(variant, cleaned, config.train_fraction, config.seed)
    for name, side in (("train", train), ("test", test)):
        corpora.save_plaintext(side, *_split_paths(config.output_dir, name))
    logger.info(f"Variant {variant}: wrote {len(train)} training and {len(test)} test lines to {config.output_dir}")
    return EXIT_OK


def cmd_salign(args, config: PipelineConfig) -> int:
    src = salign.segment("\n".join(_read_text_lines(args.src)))
    tgt = salign.segment("\n".join(_read_text_lines(args.tgt)))
    result = salign.gale_church_align(src, tgt)
    paths = salign.export(result, src, tgt, args.format, args.out, config.source_lang, config.target_lang)
    logger.info(f"Aligned {len(src)} source and {len(tgt)} target sentences into {len(result.beads)} beads: {paths}")
    return EXIT_OK


def cmd_train(args, config: PipelineConfig) -> int:
    src_path, tgt_path = _split_paths(config.output_dir, "train")
    train = corpora.load_plaintext(args.src or src_path, args.tgt or tgt_path)
    models = evalmetrics.train_models(train, config, config.jobs)
    evalmetrics.save_models(models, config.model_dir)
    return EXIT_OK


def cmd_translate(args, config: PipelineConfig) -> int:
    models = evalmetrics.load_models(config.model_dir, config.max_phrase_len)
    lines = _read_text_lines(args.input)
    outputs = evalmetrics.translate(
        lines, models, FeatureWeights.from_config(config), DecoderConfig.from_config(config), config.jobs
    )
    write_outputs(outputs, args.output, args.report, mark=args.mark_oov)
    logger.info(f"Translated {len(outputs)} lines into {args.output}")
    return EXIT_OK


def cmd_postedit(args, config: PipelineConfig) -> int:
    outputs = read_outputs(args.input, args.report)
    dictionary = (
        postedit.load_dictionary(config.dictionary_path) if config.dictionary_path else postedit.MedicalDictionary()
    )
    stub_map = postedit.load_stub_map(config.stub_map_path) if config.stub_map_path else {}
    client = TranslatorClient.from_config(config, stub_map)
    edited, reports = postedit.post_edit_pipeline(outputs, dictionary, client, config.translator_max_in_flight)
    write_outputs(edited, args.output)
    if args.edit_report:
        postedit.write_postedit_report(reports, args.edit_report)
    return EXIT_OK


def cmd_bleu(args, config: PipelineConfig) -> int:
    candidates = [tokenize(line).tokens for line in _read_text_lines(args.cand)]
    references = [tokenize(line).tokens for line in _read_text_lines(args.ref)]
    report = evalmetrics.bleu(candidates, references)
    print(round(report.score, 2))
    return EXIT_OK


def cmd_experiment(args, config: PipelineConfig) -> int:
    base = _load_corpus(config)
    report = evalmetrics.run_experiment(args.id, base, config, derive_seed(config.seed, f"experiment-{args.id}"))
    out = args.out or os.path.join(config.output_dir, f"experiment-{args.id}.json")
    evalmetrics.save_report(report, out)
    print(json.dumps({"experiment": report.experiment_id, "bleu": round(report.bleu, 2)}))
    return EXIT_OK


def cmd_report(args, config: PipelineConfig) -> int:
    if args.reports:
        reports = [evalmetrics.load_report(path) for path in args.reports]
        evalmetrics.write_experiment_table(reports, args.out)
    if args.pre or args.post or args.ref:
        if not (args.pre and args.post and args.ref):
            raise ValidationError("--pre, --post and --ref go together")
        references = [tokenize(line).tokens for line in _read_text_lines(args.ref)]
        comparison = evalmetrics.compare_pre_post(read_outputs(args.pre), read_outputs(args.post), references)
        evalmetrics.write_pre_post_table([(args.name, comparison)], args.pre_post_out)
    if not args.reports and not args.pre:
        raise ValidationError("nothing to report: pass experiment reports or --pre/--post/--ref")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="flat YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    common.add_argument("--seed", type=int, help="global seed")

    parser = CliParser(prog="smt", description="Phrase-based translation pipeline for English-Kurdish brochures.")
    commands = parser.add_subparsers(dest="command", metavar="command")

    prepare = commands.add_parser("prepare", parents=[common], help="clean, build a corpus variant and split it")
    prepare.add_argument("--variant", type=int, choices=range(1, 8))
    prepare.set_defaults(handler=cmd_prepare)

    align = commands.add_parser("salign", parents=[common], help="sentence-align two documents")
    align.add_argument("--src", required=True)
    align.add_argument("--tgt", required=True)
    align.add_argument("--format", choices=("plaintext-pair", "xml", "tmx"), default="plaintext-pair")
    align.add_argument("--out", required=True, help="output path prefix")
    align.set_defaults(handler=cmd_salign)

    train = commands.add_parser("train", parents=[common], help="train truecasers, alignment, phrase table and LM")
    train.add_argument("--src")
    train.add_argument("--tgt")
    train.set_defaults(handler=cmd_train)

    translate = commands.add_parser("translate", parents=[common], help="decode source lines")
    translate.add_argument("--input", required=True)
    translate.add_argument("--output", required=True)
    translate.add_argument("--report", help="JSON-lines report path")
    translate.add_argument("--mark-oov", action="store_true", help="wrap pass-through tokens in ⟦ ⟧")
    translate.set_defaults(handler=cmd_translate)

    edit = commands.add_parser("postedit", parents=[common], help="replace OOV tokens in translations")
    edit.add_argument("--input", required=True)
    edit.add_argument("--report", help="JSON-lines report written by translate")
    edit.add_argument("--output", required=True)
    edit.add_argument("--edit-report", help="TSV of every replacement")
    edit.set_defaults(handler=cmd_postedit)

    score = commands.add_parser("bleu", parents=[common], help="corpus BLEU of a candidate file")
    score.add_argument("--cand", required=True)
    score.add_argument("--ref", required=True)
    score.set_defaults(handler=cmd_bleu)

    experiment = commands.add_parser("experiment", parents=[common], help="run one numbered experiment end to end")
    experiment.add_argument("id", type=int, choices=range(1, 8))
    experiment.add_argument("--out", help="report JSON path")
    experiment.set_defaults(handler=cmd_experiment)

    report = commands.add_parser("report", parents=[common], help="summarize experiment reports as TSV")
    report.add_argument("reports", nargs="*")
    report.add_argument("--out", default="experiments.tsv")
    report.add_argument("--pre")
    report.add_argument("--post")
    report.add_argument("--ref")
    report.add_argument("--name", default="corpus")
    report.add_argument("--pre-post-out", default="pre-post.tsv")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[list] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID

    try:
        overrides = parse_overrides(args.set)
        if args.jobs is not None:
            overrides["jobs"] = args.jobs
        if args.seed is not None:
            overrides["seed"] = args.seed
        config = load_config(args.config, overrides)
        config.validate()
        return args.handler(args, config)
    except ValidationError as exc:
        logger.error(str(exc))
        return EXIT_INVALID
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
