#!/usr/bin/env python3
"""
CLI entry point for the attention encoder-decoder recognizer.

Usage:
    python3 main.py gen-data --preset ci_toy --set paths.run_dir=runs/toy
    python3 main.py train --config runs/toy/configs/train.yaml --verbose
    python3 main.py decode --preset ci_toy --beam 1 --no-lm
    python3 main.py count-params --model-preset swb300
    python3 main.py ablate --preset ci_toy --off specaugment --off tempo_perturbation
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from config.settings import get_default_workers, load_run_config, model_preset
from orchestration.ablation import run_ablation
from orchestration.errors import ConfigError, DataError
from orchestration.workflow import (
    count_params,
    decode,
    generate_data,
    prepare_data,
    score,
    sweep,
    train_bpe_model,
    train_language_model,
    train_model,
)
from scoring import format_summary

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run config YAML (sections of key: value pairs)")
    common.add_argument("--preset", help="Bundled run preset (e.g. ci_toy, desk_toy)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override a config key")
    common.add_argument("--workers", type=int, default=None, help="Worker threads (default: ASR_WORKERS or 1)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Single-headed attention LSTM encoder-decoder speech recognizer")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("gen-data", parents=[common], help="Generate the synthetic corpus")
    prep = commands.add_parser("prep", parents=[common], help="Filter transcripts and compute CMVN statistics")
    prep.add_argument("--filter", dest="filter_preset", help="Transcript filter preset (none, dup, noise, noise_dup, frag_noise, frag_noise_dup)")
    commands.add_parser("train-bpe", parents=[common], help="Train the BPE model")
    commands.add_parser("train", parents=[common], help="Train the encoder-decoder")
    commands.add_parser("train-lm", parents=[common], help="Train the external LM")

    dec = commands.add_parser("decode", parents=[common], help="Beam search a split")
    dec.add_argument("--split", default="test")
    dec.add_argument("--beam", type=int, default=None, help="Beam width (overrides fusion.beam_width)")
    dec.add_argument("--greedy", action="store_true", help="Argmax decoding (beam 1, no LM)")
    dec.add_argument("--no-lm", action="store_true", help="Decode without the external LM")
    dec.add_argument("--export-attention", action="store_true", help="Write the best hypothesis' attention as CSV")

    sc = commands.add_parser("score", parents=[common], help="Score hypotheses against references")
    sc.add_argument("--split", default="test")
    sc.add_argument("--hyp", default=None, help="Hypothesis file (default: the split's decode output)")

    sw = commands.add_parser("sweep-beam", parents=[common], help="WER over beam widths")
    sw.add_argument("--split", default="test")
    sw.add_argument("--beams", type=int, nargs="+", default=[1, 2, 4, 8, 16])

    cp = commands.add_parser("count-params", parents=[common], help="Closed-form parameter count")
    cp.add_argument("--model-preset", default=None, help="Bundled architecture (swb300, size_28m, ...)")

    ab = commands.add_parser("ablate", parents=[common], help="Baseline plus single-ingredient-off runs")
    ab.add_argument("--off", action="append", default=[], help="Ingredient to disable (repeatable; all when omitted)")
    ab.add_argument("--split", default="test")
    return parser


def run(args: argparse.Namespace) -> None:
    overrides = list(args.overrides)
    if args.command == "prep" and args.filter_preset:
        overrides.append(f"text.preset={args.filter_preset}")
    config = load_run_config(args.config, overrides, args.preset)
    workers = args.workers if args.workers is not None else get_default_workers()
    if workers < 1:
        raise ConfigError(f"--workers must be ≥ 1, got {workers}")

    if args.command == "gen-data":
        manifests = generate_data(config, workers)
        print(f"Wrote {', '.join(str(p) for p in manifests.values())}")
    elif args.command == "prep":
        print(f"Wrote {prepare_data(config)}")
    elif args.command == "train-bpe":
        print(f"BPE inventory: {train_bpe_model(config).vocab_size} units")
    elif args.command == "train":
        records = train_model(config)
        print(f"Trained {len(records)} epochs; final loss {records[-1].train_loss:.4f}")
    elif args.command == "train-lm":
        lm_records = train_language_model(config)
        print(f"Trained LM for {len(lm_records)} epochs")
    elif args.command == "decode":
        decoded = decode(config, args.split, args.greedy, args.beam, args.no_lm, args.export_attention, workers=workers)
        print(f"Decoded {len(decoded)} utterances")
    elif args.command == "score":
        print(format_summary(score(config, args.split, args.hyp, workers=workers)), end="")
    elif args.command == "sweep-beam":
        print(f"{'beam':>6} {'no LM':>8} {'LM':>8} {'LM x-utt':>9}")
        for row in sweep(config, args.beams, args.split, workers):
            cells = ["-" if v is None else f"{100 * v:.2f}" for v in (row.wer_lm, row.wer_lm_xutt)]
            print(f"{row.beam:>6} {100 * row.wer_nolm:>8.2f} {cells[0]:>8} {cells[1]:>9}")
    elif args.command == "count-params":
        model = model_preset(args.model_preset) if args.model_preset else config.model
        count = count_params(model)
        millions = count.millions()
        print("=" * 80)
        print("PARAMETER COUNT")
        print("=" * 80)
        print(f"Encoder: {count.encoder:>12,} ({millions['encoder']:.1f}M)")
        print(f"Decoder: {count.decoder:>12,} ({millions['decoder']:.1f}M)")
        print(f"Total:   {count.total:>12,} ({millions['total']:.1f}M)")
    elif args.command == "ablate":
        print(f"{'ingredient':<20} {'token err':>10} {'WER':>8} {'errors':>7}")
        for row in run_ablation(config, args.off, args.split, workers):
            print(f"{row.ingredient:<20} {100 * row.token_error:>10.2f} {100 * row.wer:>8.2f} {row.errors:>7}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the CLI; returns the process exit code."""
    args = build_parser().parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format='[%(levelname)s] %(message)s',
        stream=sys.stderr
    )

    try:
        run(args)
    except ArithmeticError as e:
        print(f"\n❌ Numeric Failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as e:
        print(f"\n❌ Data Error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"\n❌ Configuration Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"\n❌ Unexpected Error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
