"""``catmt`` command line: harvest, encode/decode, split, analyze, train, translate, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import corpus, vicodec
from .checkpoint import load_checkpoint
from .harvester import (
    DEFAULT_USER_AGENT,
    USER_AGENT_ENV,
    Checkpointer,
    FixtureTransport,
    HarvestConfig,
    HttpTransport,
    harvest,
)
from .inference import DecodeConfig, Translator
from .metrics import evaluate
from .model import ModelConfig
from .tokenizer import MAX_LEN, build_vocab
from .trainer import TrainConfig, make_examples, train

log = logging.getLogger("catmt")

PRESETS = {
    "tiny": dict(d_model=8, h=2, d_k=4, d_v=4, d_ff=16, n_enc_layers=1, n_dec_layers=1, dropout_rate=0.0),
    "small": dict(d_model=64, h=4, d_k=16, d_v=16, d_ff=128, n_enc_layers=1, n_dec_layers=1, dropout_rate=0.0),
    "desk": dict(d_model=128, h=4, d_k=32, d_v=32, d_ff=512, n_enc_layers=2, n_dec_layers=2, dropout_rate=0.1),
    "base": dict(d_model=512, h=8, d_k=64, d_v=64, d_ff=2048, n_enc_layers=6, n_dec_layers=6, dropout_rate=0.1),
}


def _effective(args: argparse.Namespace, **extra) -> None:
    shown = {k: v for k, v in vars(args).items() if k != "func"}
    shown.update(extra)
    print("effective config: " + json.dumps(shown, default=str, ensure_ascii=False, sort_keys=True), file=sys.stderr)


def _read_text(path: str | None) -> str:
    if path in (None, "-"):
        return sys.stdin.read()
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def _write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


# -- subcommands ----------------------------------------------------------------


def cmd_harvest(args) -> int:
    cfg = HarvestConfig(
        target_count=args.target_count,
        max_qid=args.max_qid,
        concurrency=args.concurrency,
        min_request_interval=args.min_interval,
        user_agent=args.user_agent,
        seed=args.seed,
        attempt_budget=args.budget,
        batch_size=args.batch_size,
        source_wiki=args.source_wiki,
        target_wiki=args.target_wiki,
    )
    _effective(args, resolved=asdict(cfg))
    transport = HttpTransport(cfg.user_agent) if args.live else FixtureTransport.from_path(args.fixtures)
    sink = corpus.load(args.out) if args.resume and Path(args.out).exists() else corpus.Dataset()
    ckpt = Checkpointer(args.checkpoint or f"{args.out}.visited", args.out)
    if not args.resume and ckpt.visited_path.exists():
        ckpt.visited_path.unlink()
    result = harvest(cfg, transport, sink, ckpt)
    corpus.save(result.dataset, args.out)
    status = "complete" if result.complete else f"shortfall {result.shortfall}"
    print(f"harvested {len(result.dataset)} pairs in {result.attempts} rounds ({status})", file=sys.stderr)
    return 0 if result.complete or not args.strict else 1


def cmd_encode(args) -> int:
    _effective(args)
    result = vicodec.encode_checked(_read_text(args.input))
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write_text(args.output, result.text)
    return 0


def cmd_decode(args) -> int:
    _effective(args)
    result = vicodec.decode_checked(_read_text(args.input))
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write_text(args.output, result.text)
    return 0


def cmd_table(args) -> int:
    _effective(args)
    _write_text(args.output, vicodec.build_table().to_tsv())
    return 0


def cmd_split(args) -> int:
    spec = corpus.SplitSpec.parse(args.ratios, args.seed)
    _effective(args, resolved_ratios=[str(r) for r in spec.ratios])
    ds = corpus.load(args.input)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    parts = corpus.split(ds, spec)
    for name, part in zip(("train", "val", "test"), parts):
        corpus.save(part, out / f"{name}.jsonl")
    print("split sizes: " + " ".join(f"{n}={len(p)}" for n, p in zip(("train", "val", "test"), parts)), file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    _effective(args)
    stats = corpus.analyze(corpus.load(args.input), args.k)
    print(stats.format_table())
    if args.json:
        Path(args.json).write_text(json.dumps(stats.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
    return 0


def _model_config(args, vocab_src: int, vocab_tgt: int) -> ModelConfig:
    fields = dict(PRESETS[args.preset])
    for name in ("d_model", "h", "d_k", "d_v", "d_ff", "n_enc_layers", "n_dec_layers", "dropout_rate"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    return ModelConfig(vocab_src, vocab_tgt, max_len=args.max_source_length, **fields)


def cmd_train(args) -> int:
    train_ds = corpus.load(args.train)
    val_ds = corpus.load(args.val) if args.val else corpus.Dataset()
    case_sensitive = not args.lowercase

    def targets(ds):
        # lowercase before encoding so capital diacritic letters fold correctly
        return [vicodec.encode(p.target.lower()) if args.lowercase else p.encoded_target for p in ds]

    src_vocab = build_vocab(train_ds.sources(), case_sensitive, args.min_count)
    tgt_vocab = build_vocab(targets(train_ds), case_sensitive, args.min_count)
    model_cfg = _model_config(args, len(src_vocab), len(tgt_vocab))
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        max_source_length=args.max_source_length,
        warmup_steps=args.warmup_steps,
        lr_scale=args.lr_scale,
        seed=args.seed,
        checkpoint_path=args.out,
    )
    _effective(args, model=asdict(model_cfg), training=asdict(train_cfg))
    L = args.max_source_length
    result = train(
        make_examples(train_ds.sources(), targets(train_ds), src_vocab, tgt_vocab, L),
        make_examples(val_ds.sources(), targets(val_ds), src_vocab, tgt_vocab, L),
        model_cfg,
        train_cfg,
        src_vocab,
        tgt_vocab,
    )
    for i, (tr, va) in enumerate(zip(result.train_losses, result.val_losses), start=1):
        if i == 1 or i == len(result.train_losses) or i % max(1, len(result.train_losses) // 10) == 0:
            print(f"epoch {i:4d}  train {tr:.4f}  val {va:.4f}", file=sys.stderr)
    print(f"saved {args.out} (best epoch {result.checkpoint.meta['epoch']}, {result.seconds:.1f}s)", file=sys.stderr)
    return 0


def cmd_translate(args) -> int:
    cfg = DecodeConfig(args.strategy, args.beam_size, args.max_len, args.alpha)
    _effective(args, decode=asdict(cfg))
    translator = Translator(load_checkpoint(args.checkpoint), cfg)
    lines = _read_text(args.input).splitlines()
    fn = translator.translate_encoded if args.encoded else translator.translate
    _write_text(args.output, "".join(fn(line) + "\n" for line in lines))
    return 0


def cmd_evaluate(args) -> int:
    _effective(args)
    report = evaluate(args.hyp, args.ref, args.lowercase)
    print(report.format_table())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catmt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="collect category pairs from Wikidata")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--live", action="store_true", help="query the live Wikidata API")
    src.add_argument("--fixtures", help="JSON file or directory of recorded entities")
    p.add_argument("--out", required=True)
    p.add_argument("--target-count", type=int, default=15000)
    p.add_argument("--max-qid", type=int, default=130_000_000)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--min-interval", type=float, default=1.0, help="seconds between requests")
    p.add_argument("--user-agent", default=os.environ.get(USER_AGENT_ENV, DEFAULT_USER_AGENT))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--budget", type=int, default=100_000, help="maximum sampling rounds")
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--source-wiki", default="enwiki")
    p.add_argument("--target-wiki", default="viwiki")
    p.add_argument("--checkpoint", help="visited Q-id log (default: <out>.visited)")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--strict", action="store_true", help="exit 1 on shortfall")
    p.set_defaults(func=cmd_harvest)

    for name, func, help_ in (("encode", cmd_encode, "Vietnamese text to @-codes"), ("decode", cmd_decode, "@-codes back to Vietnamese")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("-i", "--input", help="input file (default stdin)")
        p.add_argument("-o", "--output", help="output file (default stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("table", help="print the diacritic table")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("split", help="shuffle and split a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, default=corpus.DEFAULT_SEED)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("analyze", help="lengths, vocabulary sizes, frequent and rare words")
    p.add_argument("--input", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--json", help="also write the statistics as JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train a Transformer from scratch")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--max-source-length", type=int, default=MAX_LEN)
    p.add_argument("--warmup-steps", type=int, default=400)
    p.add_argument("--lr-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    for flag, typ in (("--d-model", int), ("--h", int), ("--d-k", int), ("--d-v", int), ("--d-ff", int),
                      ("--n-enc-layers", int), ("--n-dec-layers", int), ("--dropout-rate", float)):
        p.add_argument(flag, type=typ, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate one source per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output")
    p.add_argument("--strategy", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--max-len", type=int, default=MAX_LEN)
    p.add_argument("--encoded", action="store_true", help="emit @-encoded targets")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="ROUGE-L, BLEU and METEOR of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"catmt: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
