"""Command-line surface: vocabulary building, training, generation,
evaluation, record shuffling, gradient checking, toy-corpus synthesis and
corpus statistics.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Every command that produces artifacts writes a run manifest next to them.
"""

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .data import (ParseError, Vocabulary, FIELD_RESERVED, WORD_RESERVED,
                   build_vocabularies, corpus_stats, make_example,
                   read_box_file, read_corpus, shuffle_records,
                   write_box_file)
from .inference import generate
from .metrics import score_corpus
from .model import GRADCHECK_PRESETS, model_grad_check
from .toydata import make_toy_dataset
from .training import (CheckpointError, ConfigError, TrainConfig,
                       TrainingError, load_checkpoint, train)


class UsageError(Exception):
    """Bad inputs or flags; maps to exit code 2."""


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path, command, config, inputs, outputs, seed=None, wall_time_s=None):
    """Record what produced an artifact: resolved config, paths, seed,
    tool version and timing. Timing lives here so the artifacts themselves
    stay byte-deterministic."""
    manifest = {
        "tool": "structgen",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "created_utc": _utc_now(),
        "wall_time_s": wall_time_s,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _require_files(*paths):
    missing = [str(p) for p in paths if not os.path.exists(p)]
    if missing:
        raise UsageError("missing input file(s): " + ", ".join(missing))


def _worker_threads():
    raw = os.environ.get("STRUCTGEN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"STRUCTGEN_THREADS must be an integer, got {raw!r}")


# ----------------------------------------------------------------- commands

def cmd_build_vocab(args):
    start = time.monotonic()
    if str(args.boxes).endswith(".jsonl"):
        _require_files(args.boxes)
    else:
        if args.sents is None:
            raise UsageError("--sents is required unless --boxes is a .jsonl corpus")
        _require_files(args.boxes, args.sents)
    pairs = read_corpus(args.boxes, args.sents)
    wv, fv = build_vocabularies(pairs, args.word_limit, args.field_min_count)
    os.makedirs(args.out, exist_ok=True)
    wv.save(os.path.join(args.out, "vocab.word"))
    fv.save(os.path.join(args.out, "vocab.field"))
    write_manifest(
        os.path.join(args.out, "manifest.json"), "build-vocab",
        {"word_limit": args.word_limit, "field_min_count": args.field_min_count},
        {"boxes": args.boxes, "sents": args.sents},
        {"vocab_word": os.path.join(args.out, "vocab.word"),
         "vocab_field": os.path.join(args.out, "vocab.field")},
        wall_time_s=time.monotonic() - start)
    print(f"word vocabulary: {len(wv)} entries ({len(WORD_RESERVED)} reserved)")
    print(f"field vocabulary: {len(fv)} entries ({len(FIELD_RESERVED)} reserved)")
    return 0


def _load_config(path, overrides):
    _require_files(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}")
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            data[key] = json.loads(raw)
        except json.JSONDecodeError:
            data[key] = raw
    return TrainConfig.from_dict(data).check()


def _load_split(data_dir, split, word_vocab, field_vocab, pos_cap):
    boxes = os.path.join(data_dir, f"{split}.box")
    sents = os.path.join(data_dir, f"{split}.sent")
    jsonl = os.path.join(data_dir, f"{split}.jsonl")
    if os.path.exists(jsonl):
        pairs = read_corpus(jsonl)
    elif os.path.exists(boxes) and os.path.exists(sents):
        pairs = read_corpus(boxes, sents)
    else:
        return None, None
    examples = [make_example(t, d, word_vocab, field_vocab, pos_cap) for t, d in pairs]
    return pairs, examples


def cmd_train(args):
    start = time.monotonic()
    config = _load_config(args.config, args.set)
    if not os.path.isdir(args.data):
        raise UsageError(f"data directory {args.data} does not exist")

    train_boxes = os.path.join(args.data, "train.box")
    train_sents = os.path.join(args.data, "train.sent")
    train_jsonl = os.path.join(args.data, "train.jsonl")
    if os.path.exists(train_jsonl):
        train_pairs = read_corpus(train_jsonl)
    else:
        _require_files(train_boxes, train_sents)
        train_pairs = read_corpus(train_boxes, train_sents)

    resume_ckpt = None
    if args.resume is not None:
        _require_files(args.resume)
        resume_ckpt = load_checkpoint(args.resume)
        # token ids must keep meaning what they meant when training started
        wv, fv = resume_ckpt.build_vocabs()
    else:
        vocab_word_path = os.path.join(args.data, "vocab.word")
        vocab_field_path = os.path.join(args.data, "vocab.field")
        if os.path.exists(vocab_word_path) and os.path.exists(vocab_field_path):
            wv = Vocabulary.load(vocab_word_path, reserved=WORD_RESERVED)
            fv = Vocabulary.load(vocab_field_path, reserved=FIELD_RESERVED)
        else:
            wv, fv = build_vocabularies(train_pairs, config.word_limit,
                                        config.field_min_count)

    train_examples = [make_example(t, d, wv, fv, config.pos_cap) for t, d in train_pairs]
    _, valid_examples = _load_split(args.data, "valid", wv, fv, config.pos_cap)

    result = train(config, wv, fv, train_examples,
                   valid_examples=valid_examples or (),
                   out_dir=args.out, resume=resume_ckpt,
                   log=None if args.quiet else print)
    write_manifest(
        os.path.join(args.out, "manifest.json"), "train",
        config.to_dict(),
        {"data": args.data, "resume": args.resume},
        {"last": result.last_checkpoint, "best": result.best_checkpoint,
         "metrics": os.path.join(args.out, "metrics.jsonl")},
        seed=config.seed, wall_time_s=time.monotonic() - start)
    final = result.history[-1] if result.history else {}
    print(f"trained {len(result.history)} epoch(s); "
          f"final train_loss={final.get('train_loss', float('nan')):.4f}; "
          f"best epoch {result.best_epoch}")
    return 0


def _attention_dump_record(line_no, result):
    steps = []
    for step in result.trace:
        steps.append({
            "word": [float(v) for v in step.word_weights],
            "field": None if step.field_weights is None
                     else [float(v) for v in step.field_weights],
            "dual": None if step.dual_weights is None
                    else [float(v) for v in step.dual_weights],
        })
    return {"line": line_no, "tokens": result.tokens, "steps": steps}


def cmd_generate(args):
    start = time.monotonic()
    _require_files(args.ckpt, args.boxes)
    model = load_checkpoint(args.ckpt).build_model()
    tables = read_box_file(args.boxes)

    def decode(table):
        return generate(model, table, beam_size=args.beam, max_len=args.max_len,
                        replace_unk=not args.no_unk_replace,
                        length_norm=args.length_norm)

    threads = _worker_threads()
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(decode, tables))
    else:
        results = [decode(t) for t in tables]

    with open(args.out, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(res.text + "\n")
    if args.dump_attention:
        with open(args.dump_attention, "w", encoding="utf-8") as fh:
            for i, res in enumerate(results, start=1):
                fh.write(json.dumps(_attention_dump_record(i, res), sort_keys=True) + "\n")
    write_manifest(
        args.out + ".manifest.json", "generate",
        {"beam": args.beam, "max_len": args.max_len,
         "unk_replace": not args.no_unk_replace, "length_norm": args.length_norm},
        {"ckpt": args.ckpt, "boxes": args.boxes},
        {"sentences": args.out, "attention": args.dump_attention},
        wall_time_s=time.monotonic() - start)
    print(f"generated {len(results)} sentence(s) -> {args.out}")
    return 0


def cmd_evaluate(args):
    _require_files(args.hyp, args.ref)
    from .data import read_sent_file
    hyps = [list(s) for s in read_sent_file(args.hyp)]
    refs = [list(s) for s in read_sent_file(args.ref)]
    if len(hyps) != len(refs):
        raise UsageError(
            f"{args.hyp} has {len(hyps)} sentences but {args.ref} has {len(refs)}")
    report = score_corpus(hyps, refs, config_id=args.label)
    print(report.format())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def cmd_disorder(args):
    start = time.monotonic()
    _require_files(args.boxes)
    tables = read_box_file(args.boxes)
    rng = np.random.default_rng(args.seed)
    shuffled = [shuffle_records(t, rng) for t in tables]
    write_box_file(args.out, shuffled)
    write_manifest(
        args.out + ".manifest.json", "disorder",
        {}, {"boxes": args.boxes}, {"boxes": args.out},
        seed=args.seed, wall_time_s=time.monotonic() - start)
    print(f"shuffled {len(shuffled)} table(s) -> {args.out}")
    return 0


def cmd_gradcheck(args):
    report = model_grad_check(args.dims, seed=args.seed, tol=args.tol)
    print(report.format())
    return 0 if report.ok else 1


def cmd_make_toy(args):
    start = time.monotonic()
    sizes = make_toy_dataset(args.out, args.n, args.seed)
    write_manifest(
        os.path.join(args.out, "manifest.json"), "make-toy",
        {"n": args.n}, {}, {split: f"{split}.box/.sent" for split in sizes},
        seed=args.seed, wall_time_s=time.monotonic() - start)
    print("wrote " + ", ".join(f"{split}: {n} pair(s)" for split, n in sizes.items())
          + f" under {args.out}")
    return 0


def cmd_stats(args):
    _require_files(args.boxes, *([] if args.sents is None else [args.sents]))
    pairs = read_corpus(args.boxes, args.sents)
    stats = corpus_stats(pairs)
    print(stats.format())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(stats.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


# ------------------------------------------------------------------ parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="structgen",
        description="Structure-aware table-to-text generation toolkit.")
    parser.add_argument("--version", action="version", version=f"structgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build word and field vocabularies")
    p.add_argument("--boxes", required=True)
    p.add_argument("--sents", default=None,
                   help="description file; optional for .jsonl corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--word-limit", type=int, default=20000)
    p.add_argument("--field-min-count", type=int, default=100)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value (JSON-parsed)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode tables with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--length-norm", type=float, default=0.0)
    p.add_argument("--dump-attention", default=None)
    p.add_argument("--no-unk-replace", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--label", default="")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("disorder", help="shuffle the records of every table")
    p.add_argument("--boxes", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_disorder)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--dims", choices=sorted(GRADCHECK_PRESETS), default="tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-toy", help="write a synthetic biography corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--boxes", required=True)
    p.add_argument("--sents", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError, ParseError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
