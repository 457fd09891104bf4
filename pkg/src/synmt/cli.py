"""``synmt`` command line: preprocess, train, translate, align, evaluate, analyze.

Exit status is 0 on success, 2 for configuration errors and 1 for data
errors.  Every command prints its resolved configuration to stderr first.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import config as config_mod
from . import pipeline as pl
from .corpus import AlignmentMismatch, VARIANTS
from .evaluation import DiagnosticReport, aer, bleu, parse_pharaoh
from .inference import translate
from .toy import write_bundled
from .training import CheckpointWriteError
from .treebank import TreeParseError, build_mixed, linearize, parse_bracketed

logger = logging.getLogger("synmt")

SPLITS = ("train", "dev", "test")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="seed for every random choice (default 1)")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--beam", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-q", "--quiet", action="store_true", help="do not echo the resolved config")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synmt", description="Attentional NMT with source-syntax encoders.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    sub.add_parser("preprocess", parents=[common], help="build vocabularies and numericalized training pairs")
    sub.add_parser("train", parents=[common], help="train a model; checkpoints land in --out")

    for name, helptext in (("translate", "beam-translate a split"), ("align", "forced-decode a split into alignments")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--checkpoint", metavar="PATH", help="default: OUT/best.ckpt")
        p.add_argument("--split", choices=SPLITS, default="test")

    p = sub.add_parser("evaluate", parents=[common], help="BLEU against references, AER against gold links")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--hyp", metavar="PATH", help="default: OUT/SPLIT.hyp.txt")
    p.add_argument("--forced-align", metavar="PATH", help="default: OUT/SPLIT.forced.align if present")

    p = sub.add_parser("analyze", parents=[common], help="length buckets, continuity, over translation, rare words")
    p.add_argument("--checkpoint", metavar="PATH", help="default: OUT/best.ckpt")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--hyp", metavar="PATH", help="default: OUT/SPLIT.hyp.txt")
    p.add_argument("--hyp-align", metavar="PATH", help="default: OUT/SPLIT.hyp.align")
    p.add_argument("--forced-align", metavar="PATH", help="default: OUT/SPLIT.forced.align if present")

    p = sub.add_parser("inspect-tree", help="show a tree's label sequence and mixed sequence")
    p.add_argument("tree", nargs="?", help="bracketed tree; omit to read lines from --file or stdin")
    p.add_argument("--file", metavar="PATH")

    p = sub.add_parser("make-toy", help="write the synthetic toy and probe corpora")
    p.add_argument("--out", metavar="DIR", required=True)
    return parser


def resolve_config(args) -> config_mod.RunConfig:
    overrides = {k: getattr(args, k, None) for k in ("seed", "variant", "beam", "epochs", "out")}
    cfg = config_mod.load(args.config, overrides)
    if not args.quiet:
        print("resolved config:", cfg.to_json(), file=sys.stderr, sep="\n")
    return cfg


def _split(cfg, name: str):
    return getattr(cfg, name)


def _checkpoint_path(cfg, args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    out = Path(cfg.out)
    best = out / "best.ckpt"
    return best if best.exists() else out / "last.ckpt"


def cmd_preprocess(cfg, args) -> None:
    corpus = pl.load_corpus(cfg.train, need_trees=cfg.variant != "baseline", name="train")
    vocabs = pl.build_vocabs(cfg, corpus)
    examples = pl.training_examples(cfg, corpus, vocabs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, v in vocabs.as_dict().items():
        if v is not None:
            v.save(out / f"{name}.vocab")
    with open(out / "train.examples.jsonl", "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({k: v for k, v in ex.__dict__.items() if v is not None}, sort_keys=True) + "\n")
    print(f"{len(examples)} of {len(corpus)} pairs kept; vocab src={len(vocabs.src)} tgt={len(vocabs.tgt)}")


def cmd_train(cfg, args) -> None:
    corpus = pl.load_corpus(cfg.train, need_trees=cfg.variant != "baseline", name="train")
    dev = None
    if cfg.dev.src is not None:
        dev = pl.load_corpus(cfg.dev, need_trees=cfg.variant != "baseline", name="dev")
    pl.fit(cfg, corpus, dev, out_dir=cfg.out, progress=sys.stdout)


def cmd_translate(cfg, args) -> None:
    params, vocabs, _ = pl.load_model(_checkpoint_path(cfg, args))
    variant = params.config.variant
    corpus = pl.load_corpus(_split(cfg, args.split), need_trees=variant != "baseline", need_target=False, name=args.split)
    examples = pl.decoding_examples(variant, corpus, vocabs)
    results = translate(params, examples, vocabs.tgt.itos, beam=cfg.beam)
    txt, aln = pl.write_translations(results, Path(cfg.out) / f"{args.split}.hyp")
    print(f"wrote {txt} and {aln}")


def cmd_align(cfg, args) -> None:
    params, vocabs, _ = pl.load_model(_checkpoint_path(cfg, args))
    variant = params.config.variant
    corpus = pl.load_corpus(_split(cfg, args.split), need_trees=variant != "baseline", name=args.split)
    examples = pl.decoding_examples(variant, corpus, vocabs, with_target=True)
    links = pl.forced_alignments(params, examples)
    path = Path(cfg.out) / f"{args.split}.forced.align"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(" ".join(f"{s}-{t}" for s, t in sorted(l)) + "\n" for l in links), encoding="utf-8")
    print(f"wrote {path}")


def _default(path_arg, out: Path, name: str, required: bool = True) -> Path | None:
    path = Path(path_arg) if path_arg else out / name
    if not path.exists():
        if required or path_arg:
            raise pl.DataError(f"{path}: file not found")
        return None
    return path


def cmd_evaluate(cfg, args) -> None:
    out = Path(cfg.out)
    corpus = pl.load_corpus(_split(cfg, args.split), need_trees=False, name=args.split)
    hyps = [l.split() for l in pl.read_lines(_default(args.hyp, out, f"{args.split}.hyp.txt"))]
    if len(hyps) != len(corpus):
        raise pl.DataError(f"{len(hyps)} hypotheses for {len(corpus)} references")
    result = {"bleu": bleu(hyps, [[t.split()] for t in corpus.tgt])}
    forced = _default(args.forced_align, out, f"{args.split}.forced.align", required=False)
    if forced is not None and corpus.gold is not None:
        result["aer"] = aer([parse_pharaoh(l) for l in pl.read_lines(forced)], corpus.gold)
    print(json.dumps(result, sort_keys=True))


def cmd_analyze(cfg, args) -> None:
    out = Path(cfg.out)
    _, vocabs, _ = pl.load_model(_checkpoint_path(cfg, args))
    corpus = pl.load_corpus(_split(cfg, args.split), need_trees=True, name=args.split)
    hyps = [l.split() for l in pl.read_lines(_default(args.hyp, out, f"{args.split}.hyp.txt"))]
    links = [parse_pharaoh(l) for l in pl.read_lines(_default(args.hyp_align, out, f"{args.split}.hyp.align"))]
    forced_path = _default(args.forced_align, out, f"{args.split}.forced.align", required=False)
    forced = [parse_pharaoh(l) for l in pl.read_lines(forced_path)] if forced_path else None
    report: DiagnosticReport = pl.analyze(cfg, corpus, hyps, links, vocabs, forced)
    (out / f"{args.split}.report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / f"{args.split}.report.txt").write_text(report.table() + "\n", encoding="utf-8")
    print(report.table())


def cmd_inspect_tree(args) -> None:
    if args.tree:
        lines = [args.tree]
    elif args.file:
        lines = pl.read_lines(args.file)
    else:
        lines = sys.stdin.read().splitlines()
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            tree = parse_bracketed(line)
        except TreeParseError as e:
            raise pl.DataError(f"line {n}: {e}") from None
        lin = linearize(tree)
        mixed = build_mixed(tree)
        print("words:         " + " ".join(lin.words))
        print("labels:        " + " ".join(lin.labels))
        print("word->label:   " + " ".join(f"{i}->{j}" for i, j in enumerate(lin.word_to_label)))
        print(f"mixed ({len(mixed.tokens)}):    " + " ".join(mixed.tokens))
        print("word positions: " + " ".join(map(str, mixed.word_positions)))


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "translate": cmd_translate,
    "align": cmd_align,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(1):
            if args.command == "inspect-tree":
                cmd_inspect_tree(args)
            elif args.command == "make-toy":
                write_bundled(args.out)
                print(f"wrote toy and probe corpora under {args.out}")
            else:
                cfg = resolve_config(args)
                COMMANDS[args.command](cfg, args)
    except config_mod.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (pl.DataError, AlignmentMismatch, TreeParseError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 1
    except (ValueError, CheckpointWriteError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
