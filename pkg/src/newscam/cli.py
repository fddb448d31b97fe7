"""Command-line entry point.

Every command accepts ``--config FILE`` (flat ``key=value`` lines; flags on
the command line win) and writes a manifest of its resolved settings next to
its output. ``newscam rerun MANIFEST`` repeats a run from such a manifest.

Exit status: 0 success, 1 usage error, 2 data or resource error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import interpret, tfidf
from .classifier import EPOCHS, WEIGHT_DECAYS, LinearHead, TrainConfig, config_dict, linear_evaluate, logits
from .embeddings import EmbeddingTable, embed_sequence, load_embeddings, save_embeddings
from .encoder import EncoderConfig, forward, load_weights
from .pipeline import BertBackend, StaticBackend, TfidfBackend
from .tokenization import WordPieceVocab, encode, encoded_tokens, wordpiece_tokenize

logger = logging.getLogger("newscam")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class ResourceError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- config files and manifests -------------------------------------------

def read_config(path) -> dict[str, str]:
    """Parse flat ``key=value`` lines; ``#`` starts a comment line."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def write_manifest(path, command: str, args: argparse.Namespace):
    values = {k: v for k, v in sorted(vars(args).items())
              if k not in ("command", "config", "func", "verbose") and v is not None}
    lines = [f"command={command}"] + [f"{k}={_format_value(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _float_list(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _int_list(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


# --- resource loading ------------------------------------------------------

def _need(args, name, hint):
    value = getattr(args, name)
    if value is None:
        raise ResourceError(f"--{name.replace('_', '-')} is required: {hint}")
    if not Path(value).exists():
        raise ResourceError(f"{value}: file not found ({hint})")
    return value


def _vocab(args) -> WordPieceVocab:
    return WordPieceVocab.load(_need(args, "vocab", "a WordPiece vocab file, one token per line"))


def _encoder(args):
    weights_path = _need(args, "weights", "a float32 tensor archive; see README 'Encoder weights'")
    if args.encoder_config:
        config = EncoderConfig.load(_need(args, "encoder_config", "encoder geometry JSON"))
    else:
        config = EncoderConfig.infer(weights_path, num_heads=args.num_heads)
    dtype = np.float32 if args.float32 else np.float64
    return load_weights(weights_path, config, dtype=dtype)


def build_backend(args):
    if args.backend == "tfidf":
        return TfidfBackend(tfidf.TfidfConfig(args.max_features, args.ngram, args.stopwords))
    if args.backend == "static":
        path = _need(args, "embeddings", "a text embedding file ('count dim' header optional)")
        table = load_embeddings(path, dtype=np.float32 if args.float32 else np.float64)
        vocab = _vocab(args) if args.tokenizer == "wordpiece" else None
        return StaticBackend(table, vocab, lowercase=args.lowercase)
    if args.backend == "bert":
        return BertBackend(_encoder(args), _vocab(args), args.max_length, workers=args.workers)
    raise UsageError(f"unknown backend {args.backend!r}")


TABLE_ROW = {
    "tfidf": ("TF-IDF", "Z_TF-IDF"),
    "static": ("static word embedding", "Z'"),
    "bert": ("BERT (all embs. + encoder)", "Z'_B"),
}


def _backend_info(args, backend) -> dict:
    info = {"backend": args.backend}
    if args.backend == "tfidf":
        info.update(ngram=args.ngram, stopword_removal=args.stopwords,
                    max_features=args.max_features,
                    feature_selection="most frequent terms by training-set count")
    elif args.backend == "static":
        info.update(embeddings=args.embeddings, tokenizer=args.tokenizer,
                    lowercase=args.lowercase, oov_policy="skip")
    else:
        info.update(weights=args.weights, max_length=args.max_length,
                    pooling="mean over content tokens ([CLS]/[SEP]/[PAD] excluded)")
    return info


# --- commands --------------------------------------------------------------

def cmd_prepare(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    real = _need(args, "real_csv", "CSV of real articles with a 'text' column")
    fake = _need(args, "fake_csv", "CSV of fake articles with a 'text' column")
    corpus = corpus_mod.load_real_fake(real, fake)
    sc = corpus_mod.split(corpus, args.fraction, args.seed)
    counts = corpus_mod.class_counts(corpus)
    corpus_mod.write_manifest(
        sc, out_dir / "split.json",
        real_csv=os.path.relpath(Path(real).resolve(), out_dir.resolve()),
        fake_csv=os.path.relpath(Path(fake).resolve(), out_dir.resolve()),
        label_mapping={str(corpus_mod.REAL): "real", str(corpus_mod.FAKE): "fake"},
        class_counts={str(k): v for k, v in counts.items()},
        dropped_documents=corpus.dropped,
    )
    write_manifest(out_dir / "prepare.manifest", "prepare", args)
    print(f"{len(corpus)} documents (real={counts.get(1, 0)}, fake={counts.get(0, 0)}, "
          f"dropped={corpus.dropped}) -> train {len(sc.train)} / test {len(sc.test)}")


def _representations(args):
    sc, manifest = corpus_mod.load_split(_need(args, "split", "run 'newscam prepare' first"))
    backend = build_backend(args)
    backend.fit(sc.train.texts)
    Z_train = backend.represent(sc.train.texts)
    Z_test = backend.represent(sc.test.texts)
    return sc, manifest, backend, Z_train, Z_test


def cmd_linear_eval(args):
    sc, manifest, backend, Z_train, Z_test = _representations(args)
    base = TrainConfig(lr=args.lr, batch_size=args.batch_size, seed=args.seed)
    report = linear_evaluate(Z_train, sc.train.labels, Z_test, sc.test.labels, base,
                             weight_decays=args.weight_decays, epochs=args.epochs,
                             selection=args.selection)
    vectorizer, notation = TABLE_ROW[args.backend]
    info = _backend_info(args, backend)
    result = {
        "row": {
            "vectorizer": vectorizer,
            "notation": notation,
            "ngram_type": {1: "unigram", 2: "bi-gram"}[args.ngram] if args.backend == "tfidf" else None,
            "stop_word_removal": args.stopwords if args.backend == "tfidf" else False,
            "dimension": int(Z_train.shape[1]),
            "test_accuracy": report.best.metrics.test_accuracy,
        },
        "backend": info,
        "representation_stats": backend.stats.to_json(),
        "train_config": config_dict(base),
        "n_train": len(sc.train),
        "n_test": len(sc.test),
        "label_mapping": manifest.get("label_mapping"),
        **report.to_json(),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=1) + "\n", encoding="utf-8")
    if args.head_out:
        cfg = config_dict(base)
        cfg.update(weight_decay=report.best.weight_decay, epochs=report.best.epochs)
        report.best.head.save(args.head_out, config=cfg, seed=args.seed, backend=info)
    write_manifest(str(out) + ".manifest", "linear-eval", args)
    print(f"{vectorizer} [{notation}] dim={Z_train.shape[1]}: best test accuracy "
          f"{report.best.metrics.test_accuracy:.4f} (weight_decay={report.best.weight_decay}, "
          f"epochs={report.best.epochs})")


def _load_head(args) -> LinearHead:
    path = args.head
    if path is None or not Path(path).exists():
        raise ResourceError("no trained head: run 'newscam linear-eval ... --head-out HEAD.json' "
                            "and pass it with --head")
    return LinearHead.load(path)


def _input_text(args) -> str:
    if args.text is not None:
        return args.text
    if args.input_file is not None:
        return Path(args.input_file).read_text(encoding="utf-8")
    raise UsageError("give --text or --input-file")


def cmd_cam(args):
    head = _load_head(args)
    text = _input_text(args)
    if args.backend not in ("bert", "static"):
        raise UsageError("CAM needs a token-level backend: bert or static")
    backend = build_backend(args)
    m = backend.token_matrix(text)
    if m.rows.shape[1] != head.dim:
        raise ResourceError(f"head dim {head.dim} does not match backend dim {m.rows.shape[1]}")
    mask = np.asarray(m.mask, dtype=bool)
    pooled = m.rows[mask].mean(axis=0) if mask.any() else np.zeros(head.dim)
    y = logits(head, pooled)
    predicted = int(np.argmax(y))
    c = predicted if args.cls is None else args.cls
    scores = interpret.cam(m.rows, head, c, mask=mask, tokens=m.tokens)
    hl = interpret.highlight(scores, args.fraction)
    rendered = interpret.render(hl, args.format)
    result = {
        "tokens": list(scores.tokens),
        "scores": [float(s) for s in scores.scores],
        "flags": list(hl.flags),
        "class": c,
        "class_source": "predicted" if args.cls is None else "flag",
        "predicted": predicted,
        "logits": [float(v) for v in y],
        "fraction": args.fraction,
        "token_unit": "wordpiece content tokens" if args.backend == "bert"
                      else f"{args.tokenizer} tokens (out-of-vocabulary skipped)",
        "rendering": rendered,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=1) + "\n", encoding="utf-8")
    write_manifest(str(out) + ".manifest", "cam", args)
    print(rendered)


def cmd_pca(args):
    sc, _, backend, _, Z_test = _representations(args)
    model = interpret.pca_fit(Z_test)
    points = interpret.pca_project(model, Z_test)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(interpret.pca_csv(points, sc.test.labels), encoding="utf-8")
    write_manifest(str(out) + ".manifest", "pca", args)
    print(f"{len(points)} test points; eigenvalues {model.eigenvalues[0]:.6g}, "
          f"{model.eigenvalues[1]:.6g}")


def cmd_corr(args):
    text = _input_text(args)
    vocab = _vocab(args)
    weights = _encoder(args)
    pieces = wordpiece_tokenize(text, vocab)
    enc = encode(pieces, vocab, args.max_length)
    tokens = encoded_tokens(enc, vocab)[1:-1]
    contextual = forward(enc, weights).rows[1:-1]
    if args.embeddings:
        table = load_embeddings(_need(args, "embeddings", "word-embedding table"))
    else:
        table = EmbeddingTable(vocab.tokens, np.asarray(weights.word, dtype=np.float64))
    static = embed_sequence(tokens, table)
    if len(tokens) < 2 or len(static.rows) < 2:
        raise ResourceError("need at least two tokens to correlate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    zs = interpret.correlation_matrix(static.rows, static.tokens)
    zb = interpret.correlation_matrix(contextual, tokens)
    (out / "corr_static.csv").write_text(interpret.correlation_csv(zs), encoding="utf-8")
    (out / "corr_encoder.csv").write_text(interpret.correlation_csv(zb), encoding="utf-8")
    write_manifest(out / "corr.manifest", "corr", args)
    print(f"{len(tokens)} tokens -> {out / 'corr_static.csv'}, {out / 'corr_encoder.csv'}")


def cmd_extract(args):
    vocab = _vocab(args)
    weights = _encoder(args)
    if len(vocab) != weights.config.vocab_size:
        raise ResourceError(f"vocab has {len(vocab)} tokens but the archive has "
                            f"{weights.config.vocab_size} word embeddings")
    table = EmbeddingTable(vocab.tokens, np.asarray(weights.word, dtype=np.float64))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_embeddings(table, out)
    write_manifest(str(out) + ".manifest", "extract-word-embeddings", args)
    print(f"wrote {len(table)} x {table.dim} table to {out}")


# --- parser ----------------------------------------------------------------

def _add_backend_args(p, backends=("tfidf", "static", "bert")):
    p.add_argument("--backend", choices=backends)
    g = p.add_argument_group("tfidf")
    g.add_argument("--ngram", type=int, choices=(1, 2), default=1)
    g.add_argument("--stopwords", action=argparse.BooleanOptionalAction, default=True,
                   help="remove English stop words (tfidf)")
    g.add_argument("--max-features", type=int, default=300)
    g = p.add_argument_group("static")
    g.add_argument("--embeddings", help="text embedding table")
    g.add_argument("--tokenizer", choices=("basic", "wordpiece"), default="basic")
    g.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=True)
    _add_encoder_args(p)


def _add_encoder_args(p):
    g = p.add_argument_group("encoder")
    g.add_argument("--weights", help="float32 tensor archive")
    g.add_argument("--vocab", help="WordPiece vocab, one token per line")
    g.add_argument("--encoder-config", help="JSON encoder geometry (default: infer from archive)")
    g.add_argument("--num-heads", type=int, default=12)
    g.add_argument("--max-length", type=int, default=512)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--float32", action=argparse.BooleanOptionalAction, default=False,
                   help="compute in float32 instead of float64")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="newscam",
                     description="Representation analysis and token-level CAM for real/fake news.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("prepare", help="clean and split the real/fake CSV files")
    p.add_argument("--real-csv")
    p.add_argument("--fake-csv")
    p.add_argument("--out", default="prepared")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("linear-eval", help="linear evaluation of one representation backend")
    p.add_argument("--split", help="split.json from 'prepare'")
    _add_backend_args(p)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--weight-decays", type=_float_list, default=WEIGHT_DECAYS)
    p.add_argument("--epochs", type=_int_list, default=EPOCHS)
    p.add_argument("--selection", choices=("test", "validation"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="metrics.json")
    p.add_argument("--head-out", help="save the selected head as JSON")
    p.set_defaults(func=cmd_linear_eval)

    p = sub.add_parser("cam", help="token-level class activation map for one text")
    p.add_argument("--head")
    _add_backend_args(p, backends=("bert", "static"))
    p.add_argument("--text")
    p.add_argument("--input-file")
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--format", choices=("ansi", "html"), default="ansi")
    p.add_argument("--class", dest="cls", type=int, choices=(0, 1),
                   help="class to explain (default: predicted)")
    p.add_argument("--out", default="cam.json")
    p.set_defaults(func=cmd_cam)

    p = sub.add_parser("pca", help="project test-set representations onto two PCs")
    p.add_argument("--split")
    _add_backend_args(p)
    p.add_argument("--out", default="pca.csv")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("corr", help="token correlation matrices, static vs encoder")
    p.add_argument("--text")
    p.add_argument("--input-file")
    _add_encoder_args(p)
    p.add_argument("--embeddings", help="word-embedding table (default: the archive's)")
    p.add_argument("--out", default="corr")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("extract-word-embeddings",
                       help="write the archive's word-embedding matrix as a text table")
    _add_encoder_args(p)
    p.add_argument("--out", default="word_embeddings.txt")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    return parser


def _apply_config(parser, path, command=None):
    cfg = read_config(path)
    command = cfg.pop("command", None) if command is None else command
    cfg.pop("command", None)
    if command is None:
        raise UsageError(f"{path}: no command given")
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"{path}: unknown setting {key!r} for {command}")
        if isinstance(actions[key], argparse.BooleanOptionalAction):
            defaults[key] = _parse_bool(value)
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)
    return command


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            if command not in action.choices:
                raise UsageError(f"unknown command {command!r}")
            return action.choices[command]
    raise AssertionError("no subcommands registered")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    for p in _subparsers(parser):
        if p.prog.split()[-1] != "rerun":
            p.add_argument("--config", help="key=value settings file (flags override)")
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.command == "rerun":
            command = _apply_config(parser, args.manifest)
            args = parser.parse_args([command])
        elif args.config:
            _apply_config(parser, args.config, args.command)
            args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"newscam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"newscam: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"newscam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResourceError, OSError, ValueError, RuntimeError, KeyError) as exc:
        # ArchiveError, CorpusFormatError and EmbeddingFormatError are ValueErrors
        print(f"newscam: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return list(action.choices.values())
    return []


if __name__ == "__main__":
    sys.exit(main())
