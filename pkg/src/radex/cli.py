"""Command-line entry point: ``radex <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from radex import adapters, corpus, evalkit, ruleextract, synth, tagger, textprep
from radex.errors import RadexError

log = logging.getLogger("radex")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _load_corpus(path: str) -> corpus.Corpus:
    return corpus.load_corpus_jsonl(path)


def _lexicon(path: str | None) -> ruleextract.Lexicon:
    return ruleextract.Lexicon.from_file(path) if path else ruleextract.Lexicon.default()


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return values


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def cmd_ingest(args) -> None:
    reports = []
    for name in args.inputs:
        path = Path(name)
        files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
        for f in files:
            if f.suffix == ".jsonl":
                reports.extend(corpus.load_corpus_jsonl(f))
            else:
                reports.append(corpus.load_sectioned_file(f))
    if args.mesh_raw:
        lexicon = _lexicon(args.lexicon)
        raw = {}
        for line in Path(args.mesh_raw).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rid, _, text = line.partition("\t")
                raw[rid.strip()] = adapters.convert_raw_mesh(text, lexicon)
        reports = [
            corpus.Report(r.id, r.findings, r.impression, tuple(raw.get(r.id, r.mesh_terms)))
            for r in reports
        ]
    built = corpus.Corpus(tuple(reports), source=",".join(args.inputs))
    _write(corpus.dump_corpus_jsonl(built), args.output)


def cmd_synth(args) -> None:
    _write(corpus.dump_corpus_jsonl(synth.synth_corpus(args.n, args.seed, args.prefix)),
           args.output)


def cmd_split(args) -> None:
    try:
        spec = corpus.SplitSpec(args.seed, args.ratios)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    parts = corpus.split_corpus(_load_corpus(args.corpus), spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "val", "test"), parts):
        corpus.save_corpus_jsonl(part, out_dir / f"{name}.jsonl")
        log.info("%s: %d reports", name, len(part))


def cmd_label(args) -> None:
    sequences = [textprep.label_report(r) for r in _load_corpus(args.corpus)]
    _write(textprep.dump_labeled_jsonl(sequences), args.output)


def cmd_train(args) -> None:
    if args.embeddings:
        emb = tagger.load_embeddings(args.embeddings, args.dim)
    else:
        emb = tagger.EmbeddingTable(args.dim)
    cfg = tagger.TrainConfig(epochs=args.epochs, lr=args.lr, hidden_size=args.hidden,
                             clip=args.clip, seed=args.seed, patience=args.patience)
    train_set = textprep.load_labeled_jsonl(args.train)
    val_set = textprep.load_labeled_jsonl(args.val) if args.val else []
    model = tagger.init_model(emb, cfg.hidden_size, cfg.seed)
    model, history = tagger.train(model, train_set, val_set, cfg)
    tagger.save_model(model, args.output)
    if args.history:
        _write("".join(json.dumps(vars(h)) + "\n" for h in history), args.history)
    last = history[-1]
    log.info("trained %d epochs, final loss %.4f", last.epoch, last.train_loss)


def cmd_tag(args) -> None:
    model = tagger.load_model(args.model)
    gold = _load_corpus(args.corpus)
    preds = evalkit.PredictionSet(
        args.name, {r.id: tagger.predict_terms(model, r) for r in gold}
    )
    _write(evalkit.dump_predictions_jsonl(preds), args.output)


def cmd_baseline(args) -> None:
    lexicon = _lexicon(args.lexicon)
    negation = ruleextract.NegationConfig.from_file(args.negation) if args.negation else None
    preds = evalkit.PredictionSet(args.name, {
        r.id: ruleextract.extract_dictionary(r, lexicon, negation, not args.no_negation)
        for r in _load_corpus(args.corpus)
    })
    _write(evalkit.dump_predictions_jsonl(preds), args.output)


def cmd_import(args) -> None:
    preds = adapters.import_predictions(args.input, args.format, args.name)
    _write(evalkit.dump_predictions_jsonl(preds), args.output)


def cmd_annotate(args) -> None:
    endpoint = adapters.AnnotatorEndpoint(args.url, timeout=args.timeout,
                                          max_retries=args.retries)
    preds = adapters.annotate_remote(endpoint, _load_corpus(args.corpus),
                                     args.name, args.max_in_flight)
    _write(evalkit.dump_predictions_jsonl(preds), args.output)


def _pathologies(spec: str) -> list[str]:
    if spec in ("default", "default23"):
        return list(evalkit.DEFAULT_PATHOLOGIES)
    path = Path(spec)
    if path.exists():
        return ruleextract.read_entries(path.read_text(encoding="utf-8").splitlines())
    return [p.strip() for p in spec.split(",") if p.strip()]


def cmd_eval(args) -> None:
    gold = _load_corpus(args.gold)
    pathologies = _pathologies(args.pathologies)
    reports = [
        evalkit.evaluate(adapters.import_predictions(p, "jsonl"), gold, pathologies)
        for p in args.pred
    ]
    _write(evalkit.render_tables(reports, args.format), args.output)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radex", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out(p, help="output file (default: stdout)"):
        p.add_argument("-o", "--output", default="-", help=help)

    p = sub.add_parser("ingest", help="build a corpus JSONL from text or JSONL files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--mesh-raw", help="TSV of id<TAB>raw comma-joined MeSH summary")
    p.add_argument("--lexicon")
    out(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("-n", type=int, default=50)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--prefix", default="syn")
    out(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="seeded train/val/test split")
    p.add_argument("corpus")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("label", help="project gold terms onto token labels")
    p.add_argument("corpus")
    out(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train the sequence tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--embeddings")
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--history", help="write per-epoch metrics as JSONL")
    p.add_argument("-o", "--output", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="extract terms with a trained tagger")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--name", default="NER")
    out(p)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("baseline", help="negation-aware dictionary extraction")
    p.add_argument("corpus")
    p.add_argument("--lexicon")
    p.add_argument("--negation", help="negation cue configuration file")
    p.add_argument("--no-negation", action="store_true")
    p.add_argument("--name", default="dictionary")
    out(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("import", help="convert external annotator output")
    p.add_argument("input")
    p.add_argument("--format", choices=adapters.FORMATS, default="jsonl")
    p.add_argument("--name")
    out(p)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("annotate", help="query an HTTP annotation endpoint")
    p.add_argument("corpus")
    p.add_argument("--url", required=True)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--max-in-flight", type=int, default=1)
    p.add_argument("--name", default="remote")
    out(p)
    p.set_defaults(func=cmd_annotate)

    for name, help in (("eval", "score predictions against gold"),
                       ("compare", "score several systems side by side")):
        p = sub.add_parser(name, help=help)
        p.add_argument("--pred", action="append", required=True)
        p.add_argument("--gold", required=True)
        p.add_argument("--pathologies", default="default23",
                       help="file, comma list, or 'default23'")
        p.add_argument("--format", choices=("md", "markdown", "csv"), default="md")
        out(p)
        p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"radex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RadexError, OSError, ValueError) as exc:
        print(f"radex: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
