"""Command-line entry point.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 check failure.
Logs go to stderr; structured results (JSON) go to stdout or ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .checkpoint import CheckpointError
from .treebank import ConlluParseError, EmbeddingFormatError, TreeStructureError

log = logging.getLogger("depformer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
DATA_ERRORS = (FileNotFoundError, ConlluParseError, TreeStructureError, EmbeddingFormatError,
               CheckpointError, ValueError, IsADirectoryError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("DEPFORMER_SEED")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"DEPFORMER_SEED must be an integer, got {env!r}") from None


# subcommands -----------------------------------------------------------------------------


def cmd_validate(args) -> int:
    from .treebank import read_conllu, validate_tree

    trees = read_conllu(args.conllu)
    report = []
    for k, tree in enumerate(trees):
        for v in validate_tree(tree):
            report.append({"sentence": tree.sent_id or str(k + 1), "kind": v.kind, "nodes": list(v.nodes)})
    for r in report:
        log.error("sentence %s: %s at nodes %s", r["sentence"], r["kind"], r["nodes"])
    bad = len({r["sentence"] for r in report})
    _emit({"sentences": len(trees), "valid": len(trees) - bad, "violations": report}, args.out)
    return EXIT_DATA if report else EXIT_OK


def cmd_relmatrix(args) -> int:
    from .relation import build_relation_matrix, build_relation_vocab, dump_matrix
    from .treebank import read_conllu, validate_treebank

    trees, _ = validate_treebank(read_conllu(args.conllu), strict=True)
    vocab = build_relation_vocab(trees, args.tau)
    matrices = [dump_matrix(t, build_relation_matrix(t, vocab, args.tau)) for t in trees]
    if args.format == "tsv":
        lines = []
        for m in matrices:
            lines.append("# " + (m["sent_id"] or ""))
            lines.append("\t".join([""] + m["tokens"]))
            lines.extend("\t".join([tok] + row) for tok, row in zip(m["tokens"], m["keys"]))
        text = "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    _emit({"tau": args.tau, "relations": vocab.to_json(), "matrices": matrices}, args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import TOLERANCE, run_suite

    results = run_suite(full=args.full, seed=_seed(args) or 0)
    for r in results:
        log.info("%-32s max rel err %.3e  %s", r.name, r.max_rel_error, "ok" if r.ok else "FAIL")
    worst = max(r.max_rel_error for r in results)
    ok = all(r.ok for r in results)
    _emit({"ok": ok, "tolerance": TOLERANCE, "max_rel_error": worst,
           "checks": [{"name": r.name, "max_rel_error": r.max_rel_error, "seconds": round(r.seconds, 3)}
                      for r in results]}, args.out)
    print(f"max rel err {worst:.3e}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK


def _load_run(args):
    from .trainer import RunConfig

    run = RunConfig.from_file(args.config)
    updates = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            updates[key] = json.loads(value)
        except json.JSONDecodeError:
            updates[key] = value
    for key in ("epochs", "lr", "batch_size", "variant", "out_dir"):
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    seed = _seed(args)
    if seed is not None:
        updates["seed"] = seed
    if updates:
        merged = run.to_json()
        merged.update(updates)
        run = RunConfig.from_json(merged)
    if args.out_dir is None and not Path(run.out_dir).is_absolute():
        run = replace(run, out_dir=str(Path(args.config).parent / run.out_dir))
    return run


def cmd_train(args) -> int:
    from .trainer import train

    run = _load_run(args)
    seeds = run.seeds or [run.seed]
    summary = []
    for seed in seeds:
        sub = run if len(seeds) == 1 else replace(run, seed=seed, out_dir=str(Path(run.out_dir) / f"seed{seed}"))
        result = train(sub)
        summary.append({"seed": seed, "out_dir": sub.out_dir, "best": result.best_metrics,
                        "epochs": result.log[-1]["epoch"]})
    _emit(summary[0] if len(summary) == 1 else summary, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import load_split, make_examples
    from .trainer import Model, evaluate

    model = Model.load(args.checkpoint)
    labels = args.labels or str(Path(args.data).with_suffix(".labels"))
    split = load_split(args.data, labels, model.head.pair, strict=not args.lenient)
    examples = make_examples(split, model.vocab, model.rel_vocab, model.config.tau, model.head.pair)
    metrics = evaluate(model, examples)
    _emit({"checkpoint": str(args.checkpoint), "examples": len(examples),
           "dropped": split.dropped, **metrics}, args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .trainer import ABLATION_ORDER, run_ablation

    run = _load_run(args)
    variants = args.variants.split(",") if args.variants else list(ABLATION_ORDER)
    rows = run_ablation(run, variants)
    _emit(rows, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import write_planted_relation

    paths = write_planted_relation(args.out, n_sentences=args.n_sentences, seed=_seed(args) or 0,
                                   epochs=args.epochs)
    sys.stdout.write(json.dumps({k: str(v) for k, v in paths.items()}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# parser ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depformer", description="Dependency-Transformer toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check CoNLL-U trees for structural violations")
    p.add_argument("conllu")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("relmatrix", help="dump relation matrices for every sentence")
    p.add_argument("conllu")
    p.add_argument("--tau", type=int, default=2, help="max tree distance for path codes (default 2)")
    p.add_argument("--format", choices=("json", "tsv"), default="json")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_relmatrix)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--full", action="store_true", help="also check the full encoder with every head")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gradcheck)

    for name, fn, text in (("train", cmd_train, "train from a run config"),
                           ("ablate", cmd_ablate, "train every ablation variant")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--variant", choices=("transformer", "dt_lr", "dt_rg", "dt_full"))
        p.add_argument("--out-dir", help="directory for checkpoints and metrics.jsonl")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any run config field (value parsed as JSON)")
        p.add_argument("--out", help="write the summary JSON here instead of stdout")
        if name == "ablate":
            p.add_argument("--variants", help="comma-separated subset, default all four")
        p.set_defaults(fn=fn)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labelled treebank")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CoNLL-U file")
    p.add_argument("--labels", help="label file (default: data path with .labels suffix)")
    p.add_argument("--lenient", action="store_true", help="drop malformed trees instead of failing")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--task", required=True, choices=("planted-relation",))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-sentences", type=int, default=2000)
    p.add_argument("--epochs", type=int, default=50, help="epoch budget written into run.json")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
