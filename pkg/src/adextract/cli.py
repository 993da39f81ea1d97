"""Command line entry point: ``adextract <subcommand> ...``.

Every subcommand that produces artifacts writes them into a fresh run
directory together with ``manifest.json`` (resolved config, version, input
and output checksums).  Passing a manifest back through ``--config`` reruns
the same command with the same settings.

Exit status: 0 on success, 2 for bad input, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import subprocess
import sys
import time
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .corpus import AnnotationError, CorpusError, EntityType, RelationType, load_corpus
from .evaluation import class_report, render_report, score_relations
from .features import (
    EmbeddingFormatError,
    generate_all_candidates,
    load_embeddings,
    random_embeddings,
    restrict_embeddings,
    vocabulary,
    write_candidates_tsv,
)
from .neural import CNNClassifier, ModelConfig, TrainConfig, predict_proba, train
from .rules import (
    BindingMode,
    Mechanism,
    PredictedRelation,
    RuleConfig,
    read_predictions,
    run_rules,
    write_predictions,
)
from .synth import SynthConfig, SynthError, generate, perturb

logger = logging.getLogger("adextract")

CONFIG_ENV = "ADEXTRACT_CONFIG"
MANIFEST_VERSION = 1
# argparse destinations that describe where/how to run, not what to compute
_RUNTIME_KEYS = {"command", "config", "out", "run_name", "jobs", "log_level", "func"}


class InputError(Exception):
    """Bad user input; maps to exit status 2."""


_INPUT_ERRORS = (
    InputError,
    AnnotationError,
    CorpusError,
    EmbeddingFormatError,
    SynthError,
    FileNotFoundError,
    NotADirectoryError,
    json.JSONDecodeError,
)


# --------------------------------------------------------------------------
# run directories and manifests


def version_string() -> str:
    """Package version plus ``git describe`` of the source tree when available."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_path(path) -> str:
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(path)).encode("utf-8") + b"\0" + sha256_file(p).encode() + b"\0")
    return h.hexdigest()


def make_run_dir(args) -> Path:
    name = args.run_name or f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}-{os.getpid()}"
    run = Path(args.out) / name
    if run.exists():
        raise InputError(f"run directory {run} already exists")
    run.mkdir(parents=True)
    return run


def resolved_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _RUNTIME_KEYS}


def write_manifest(run: Path, args, inputs: dict[str, str]):
    outputs = {
        str(p.relative_to(run)): sha256_file(p)
        for p in sorted(run.rglob("*"))
        if p.is_file() and p != run / "manifest.json"
    }
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": args.command,
        "config": resolved_config(args),
        "seed": getattr(args, "seed", None),
        "version": version_string(),
        "inputs": {k: sha256_path(v) for k, v in inputs.items()},
        "outputs": outputs,
    }
    with open(run / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    if "manifest_version" in data:
        data = data["config"]
    return {k.replace("-", "_"): v for k, v in data.items()}


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _existing_dir(path) -> Path:
    if path is None:
        raise InputError("missing input directory (give it on the command line or in --config)")
    p = Path(path)
    if not p.is_dir():
        raise InputError(f"{p} is not a directory")
    return p


def _rtypes(names) -> list[RelationType]:
    if not names:
        return list(RelationType)
    try:
        return [RelationType(n) for n in names]
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load(path, strict):
    return load_corpus(_existing_dir(path), strict=strict)


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    docs = _load(args.corpus, strict=not args.lenient)
    rel_counts = Counter(r.rtype for d in docs for r in d.relations.values())
    ent_counts = Counter(e.etype for d in docs for e in d.entities.values())
    if args.json:
        print(json.dumps({
            "documents": len(docs),
            "relations": {rt.value: rel_counts[rt] for rt in RelationType},
            "entities": {et.value: ent_counts[et] for et in EntityType},
        }, indent=2))
        return 0
    print(f"{'Relation':<16}  {'# instances':>11}")
    for rt in RelationType:
        print(f"{rt.value:<16}  {rel_counts[rt]:>11d}")
    print()
    print(f"{'Entity':<16}  {'# mentions':>11}")
    for et in EntityType:
        print(f"{et.value:<16}  {ent_counts[et]:>11d}")
    print(f"\n{len(docs)} documents")
    return 0


def cmd_synth(args):
    cfg = SynthConfig(
        seed=args.seed,
        n_docs=args.n_docs,
        sentences_per_doc=(args.min_sentences, args.max_sentences),
        p_drug_first=args.p_drug_first if args.p_drug_first is not None else SynthConfig().p_drug_first,
        p_multi_drug_sentence=args.p_multi_drug_sentence,
        p_cross_sentence=args.p_cross_sentence,
    )
    gold = generate(cfg)
    if args.distractor_rate:
        gold = perturb(gold, args.distractor_rate, seed=args.seed)
    run = make_run_dir(args)
    gold.write(run / "corpus")
    write_manifest(run, args, {})
    print(run / "corpus")
    return 0


def _rule_config(args) -> RuleConfig:
    overrides = {}
    for item in args.override or []:
        try:
            rt, mech = item.split("=", 1)
            overrides[RelationType(rt)] = Mechanism(mech)
        except ValueError:
            raise InputError(f"bad --override {item!r}; expected <RelationType>=<mechanism>") from None
    return RuleConfig(Mechanism(args.mechanism), BindingMode(args.mode), tuple(_rtypes(args.types)), overrides)


def cmd_extract_rules(args):
    docs = _load(args.corpus, strict=args.strict)
    preds = run_rules(docs, _rule_config(args), jobs=args.jobs)
    run = make_run_dir(args)
    write_predictions(docs, preds, run / "predictions")
    write_manifest(run, args, {"corpus": args.corpus})
    print(run / "predictions")
    return 0


def cmd_gen_candidates(args):
    docs = _load(args.corpus, strict=args.strict)
    run = make_run_dir(args)
    all_pairs, stats = [], {}
    for rt in _rtypes(args.types):
        pairs, dropped = generate_all_candidates(docs, rt, args.max_cross_sentences)
        all_pairs.extend(pairs)
        pos = sum(p.label for p in pairs)
        stats[rt.value] = {"positive": pos, "negative": len(pairs) - pos, "dropped_pairs": dropped}
    write_candidates_tsv(all_pairs, run / "candidates.tsv")
    write_json(run / "candidate_stats.json", stats)
    write_manifest(run, args, {"corpus": args.corpus})
    print(run / "candidates.tsv")
    return 0


def _model_config(args) -> ModelConfig:
    try:
        return ModelConfig(
            kind=args.kind,
            widths=tuple(args.widths),
            n_filters=args.filters,
            trainable_embeddings=args.trainable_embeddings,
            window_len=args.window_len,
            segment_lens=tuple(args.segment_lens),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _train_one(job):
    rt, pairs, emb, tcfg, mcfg = job
    model, history = train(mcfg.kind, pairs, emb, tcfg, mcfg)
    return rt, model.to_bytes(), [h.__dict__ for h in history]


def cmd_train(args):
    docs = _load(args.corpus, strict=args.strict)
    mcfg = _model_config(args)
    tcfg = TrainConfig(
        batch_size=args.batch_size, learning_rate=args.lr, rho=args.rho, epsilon=args.epsilon,
        epochs=args.epochs, seed=args.seed, shuffle=not args.no_shuffle,
    )
    candidates = {}
    for rt in _rtypes(args.types):
        pairs, dropped = generate_all_candidates(docs, rt, args.max_cross_sentences)
        if not pairs:
            logger.warning("no %s candidates; skipping", rt.value)
            continue
        candidates[rt] = (pairs, dropped)
    if not candidates:
        raise InputError("no training candidates for any relation type")

    words = vocabulary(p for pairs, _ in candidates.values() for p in pairs)
    for extra in args.vocab_from or []:
        extra_docs = _load(extra, strict=False)
        words += [t.text.lower() for d in extra_docs for t in d.tokens]
    if args.embeddings:
        emb = restrict_embeddings(load_embeddings(args.embeddings, seed=args.seed), words)
    else:
        emb = random_embeddings(words, dim=args.emb_dim, seed=args.seed)

    jobs = [(rt, pairs, emb, tcfg, mcfg) for rt, (pairs, _) in candidates.items()]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]

    run = make_run_dir(args)
    (run / "checkpoints").mkdir()
    history = {}
    for rt, blob, hist in results:
        (run / "checkpoints" / f"{rt.value}.ckpt").write_bytes(blob)
        pairs, dropped = candidates[rt]
        history[rt.value] = {
            "epochs": hist, "n_candidates": len(pairs),
            "n_positive": sum(p.label for p in pairs), "dropped_pairs": dropped,
        }
    write_json(run / "history.json", history)
    inputs = {"corpus": args.corpus}
    if args.embeddings:
        inputs["embeddings"] = args.embeddings
    write_manifest(run, args, inputs)
    print(run / "checkpoints")
    return 0


def cmd_predict(args):
    docs = _load(args.corpus, strict=args.strict)
    ckpt_dir = _existing_dir(args.checkpoints)
    ckpts = sorted(ckpt_dir.glob("*.ckpt"))
    if not ckpts:
        raise InputError(f"no .ckpt files in {ckpt_dir}")
    preds: dict[str, list[PredictedRelation]] = {d.doc_id: [] for d in docs}
    all_pairs, decisions, dropped_total = [], {}, 0
    for path in ckpts:
        try:
            model = CNNClassifier.load(path)
        except (ValueError, KeyError) as exc:
            raise InputError(f"{path}: {exc}") from None
        if model.rtype is None:
            raise InputError(f"{path}: checkpoint has no relation type")
        pairs, dropped = generate_all_candidates(docs, model.rtype, args.max_cross_sentences)
        dropped_total += dropped
        probs = predict_proba(model, pairs)
        for p, prob in zip(pairs, probs):
            decisions[p.key] = bool(prob > args.threshold)
            if decisions[p.key]:
                preds[p.doc_id].append(PredictedRelation(p.doc_id, p.attr, p.drug, p.rtype))
        all_pairs.extend(pairs)
    run = make_run_dir(args)
    write_predictions(docs, preds, run / "predictions")
    report = class_report(all_pairs, decisions)
    write_json(run / "class_report.json", report.to_dict())
    (run / "class_report.txt").write_text(render_report(report, "table"), encoding="utf-8")
    write_json(run / "stats.json", {"dropped_pairs": dropped_total, "n_candidates": len(all_pairs)})
    write_manifest(run, args, {"corpus": args.corpus, "checkpoints": args.checkpoints})
    print(run / "predictions")
    return 0


def cmd_score(args):
    gold_docs = {d.doc_id: d for d in _load(args.gold, strict=args.strict)}
    pred = read_predictions(_existing_dir(args.pred))
    if set(pred) != set(gold_docs):
        missing = sorted(set(gold_docs) - set(pred))[:5]
        extra = sorted(set(pred) - set(gold_docs))[:5]
        raise InputError(f"document ids differ between gold and predictions (missing {missing}, extra {extra})")
    pred_triples = []
    for doc_id, rels in pred.items():
        ents = gold_docs[doc_id].entities
        for p in rels:
            if p.attr not in ents or p.drug not in ents:
                raise InputError(f"{doc_id}: prediction refers to unknown entity ({p.attr}, {p.drug})")
            attr, drug = p.attr, p.drug
            if ents[attr].etype == EntityType.DRUG and ents[drug].etype != EntityType.DRUG:
                attr, drug = drug, attr
            pred_triples.append((doc_id, attr, drug, p.rtype))
    gold = [(d.doc_id, r.attr, r.drug, r.rtype) for d in gold_docs.values() for r in d.relations.values()]
    dropped = 0
    if args.stats:
        with open(args.stats, encoding="utf-8") as f:
            dropped = int(json.load(f).get("dropped_pairs", 0))
    report = score_relations(gold, pred_triples, _rtypes(args.types), dropped_pairs=dropped)
    run = make_run_dir(args)
    for fmt, ext in (("json", "json"), ("tsv", "tsv"), ("table", "txt")):
        (run / f"report.{ext}").write_text(render_report(report, fmt), encoding="utf-8")
    inputs = {"gold": args.gold, "pred": args.pred}
    if args.stats:
        inputs["stats"] = args.stats
    write_manifest(run, args, inputs)
    print(render_report(report, "table"), end="")
    return 0


def cmd_report(args):
    from .evaluation import ScoreReport

    with open(args.report, encoding="utf-8") as f:
        data = json.load(f)
    try:
        report = ScoreReport.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.report}: not a score report ({exc})") from None
    print(render_report(report, args.format), end="")
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p, run_dir=True):
    p.add_argument("--config", help=f"JSON config file (default from ${CONFIG_ENV})")
    if run_dir:
        p.add_argument("--out", default="runs", help="parent directory for run directories")
        p.add_argument("--run-name", help="run directory name (default: <command>-<timestamp>-<pid>)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")


def _add_corpus(p):
    p.add_argument("corpus", nargs="?", help="directory of <id>.txt / <id>.ann pairs")
    p.add_argument("--strict", action="store_true", help="fail on annotation inconsistencies")


def _add_types(p):
    p.add_argument("--types", nargs="+", metavar="TYPE", help="relation types (default: all eight)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adextract", description=__doc__.split("\n")[0])
    parser.add_argument("--log-level", default="WARNING")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="strict-parse a corpus and print annotation counts")
    _add_common(p, run_dir=False)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--lenient", action="store_true", help="downgrade inconsistencies to warnings")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-docs", type=int, default=20)
    p.add_argument("--min-sentences", type=int, default=3)
    p.add_argument("--max-sentences", type=int, default=8)
    p.add_argument("--p-drug-first", type=float, default=None,
                   help="probability an attribute follows its drug, for every type (default: per-type)")
    p.add_argument("--p-multi-drug-sentence", type=float, default=0.3)
    p.add_argument("--p-cross-sentence", type=float, default=0.1)
    p.add_argument("--distractor-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract-rules", help="run the co-location rule engine")
    _add_common(p)
    _add_corpus(p)
    _add_types(p)
    p.add_argument("--mechanism", choices=[m.value for m in Mechanism], default="left-only")
    p.add_argument("--mode", choices=[m.value for m in BindingMode], default="unbounded")
    p.add_argument("--override", action="append", metavar="TYPE=MECHANISM",
                   help="per relation type traversal mechanism")
    p.set_defaults(func=cmd_extract_rules)

    p = sub.add_parser("gen-candidates", help="write candidate pairs as TSV")
    _add_common(p)
    _add_corpus(p)
    _add_types(p)
    p.add_argument("--max-cross-sentences", type=int, default=1)
    p.set_defaults(func=cmd_gen_candidates)

    p = sub.add_parser("train", help="train one CNN per relation type")
    _add_common(p)
    _add_corpus(p)
    _add_types(p)
    p.add_argument("--kind", choices=["sentence", "segment"], default="segment")
    p.add_argument("--embeddings", help="GloVe/word2vec text file (default: seeded random vectors)")
    p.add_argument("--emb-dim", type=int, default=50, help="dimension of random embeddings")
    p.add_argument("--vocab-from", action="append", metavar="DIR",
                   help="also keep embedding rows for words of this corpus (e.g. the test set)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--trainable-embeddings", action="store_true")
    p.add_argument("--widths", type=int, nargs="+", default=[3, 4, 5])
    p.add_argument("--filters", type=int, default=100)
    p.add_argument("--window-len", type=int, default=64)
    p.add_argument("--segment-lens", type=int, nargs=5, default=[16, 8, 32, 8, 16])
    p.add_argument("--max-cross-sentences", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify candidate pairs with trained checkpoints")
    _add_common(p)
    _add_corpus(p)
    p.add_argument("--checkpoints", required=True, help="directory of <RelationType>.ckpt files")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-cross-sentences", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="score predictions against gold annotations")
    _add_common(p)
    p.add_argument("gold", nargs="?")
    p.add_argument("pred", nargs="?")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--stats", help="stats.json from predict, for the dropped-pairs count")
    _add_types(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="render a saved report.json")
    _add_common(p, run_dir=False)
    p.add_argument("report")
    p.add_argument("--format", choices=["table", "json", "tsv"], default="table")
    p.set_defaults(func=cmd_report)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    config_path = args.config or os.environ.get(CONFIG_ENV)
    if config_path:
        config = load_config_file(config_path)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(config) - known - _RUNTIME_KEYS)
        if unknown:
            logger.warning("ignoring unknown config keys: %s", ", ".join(unknown))
        # config values become defaults, so explicit flags still win
        sub.set_defaults(**{k: v for k, v in config.items() if k in known and k not in _RUNTIME_KEYS})
        args = parser.parse_args(argv)
    return args


_DIR_ARGS = ("corpus", "gold", "pred", "checkpoints", "vocab_from")
_FILE_ARGS = ("embeddings", "stats", "report")


def check_paths(args):
    """Fail fast on missing inputs, before any work is done."""
    for name in _DIR_ARGS:
        value = getattr(args, name, None)
        for v in value if isinstance(value, list) else [value]:
            if v is not None and not Path(v).is_dir():
                raise InputError(f"--{name.replace('_', '-')}: {v} is not a directory")
    for name in _FILE_ARGS:
        v = getattr(args, name, None)
        if v is not None and not Path(v).is_file():
            raise InputError(f"--{name.replace('_', '-')}: {v} is not a file")


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except _INPUT_ERRORS as exc:
        print(f"adextract: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        check_paths(args)
        with warnings.catch_warnings():
            return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"adextract: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        logger.debug("internal error", exc_info=True)
        print(f"adextract: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
