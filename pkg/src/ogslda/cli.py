"""Command line interface: generate, train, score, evaluate.

Every flag can also come from a JSON file given with ``--config``; explicit
flags win. Results go to stdout or files, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import detector, evaluation, lda, morphgen
from .corpus import load_corpus, read_manifest, read_opcode_file
from .errors import (
    ConfigError,
    CorpusLoadError,
    DegenerateTraining,
    EmptyAlphabet,
    ManifestError,
    OGSError,
    SingleClassCorpus,
)

log = logging.getLogger("ogslda")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRAINING = 4
EXIT_MODEL = 5

DEFAULTS = {
    "top_edges": detector.DEFAULT_TOP_K,
    "folds": 5,
    "seed": 42,
    "aggregation": "mean",
    "prune": True,
}
CONFIG_KEYS = {
    "spec", "manifest", "model", "top_edges", "folds", "seed", "aggregation",
    "prune", "out", "train_families", "sweep", "ranking_csv", "priors",
}


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ogslda", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON file with default values for any flag")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("generate", help="write a synthetic metamorphic corpus")
    common(p)
    p.add_argument("--spec", type=Path, help="corpus spec JSON")

    p = sub.add_parser("train", help="train a detector model from a manifest")
    common(p)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--model", type=Path, help="where to write the model (default: stdout)")
    p.add_argument("--top-edges", dest="top_edges", type=_positive, default=None)
    p.add_argument("--no-prune", dest="prune", action="store_false", default=None)
    p.add_argument("--priors", choices=("fixed", "empirical"), default=None)
    p.add_argument("--ranking-csv", dest="ranking_csv", type=Path, default=None)

    p = sub.add_parser("score", help="classify opcode files with a trained model")
    common(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--aggregation", choices=detector.AGGREGATIONS, default=None)
    p.add_argument("files", nargs="*", type=Path)

    p = sub.add_parser("evaluate", help="k-fold evaluation, pruned vs. all-edge baseline")
    common(p)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--top-edges", dest="top_edges", type=_positive, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--aggregation", choices=detector.AGGREGATIONS, default=None)
    p.add_argument("--no-prune", dest="prune", action="store_false", default=None)
    p.add_argument("--priors", choices=("fixed", "empirical"), default=None)
    p.add_argument(
        "--train-families",
        dest="train_families",
        default=None,
        help="comma-separated malware families used for training; others are test-only",
    )
    p.add_argument("--sweep", default=None, help="comma-separated top-edge counts to sweep")
    return parser


def resolve_config(args) -> dict:
    """Merge defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config", "must be a JSON object")
        for key, value in doc.items():
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise ConfigError(key, "unknown config key")
            cfg[key] = value
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose", "files") or value is None:
            continue
        cfg[key] = value
    for key in ("spec", "manifest", "model", "out", "ranking_csv"):
        if cfg.get(key) is not None:
            cfg[key] = Path(cfg[key])
    for key in ("train_families", "sweep"):
        if isinstance(cfg.get(key), str):
            cfg[key] = [x.strip() for x in cfg[key].split(",") if x.strip()]
    if cfg.get("sweep"):
        try:
            cfg["sweep"] = [int(x) for x in cfg["sweep"]]
        except ValueError:
            raise ConfigError("sweep", "expected integers") from None
        if any(x < 1 for x in cfg["sweep"]):
            raise ConfigError("sweep", "top-edge counts must be >= 1")
    if int(cfg["top_edges"]) < 1:
        raise ConfigError("top_edges", "must be >= 1")
    if int(cfg["folds"]) < 2:
        raise ConfigError("folds", "must be >= 2")
    if cfg["aggregation"] not in detector.AGGREGATIONS:
        raise ConfigError("aggregation", f"must be one of {detector.AGGREGATIONS}")
    return cfg


def _need(cfg, key):
    if cfg.get(key) is None:
        raise ConfigError(key, "is required")
    return cfg[key]


def _load(cfg):
    manifest = read_manifest(_need(cfg, "manifest"))
    return load_corpus(manifest)


def cmd_generate(cfg) -> int:
    spec_path = _need(cfg, "spec")
    out = _need(cfg, "out")
    try:
        doc = json.loads(Path(spec_path).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: spec: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if "seed" not in doc and cfg.get("seed") is not None:
        doc["seed"] = cfg["seed"]
    try:
        spec = morphgen.SyntheticCorpusSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        print(f"error: spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = morphgen.generate_corpus(spec, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(manifest.entries)} files and {Path(out) / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_train(cfg) -> int:
    samples = _load(cfg)
    try:
        model = detector.train(samples, int(cfg["top_edges"]), bool(cfg["prune"]), cfg.get("priors", "fixed"))
    except (SingleClassCorpus, DegenerateTraining, EmptyAlphabet) as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    blob = detector.save_model(model)
    if cfg.get("model") is not None:
        Path(cfg["model"]).write_bytes(blob)
    else:
        sys.stdout.write(blob.decode("utf-8"))
    if cfg.get("ranking_csv") is not None and model.pruned:
        _write_ranking(samples, cfg)
    edges = "all" if model.selected_edges is None else len(model.selected_edges)
    info = sys.stdout if cfg.get("model") is not None else sys.stderr
    print(f"threshold\t{model.threshold!r}", file=info)
    print(f"selected_edges\t{edges}", file=info)
    print(f"separable\t{str(model.separable).lower()}", file=info)
    return EXIT_OK


def _write_ranking(samples, cfg):
    from .corpus import BENIGN, MALWARE, split_by_label
    from .graph import build_alphabet, build_graph

    mal, ben = split_by_label(samples)
    alphabet = build_alphabet(s.sequence for s in samples)
    graphs = [build_graph(s.sequence, alphabet) for s in mal + ben]
    table = lda.extract_features(graphs, [MALWARE] * len(mal) + [BENIGN] * len(ben))
    lda.write_ranking_csv(lda.rank_edges(lda.compute_scatter(table, cfg.get("priors", "fixed"))), cfg["ranking_csv"])


def cmd_score(cfg, files) -> int:
    try:
        model = detector.load_model(Path(_need(cfg, "model")).read_bytes())
    except (OSError, OGSError) as exc:
        print(f"error: cannot load model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    for path in files:
        try:
            seq = read_opcode_file(path)
        except (OSError, UnicodeDecodeError, OGSError) as exc:
            print(f"skip\t{path}\t{exc}", file=sys.stderr)
            continue
        verdict = detector.predict(model, seq, cfg["aggregation"])
        if verdict.dropped_opcodes:
            log.info("%s: dropped %d unknown opcodes", path, verdict.dropped_opcodes)
        print(f"{path}\t{verdict.label}\t{verdict.aggregate_score:.10g}")
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    samples = _load(cfg)
    out = cfg.get("out")
    k, top_k, seed, agg = int(cfg["folds"]), int(cfg["top_edges"]), int(cfg["seed"]), cfg["aggregation"]
    priors = cfg.get("priors", "fixed")
    fams = cfg.get("train_families")
    passes = [("pruned", True), ("baseline", False)] if cfg["prune"] else [("baseline", False)]
    reports = {}
    try:
        for name, prune in passes:
            reports[name] = evaluation.run_experiment(samples, k, top_k, seed, agg, prune, priors, fams)
        sweep = None
        if cfg.get("sweep"):
            sweep = [
                (tk, evaluation.run_experiment(samples, k, tk, seed, agg, True, priors, fams).mma)
                for tk in cfg["sweep"]
            ]
    except OGSError as exc:
        print(f"error: experiment failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    for name, rep in reports.items():
        print(f"{name}\tMMA\t{100 * rep.mma:.2f}%")
        for fam, acc in rep.family_mma().items():
            print(f"{name}\t{fam}\t{100 * acc:.2f}%")
    if sweep:
        sys.stdout.write(evaluation.format_sweep(sweep))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(evaluation.report_json(reports), encoding="utf-8", newline="\n")
        (out / "scores.csv").write_text(evaluation.scores_csv(reports), encoding="utf-8", newline="\n")
        if sweep:
            (out / "top_edges.tsv").write_text(evaluation.format_sweep(sweep), encoding="utf-8", newline="\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "score":
            return cmd_score(cfg, args.files)
        return cmd_evaluate(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, CorpusLoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
