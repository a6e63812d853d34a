"""Command-line pipeline: build-net, embed, score, stats, match, eval.

Settings resolve as defaults < ``--config`` JSON file < explicit flags, and the
resolved configuration is echoed next to each output as ``<out>.config.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .corpus import CorpusError, build_index, filter_eligible, read_corpus
from .embed import EmbeddingConfig, load_embeddings, save_embeddings, train_embeddings
from .histnet import NetworkCache, window_bounds
from .pairdist import SCORING_METHODS, FocalDistanceMatrix, Method
from .scoring import (
    ScoreFailure,
    ScoringConfig,
    edge_class_stats,
    read_scores,
    score_corpus,
    term_count_stats,
    write_edge_class_stats,
    write_scores,
    write_term_count_stats,
)
from .validation import MATCH_KEYS, match_controls, repeated_validation, write_runs

logger = logging.getLogger("ctdnovelty")

MEASURES = ("ctd", "ctd_normalized", "mean_pairwise", "p90_pairwise")


@dataclass
class RunConfig:
    corpus: str | None = None
    window: int = 5
    methods: list[str] = field(default_factory=lambda: ["term_term"])
    exact_threshold: int = 16
    heuristic_starts: int | None = None
    heuristic_seed: int = 0
    heuristic_kicks: int | None = None
    seed: int = 0
    min_year: int | None = None
    max_year: int | None = None
    out: str | None = None
    format: str = "csv"
    net_dir: str | None = None
    embeddings_dir: str | None = None
    matrix_override: str | None = None
    scores: str | None = None
    keys: list[str] = field(default_factory=lambda: ["year", "venue", "field"])
    fe_keys: list[str] | None = None
    measures: list[str] = field(default_factory=lambda: list(MEASURES))
    runs: int = 10
    standardize: bool = False
    dim: int = 200
    epochs: int = 100
    negatives: int = 5
    learning_rate: float = 0.025
    batch_size: int = 128
    # execution-only settings, not echoed: they never change results
    workers: int | None = None
    force: bool = False

    def validate(self) -> None:
        if self.window < 1:
            raise ValueError("--window must be >= 1")
        if self.exact_threshold < 2:
            raise ValueError("--exact-threshold must be >= 2")
        if not self.methods:
            raise ValueError("at least one --method is required")
        for m in self.methods:
            Method(m)
        for k in self.keys:
            if k not in MATCH_KEYS:
                raise ValueError(f"unknown match key {k!r}")
        for m in self.measures:
            if m not in MEASURES:
                raise ValueError(f"unknown measure {m!r}")
        if self.runs < 1:
            raise ValueError("--runs must be >= 1")

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("workers")
        out.pop("force")
        return out

    def scoring(self) -> ScoringConfig:
        return ScoringConfig(self.window, self.exact_threshold, self.heuristic_starts,
                             self.heuristic_seed, self.heuristic_kicks)

    def embedding(self) -> EmbeddingConfig:
        return EmbeddingConfig(self.dim, self.epochs, self.negatives, self.learning_rate,
                               self.batch_size, self.seed)


class CliError(Exception):
    pass


def _workers(cfg: RunConfig) -> int:
    if cfg.workers is not None:
        return max(1, cfg.workers)
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _load_index(cfg: RunConfig):
    if not cfg.corpus:
        raise CliError("--corpus is required")
    try:
        records = read_corpus(cfg.corpus)
    except OSError as exc:
        raise CliError(f"cannot read corpus {cfg.corpus}: {exc.strerror or exc}") from None
    except CorpusError as exc:
        raise CliError(f"{cfg.corpus}: {exc}") from None
    eligible, report = filter_eligible(records, cfg.min_year, cfg.max_year)
    print(report.summary(), file=sys.stderr)
    return records, build_index(eligible)


def _require_out(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise CliError("--out is required")
    return Path(cfg.out)


def _echo_config(cfg: RunConfig, out: Path, command: str) -> None:
    sidecar = out / "config.json" if out.is_dir() else out.with_name(out.name + ".config.json")
    payload = {"command": command, **cfg.echo()}
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_build_net(cfg: RunConfig) -> int:
    _, index = _load_index(cfg)
    out = _require_out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    cache = NetworkCache(index, out, force=cfg.force)
    for year in index.years:
        net = cache.get(year, cfg.window)
        logger.info("focal year %d: %d terms, %d papers in window", year, net.n_terms, net.paper_count)
    print(f"networks: {cache.builds} built, {cache.disk_hits} cached", file=sys.stderr)
    _echo_config(cfg, out, "build-net")
    return 0


def _embedding_path(directory: Path, year: int, window: int) -> Path:
    return directory / f"emb_{year}_w{window}.ctdemb"


def cmd_embed(cfg: RunConfig) -> int:
    _, index = _load_index(cfg)
    out = _require_out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    cache = NetworkCache(index, cfg.net_dir)
    emb_cfg = cfg.embedding()
    emb_cfg.validate()
    for year in index.years:
        path = _embedding_path(out, year, cfg.window)
        if path.exists() and not cfg.force:
            continue
        net = cache.get(year, cfg.window)
        if net.empty:
            logger.info("focal year %d has an empty window; no embeddings", year)
            continue
        save_embeddings(train_embeddings(net, emb_cfg), path)
    _echo_config(cfg, out, "embed")
    return 0


def _load_overrides(path: str) -> dict[str, FocalDistanceMatrix]:
    """JSON object: paper id -> {"terms": [...], "matrix": [[...], ...]}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return {pid: FocalDistanceMatrix.from_matrix(spec["terms"], spec["matrix"]) for pid, spec in raw.items()}
    except (KeyError, TypeError, AttributeError) as exc:
        raise CliError(f"{path}: each entry needs 'terms' and 'matrix' ({exc})") from None


def cmd_score(cfg: RunConfig) -> int:
    _, index = _load_index(cfg)
    out = _require_out(cfg)
    methods = [Method(m) for m in cfg.methods]
    embeddings = None
    if Method.EMBED in methods:
        if not cfg.embeddings_dir:
            raise CliError("method 'embed' needs trained embeddings: run `ctdnovelty embed` and pass --embeddings DIR")
        embeddings = {}
        for year in index.years:
            path = _embedding_path(Path(cfg.embeddings_dir), year, cfg.window)
            if path.exists():
                embeddings[year] = load_embeddings(path, expected_window=window_bounds(year, cfg.window))
    overrides = _load_overrides(cfg.matrix_override) if cfg.matrix_override else None
    workers = _workers(cfg)
    cache = NetworkCache(index, cfg.net_dir) if workers <= 1 else None
    failures: list[ScoreFailure] = []
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        n = write_scores(score_corpus(index, methods, cfg.scoring(), embeddings, overrides, cache,
                                      workers, failures), fh, cfg.format)
    _echo_config(cfg, out, "score")
    print(f"scored {n} rows, {len(failures)} failures", file=sys.stderr)
    for f in failures:
        print(f"failed: {f.paper_id} [{f.method}]: {f.message}", file=sys.stderr)
    return 1 if failures else 0


def cmd_stats(cfg: RunConfig) -> int:
    _, index = _load_index(cfg)
    out = _require_out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "term_counts.csv", "w", encoding="utf-8", newline="") as fh:
        write_term_count_stats(term_count_stats(index), fh)
    with open(out / "edge_classes.csv", "w", encoding="utf-8", newline="") as fh:
        write_edge_class_stats(edge_class_stats(index, cfg.window, NetworkCache(index, cfg.net_dir)), fh)
    _echo_config(cfg, out, "stats")
    return 0


def _split_labelled(records):
    labelled = [r for r in records if r.label is not None]
    if not labelled:
        raise CliError("corpus has no 'label' field on any record; eval/match need labelled cases (label 1) "
                       "and a control pool (label 0)")
    cases = [r for r in labelled if r.label]
    pool = [r for r in labelled if not r.label]
    if not cases or not pool:
        raise CliError("labels are single-class; need both label 1 cases and label 0 controls")
    return cases, pool


def cmd_match(cfg: RunConfig) -> int:
    records, index = _load_index(cfg)
    out = _require_out(cfg)
    cases, pool = _split_labelled(list(index))
    ds = match_controls(cases, pool, cfg.keys, cfg.seed)
    by_id = index.by_id()
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["case_id", "control_id"] + list(cfg.keys))
        for case, control in ds.pairs:
            writer.writerow([case, control] + [getattr(by_id[case], k) for k in cfg.keys])
    _echo_config(cfg, out, "match")
    print(f"matched {len(ds.pairs)} pairs, dropped {len(ds.dropped)} unmatched cases", file=sys.stderr)
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    records, index = _load_index(cfg)
    out = _require_out(cfg)
    if not cfg.scores:
        raise CliError("--scores is required (output of `ctdnovelty score`)")
    cases, pool = _split_labelled(list(index))
    try:
        with open(cfg.scores, encoding="utf-8") as fh:
            rows = read_scores(fh)
    except OSError as exc:
        raise CliError(f"cannot read scores {cfg.scores}: {exc.strerror or exc}") from None

    methods = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
    groups = []
    for method in methods:
        for measure in cfg.measures:
            scores = {r["paper_id"]: r[measure] for r in rows if r["method"] == method}
            results = repeated_validation(cases, pool, scores, cfg.keys, cfg.runs, cfg.seed,
                                          cfg.fe_keys, cfg.standardize)
            groups.append(({"method": method, "measure": measure}, results))
            mean_auc = sum(x.auc_score for x in results) / len(results)
            print(f"{method}/{measure}: mean AUC {mean_auc:.4f} over {len(results)} runs", file=sys.stderr)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        write_runs(groups, fh)
    _echo_config(cfg, out, "eval")
    return 0


COMMANDS = {
    "build-net": cmd_build_net,
    "embed": cmd_embed,
    "score": cmd_score,
    "stats": cmd_stats,
    "match": cmd_match,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", help="JSON file of settings; flags override it")
    common.add_argument("--corpus", default=S, help="line-delimited JSON corpus")
    common.add_argument("--window", type=int, default=S, help="historical window in years (default 5)")
    common.add_argument("--method", dest="methods", action="append", default=S,
                        choices=[m.value for m in SCORING_METHODS], help="distance method (repeatable)")
    common.add_argument("--exact-threshold", type=int, default=S)
    common.add_argument("--heuristic-starts", type=int, default=S)
    common.add_argument("--heuristic-seed", type=int, default=S)
    common.add_argument("--heuristic-kicks", type=int, default=S)
    common.add_argument("--seed", type=int, default=S, help="master seed")
    common.add_argument("--min-year", type=int, default=S)
    common.add_argument("--max-year", type=int, default=S)
    common.add_argument("--out", default=S)
    common.add_argument("--format", choices=["csv", "jsonl"], default=S)
    common.add_argument("--workers", type=int, default=S)
    common.add_argument("--force", action="store_true", default=S)
    common.add_argument("--runs", type=int, default=S)
    common.add_argument("--net-dir", default=S, help="directory of cached networks")
    common.add_argument("--embeddings", dest="embeddings_dir", default=S)
    common.add_argument("--matrix-override", default=S,
                        help="testing only: JSON of explicit per-paper distance matrices")
    common.add_argument("--scores", default=S, help="score CSV for eval")
    common.add_argument("--key", dest="keys", action="append", default=S, choices=list(MATCH_KEYS))
    common.add_argument("--fe-key", dest="fe_keys", action="append", default=S, choices=list(MATCH_KEYS))
    common.add_argument("--measure", dest="measures", action="append", default=S, choices=list(MEASURES))
    common.add_argument("--standardize", action="store_true", default=S)
    common.add_argument("--dim", type=int, default=S)
    common.add_argument("--epochs", type=int, default=S)
    common.add_argument("--negatives", type=int, default=S)
    common.add_argument("--learning-rate", type=float, default=S)
    common.add_argument("--batch-size", type=int, default=S)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ctdnovelty", description="Cognitive traversal distance novelty scores.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            values.update(json.load(fh))
        values.pop("command", None)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in known:
        if hasattr(args, name):
            values[name] = getattr(args, name)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
