"""Paper-level novelty scores and corpus descriptive statistics."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

from .corpus import CorpusIndex, PaperRecord
from .histnet import DEFAULT_WINDOW, EdgeClass, HistoricalNetwork, NetworkCache, build_network
from .pairdist import FocalDistanceMatrix, Method, build_focal_matrix
from .traversal import DEFAULT_EXACT_THRESHOLD, ctd

logger = logging.getLogger(__name__)

SCORE_COLUMNS = (
    "paper_id", "year", "method", "n_terms", "ctd", "ctd_normalized", "mean_pairwise", "p90_pairwise",
    "new_node_new_edge", "old_node_new_edge", "old_node_old_edge", "solver", "exact",
)


@dataclass(frozen=True)
class ScoringConfig:
    window_len: int = DEFAULT_WINDOW
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    heuristic_starts: int | None = None
    heuristic_seed: int = 0
    heuristic_kicks: int | None = None

    def validate(self) -> None:
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.exact_threshold < 2:
            raise ValueError("exact_threshold must be >= 2")


@dataclass(frozen=True)
class NoveltyScore:
    paper_id: str
    year: int | None
    method: Method
    n_terms: int
    ctd: float
    ctd_normalized: float
    mean_pairwise: float
    p90_pairwise: float
    edge_counts: dict[EdgeClass, int] | None
    solver: str
    exact: bool
    order: tuple[str, ...] = field(default=(), compare=False)

    def as_row(self) -> dict:
        counts = self.edge_counts or {}
        return {
            "paper_id": self.paper_id,
            "year": self.year if self.year is not None else "",
            "method": str(self.method),
            "n_terms": self.n_terms,
            "ctd": repr(self.ctd),
            "ctd_normalized": repr(self.ctd_normalized),
            "mean_pairwise": repr(self.mean_pairwise),
            "p90_pairwise": repr(self.p90_pairwise),
            **{c.label: (counts[c] if self.edge_counts is not None else "") for c in EdgeClass},
            "solver": self.solver,
            "exact": int(self.exact),
        }


def mean_pairwise(m: FocalDistanceMatrix) -> float:
    values = m.pair_values()
    if len(values) == 0:
        raise ValueError("need at least two terms")
    return float(values.mean())


def p90_pairwise(m: FocalDistanceMatrix) -> float:
    """90th percentile of raw pair distances, interpolating linearly at rank 0.9 * (k - 1)."""
    values = m.pair_values()
    if len(values) == 0:
        raise ValueError("need at least two terms")
    return float(np.percentile(values, 90, method="linear"))


def score_matrix(m: FocalDistanceMatrix, paper_id: str, year: int | None = None,
                 config: ScoringConfig | None = None) -> NoveltyScore:
    config = config or ScoringConfig()
    if m.n < 2:
        raise ValueError(f"paper {paper_id!r} has fewer than two terms")
    result = ctd(m, exact_threshold=config.exact_threshold, starts=config.heuristic_starts,
                 seed=config.heuristic_seed, kicks=config.heuristic_kicks)
    return NoveltyScore(
        paper_id=paper_id,
        year=year,
        method=m.method,
        n_terms=m.n,
        ctd=result.length,
        ctd_normalized=result.length / m.n,
        # baselines always use the raw (pre-closure) distances
        mean_pairwise=mean_pairwise(m),
        p90_pairwise=p90_pairwise(m),
        edge_counts=m.edge_counts() if m.edge_class is not None else None,
        solver=str(result.solver),
        exact=result.exact,
        order=tuple(m.terms[k] for k in result.order),
    )


def score_paper(net: HistoricalNetwork, paper: PaperRecord, method: Method | str,
                embeddings=None, config: ScoringConfig | None = None) -> NoveltyScore:
    m = build_focal_matrix(net, paper, method, embeddings)
    return score_matrix(m, paper.id, paper.year, config)


@dataclass
class ScoreFailure:
    paper_id: str
    method: str
    message: str


def _score_year(index: CorpusIndex, year: int, methods: Sequence[Method], config: ScoringConfig,
                embeddings, overrides: Mapping[str, FocalDistanceMatrix], cache: NetworkCache | None):
    rows: list[NoveltyScore] = []
    failures: list[ScoreFailure] = []
    papers = index.records_by_year[year]
    net = None
    for paper in papers:
        if paper.id in overrides:
            try:
                rows.append(score_matrix(overrides[paper.id], paper.id, paper.year, config))
            except Exception as exc:  # noqa: BLE001 - per-paper failures are reported, not fatal
                failures.append(ScoreFailure(paper.id, str(Method.OVERRIDE), str(exc)))
            continue
        if net is None:
            net = cache.get(year, config.window_len) if cache is not None else \
                build_network(index, year, config.window_len)
        for method in methods:
            try:
                table = embeddings.get(year) if (embeddings is not None and method is Method.EMBED) else None
                rows.append(score_paper(net, paper, method, table, config))
            except Exception as exc:  # noqa: BLE001
                logger.warning("paper %s method %s failed: %s", paper.id, method, exc)
                failures.append(ScoreFailure(paper.id, str(method), str(exc)))
    return rows, failures


_WORKER_INDEX: CorpusIndex | None = None


def _worker_init(index: CorpusIndex) -> None:
    global _WORKER_INDEX
    _WORKER_INDEX = index


def _worker_year(args):
    year, methods, config, embeddings, overrides = args
    return _score_year(_WORKER_INDEX, year, methods, config, embeddings, overrides, None)


def score_corpus(
    index: CorpusIndex,
    methods: Iterable[Method | str],
    config: ScoringConfig | None = None,
    embeddings: Mapping[int, object] | None = None,
    overrides: Mapping[str, FocalDistanceMatrix] | None = None,
    cache: NetworkCache | None = None,
    workers: int = 1,
    failures: list[ScoreFailure] | None = None,
) -> Iterator[NoveltyScore]:
    """Score every paper in ``index`` under every method.

    Rows come out ordered by year, then input order, then the order of
    ``methods``, whatever the worker count. Work is split by focal year so each
    historical network is built once. ``embeddings`` maps focal year to an
    embedding table; ``overrides`` maps paper id to an explicit matrix, which
    replaces the network-derived distances for that paper.
    """
    config = config or ScoringConfig()
    config.validate()
    methods = [Method(m) for m in methods]
    if not methods:
        raise ValueError("at least one method is required")
    if Method.EMBED in methods and embeddings is None:
        raise ValueError("method 'embed' requires embeddings per focal year")
    overrides = dict(overrides or {})
    if failures is None:
        failures = []
    if cache is None and workers <= 1:
        cache = NetworkCache(index)

    years = index.years
    if workers <= 1 or len(years) <= 1:
        for year in years:
            rows, errs = _score_year(index, year, methods, config, embeddings, overrides, cache)
            failures.extend(errs)
            yield from rows
        return

    tasks = [
        (year, methods, config,
         {year: embeddings[year]} if embeddings is not None and year in embeddings else None,
         {r.id: overrides[r.id] for r in index.records_by_year[year] if r.id in overrides})
        for year in years
    ]
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init, initargs=(index,)) as pool:
        for rows, errs in pool.map(_worker_year, tasks):
            failures.extend(errs)
            yield from rows


def write_scores(rows: Iterable[NoveltyScore], fh: TextIO, fmt: str = "csv") -> int:
    n = 0
    if fmt == "csv":
        writer = csv.DictWriter(fh, fieldnames=SCORE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_row())
            n += 1
    elif fmt == "jsonl":
        for row in rows:
            fh.write(json.dumps(row.as_row(), sort_keys=True) + "\n")
            n += 1
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    return n


def read_scores(fh: TextIO) -> list[dict]:
    """Read a score CSV back into dicts with numeric fields converted."""
    lines = (line for line in fh if not line.startswith("#"))
    out = []
    for row in csv.DictReader(lines):
        rec = dict(row)
        rec["year"] = int(rec["year"]) if rec.get("year") else None
        rec["n_terms"] = int(rec["n_terms"])
        for key in ("ctd", "ctd_normalized", "mean_pairwise", "p90_pairwise"):
            rec[key] = float(rec[key])
        rec["exact"] = rec["exact"] == "1"
        out.append(rec)
    return out


def edge_class_stats(index: CorpusIndex, window_len: int = DEFAULT_WINDOW,
                     cache: NetworkCache | None = None) -> dict[int, dict[EdgeClass, int]]:
    """Total focal-pair counts per edge class, per focal year."""
    cache = cache or NetworkCache(index)
    out = {}
    for year in index.years:
        net = cache.get(year, window_len)
        counts = {c: 0 for c in EdgeClass}
        for paper in index.records_by_year[year]:
            terms = paper.sorted_terms
            idx = [net.vocab.get(t) for t in terms]
            old = [i for i in idx if i is not None]
            n_new = len(idx) - len(old)
            n_old = len(old)
            counts[EdgeClass.NEW_NODE_NEW_EDGE] += n_new * (n_new - 1) // 2 + n_new * n_old
            if n_old >= 2:
                sub = net.cooc[old][:, old]
                direct = (sub.nnz) // 2
                counts[EdgeClass.OLD_NODE_OLD_EDGE] += direct
                counts[EdgeClass.OLD_NODE_NEW_EDGE] += n_old * (n_old - 1) // 2 - direct
        out[year] = counts
    return out


def edge_class_proportions(counts: Mapping[int, Mapping[EdgeClass, int]]) -> dict[int, dict[EdgeClass, float]]:
    out = {}
    for year, c in counts.items():
        total = sum(c.values())
        if total:
            out[year] = {k: c[k] / total for k in EdgeClass}
    return out


def term_count_stats(index: CorpusIndex) -> dict[int, tuple[int, float]]:
    """Per year: (paper count, mean terms per paper). Empty years are omitted."""
    out = {}
    for year in index.years:
        papers = index.records_by_year[year]
        if papers:
            out[year] = (len(papers), sum(len(p.terms) for p in papers) / len(papers))
    return out


def write_term_count_stats(stats: Mapping[int, tuple[int, float]], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["year", "papers", "mean_terms"])
    for year in sorted(stats):
        n, mean = stats[year]
        writer.writerow([year, n, repr(mean)])


def write_edge_class_stats(counts: Mapping[int, Mapping[EdgeClass, int]], fh: TextIO) -> None:
    props = edge_class_proportions(counts)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["year", "pairs"] + [f"{c.label}_count" for c in EdgeClass] + [c.label for c in EdgeClass])
    for year in sorted(counts):
        c = counts[year]
        p = props.get(year)
        writer.writerow([year, sum(c.values())] + [c[k] for k in EdgeClass]
                        + [repr(p[k]) if p else "" for k in EdgeClass])
