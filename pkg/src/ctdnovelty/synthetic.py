"""Seeded synthetic corpora for tests and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import PaperRecord


@dataclass
class GeneratedCorpus:
    records: list[PaperRecord]
    # year -> [paper count, total term count], kept while generating
    bookkeeping: dict[int, list[int]] = field(default_factory=dict)

    def mean_terms(self, year: int) -> float:
        n, total = self.bookkeeping[year]
        return total / n


def random_corpus(n_papers: int, years: range | list[int], vocab_size: int = 2000,
                  mean_terms: float = 10.0, seed: int = 0, zipf: float = 1.0) -> GeneratedCorpus:
    """Papers spread evenly over ``years``; term counts 2 + Poisson(mean_terms - 2).

    Terms are drawn without replacement with Zipf-like popularity.
    """
    rng = np.random.default_rng(seed)
    years = list(years)
    vocab = [f"T{k:05d}" for k in range(vocab_size)]
    weights = 1.0 / np.arange(1, vocab_size + 1) ** zipf
    weights /= weights.sum()
    out = GeneratedCorpus([])
    for k in range(n_papers):
        year = years[k * len(years) // n_papers]
        size = min(vocab_size, 2 + int(rng.poisson(mean_terms - 2)))
        picks = rng.choice(vocab_size, size=size, replace=False, p=weights)
        rec = PaperRecord.make(f"P{k:07d}", year, (vocab[i] for i in picks))
        out.records.append(rec)
        book = out.bookkeeping.setdefault(year, [0, 0])
        book[0] += 1
        book[1] += size
    return out


@dataclass
class TwoClusterCorpus:
    records: list[PaperRecord]
    focal_year: int
    novel_ids: list[str]
    conventional_ids: list[str]


def two_cluster_corpus(seed: int = 0, cluster_size: int = 40, history_years: int = 5,
                       papers_per_year: int = 300, terms_per_paper: int = 6,
                       n_novel: int = 200, n_conventional: int = 200,
                       start_year: int = 2000, n_venues: int = 5) -> TwoClusterCorpus:
    """Two disjoint term communities.

    Historical papers draw all their terms from a single community. In the
    focal year, conventional papers do the same while novel papers take half
    their terms from each community. Focal papers carry ``label`` plus
    year/venue/field so they can be matched.
    """
    rng = np.random.default_rng(seed)
    clusters = [[f"{c}{k:03d}" for k in range(cluster_size)] for c in ("A", "B")]
    records = []
    pid = 0

    def draw(pool, k):
        return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]

    for year in range(start_year, start_year + history_years):
        for _ in range(papers_per_year):
            c = int(rng.integers(2))
            records.append(PaperRecord.make(f"H{pid:06d}", year, draw(clusters[c], terms_per_paper)))
            pid += 1

    focal = start_year + history_years
    novel, conventional = [], []
    half = terms_per_paper // 2
    for k in range(n_novel + n_conventional):
        is_novel = k < n_novel
        if is_novel:
            terms = draw(clusters[0], half) + draw(clusters[1], terms_per_paper - half)
        else:
            terms = draw(clusters[int(rng.integers(2))], terms_per_paper)
        rid = f"F{k:06d}"
        venue = f"V{int(rng.integers(n_venues))}"
        records.append(PaperRecord.make(rid, focal, terms, venue=venue, field="bio", label=is_novel))
        (novel if is_novel else conventional).append(rid)
    return TwoClusterCorpus(records, focal, novel, conventional)
