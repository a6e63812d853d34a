"""Paper-level novelty as cognitive traversal distance over a historical term network."""

from .corpus import CorpusIndex, PaperRecord, build_index, filter_eligible, parse_corpus, read_corpus
from .histnet import EdgeClass, HistoricalNetwork, NetworkCache, build_network, classify_pair
from .pairdist import FocalDistanceMatrix, Method, build_focal_matrix
from .scoring import NoveltyScore, ScoringConfig, score_corpus, score_matrix, score_paper
from .traversal import TraversalResult, ctd, metric_closure, solve_brute, solve_exact, solve_heuristic

__version__ = "0.1.0"

__all__ = [
    "CorpusIndex", "PaperRecord", "build_index", "filter_eligible", "parse_corpus", "read_corpus",
    "EdgeClass", "HistoricalNetwork", "NetworkCache", "build_network", "classify_pair",
    "FocalDistanceMatrix", "Method", "build_focal_matrix",
    "NoveltyScore", "ScoringConfig", "score_corpus", "score_matrix", "score_paper",
    "TraversalResult", "ctd", "metric_closure", "solve_brute", "solve_exact", "solve_heuristic",
]
