"""Validation against labelled benchmarks: matched controls, AUC, probit regression."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.stats import norm, rankdata

from .corpus import PaperRecord

logger = logging.getLogger(__name__)

MATCH_KEYS = ("year", "venue", "field")


def _key_value(rec: PaperRecord, key: str):
    if key not in MATCH_KEYS:
        raise ValueError(f"unknown match key {key!r}; expected one of {MATCH_KEYS}")
    return getattr(rec, key)


def derive_seed(master: int, run: int) -> int:
    """Independent per-run seed; depends only on (master, run)."""
    return int(np.random.SeedSequence([master, run]).generate_state(1)[0])


@dataclass
class MatchedDataset:
    pairs: list[tuple[str, str]]
    match_keys: tuple[str, ...]
    seed: int
    dropped: list[str] = field(default_factory=list)

    def ids_and_labels(self) -> tuple[list[str], np.ndarray]:
        ids = [p for pair in self.pairs for p in pair]
        labels = np.tile([1, 0], len(self.pairs))
        return ids, labels


def match_controls(cases: Sequence[PaperRecord], pool: Sequence[PaperRecord],
                   keys: Sequence[str], seed: int) -> MatchedDataset:
    """Pair each case with one unused pool record agreeing on every key.

    Controls are drawn uniformly (seeded) among the remaining candidates;
    cases without a candidate, or with an unknown key value, are dropped.
    """
    keys = tuple(keys)
    if not keys:
        raise ValueError("at least one match key is required")
    case_ids = {c.id for c in cases}
    groups: dict[tuple, list[str]] = {}
    for rec in pool:
        if rec.id in case_ids:
            raise ValueError(f"paper {rec.id!r} is both a case and a control candidate")
        value = tuple(_key_value(rec, k) for k in keys)
        if any(v is None for v in value):
            continue
        groups.setdefault(value, []).append(rec.id)

    rng = np.random.default_rng(seed)
    pairs, dropped = [], []
    for case in cases:
        value = tuple(_key_value(case, k) for k in keys)
        candidates = groups.get(value) if not any(v is None for v in value) else None
        if not candidates:
            dropped.append(case.id)
            continue
        pick = int(rng.integers(len(candidates)))
        pairs.append((case.id, candidates.pop(pick)))
    if dropped:
        logger.info("%d of %d cases had no available control", len(dropped), len(cases))
    return MatchedDataset(pairs, keys, seed, dropped)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks: P(pos > neg) + P(tie) / 2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


class CollinearityError(ValueError):
    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")


def _mills(r: np.ndarray) -> np.ndarray:
    # phi(r) / Phi(r), stable in the far left tail
    return np.exp(norm.logpdf(r) - log_ndtr(r))


def probit_loglik(beta, X, y) -> float:
    q = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    return float(log_ndtr(q * (X @ beta)).sum())


def probit_gradient(beta, X, y) -> np.ndarray:
    q = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    return X.T @ (q * _mills(q * (X @ beta)))


def probit_hessian(beta, X, y) -> np.ndarray:
    q = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    r = q * (X @ beta)
    m = _mills(r)
    w = m * (m + r)
    return -(X.T * w) @ X


@dataclass
class ProbitFit:
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    log_likelihood: float
    null_log_likelihood: float
    pseudo_r2: float
    converged: bool
    iterations: int
    separated: bool = False

    @property
    def z(self) -> np.ndarray:
        return self.coefficients / self.standard_errors

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * norm.sf(np.abs(self.z))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def predict(self, X) -> np.ndarray:
        return ndtr(np.asarray(X, dtype=np.float64) @ self.coefficients)


def collinear_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    """Columns that add nothing to the span of the columns before them."""
    bad = []
    kept: list[int] = []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept.append(j)
        else:
            bad.append(names[j])
    return bad


def probit_fit(X, y, names: Sequence[str] | None = None, max_iter: int = 100,
               tol: float = 1e-8) -> ProbitFit:
    """Maximum-likelihood probit by Newton-Raphson with step halving.

    Convergence means the max-norm of the score vector fell below ``tol``.
    Standard errors come from the inverse negative Hessian at the optimum.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if n < p:
        raise ValueError(f"{n} rows for {p} columns")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("outcome must be binary")
    bad = collinear_columns(X, names)
    if bad:
        raise CollinearityError(bad)

    beta = np.zeros(p)
    ll = probit_loglik(beta, X, y)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = probit_gradient(beta, X, y)
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        H = probit_hessian(beta, X, y)
        try:
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            ll_cand = probit_loglik(cand, X, y)
            if ll_cand >= ll:
                break
            t *= 0.5
        else:
            break
        beta, ll = cand, ll_cand
    else:
        converged = np.max(np.abs(probit_gradient(beta, X, y))) < tol

    eta = X @ beta
    separated = bool(ll > -1e-6 or (not converged and np.max(np.abs(eta)) > 8.0))
    if separated:
        logger.warning("probit: outcome (quasi-)perfectly separated; coefficients diverge")
    try:
        cov = np.linalg.inv(-probit_hessian(beta, X, y))
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(p, np.nan)

    n1 = y.sum()
    pbar = n1 / n
    ll_null = float(n1 * np.log(pbar) + (n - n1) * np.log1p(-pbar)) if 0 < pbar < 1 else 0.0
    pseudo = 1.0 - ll / ll_null if ll_null < 0 else 0.0
    return ProbitFit(names, beta, se, ll, ll_null, float(pseudo), bool(converged), it, separated)


def design_matrix(score: Sequence[float], effects: Mapping[str, Sequence] | None = None,
                  score_name: str = "score") -> tuple[np.ndarray, list[str]]:
    """Intercept, the score, and dummies per fixed-effect family (first sorted level dropped)."""
    score = np.asarray(score, dtype=np.float64)
    cols = [np.ones(len(score)), score]
    names = ["const", score_name]
    for family, values in (effects or {}).items():
        values = [str(v) for v in values]
        levels = sorted(set(values))
        for level in levels[1:]:
            cols.append(np.array([v == level for v in values], dtype=np.float64))
            names.append(f"{family}[{level}]")
    return np.column_stack(cols), names


@dataclass
class RunResult:
    run: int
    seed: int
    n_pairs: int
    dropped: int
    coefficient: float
    std_error: float
    z: float
    p_value: float
    pseudo_r2: float
    auc_score: float
    auc_fitted: float
    converged: bool
    separated: bool


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else x - x.mean()


def validate_once(ds: MatchedDataset, records: Mapping[str, PaperRecord], scores: Mapping[str, float],
                  fe_keys: Sequence[str] = (), standardize: bool = False, run: int = 0,
                  max_iter: int = 100, tol: float = 1e-8) -> RunResult:
    ids, labels = ds.ids_and_labels()
    if len(ids) == 0:
        raise ValueError("no matched pairs to evaluate")
    x = np.array([scores[i] for i in ids], dtype=np.float64)
    if standardize:
        x = _standardize(x)
    effects = {k: [_key_value(records[i], k) for i in ids] for k in fe_keys}
    X, names = design_matrix(x, effects)
    fit = probit_fit(X, labels, names, max_iter=max_iter, tol=tol)
    j = names.index("score")
    return RunResult(
        run=run, seed=ds.seed, n_pairs=len(ds.pairs), dropped=len(ds.dropped),
        coefficient=float(fit.coefficients[j]), std_error=float(fit.standard_errors[j]),
        z=float(fit.z[j]), p_value=float(fit.p_values[j]), pseudo_r2=fit.pseudo_r2,
        auc_score=auc(x, labels), auc_fitted=auc(fit.predict(X), labels),
        converged=fit.converged, separated=fit.separated,
    )


def repeated_validation(cases: Sequence[PaperRecord], pool: Sequence[PaperRecord],
                        scores: Mapping[str, float], keys: Sequence[str], runs: int = 10,
                        seed: int = 0, fe_keys: Sequence[str] | None = None,
                        standardize: bool = False) -> list[RunResult]:
    """Re-match and re-fit ``runs`` times with seeds derived from ``seed``.

    Only papers with a score take part. Fixed effects default to the match keys.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    fe_keys = tuple(keys if fe_keys is None else fe_keys)
    cases = [c for c in cases if c.id in scores]
    pool = [p for p in pool if p.id in scores]
    records = {r.id: r for r in list(cases) + list(pool)}
    out = []
    for r in range(runs):
        ds = match_controls(cases, pool, keys, derive_seed(seed, r))
        out.append(validate_once(ds, records, scores, fe_keys, standardize, run=r))
    return out


RUN_COLUMNS = ("run", "seed", "n_pairs", "dropped", "coefficient", "std_error", "z", "p_value",
               "pseudo_r2", "auc_score", "auc_fitted", "converged", "separated")
_SUMMARY_FIELDS = ("coefficient", "std_error", "z", "p_value", "pseudo_r2", "auc_score", "auc_fitted")


def summarize_runs(results: Sequence[RunResult]) -> dict[str, dict[str, float]]:
    out = {"mean": {}, "std": {}}
    for name in _SUMMARY_FIELDS:
        values = np.array([getattr(r, name) for r in results], dtype=np.float64)
        out["mean"][name] = float(values.mean())
        out["std"][name] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return out


def write_runs(groups: Iterable[tuple[dict, Sequence[RunResult]]], fh: TextIO) -> None:
    """CSV of per-run rows followed by mean/std summary rows, for each labelled group."""
    writer = None
    for labels, results in groups:
        if writer is None:
            writer = csv.DictWriter(fh, fieldnames=list(labels) + list(RUN_COLUMNS), lineterminator="\n")
            writer.writeheader()
        for r in results:
            row = {k: getattr(r, k) for k in RUN_COLUMNS}
            for k in ("coefficient", "std_error", "z", "p_value", "pseudo_r2", "auc_score", "auc_fitted"):
                row[k] = repr(float(row[k]))
            row["converged"] = int(r.converged)
            row["separated"] = int(r.separated)
            writer.writerow({**labels, **row})
        for stat, values in summarize_runs(results).items():
            row = {k: "" for k in RUN_COLUMNS}
            row["run"] = stat
            row.update({k: repr(v) for k, v in values.items()})
            writer.writerow({**labels, **row})
