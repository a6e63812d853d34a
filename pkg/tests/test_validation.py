import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from conftest import rec
from ctdnovelty.validation import (
    CollinearityError,
    auc,
    derive_seed,
    design_matrix,
    match_controls,
    probit_fit,
    probit_gradient,
    probit_hessian,
    probit_loglik,
    repeated_validation,
    summarize_runs,
    write_runs,
)


def pairwise_auc(scores, labels):
    # counting oracle over every (pos, neg) pair
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_reference_values():
    assert auc([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0
    assert auc([1, 1, 1, 1], [1, 0, 1, 0]) == 0.5
    assert auc([3, 1, 2, 0], [1, 1, 0, 0]) == 0.75


@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pairwise_oracle(data):
    scores, labels = zip(*data)
    if len(set(labels)) < 2:
        with pytest.raises(ValueError):
            auc(scores, labels)
        return
    a = auc(scores, labels)
    assert a == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)
    # strictly increasing transform leaves it unchanged; flipping labels complements it
    assert auc(np.exp(np.array(scores, float)), labels) == pytest.approx(a, abs=1e-12)
    assert auc(scores, [not y for y in labels]) == pytest.approx(1 - a, abs=1e-12)


def papers_for_matching(draw_keys, prefix):
    return [rec(f"{prefix}{k}", y, ["a", "b"], venue=v, field=f) for k, (y, v, f) in enumerate(draw_keys)]


key_tuple = st.tuples(st.integers(2000, 2002), st.sampled_from(["V1", "V2", None]), st.sampled_from(["f", "g"]))


@given(st.lists(key_tuple, max_size=20), st.lists(key_tuple, max_size=40), st.integers(0, 1000))
@settings(max_examples=80)
def test_match_controls_invariants(case_keys, pool_keys, seed):
    cases = papers_for_matching(case_keys, "c")
    pool = papers_for_matching(pool_keys, "p")
    keys = ("year", "venue", "field")
    ds = match_controls(cases, pool, keys, seed)
    by_id = {r.id: r for r in cases + pool}
    controls = [c for _, c in ds.pairs]
    assert len(set(controls)) == len(controls)
    assert len(ds.pairs) + len(ds.dropped) == len(cases)
    for case, control in ds.pairs:
        a, b = by_id[case], by_id[control]
        assert (a.year, a.venue, a.field) == (b.year, b.venue, b.field)
        assert a.venue is not None
    # every drop is forced: no unused compatible control left
    used = Counter((by_id[c].year, by_id[c].venue, by_id[c].field) for c in controls)
    avail = Counter((p.year, p.venue, p.field) for p in pool if p.venue is not None)
    for cid in ds.dropped:
        c = by_id[cid]
        k = (c.year, c.venue, c.field)
        assert c.venue is None or used[k] == avail[k]
    assert match_controls(cases, pool, keys, seed).pairs == ds.pairs


def test_match_controls_errors():
    a = rec("x", 2000, ["a", "b"], venue="v")
    with pytest.raises(ValueError):
        match_controls([a], [a], ["year"], 0)
    with pytest.raises(ValueError):
        match_controls([a], [], ["colour"], 0)
    with pytest.raises(ValueError):
        match_controls([a], [], [], 0)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert len({derive_seed(7, r) for r in range(100)}) == 100


def simulate_probit(beta, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    X = np.column_stack([np.ones(n), x])
    y = (X @ beta + rng.normal(size=n) > 0).astype(float)
    return X, y


def test_probit_recovers_coefficients():
    beta = np.array([0.5, -0.3])
    X, y = simulate_probit(beta, 5000, 0)
    fit = probit_fit(X, y, ["const", "x"])
    assert fit.converged
    assert np.max(np.abs(probit_gradient(fit.coefficients, X, y))) < 1e-8
    assert np.all(np.abs(fit.coefficients - beta) < 3 * fit.standard_errors)
    assert fit.coef("x") == pytest.approx(-0.3, abs=0.06)
    assert fit.p_values[1] < 1e-6
    assert 0 < fit.pseudo_r2 < 1


def test_probit_null_effect():
    rng = np.random.default_rng(1)
    n = 2000
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = (rng.random(n) < 0.5).astype(float)
    fit = probit_fit(X, y)
    assert abs(fit.z[1]) < 3
    assert fit.pseudo_r2 < 0.01


def test_probit_intercept_only_closed_form():
    y = np.array([1, 1, 1, 0, 0, 1, 0, 1], float)
    fit = probit_fit(np.ones((8, 1)), y)
    assert fit.coefficients[0] == pytest.approx(norm.ppf(y.mean()), abs=1e-10)
    assert fit.pseudo_r2 == pytest.approx(0.0, abs=1e-12)


def test_gradient_and_hessian_finite_differences():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    y = (rng.random(50) < 0.4).astype(float)
    beta = rng.normal(scale=0.5, size=3)
    h = 1e-6
    g = probit_gradient(beta, X, y)
    H = probit_hessian(beta, X, y)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (probit_loglik(beta + e, X, y) - probit_loglik(beta - e, X, y)) / (2 * h)
        assert fd == pytest.approx(g[j], rel=1e-4, abs=1e-6)
        fd_col = (probit_gradient(beta + e, X, y) - probit_gradient(beta - e, X, y)) / (2 * h)
        assert np.allclose(fd_col, H[:, j], rtol=1e-4, atol=1e-6)


def test_probit_collinearity_named():
    rng = np.random.default_rng(3)
    x = rng.normal(size=40)
    X = np.column_stack([np.ones(40), x, 2 * x])
    with pytest.raises(CollinearityError, match="dup") as err:
        probit_fit(X, (x > 0).astype(float), ["const", "x", "dup"])
    assert err.value.columns == ["dup"]


def test_probit_separation_flagged():
    x = np.linspace(-1, 1, 40)
    X = np.column_stack([np.ones(40), x])
    fit = probit_fit(X, (x > 0).astype(float))
    assert fit.separated


def test_probit_input_checks():
    with pytest.raises(ValueError):
        probit_fit(np.ones((3, 1)), [0, 2, 1])
    with pytest.raises(ValueError):
        probit_fit(np.ones((1, 2)), [1])


def test_design_matrix_dummies():
    X, names = design_matrix([1.0, 2.0, 3.0], {"venue": ["b", "a", "c"]})
    assert names == ["const", "score", "venue[b]", "venue[c]"]
    assert X[:, 2].tolist() == [1, 0, 0] and X[:, 3].tolist() == [0, 0, 1]


def planted(seed=0, n=300, effect=1.0):
    rng = np.random.default_rng(seed)
    cases, pool, scores = [], [], {}
    for k in range(n):
        v = f"V{k % 3}"
        cases.append(rec(f"c{k}", 2000, ["a", "b"], venue=v, field="f", label=True))
        scores[f"c{k}"] = effect + rng.normal()
    for k in range(2 * n):
        v = f"V{k % 3}"
        pool.append(rec(f"p{k}", 2000, ["a", "b"], venue=v, field="f", label=False))
        scores[f"p{k}"] = rng.normal()
    return cases, pool, scores


def test_repeated_validation_detects_planted_effect():
    cases, pool, scores = planted()
    res = repeated_validation(cases, pool, scores, ["year", "venue"], runs=5, seed=9)
    assert len(res) == 5
    for r in res:
        assert r.n_pairs == 300 and r.coefficient > 0 and r.p_value < 1e-6
        assert 0.7 < r.auc_score < 0.85
        assert r.converged and not r.separated
    assert len({r.seed for r in res}) == 5
    again = repeated_validation(cases, pool, scores, ["year", "venue"], runs=5, seed=9)
    assert [r.coefficient for r in again] == [r.coefficient for r in res]


def test_repeated_validation_no_effect_and_standardize():
    cases, pool, scores = planted(effect=0.0, seed=4)
    res = repeated_validation(cases, pool, scores, ["venue"], runs=3, standardize=True)
    assert all(abs(r.z) < 3.5 for r in res)
    with pytest.raises(ValueError):
        repeated_validation(cases, pool, scores, ["venue"], runs=0)


def test_write_runs_has_summary_rows():
    cases, pool, scores = planted(n=60)
    res = repeated_validation(cases, pool, scores, ["venue"], runs=3)
    buf = io.StringIO()
    write_runs([({"method": "term_term", "measure": "ctd"}, res)], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("method,measure,run,seed")
    assert [ln.split(",")[2] for ln in lines[1:]] == ["0", "1", "2", "mean", "std"]
    s = summarize_runs(res)
    assert s["mean"]["coefficient"] == pytest.approx(np.mean([r.coefficient for r in res]))
