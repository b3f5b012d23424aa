import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from galdetector.scoring import (
    OBSERVED_NORMAL,
    SELECTED_ANOMALY,
    assign_weights,
    galscore,
    minmax,
    select_potential_anomalies,
)


def test_minmax_constant_is_half():
    assert minmax(np.array([3.0, 3.0])).tolist() == [0.5, 0.5]
    assert minmax(np.array([1.0, 3.0, 2.0])).tolist() == [0.0, 1.0, 0.5]


def test_two_point_fusion():
    t = galscore([0.0, 1.0], [1.0, 1.0], mu=0.5)
    assert t.galscore_norm.tolist() == [0.0, 1.0]
    assert t.lss_norm.tolist() == [0.0, 1.0]


def test_constant_gns_keeps_lss_order():
    lss = np.array([0.3, 0.1, 0.7, 0.2])
    for mu in (0.1, 1.0, 25.0):
        t = galscore(lss, np.full(4, 0.6), mu)
        assert np.argsort(t.galscore_norm).tolist() == np.argsort(lss).tolist()


def test_galscore_errors():
    with pytest.raises(ValueError):
        galscore([1.0, 2.0], [1.0], 1.0)
    with pytest.raises(ValueError):
        galscore([1.0], [1.0], 0.0)


vec = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        hnp.arrays(float, n, elements=st.floats(0, 10)),
        hnp.arrays(float, n, elements=st.floats(1e-6, 1)),
    )
)


@settings(max_examples=300, deadline=None)
@given(vec, st.floats(0.01, 10))
def test_galscore_ranks_match_independent_fusion(pair, mu):
    lss, g = pair
    t = galscore(lss, g, mu)
    span = lss.max() - lss.min()
    ref_norm = np.full_like(lss, 0.5) if span == 0 else (lss - lss.min()) / span
    combined = ref_norm - mu * g
    span_c = combined.max() - combined.min()
    ref = np.full_like(combined, 0.5) if span_c == 0 else (combined - combined.min()) / span_c
    assert np.allclose(t.galscore_norm, ref, atol=1e-12)
    # strict order of well-separated pairs survives
    sep = np.abs(combined[:, None] - combined[None, :]) > 1e-9
    assert np.array_equal(np.sign(np.subtract.outer(t.galscore_norm, t.galscore_norm))[sep],
                          np.sign(np.subtract.outer(combined, combined))[sep])
    assert np.all((t.galscore_norm >= 0) & (t.galscore_norm <= 1))


@settings(max_examples=300, deadline=None)
@given(vec, st.floats(0.01, 100), st.floats(-50, 50))
def test_positive_affine_rescale_of_lss_keeps_order(pair, scale, shift):
    lss, g = pair
    lss = np.round(lss, 3)  # keep differences resolvable after the shift
    a = galscore(lss, g).galscore_norm
    b = galscore(lss * scale + shift, g).galscore_norm
    assert np.allclose(a, b, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(vec, st.floats(0.01, 5), st.floats(0.01, 5))
def test_larger_mu_never_promotes_the_most_normal_sample(pair, mu1, mu2):
    lss, g = pair
    lo, hi = sorted((mu1, mu2))
    top = int(np.argmax(g))
    # number of samples ranked strictly above it
    def above(mu):
        s = galscore(lss, g, mu).galscore_norm
        return int((s > s[top] + 1e-12).sum())
    assert above(hi) >= above(lo)


# ---------------------------------------------------------------- selection

def test_selection_count():
    t = galscore(np.random.default_rng(0).random(100), np.full(100, 0.5))
    assert select_potential_anomalies(t, 0.05).size == 5


@pytest.mark.parametrize("n,delta,expected", [(30, 0.1, 3), (1000, 0.05, 50), (21, 0.05, 2), (1, 0.05, 1)])
def test_selection_count_is_exact_ceiling(n, delta, expected):
    t = galscore(np.arange(n, dtype=float), np.full(n, 0.5))
    assert select_potential_anomalies(t, delta).size == expected


def test_selection_ties_go_to_lower_index():
    t = galscore(np.ones(20), np.ones(20), index=np.arange(100, 120))
    assert select_potential_anomalies(t, 0.1).tolist() == [100, 101]


def test_planted_top_scores_are_selected():
    rng = np.random.default_rng(2)
    lss = rng.uniform(0.0, 0.5, 100)
    planted = np.array([7, 19, 44, 60, 93])
    lss[planted] = rng.uniform(0.9, 1.0, 5)
    gns = rng.uniform(0.8, 1.0, 100)
    gns[planted] = rng.uniform(0.0, 0.1, 5)
    t = galscore(lss, gns)
    assert set(np.argsort(-t.galscore_norm)[:5]) == set(planted)
    assert sorted(select_potential_anomalies(t, 0.05).tolist()) == planted.tolist()


def test_selection_rejects_bad_delta():
    t = galscore([1.0, 2.0], [0.5, 0.5])
    for d in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            select_potential_anomalies(t, d)


scores_st = st.integers(1, 60).flatmap(
    lambda n: hnp.arrays(float, n, elements=st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]) | st.floats(0, 1))
)


@settings(max_examples=1000, deadline=None)
@given(scores_st, st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_selection_monotone_in_delta(scores, d1, d2):
    lo, hi = sorted((d1, d2))
    t = galscore(scores, np.zeros_like(scores) + 0.5)
    small = set(select_potential_anomalies(t, lo).tolist())
    big = set(select_potential_anomalies(t, hi).tolist())
    assert small <= big


# ---------------------------------------------------------------- weights

def _table(scores):
    scores = np.asarray(scores, dtype=float)
    return galscore(scores, np.full(scores.size, 0.5), index=np.arange(scores.size))


def test_weights_are_scores_over_selected_max():
    t = _table([0.0, 0.4, 0.8, 1.0])  # min-max already, so galscore_norm == scores
    ts = assign_weights(t, [2, 1], observed_normals=[10, 11], epsilon=0.5)
    assert ts.index.tolist() == [10, 11, 2, 1]
    assert ts.labels.tolist() == [0, 0, 1, 1]
    assert ts.weights.tolist() == [0.5, 0.5, 1.0, 0.5]
    assert ts.provenance == (OBSERVED_NORMAL,) * 2 + (SELECTED_ANOMALY,) * 2
    assert ts.n_selected == 2


def test_single_selected_gets_weight_one():
    t = _table([0.0, 0.3, 1.0])
    ts = assign_weights(t, [1], observed_normals=[], epsilon=0.5)
    assert ts.weights.tolist() == [1.0]


def test_degenerate_selection_errors():
    t = _table([0.0, 1.0])
    with pytest.raises(ValueError, match="revisit delta and mu"):
        assign_weights(t, [0], [5])
    with pytest.raises(ValueError):
        assign_weights(t, [], [5])
    with pytest.raises(ValueError):
        assign_weights(t, [1], [5], epsilon=1.5)


@settings(max_examples=1000, deadline=None)
@given(scores_st, st.floats(0.001, 0.999), st.floats(0.0, 1.0, exclude_min=True))
def test_weight_bounds_with_top_weight_one(scores, delta, eps):
    t = _table(scores)
    sel = select_potential_anomalies(t, delta)
    ts = assign_weights(t, sel, observed_normals=np.arange(1000, 1003), epsilon=eps)
    assert np.all((ts.weights > 0) & (ts.weights <= 1))
    assert np.all(ts.weights[ts.labels == 0] == eps)
    w_sel = ts.weights[ts.labels == 1]
    assert w_sel.max() == 1.0
    s_sel = t.galscore_norm[ts.index[ts.labels == 1]]
    assert np.array_equal(w_sel == 1.0, s_sel == s_sel.max())


def test_score_table_csv(tmp_path):
    t = _table([0.0, 0.5, 1.0])
    path = tmp_path / "scores.csv"
    t.write_csv(path, selected=[2], weights={2: 1.0})
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["index", "lss_raw", "lss_norm", "gns", "galscore_norm", "selected", "weight"]
    assert rows[3][5:] == ["1", "1.0"]
    assert rows[1][5:] == ["0", ""]
