import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cllns.features import (N_CON_FEATS, N_VAR_FEATS, BipartiteFeatures, featurize, pad_window,
                            scale_max_abs, static_features)
from cllns.generators import gen_ca, gen_mvc, gen_sc
from cllns.ilp import Ilp, evaluate
from cllns.lns import LnsState
from cllns.lp import OPTIMAL, LpResult, solve_lp_relaxation


def state_for(ilp, x, history=None, t=0, changes=None):
    s = LnsState(ilp, evaluate(ilp, np.asarray(x, dtype=np.int8)))
    if history is not None:
        s.history = [np.asarray(h, dtype=np.int8) for h in history]
    s.t = t
    if changes is not None:
        s.change_counts = np.asarray(changes)
    return s


def test_single_edge_cover_by_hand():
    ilp = Ilp.from_rows([1.0, 1.0], [([(0, 1.0), (1, 1.0)], 1.0, "ge")])
    lp = LpResult(OPTIMAL, np.array([0.5, 0.5]), 1.0, 1, duals=np.array([-1.0]), reduced_costs=np.zeros(2))
    f = featurize(state_for(ilp, [1, 0]), lp)
    expect_v = np.array([
        [1, 1, -1, -1, -1, 0.5, 0.5, 0, 0, 1, 1, 1, 1, 0],
        [1, 1, -1, -1, -1, 0.5, 0.5, 0, 0, 0, 0, 0, 0, 0],
    ], dtype=float)
    assert np.array_equal(f.var_feats, expect_v)
    # b, slack and |coef| mean are single-valued columns and therefore zeroed; cosine(-1,-1 ; 1,1) = -1
    np.testing.assert_allclose(f.con_feats, [[0, 1, -1, 0, -1, 0]], rtol=0, atol=1e-12)
    assert f.edge_con.tolist() == [0, 0] and f.edge_var.tolist() == [0, 1]
    assert f.edge_feats.ravel().tolist() == [-1.0, -1.0]


def test_isolated_variable_has_no_edges():
    ilp = Ilp.from_rows([1.0, 2.0, 3.0], [([(0, 1.0), (1, 2.0)], 2.0)])
    f = featurize(state_for(ilp, [0, 0, 0]), solve_lp_relaxation(ilp))
    assert f.var_feats[2, 1] == 0 and f.var_feats[2, 2:5].tolist() == [0, 0, 0]
    assert 2 not in f.edge_var.tolist()


def test_window_padding_repeats_oldest():
    a, b = np.array([1, 0]), np.array([0, 1])
    w = pad_window([a, b])
    assert [x.tolist() for x in w] == [[1, 0], [0, 1], [0, 1]]
    with pytest.raises(ValueError):
        pad_window([])


def test_dynamic_columns():
    ilp = gen_mvc(10, 3, 2)
    lp = solve_lp_relaxation(ilp)
    h = [np.ones(10), np.ones(10), np.ones(10)]
    h[0][0] = 0
    changes = np.arange(10)
    f = featurize(state_for(ilp, h[0], h, t=4, changes=changes), lp)
    assert f.var_feats[0, 9] == 0 and f.var_feats[0, 10] == 1
    assert np.allclose(f.var_feats[:, 13], changes / 4)
    assert np.array_equal(f.var_feats[:, 12], (h[0] == (lp.values >= 0.5)).astype(float))


def test_scale_guard():
    assert scale_max_abs(np.array([3.0, 3.0])).tolist() == [0.0, 0.0]
    assert scale_max_abs(np.array([-2.0, 1.0])).tolist() == [-1.0, 0.5]


@given(st.integers(0, 10_000), st.sampled_from(["mvc", "sc", "ca"]))
@settings(max_examples=30, deadline=None)
def test_invariants(seed, family):
    ilp = {"mvc": lambda: gen_mvc(15, 4, seed), "sc": lambda: gen_sc(12, 20, 0.2, seed),
           "ca": lambda: gen_ca(8, 15, seed)}[family]()
    x0 = np.ones(ilp.n) if family in ("mvc", "sc") else np.zeros(ilp.n)
    s = state_for(ilp, x0)
    f = s.features()
    assert f.var_feats.shape == (ilp.n, N_VAR_FEATS) and f.con_feats.shape == (ilp.m, N_CON_FEATS)
    for arr in (f.var_feats, f.con_feats, f.edge_feats):
        assert np.all(np.isfinite(arr)) and np.all(np.abs(arr) <= 1 + 1e-12)
    pattern = sorted((i, int(j)) for i, idx in enumerate(ilp.row_indices) for j in idx)
    assert sorted(zip(f.edge_con.tolist(), f.edge_var.tolist())) == pattern


def test_round_trip_dict():
    ilp = gen_mvc(8, 2, 1)
    f = state_for(ilp, np.ones(8)).features()
    g = BipartiteFeatures.from_dict(f.to_dict())
    for name in ("var_feats", "con_feats", "edge_con", "edge_var", "edge_feats"):
        assert np.array_equal(getattr(f, name), getattr(g, name))


def test_static_cache_matches_fresh():
    ilp = gen_sc(10, 15, 0.3, 4)
    lp = solve_lp_relaxation(ilp)
    s = state_for(ilp, np.ones(10))
    cached = featurize(s, lp, static_features(ilp, lp))
    assert np.array_equal(cached.var_feats, featurize(s, lp).var_feats)
