import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cllns.bnb import (EXHAUSTIVE, FEASIBLE, INFEASIBLE, LIMIT, OPTIMAL, SolveLimits, solve_bnb)
from cllns.generators import gen_mis, gen_mvc
from cllns.ilp import Ilp, evaluate

from conftest import all_points, brute_force, dense_random_ilp, mixed_instance


def test_integral_root_needs_one_node():
    ilp = Ilp.from_rows([1.0, 1.0], [([(0, 1.0), (1, 1.0)], 1.0, "ge"), ([(0, 1.0)], 0.0)])
    res = solve_bnb(ilp)
    assert res.status == OPTIMAL and res.nodes == 1 and res.best.objective == 1.0


def test_warm_start_with_optimum():
    ilp = gen_mis(12, 3.0, 2)
    opt, x = brute_force(ilp)
    res = solve_bnb(ilp, EXHAUSTIVE.with_incumbent(evaluate(ilp, x)))
    assert res.status == OPTIMAL
    assert [s.objective for s in res.incumbents] == [opt]


def test_warm_start_must_be_feasible():
    ilp = gen_mvc(8, 2, 0)
    with pytest.raises(ValueError):
        solve_bnb(ilp, EXHAUSTIVE.with_incumbent(evaluate(ilp, np.zeros(8, dtype=np.int8))))


def test_infeasible_instance():
    ilp = Ilp.from_rows([1.0, 1.0, 1.0], [([(0, 1.0), (1, 1.0)], 1.5, "ge"), ([(0, 1.0), (1, 1.0)], 1.2)])
    res = solve_bnb(ilp)
    assert res.status == INFEASIBLE and res.best is None


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_matches_enumeration(seed):
    ilp = mixed_instance(seed, max_n=12)
    opt, _ = brute_force(ilp)
    res = solve_bnb(ilp)
    assert res.status == OPTIMAL
    assert res.best.objective == pytest.approx(opt, abs=1e-9)
    objs = [s.objective for s in res.incumbents]
    assert all(a > b for a, b in zip(objs, objs[1:]))
    assert res.best is res.incumbents[-1]
    assert abs(res.best.objective - res.dual_bound) <= 1e-6


@given(st.integers(0, 100_000))
@settings(max_examples=25, deadline=None)
def test_node_bounds_are_sound(seed):
    ilp = dense_random_ilp(seed, 9, 5)
    pts = all_points(9)
    feas = np.all(pts @ ilp.dense_a.T <= ilp.rhs + 1e-9, axis=1)
    vals = pts @ ilp.objective

    def audit(lb, ub, lp):
        inside = feas & np.all(pts >= lb - 1e-9, axis=1) & np.all(pts <= ub + 1e-9, axis=1)
        if inside.any():
            assert lp.optimal and lp.objective <= vals[inside].min() + 1e-7

    solve_bnb(ilp, on_node=audit)


def test_node_limit_reports_limit_and_sound_dual_bound():
    for seed in range(30):
        ilp = dense_random_ilp(seed, 15, 8)
        full = solve_bnb(ilp)
        if full.nodes < 5:
            continue
        res = solve_bnb(ilp, SolveLimits(node_limit=2))
        assert res.nodes == 2 and res.status in (LIMIT, OPTIMAL)
        assert res.dual_bound <= full.best.objective + 1e-7
        if res.best is not None:
            assert res.dual_bound <= res.best.objective + 1e-9
        break
    else:
        pytest.skip("no instance needed branching")


def test_gap_limit_stops_early():
    ilp = gen_mvc(40, 6, 1)
    res = solve_bnb(ilp, SolveLimits(gap_limit=0.5))
    assert res.status in (FEASIBLE, OPTIMAL)
    assert abs(res.best.objective - res.dual_bound) / max(abs(res.best.objective), 1e-8) <= 0.5


def test_limits_validation_and_round_trip():
    with pytest.raises(ValueError):
        SolveLimits(node_limit=0)
    with pytest.raises(ValueError):
        SolveLimits(time_limit_s=-1)
    lim = SolveLimits(node_limit=7, gap_limit=0.1)
    assert SolveLimits.from_dict(lim.to_dict()) == lim
    assert math.isinf(SolveLimits.from_dict({}).time_limit_s)


def test_deterministic_under_node_limits():
    ilp = dense_random_ilp(21, 14, 9)
    a = solve_bnb(ilp, SolveLimits(node_limit=50)).to_dict()
    b = solve_bnb(ilp, SolveLimits(node_limit=50)).to_dict()
    for d in (a, b):
        for s in d["incumbents"] + ([d["best"]] if d["best"] else []):
            s.pop("found_at_s")
    assert a == b
