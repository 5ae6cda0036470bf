import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cllns.generators import gen_mvc
from cllns.ilp import (Action, Ilp, IlpFormatError, IlpValidationError, Solution,
                       add_local_branching_constraint, build_sub_ilp, dumps_ilp, evaluate, hamming,
                       read_ilp, read_solution, write_ilp, write_solution)

from conftest import all_points, brute_force, dense_random_ilp, feasible_points


def cover_pair():
    return Ilp.from_rows([1.0, 1.0], [([(0, 1.0), (1, 1.0)], 1.0, "ge")], "pair")


def test_ge_row_stored_negated():
    ilp = cover_pair()
    assert ilp.row_coefs[0].tolist() == [-1.0, -1.0] and ilp.rhs.tolist() == [-1.0]


def test_evaluate_examples():
    ilp = cover_pair()
    s = evaluate(ilp, [1, 0])
    assert s.feasible and s.objective == 1.0
    assert not evaluate(ilp, [0, 0]).feasible
    with pytest.raises(ValueError):
        evaluate(ilp, [1, 0, 1])
    with pytest.raises(ValueError):
        evaluate(ilp, [2, 0])


def test_evaluate_matches_dense_reevaluation_on_all_points():
    ilp = dense_random_ilp(3, 10, 6)
    a = np.zeros((ilp.m, ilp.n))
    for i, (idx, coef) in enumerate(zip(ilp.row_indices, ilp.row_coefs)):
        for j, v in zip(idx, coef):
            a[i, j] = v
    for x in all_points(10).astype(np.int8):
        s = evaluate(ilp, x)
        assert abs(s.objective - float(np.dot(ilp.objective, x))) <= 1e-9
        assert s.feasible == all(a[i] @ x <= ilp.rhs[i] + 1e-9 for i in range(ilp.m))


def test_validation_errors():
    with pytest.raises(IlpValidationError):
        Ilp.from_rows([1.0, 1.0], [([(0, 1.0), (0, 2.0)], 1.0)])
    with pytest.raises(IlpValidationError):
        Ilp.from_rows([1.0], [([(3, 1.0)], 1.0)])
    with pytest.raises(IlpValidationError):
        Ilp.from_rows([], [])
    with pytest.raises(IlpValidationError):
        Ilp.from_rows([1.0], [([(0, 1.0)], 1.0, "eq")])


def test_caller_arrays_are_not_frozen():
    c = np.ones(3)
    Ilp(c, (), (), np.zeros(0))
    c[0] = 2.0


def test_sub_ilp_all_ones_mask_is_identity():
    ilp = gen_mvc(8, 3, 1)
    inc = evaluate(ilp, np.ones(8, dtype=np.int8))
    assert build_sub_ilp(ilp, inc, Action(np.ones(8, bool))) == ilp


def test_sub_ilp_rejects_empty_mask_and_infeasible_incumbent():
    ilp = gen_mvc(8, 3, 1)
    inc = evaluate(ilp, np.ones(8, dtype=np.int8))
    with pytest.raises(ValueError):
        build_sub_ilp(ilp, inc, Action(np.zeros(8, bool)))
    with pytest.raises(ValueError):
        build_sub_ilp(ilp, evaluate(ilp, np.zeros(8, dtype=np.int8)), Action(np.ones(8, bool)))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_sub_ilp_optimum_between_full_optimum_and_incumbent(seed):
    ilp = dense_random_ilp(seed, 8, 5)
    pts = feasible_points(ilp)
    rng = np.random.default_rng(seed)
    inc = evaluate(ilp, pts[rng.integers(len(pts))].astype(np.int8))
    mask = np.zeros(8, bool)
    mask[rng.choice(8, 3, replace=False)] = True
    sub = build_sub_ilp(ilp, inc, Action(mask))
    assert sub.n == ilp.n and np.array_equal(sub.objective, ilp.objective)
    assert sub.m == ilp.m + 2 * (8 - 3)
    for i in range(ilp.m):
        assert np.array_equal(sub.row_coefs[i], ilp.row_coefs[i])
    full, _ = brute_force(ilp)
    part, x = brute_force(sub)
    assert full - 1e-9 <= part <= inc.objective + 1e-9
    assert np.array_equal(x[~mask], inc.assignment[~mask])


def test_local_branching_row_example():
    ilp = Ilp.from_rows([1.0, 1.0, 1.0], [], "free")
    inc = evaluate(ilp, [0, 1, 0])
    lb = add_local_branching_constraint(ilp, inc, 1)
    assert lb.m == 1
    assert lb.row_indices[0].tolist() == [0, 1, 2]
    assert lb.row_coefs[0].tolist() == [1.0, -1.0, 1.0]
    assert lb.rhs[0] == 0.0
    with pytest.raises(ValueError):
        add_local_branching_constraint(ilp, inc, 0)


@given(st.integers(0, 10_000), st.integers(1, 9))
@settings(max_examples=30, deadline=None)
def test_local_branching_row_is_hamming_ball(seed, k):
    rng = np.random.default_rng(seed)
    n = 9
    ilp = Ilp.from_rows(rng.normal(size=n), [], "free")
    inc = evaluate(ilp, rng.integers(0, 2, n).astype(np.int8))
    lb = add_local_branching_constraint(ilp, inc, k)
    pts = all_points(n)
    inside = pts @ lb.dense_a[0] <= lb.rhs[0] + 1e-9
    dist = np.array([hamming(p, inc.assignment) for p in pts])
    assert np.array_equal(inside, dist <= k)
    if k == n:
        assert inside.all()


def test_local_branching_feasible_set_on_8_vars():
    ilp = dense_random_ilp(17, 8, 4)
    pts = feasible_points(ilp)
    inc = evaluate(ilp, pts[0].astype(np.int8))
    lb = add_local_branching_constraint(ilp, inc, 2)
    got = {tuple(p) for p in feasible_points(lb)}
    want = {tuple(p) for p in pts if hamming(p, inc.assignment) <= 2}
    assert got == want


def test_file_round_trip_is_exact(tmp_path):
    ilp = gen_mvc(12, 3, 4)
    weird = Ilp.from_rows([0.1, 1 / 3, -2.5e-17], [([(0, 0.7), (2, 1e300)], 1 / 7)], "weird", {"k": "v"})
    for obj in (ilp, weird):
        p = tmp_path / "i.json"
        write_ilp(obj, p)
        assert read_ilp(p) == obj
        assert dumps_ilp(read_ilp(p)) == p.read_text()


def test_ge_sense_file_is_normalized(tmp_path):
    d = {"name": "g", "n": 2, "m": 1, "objective": [1, 1],
         "constraints": [{"terms": [[0, 1], [1, 1]], "rhs": 1, "sense": "ge"}], "metadata": {}}
    p = tmp_path / "g.json"
    p.write_text(json.dumps(d))
    ilp = read_ilp(p)
    assert ilp.row_coefs[0].tolist() == [-1.0, -1.0]
    out = json.loads(dumps_ilp(ilp))
    assert "sense" not in out["constraints"][0] and out["constraints"][0]["rhs"] == -1.0


def test_read_errors_name_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"n": 2,\n "m": }')
    with pytest.raises(IlpFormatError, match=r"bad.json:2:"):
        read_ilp(p)
    d = {"n": 2, "m": 1, "objective": [1, 1], "constraints": [{"terms": [[0, 1], [0, 2]], "rhs": 1}]}
    p.write_text(json.dumps(d))
    with pytest.raises(IlpValidationError, match=r"constraints\[0\]\.terms"):
        read_ilp(p)
    d["constraints"][0]["terms"] = [[0, "x"]]
    p.write_text(json.dumps(d))
    with pytest.raises(IlpFormatError, match=r"constraints\[0\]\.terms\[0\]"):
        read_ilp(p)


def test_solution_round_trip(tmp_path):
    ilp = cover_pair()
    s = evaluate(ilp, [0, 1])
    p = tmp_path / "s.json"
    write_solution(s, p)
    assert read_solution(p, ilp) == s
    assert read_solution(p).bits == "01"


def test_action_helpers():
    a = Action.from_indices(5, [1, 3])
    assert a.size == 2 and a.bits == "01010" and a.indices.tolist() == [1, 3]
    assert a == Action(np.array([0, 1, 0, 1, 0], bool)) and len({a, Action.from_indices(5, [3, 1])}) == 1


def test_solution_is_immutable():
    s = Solution(np.array([1, 0]), 1.0, True)
    with pytest.raises(ValueError):
        s.assignment[0] = 0
