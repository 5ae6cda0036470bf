import itertools

import numpy as np
import pytest

from cllns.generators import gen_ca, gen_mis, gen_mvc, gen_sc
from cllns.ilp import Ilp

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def all_points(n: int) -> np.ndarray:
    return np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.float64)


def brute_force(ilp: Ilp):
    """Optimal objective and a minimizer by full enumeration (None, None if infeasible)."""
    pts = all_points(ilp.n)
    ok = np.all(pts @ ilp.dense_a.T <= ilp.rhs + 1e-9, axis=1) if ilp.m else np.ones(len(pts), bool)
    if not ok.any():
        return None, None
    vals = pts[ok] @ ilp.objective
    j = int(np.argmin(vals))
    return float(vals[j]), pts[ok][j].astype(np.int8)


def feasible_points(ilp: Ilp) -> np.ndarray:
    pts = all_points(ilp.n)
    if not ilp.m:
        return pts
    return pts[np.all(pts @ ilp.dense_a.T <= ilp.rhs + 1e-9, axis=1)]


def dense_random_ilp(seed: int, n: int, m: int) -> Ilp:
    """Dense integer coefficients; the rhs keeps a random anchor point feasible."""
    rng = np.random.default_rng(seed)
    a = rng.integers(-5, 6, size=(m, n)).astype(float)
    anchor = rng.integers(0, 2, size=n)
    slack = rng.integers(0, 4, size=m)
    b = a @ anchor + slack
    c = rng.integers(-10, 11, size=n).astype(float)
    rows = [([(j, a[i, j]) for j in range(n) if a[i, j] != 0], float(b[i])) for i in range(m)]
    return Ilp.from_rows(c, rows, f"dense-{seed}")


def mixed_instance(seed: int, max_n: int = 15) -> Ilp:
    """Small instance cycling through the four families and dense random ILPs."""
    rng = np.random.default_rng(10_000 + seed)
    kind = seed % 5
    if kind == 0:
        n = int(rng.integers(6, max_n + 1))
        return gen_mvc(n, int(rng.integers(2, min(5, n - 1) + 1)), seed)
    if kind == 1:
        n = int(rng.integers(6, max_n + 1))
        return gen_mis(n, float(rng.integers(2, 5)), seed)
    if kind == 2:
        return gen_sc(int(rng.integers(5, max_n + 1)), int(rng.integers(5, 20)), 0.25, seed)
    if kind == 3:
        return gen_ca(int(rng.integers(4, 10)), int(rng.integers(5, max_n + 1)), seed)
    n = int(rng.integers(4, max_n + 1))
    return dense_random_ilp(seed, n, int(rng.integers(2, 8)))


@pytest.fixture
def tiny_ilp():
    # min -x0 - 2x1 - 3x2  s.t.  x0 + x1 + x2 <= 2,  x1 + x2 <= 1
    return Ilp.from_rows(np.array([-1.0, -2.0, -3.0]),
                         [([(0, 1.0), (1, 1.0), (2, 1.0)], 2.0), ([(1, 1.0), (2, 1.0)], 1.0)], "tiny")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
