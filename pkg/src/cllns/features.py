"""Bipartite-graph features of an LNS state.

The schema (14 variable, 6 constraint, 1 edge feature) is documented with its
exact formulas in ``docs/features.md``. Static columns come from the ILP and
its root LP relaxation; dynamic columns come from the incumbent history.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ilp import Ilp
from .lp import LpResult

N_VAR_FEATS = 14
N_CON_FEATS = 6
N_EDGE_FEATS = 1
WINDOW = 3

VAR_FEATURES = (
    "obj_coef", "degree", "coef_mean", "coef_min", "coef_max", "lp_value", "lp_frac",
    "lp_is_integral", "reduced_cost_sign", "incumbent_0", "incumbent_1", "incumbent_2",
    "incumbent_eq_lp_round", "change_rate",
)
CON_FEATURES = ("rhs", "degree", "obj_cosine", "lp_slack", "dual_sign", "coef_abs_mean")

_GUARD = 1e-12
_SIGN_TOL = 1e-9


@dataclass
class BipartiteFeatures:
    var_feats: np.ndarray
    con_feats: np.ndarray
    edge_con: np.ndarray
    edge_var: np.ndarray
    edge_feats: np.ndarray

    @property
    def n(self) -> int:
        return self.var_feats.shape[0]

    @property
    def m(self) -> int:
        return self.con_feats.shape[0]

    def to_dict(self) -> dict:
        return {
            "var_feats": self.var_feats.tolist(),
            "con_feats": self.con_feats.tolist(),
            "edge_con": self.edge_con.tolist(),
            "edge_var": self.edge_var.tolist(),
            "edge_feats": self.edge_feats.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BipartiteFeatures":
        n_e = len(d["edge_con"])
        return cls(
            np.asarray(d["var_feats"], dtype=np.float64).reshape(-1, N_VAR_FEATS),
            np.asarray(d["con_feats"], dtype=np.float64).reshape(-1, N_CON_FEATS),
            np.asarray(d["edge_con"], dtype=np.int64),
            np.asarray(d["edge_var"], dtype=np.int64),
            np.asarray(d["edge_feats"], dtype=np.float64).reshape(n_e, N_EDGE_FEATS),
        )


def scale_max_abs(col: np.ndarray) -> np.ndarray:
    """Divide by the largest magnitude; a column with range below 1e-12 becomes zero."""
    if col.size == 0:
        return col.astype(np.float64)
    if col.max() - col.min() < _GUARD:
        return np.zeros_like(col, dtype=np.float64)
    top = np.abs(col).max()
    return col / top


def _sign(v: np.ndarray) -> np.ndarray:
    return np.where(v > _SIGN_TOL, 1.0, np.where(v < -_SIGN_TOL, -1.0, 0.0))


def pad_window(history: list) -> list:
    """Most recent first; the oldest available entry is repeated up to the window size."""
    if not history:
        raise ValueError("incumbent history is empty")
    window = list(history[:WINDOW])
    while len(window) < WINDOW:
        window.append(window[-1])
    return window


def static_features(ilp: Ilp, root_lp: LpResult):
    """Columns that depend only on the instance and its root LP (cacheable per instance)."""
    n, m = ilp.n, ilp.m
    c = ilp.objective
    cmax = np.abs(c).max()
    edge_con = np.concatenate([np.full(idx.size, i, dtype=np.int64) for i, idx in enumerate(ilp.row_indices)]
                              or [np.zeros(0, dtype=np.int64)])
    edge_var = np.concatenate(list(ilp.row_indices) or [np.zeros(0, dtype=np.int64)]).astype(np.int64)
    coefs = np.concatenate(list(ilp.row_coefs) or [np.zeros(0)])
    row_scale = np.array([np.abs(a).max() if a.size else 1.0 for a in ilp.row_coefs])
    row_scale[row_scale < _GUARD] = 1.0
    edge_norm = coefs / row_scale[edge_con] if coefs.size else coefs

    var = np.zeros((n, N_VAR_FEATS))
    var[:, 0] = c / cmax if cmax > _GUARD else 0.0
    deg = np.bincount(edge_var, minlength=n).astype(np.float64)
    var[:, 1] = deg / m if m else 0.0
    if edge_var.size:
        sums = np.bincount(edge_var, weights=edge_norm, minlength=n)
        mins = np.full(n, np.inf)
        maxs = np.full(n, -np.inf)
        np.minimum.at(mins, edge_var, edge_norm)
        np.maximum.at(maxs, edge_var, edge_norm)
        has = deg > 0
        var[has, 2] = sums[has] / deg[has]
        var[has, 3] = mins[has]
        var[has, 4] = maxs[has]
    x = root_lp.values
    frac = np.minimum(x - np.floor(x), np.ceil(x) - x)
    var[:, 5] = x
    var[:, 6] = frac
    var[:, 7] = (frac < 1e-6).astype(np.float64)
    rc = root_lp.reduced_costs if root_lp.reduced_costs is not None else np.zeros(n)
    var[:, 8] = _sign(rc)

    con = np.zeros((m, N_CON_FEATS))
    if m:
        con[:, 0] = scale_max_abs(ilp.rhs)
        row_deg = np.array([idx.size for idx in ilp.row_indices], dtype=np.float64)
        con[:, 1] = row_deg / n
        a = ilp.dense_a
        norms = np.linalg.norm(a, axis=1) * np.linalg.norm(c)
        dots = a @ c
        con[:, 2] = np.where(norms > _GUARD, dots / np.where(norms > _GUARD, norms, 1.0), 0.0)
        con[:, 3] = scale_max_abs(ilp.rhs - a @ x)
        duals = root_lp.duals if root_lp.duals is not None else np.zeros(m)
        con[:, 4] = _sign(duals)
        abs_mean = np.array([np.abs(r).mean() if r.size else 0.0 for r in ilp.row_coefs])
        con[:, 5] = scale_max_abs(abs_mean)
    return var, con, edge_con, edge_var, edge_norm.reshape(-1, 1)


def featurize(state, root_lp: LpResult, static=None) -> BipartiteFeatures:
    """Features of ``state`` (needs ``ilp``, ``history``, ``t``, ``change_counts``)."""
    ilp = state.ilp
    var, con, edge_con, edge_var, edge_feats = static if static is not None else static_features(ilp, root_lp)
    var = var.copy()
    window = pad_window(state.history)
    for w, x in enumerate(window):
        var[:, 9 + w] = x
    lp_round = (root_lp.values >= 0.5).astype(np.float64)
    var[:, 12] = (window[0] == lp_round).astype(np.float64)
    var[:, 13] = np.asarray(state.change_counts, dtype=np.float64) / max(state.t, 1)
    return BipartiteFeatures(var, con.copy(), edge_con, edge_var, edge_feats)
