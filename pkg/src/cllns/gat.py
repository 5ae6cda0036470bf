"""Two-round graph attention policy over the variable/constraint bipartite graph.

Forward pass:

1. 2-layer ReLU MLPs embed variable, constraint and edge features into R^d.
2. Round 1: every constraint attends over its variables plus itself with H
   heads. For a target ``t`` and an entry carrying message ``s`` along edge
   ``e`` the head-h logit is ``w1 . leaky_relu([Tc c_t, s, Te e])``; messages
   are ``Tv v_j`` for neighbours and ``Tc c_t`` for the self entry, whose edge
   input is a learned self-edge vector. Softmax runs over the target's
   entries and the H head outputs are averaged.
3. Round 2 is the same with roles swapped: variables attend over the updated
   constraints and themselves.
4. A 2-layer ReLU MLP maps each updated variable embedding to a logit, and
   the sigmoid gives the score.

Gradients are exact reverse mode, written by hand. Weights are stored as
float32; arithmetic runs in float64.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .features import N_CON_FEATS, N_EDGE_FEATS, N_VAR_FEATS, BipartiteFeatures
from .rng import Rng

SCHEMA_VERSION = 1
MAGIC = b"CLLNSGAT"
LEAKY_SLOPE = 0.2

DEFAULT_DIMS = {"f_v": N_VAR_FEATS, "f_c": N_CON_FEATS, "f_e": N_EDGE_FEATS,
                "d": 64, "heads": 8, "hidden": 64}


class WeightsFormatError(ValueError):
    pass


def param_shapes(dims: dict) -> dict:
    d, h, hid = dims["d"], dims["heads"], dims["hidden"]
    shapes = {}
    for name, f_in in (("emb_v", dims["f_v"]), ("emb_c", dims["f_c"]), ("emb_e", dims["f_e"])):
        shapes[f"{name}.w1"] = (f_in, hid)
        shapes[f"{name}.b1"] = (hid,)
        shapes[f"{name}.w2"] = (hid, d)
        shapes[f"{name}.b2"] = (d,)
    for r in ("r1", "r2"):
        shapes[f"{r}.theta_c"] = (h, d, d)
        shapes[f"{r}.theta_v"] = (h, d, d)
        shapes[f"{r}.theta_e"] = (h, d, d)
        shapes[f"{r}.w"] = (3 * d,)
        shapes[f"{r}.self_edge"] = (d,)
    shapes["out.w1"] = (d, hid)
    shapes["out.b1"] = (hid,)
    shapes["out.w2"] = (hid, 1)
    shapes["out.b2"] = (1,)
    return shapes


@dataclass
class GatWeights:
    dims: dict
    params: dict

    def __post_init__(self):
        shapes = param_shapes(self.dims)
        if set(shapes) != set(self.params):
            raise ValueError("parameter names do not match the architecture")
        for k, shape in shapes.items():
            if tuple(self.params[k].shape) != shape:
                raise ValueError(f"{k}: shape {self.params[k].shape}, expected {shape}")

    def copy(self, dtype=None) -> "GatWeights":
        return GatWeights(dict(self.dims), {k: np.array(v, dtype=dtype or v.dtype) for k, v in self.params.items()})

    def zeros_like(self) -> dict:
        return {k: np.zeros(v.shape) for k, v in self.params.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def init_weights(seed: int, dims: dict | None = None, dtype=np.float32) -> GatWeights:
    """Uniform fan-in (He) initialization; biases start at zero."""
    dims = dict(DEFAULT_DIMS if dims is None else dims)
    rng = Rng(seed)
    params = {}
    for name, shape in param_shapes(dims).items():
        leaf = name.split(".")[1]
        if leaf.startswith("b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = shape[-1] if leaf.startswith("theta") or leaf in ("w", "self_edge") else shape[0]
        bound = np.sqrt(6.0 / fan_in)
        if leaf == "self_edge":
            bound = 1.0 / np.sqrt(shape[0])
        size = int(np.prod(shape))
        params[name] = rng.uniform(-bound, bound, size).reshape(shape).astype(dtype)
    return GatWeights(dims, params)


# -- persistence ------------------------------------------------------------

def save_weights(weights: GatWeights, path) -> None:
    """Write ``MAGIC | u32 header length | JSON header | little-endian f32 tensors``."""
    manifest, chunks, offset = [], [], 0
    for name in sorted(weights.params):
        arr = np.ascontiguousarray(weights.params[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"schema_version": SCHEMA_VERSION, "dims": weights.dims,
                         "dtype": "float32-le", "tensors": manifest}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_weights(path) -> GatWeights:
    blob = Path(path).read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise WeightsFormatError(f"{path}: not a weights file")
    (hlen,) = struct.unpack("<I", blob[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(blob[start:start + hlen])
    except json.JSONDecodeError as e:
        raise WeightsFormatError(f"{path}: bad header: {e}") from None
    if header.get("schema_version") != SCHEMA_VERSION:
        raise WeightsFormatError(f"{path}: unsupported schema version {header.get('schema_version')}")
    dims = header["dims"]
    expected = param_shapes(dims)
    payload = blob[start + hlen:]
    params = {}
    for t in header["tensors"]:
        name, shape = t["name"], tuple(t["shape"])
        if expected.get(name) != shape:
            raise WeightsFormatError(f"{path}: tensor {name} has shape {shape}, dims imply {expected.get(name)}")
        size = int(np.prod(shape)) * 4
        raw = payload[t["offset"]:t["offset"] + size]
        if len(raw) != size:
            raise WeightsFormatError(f"{path}: tensor {name} truncated")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    if set(params) != set(expected):
        raise WeightsFormatError(f"{path}: tensor set does not match dims")
    return GatWeights(dims, params)


# -- building blocks ----------------------------------------------------------

def _mlp_forward(x, w1, b1, w2, b2):
    h = x @ w1 + b1
    a = np.maximum(h, 0.0)
    return a @ w2 + b2, (x, h, a)


def _mlp_backward(dy, cache, w1, w2, grads, prefix, need_dx=False):
    x, h, a = cache
    grads[f"{prefix}.w2"] += a.T @ dy
    grads[f"{prefix}.b2"] += dy.sum(axis=0)
    dh = (dy @ w2.T) * (h > 0)
    grads[f"{prefix}.w1"] += x.T @ dh
    grads[f"{prefix}.b1"] += dh.sum(axis=0)
    return dh @ w1.T if need_dx else None


def _leaky(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z)


class _Graph:
    """Entry layout for both attention rounds (neighbour edges then self entries)."""

    def __init__(self, feats: BipartiteFeatures):
        n, m = feats.n, feats.m
        n_e = feats.edge_con.size
        self.n, self.m, self.n_e = n, m, n_e
        self.edge_con = feats.edge_con
        self.edge_var = feats.edge_var
        self.tgt1 = np.concatenate([feats.edge_con, np.arange(m)])
        self.tgt2 = np.concatenate([feats.edge_var, np.arange(n)])
        ones1 = np.ones(n_e + m)
        ones2 = np.ones(n_e + n)
        self.scatter1 = sp.csr_matrix((ones1, (self.tgt1, np.arange(n_e + m))), shape=(m, n_e + m))
        self.scatter2 = sp.csr_matrix((ones2, (self.tgt2, np.arange(n_e + n))), shape=(n, n_e + n))


def _seg_sum(scatter, vals):
    """Sum entries (H, K, ...) into targets (H, N, ...) with a sparse scatter matrix."""
    h = vals.shape[0]
    flat = vals.reshape(h, vals.shape[1], -1)
    out = np.stack([scatter @ flat[i] for i in range(h)])
    return out.reshape((h, scatter.shape[0]) + vals.shape[2:])


def _seg_softmax(logits, tgt, n_tgt):
    mx = np.full((logits.shape[0], n_tgt), -np.inf)
    np.maximum.at(mx, (slice(None), tgt), logits)
    ex = np.exp(logits - mx[:, tgt])
    den = np.zeros((logits.shape[0], n_tgt))
    np.add.at(den, (slice(None), tgt), ex)
    return ex / den[:, tgt]


def _attend(x_tgt, x_src, e_emb, theta_t, theta_s, theta_e, w, self_edge, tgt, src, scatter):
    """One attention round. Returns ``(out (N, d), cache)``."""
    heads = theta_t.shape[0]
    n_tgt = x_tgt.shape[0]
    t_all = x_tgt @ theta_t.transpose(0, 2, 1)
    s_all = x_src @ theta_s.transpose(0, 2, 1)
    g_e = e_emb @ theta_e.transpose(0, 2, 1)
    g_self = theta_e @ self_edge
    msg = np.concatenate([s_all[:, src], t_all], axis=1)
    edge_part = np.concatenate([g_e, np.broadcast_to(g_self[:, None, :], (heads, n_tgt, g_self.shape[1]))], axis=1)
    z = np.concatenate([t_all[:, tgt], msg, edge_part], axis=2)
    u = _leaky(z)
    logits = u @ w
    alpha = _seg_softmax(logits, tgt, n_tgt)
    out = _seg_sum(scatter, alpha[..., None] * msg).mean(axis=0)
    cache = (x_tgt, x_src, e_emb, t_all, msg, z, u, alpha)
    return out, cache


def _attend_backward(dout, cache, theta_t, theta_s, theta_e, w, self_edge, tgt, src, scatter,
                     grads, prefix, names):
    x_tgt, x_src, e_emb, t_all, msg, z, u, alpha = cache
    heads, _, d = t_all.shape
    n_e = src.size
    n_tgt = x_tgt.shape[0]
    dout_e = dout[tgt] / heads  # (K, d)
    dmsg = alpha[..., None] * dout_e[None]
    dalpha = (msg * dout_e[None]).sum(axis=2)
    weighted = _seg_sum(scatter, alpha * dalpha)  # (H, N)
    dlogit = alpha * (dalpha - weighted[:, tgt])
    grads[f"{prefix}.w"] += dlogit.reshape(-1) @ u.reshape(-1, u.shape[2])
    dz = dlogit[..., None] * w[None, None, :]
    dz *= np.where(z > 0, 1.0, LEAKY_SLOPE)
    dt_all = _seg_sum(scatter, dz[..., :d])
    dmsg += dz[..., d:2 * d]
    dedge = dz[..., 2 * d:]
    ds_all = np.zeros((heads, x_src.shape[0], d))
    if n_e:
        np.add.at(ds_all, (slice(None), src), dmsg[:, :n_e])
    dt_all += dmsg[:, n_e:]
    dg_e = dedge[:, :n_e]
    dg_self = dedge[:, n_e:].sum(axis=1)
    name_t, name_s = names
    grads[f"{prefix}.{name_t}"] += dt_all.transpose(0, 2, 1) @ x_tgt
    grads[f"{prefix}.{name_s}"] += ds_all.transpose(0, 2, 1) @ x_src
    grads[f"{prefix}.theta_e"] += dg_e.transpose(0, 2, 1) @ e_emb + dg_self[:, :, None] * self_edge[None, None, :]
    grads[f"{prefix}.self_edge"] += (dg_self[:, None, :] @ theta_e).sum(axis=(0, 1))
    dx_tgt = (dt_all @ theta_t).sum(axis=0)
    dx_src = (ds_all @ theta_s).sum(axis=0)
    de_emb = (dg_e @ theta_e).sum(axis=0)
    return dx_tgt, dx_src, de_emb


# -- public API ---------------------------------------------------------------

@dataclass
class ForwardCache:
    feats: BipartiteFeatures
    graph: _Graph
    params: dict
    emb: dict
    r1: tuple
    r2: tuple
    out_mlp: tuple
    c_new: np.ndarray
    v_new: np.ndarray
    logits: np.ndarray
    scores: np.ndarray


def _check_dims(weights: GatWeights, feats: BipartiteFeatures) -> None:
    dims = weights.dims
    if feats.var_feats.shape[1] != dims["f_v"] or feats.con_feats.shape[1] != dims["f_c"] \
            or feats.edge_feats.shape[1] != dims["f_e"]:
        raise ValueError("feature dimensions do not match the network")
    if feats.edge_con.size != feats.edge_var.size or feats.edge_feats.shape[0] != feats.edge_con.size:
        raise ValueError("edge arrays have inconsistent lengths")


def forward(weights: GatWeights, feats: BipartiteFeatures, return_cache: bool = False):
    """Scores in (0, 1) for every variable (optionally with the activation cache)."""
    _check_dims(weights, feats)
    p = {k: np.asarray(v, dtype=np.float64) for k, v in weights.params.items()}
    g = _Graph(feats)
    emb = {}
    v, emb["v"] = _mlp_forward(feats.var_feats, p["emb_v.w1"], p["emb_v.b1"], p["emb_v.w2"], p["emb_v.b2"])
    c, emb["c"] = _mlp_forward(feats.con_feats, p["emb_c.w1"], p["emb_c.b1"], p["emb_c.w2"], p["emb_c.b2"])
    e, emb["e"] = _mlp_forward(feats.edge_feats, p["emb_e.w1"], p["emb_e.b1"], p["emb_e.w2"], p["emb_e.b2"])
    emb["vce"] = (v, c, e)
    c_new, r1 = _attend(c, v, e, p["r1.theta_c"], p["r1.theta_v"], p["r1.theta_e"], p["r1.w"],
                        p["r1.self_edge"], g.tgt1, g.edge_var, g.scatter1)
    v_new, r2 = _attend(v, c_new, e, p["r2.theta_v"], p["r2.theta_c"], p["r2.theta_e"], p["r2.w"],
                        p["r2.self_edge"], g.tgt2, g.edge_con, g.scatter2)
    y, out_mlp = _mlp_forward(v_new, p["out.w1"], p["out.b1"], p["out.w2"], p["out.b2"])
    logits = y[:, 0]
    scores = 0.5 * (1.0 + np.tanh(0.5 * logits))
    if not return_cache:
        return scores
    return scores, ForwardCache(feats, g, p, emb, r1, r2, out_mlp, c_new, v_new, logits, scores)


def backward(weights: GatWeights, cache: ForwardCache | None, upstream_grad) -> dict:
    """Gradient of ``scores . upstream_grad`` with respect to every weight tensor."""
    if cache is None:
        raise RuntimeError("backward needs the cache from forward(..., return_cache=True)")
    p, g = cache.params, cache.graph
    grads = {k: np.zeros(v.shape) for k, v in p.items()}
    up = np.asarray(upstream_grad, dtype=np.float64)
    if up.shape != cache.scores.shape:
        raise ValueError("upstream gradient length does not match the number of variables")
    dy = (up * cache.scores * (1.0 - cache.scores))[:, None]
    dv_new = _mlp_backward(dy, cache.out_mlp, p["out.w1"], p["out.w2"], grads, "out", need_dx=True)
    dv, dc_new, de2 = _attend_backward(dv_new, cache.r2, p["r2.theta_v"], p["r2.theta_c"], p["r2.theta_e"],
                                       p["r2.w"], p["r2.self_edge"], g.tgt2, g.edge_con, g.scatter2,
                                       grads, "r2", ("theta_v", "theta_c"))
    dc, dv1, de1 = _attend_backward(dc_new, cache.r1, p["r1.theta_c"], p["r1.theta_v"], p["r1.theta_e"],
                                    p["r1.w"], p["r1.self_edge"], g.tgt1, g.edge_var, g.scatter1,
                                    grads, "r1", ("theta_c", "theta_v"))
    _mlp_backward(dv + dv1, cache.emb["v"], p["emb_v.w1"], p["emb_v.w2"], grads, "emb_v")
    _mlp_backward(dc, cache.emb["c"], p["emb_c.w1"], p["emb_c.w2"], grads, "emb_c")
    _mlp_backward(de1 + de2, cache.emb["e"], p["emb_e.w1"], p["emb_e.w2"], grads, "emb_e")
    return grads


def attention_weights(weights: GatWeights, feats: BipartiteFeatures):
    """Per-head attention coefficients of both rounds with their target indices."""
    _, cache = forward(weights, feats, return_cache=True)
    g = cache.graph
    return (cache.r1[-1], g.tgt1), (cache.r2[-1], g.tgt2)
