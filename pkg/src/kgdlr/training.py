"""Margin-ranking training: analytic gradients, lazy Adam and the epoch loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import TripleSet
from .models import Dissimilarity, ModelKind, ModelParams, apply_constraints
from .sampling import NegativeSampler

L2_EPS = 1e-12

# sparse gradient: block name -> (unique sorted rows, per-row deltas)
SparseGradient = dict


@dataclass
class TrainConfig:
    batch_size: int = 100
    margin: float = 1.0
    dis: Dissimilarity = Dissimilarity.L1
    seed: int = 0

    def __post_init__(self):
        self.dis = Dissimilarity.parse(self.dis)
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


def _norm_grad(u: np.ndarray, dis: Dissimilarity) -> np.ndarray:
    if dis is Dissimilarity.L1:
        return np.sign(u)
    n = np.linalg.norm(u, axis=-1, keepdims=True)
    return u / np.maximum(n, L2_EPS)


def _dist(u: np.ndarray, dis: Dissimilarity) -> np.ndarray:
    if dis is Dissimilarity.L1:
        return np.abs(u).sum(axis=-1)
    return np.linalg.norm(u, axis=-1)


def _embed(params: ModelParams, idx: np.ndarray, r: np.ndarray):
    """Projected entity rows for a batch with per-row relations (vectorised, BLAS order)."""
    e = params.entity[idx]
    kind = params.kind
    if kind is ModelKind.TRANSE:
        return e
    if kind is ModelKind.TRANSH:
        w = params.extras["normal"][r]
        return e - np.sum(w * e, axis=1, keepdims=True) * w
    if kind is ModelKind.TRANSR:
        return np.einsum("bij,bj->bi", params.extras["matrix"][r], e)
    rp = params.extras["relation_proj"][r]
    s = np.sum(params.extras["entity_proj"][idx] * e, axis=1, keepdims=True)
    base = np.zeros_like(rp)
    n = min(rp.shape[1], e.shape[1])
    base[:, :n] = e[:, :n]
    return base + s * rp


def batch_scores(params: ModelParams, dis, triples) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    h, r, t = triples.T
    u = _embed(params, h, r) + params.relation[r] - _embed(params, t, r)
    return _dist(u, Dissimilarity.parse(dis))


def _triple_grads(params: ModelParams, dis, triples: np.ndarray, coef: np.ndarray, out: dict) -> None:
    """Append coef * d f(triple) / d params for every row to ``out``."""
    h, r, t = triples.T
    u = _embed(params, h, r) + params.relation[r] - _embed(params, t, r)
    g = coef[:, None] * _norm_grad(u, dis)
    out.setdefault("relation", []).append((r, g))
    kind = params.kind
    eh, et = params.entity[h], params.entity[t]
    if kind is ModelKind.TRANSE:
        dh, dt = g, -g
    elif kind is ModelKind.TRANSH:
        w = params.extras["normal"][r]
        dh = g - np.sum(w * g, axis=1, keepdims=True) * w
        dt = -dh
        diff = et - eh
        dw = np.sum(g * w, axis=1, keepdims=True) * diff + np.sum(w * diff, axis=1, keepdims=True) * g
        out.setdefault("normal", []).append((r, dw))
    elif kind is ModelKind.TRANSR:
        m = params.extras["matrix"][r]
        dh = np.einsum("bij,bi->bj", m, g)
        dt = -dh
        out.setdefault("matrix", []).append((r, g[:, :, None] * (eh - et)[:, None, :]))
    else:
        hp = params.extras["entity_proj"][h]
        tp = params.extras["entity_proj"][t]
        rp = params.extras["relation_proj"][r]
        a = np.sum(rp * g, axis=1, keepdims=True)
        d_r, d_e = rp.shape[1], eh.shape[1]
        gi = np.zeros((len(g), d_e))
        n = min(d_r, d_e)
        gi[:, :n] = g[:, :n]
        dh = gi + a * hp
        dt = -(gi + a * tp)
        out.setdefault("entity_proj", []).append((h, a * eh))
        out.setdefault("entity_proj", []).append((t, -a * et))
        sh = np.sum(hp * eh, axis=1, keepdims=True)
        st = np.sum(tp * et, axis=1, keepdims=True)
        out.setdefault("relation_proj", []).append((r, (sh - st) * g))
    out.setdefault("entity", []).append((h, dh))
    out.setdefault("entity", []).append((t, dt))


def _accumulate(parts: dict) -> SparseGradient:
    grads = {}
    for name, chunks in parts.items():
        rows = np.concatenate([c[0] for c in chunks])
        deltas = np.concatenate([c[1] for c in chunks])
        uniq, inv = np.unique(rows, return_inverse=True)
        acc = np.zeros((len(uniq),) + deltas.shape[1:])
        np.add.at(acc, inv, deltas)
        nz = np.any(acc.reshape(len(uniq), -1) != 0, axis=1)
        if nz.any():
            grads[name] = (uniq[nz], acc[nz])
    return grads


def batch_gradient(params: ModelParams, dis, pos, neg, gamma: float) -> tuple[float, SparseGradient]:
    """Summed hinge loss and its sparse gradient over aligned positive/negative rows."""
    dis = Dissimilarity.parse(dis)
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 3)
    neg = np.asarray(neg, dtype=np.int64).reshape(-1, 3)
    hinge = gamma + batch_scores(params, dis, pos) - batch_scores(params, dis, neg)
    active = hinge > 0
    loss = float(hinge[active].sum())
    if not active.any():
        return loss, {}
    ones = np.ones(int(active.sum()))
    parts: dict = {}
    _triple_grads(params, dis, pos[active], ones, parts)
    _triple_grads(params, dis, neg[active], -ones, parts)
    return loss, _accumulate(parts)


def pair_gradient(params: ModelParams, dis, pos, neg, gamma: float) -> SparseGradient:
    """Gradient of max(0, gamma + f(pos) - f(neg)); empty when the hinge is inactive."""
    return batch_gradient(params, dis, pos, neg, gamma)[1]


def dense_gradient(params: ModelParams, grads: SparseGradient) -> dict[str, np.ndarray]:
    out = {k: np.zeros_like(v) for k, v in params.blocks().items()}
    for name, (rows, deltas) in grads.items():
        out[name][rows] += deltas
    return out


@dataclass
class AdamState:
    """Row-wise lazy Adam: moments and step counters only advance for touched rows."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, lr: float, **kw) -> "AdamState":
        st = cls(lr, **kw)
        for name, block in params.blocks().items():
            st.m[name] = np.zeros_like(block)
            st.v[name] = np.zeros_like(block)
            st.steps[name] = np.zeros(block.shape[0], dtype=np.int64)
        return st


def adam_step(state: AdamState, grads: SparseGradient, params: ModelParams) -> ModelParams:
    blocks = params.blocks()
    for name, (rows, g) in grads.items():
        p, m, v, steps = blocks[name], state.m[name], state.v[name], state.steps[name]
        steps[rows] += 1
        t = steps[rows].reshape((-1,) + (1,) * (g.ndim - 1)).astype(np.float64)
        m[rows] = state.beta1 * m[rows] + (1 - state.beta1) * g
        v[rows] = state.beta2 * v[rows] + (1 - state.beta2) * g * g
        m_hat = m[rows] / (1 - state.beta1 ** t)
        v_hat = v[rows] / (1 - state.beta2 ** t)
        p[rows] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def train_epoch(params: ModelParams, train: TripleSet, cfg: TrainConfig, sampler: NegativeSampler,
                adam: AdamState, epoch: int = 1) -> float:
    """One pass over ``train`` in shuffled mini-batches; returns the summed hinge loss."""
    n = len(train)
    if cfg.batch_size > n:
        raise ValueError(f"batch size {cfg.batch_size} exceeds training split size {n}")
    order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        pos = train.triples[order[start:start + cfg.batch_size]]
        neg, _ = sampler.corrupt_batch(pos)
        loss, grads = batch_gradient(params, cfg.dis, pos, neg, cfg.margin)
        total += loss
        if grads:
            adam_step(adam, grads, params)
            apply_constraints(params)
    return total
