import os

import numpy as np
import pytest

from kgdlr.dataset import Vocabulary, write_triples
from kgdlr.models import ModelKind, init_random

ACCEPTANCE_LINES = []


def reference_residual(params, h, r, t):
    """Translation residual h_r + r - t_r with the projection matrices built explicitly."""
    E, R = params.entity, params.relation
    kind = params.kind
    if kind is ModelKind.TRANSE:
        u = E[h] + R[r] - E[t]
    elif kind is ModelKind.TRANSH:
        w = params.extras["normal"][r]
        P = np.eye(len(w)) - np.outer(w, w)
        u = P @ E[h] + R[r] - P @ E[t]
    elif kind is ModelKind.TRANSR:
        M = params.extras["matrix"][r]
        u = M @ E[h] + R[r] - M @ E[t]
    else:
        rp = params.extras["relation_proj"][r]
        ep = params.extras["entity_proj"]
        eye = np.eye(len(rp), E.shape[1])
        u = (np.outer(rp, ep[h]) + eye) @ E[h] + R[r] - (np.outer(rp, ep[t]) + eye) @ E[t]
    return u


def reference_score(params, dis, h, r, t):
    u = reference_residual(params, h, r, t)
    if str(getattr(dis, "value", dis)).upper() == "L1":
        return float(np.sum(np.abs(u)))
    return float(np.sqrt(np.sum(u * u)))


def brute_force_ranks(params, dis, triples, known):
    """Filtered (head_ranks, tail_ranks) by enumerating every candidate with the reference scorer."""
    n = params.n_entities
    heads, tails = [], []
    for h, r, t in triples:
        true = reference_score(params, dis, h, r, t)
        tails.append(1 + sum(reference_score(params, dis, h, r, e) < true
                             for e in range(n) if e != t and (h, r, e) not in known))
        true = reference_score(params, dis, h, r, t)
        heads.append(1 + sum(reference_score(params, dis, e, r, t) < true
                             for e in range(n) if e != h and (e, r, t) not in known))
    return np.array(heads), np.array(tails)


def perturbed_params(kind, n_ent, n_rel, dim, dim_rel=None, seed=0, scale=0.3):
    """Random parameters with non-trivial projections (identity/zero inits perturbed)."""
    p = init_random(kind, n_ent, n_rel, dim, dim_rel, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for name, block in p.extras.items():
        block += rng.normal(0, scale, block.shape)
    if p.kind is ModelKind.TRANSH:
        w = p.extras["normal"]
        w /= np.linalg.norm(w, axis=1, keepdims=True)
    return p


@pytest.fixture
def small_kg_dir(tmp_path):
    """A tiny labelled dataset on disk built from a planted TransE graph."""
    from kgdlr.synthetic import planted_transe_graph

    data, _, _ = planted_transe_graph(n_entities=40, n_relations=3, dim=8, n_triples=300, seed=3)
    for name in ("train", "valid", "test"):
        write_triples(tmp_path / f"{name}.txt", data.split(name), data.vocab)
    return tmp_path


def record_criterion(number, title, passed, detail=""):
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"[criterion {number}] {status}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def wn18_dir():
    d = os.environ.get("KGE_WN18_DIR")
    if d and all(os.path.exists(os.path.join(d, f"{s}.txt")) for s in ("train", "valid", "test")):
        return d
    return None


def finite_difference_errors(kind, dis, n_points=100, seed=0, step=1e-5, gamma=50.0):
    """Relative errors between analytic and central-difference gradients at random non-kink points."""
    from kgdlr.training import batch_gradient, dense_gradient

    n_ent, n_rel = 6, 3
    dims = (5, 4) if ModelKind.parse(kind) in (ModelKind.TRANSR, ModelKind.TRANSD) else (5, None)
    rng = np.random.default_rng(seed)
    errors = []
    while len(errors) < n_points:
        p = perturbed_params(kind, n_ent, n_rel, *dims, seed=int(rng.integers(1 << 30)), scale=0.5)
        pos = (int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent)))
        neg = (int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent)))
        if pos == neg:
            continue  # a corruption always differs from its positive
        res = np.concatenate([reference_residual(p, *pos), reference_residual(p, *neg)])
        if np.abs(res).min() < 1e-3 or np.linalg.norm(reference_residual(p, *pos)) < 1e-3:
            continue  # too close to a kink of |.| or of the norm
        loss = lambda q: gamma + reference_score(q, dis, *pos) - reference_score(q, dis, *neg)
        analytic = dense_gradient(p, batch_gradient(p, dis, [pos], [neg], gamma)[1])
        num, ana = [], []
        for name, block in p.blocks().items():
            flat = block.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                up = loss(p)
                flat[i] = keep - step
                down = loss(p)
                flat[i] = keep
                num.append((up - down) / (2 * step))
            ana.append(analytic[name].reshape(-1))
        num, ana = np.array(num), np.concatenate(ana)
        scale = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-8)
        errors.append(float(np.linalg.norm(num - ana) / scale))
    return np.array(errors)
