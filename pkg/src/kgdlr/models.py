"""Translation-based scoring models: TransE, TransH, TransR and TransD.

All distance and projection arithmetic goes through the fixed-order kernels
below. They reduce over the embedding axis one coordinate at a time, so a
score computed for a single triple is bit-identical to the same score computed
inside a large candidate block. The evaluation engines rely on this to produce
exactly equal ranks.

Kernel arrays are laid out "dimension first": axis 0 is the embedding
coordinate and the remaining axes are batch axes.
"""
from __future__ import annotations

import enum
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Inconsistent model dimensions or options."""


class ModelKind(str, enum.Enum):
    TRANSE = "TransE"
    TRANSH = "TransH"
    TRANSR = "TransR"
    TRANSD = "TransD"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise ConfigError(f"unknown model kind {value!r}")

    @property
    def has_relation_space(self) -> bool:
        return self is not ModelKind.TRANSE


class Dissimilarity(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"

    @classmethod
    def parse(cls, value) -> "Dissimilarity":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown dissimilarity {value!r}") from None

    def __call__(self, x) -> float:
        """Norm of a plain vector (reference implementation, not the kernel)."""
        x = np.asarray(x, dtype=np.float64)
        if self is Dissimilarity.L1:
            return float(np.abs(x).sum())
        return float(np.sqrt((x * x).sum()))


# names of the kind-specific parameter blocks, in checkpoint order
EXTRA_BLOCKS = {
    ModelKind.TRANSE: (),
    ModelKind.TRANSH: ("normal",),
    ModelKind.TRANSR: ("matrix",),
    ModelKind.TRANSD: ("entity_proj", "relation_proj"),
}


@dataclass
class ModelParams:
    """Embedding tables plus kind-specific projection parameters.

    ``extras`` holds, per kind:

    - TransH: ``normal`` (#Rel, d) unit hyperplane normals
    - TransR: ``matrix`` (#Rel, d_r, d_e) projection matrices
    - TransD: ``entity_proj`` (#Ent, d_e) and ``relation_proj`` (#Rel, d_r)
    """

    kind: ModelKind
    entity: np.ndarray
    relation: np.ndarray
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        missing = set(EXTRA_BLOCKS[self.kind]) - set(self.extras)
        if missing:
            raise ConfigError(f"{self.kind.value} needs parameter blocks {sorted(missing)}")
        if self.kind in (ModelKind.TRANSE, ModelKind.TRANSH) and self.dim_entity != self.dim_relation:
            raise ConfigError(f"{self.kind.value} needs equal entity and relation dimensions")
        if self.kind is ModelKind.TRANSR:
            expect = (self.n_relations, self.dim_relation, self.dim_entity)
            if self.extras["matrix"].shape != expect:
                raise ConfigError(f"TransR matrices must have shape {expect}")

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]

    @property
    def dim_entity(self) -> int:
        return self.entity.shape[1]

    @property
    def dim_relation(self) -> int:
        return self.relation.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        """All parameter arrays by name, in checkpoint order."""
        out = {"entity": self.entity, "relation": self.relation}
        for name in EXTRA_BLOCKS[self.kind]:
            out[name] = self.extras[name]
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.entity.copy(), self.relation.copy(),
                           {k: v.copy() for k, v in self.extras.items()})

    def equals(self, other: "ModelParams") -> bool:
        a, b = self.blocks(), other.blocks()
        return self.kind is other.kind and a.keys() == b.keys() and all(
            a[k].shape == b[k].shape and np.array_equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------- kernels

def _expand(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))


def _dot_dfirst(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_k a[k] * b[k], accumulated in index order."""
    acc = np.zeros(np.broadcast_shapes(a.shape[1:], b.shape[1:]))
    for k in range(a.shape[0]):
        acc += a[k] * b[k]
    return acc


def translation_distance(h: np.ndarray, r: np.ndarray, t: np.ndarray, dis: Dissimilarity) -> np.ndarray:
    """Dissimilarity of ``(h + r) - t`` for dimension-first, broadcastable arrays."""
    shape = np.broadcast_shapes(h.shape[1:], r.shape[1:], t.shape[1:])
    acc = np.zeros(shape)
    x = np.empty(shape)
    l1 = dis is Dissimilarity.L1
    hr_full = np.broadcast_shapes(h.shape[1:], r.shape[1:]) == shape
    for k in range(h.shape[0]):
        if hr_full:
            np.add(h[k], r[k], out=x)
            np.subtract(x, t[k], out=x)
        else:
            np.subtract(h[k] + r[k], t[k], out=x)
        if l1:
            np.abs(x, out=x)
        else:
            np.multiply(x, x, out=x)
        acc += x
    return acc if l1 else np.sqrt(acc)


def project(params: ModelParams, relation: int, entities) -> np.ndarray:
    """Project entity rows into the space of ``relation``.

    Returns a ``(d_r, n)`` array for ``n`` entity indices (``entities=None``
    means the whole table).
    """
    idx = slice(None) if entities is None else np.atleast_1d(np.asarray(entities, dtype=np.int64))
    e = params.entity[idx].T
    kind = params.kind
    if kind is ModelKind.TRANSE:
        return np.ascontiguousarray(e)
    if kind is ModelKind.TRANSH:
        w = params.extras["normal"][relation]
        s = _dot_dfirst(_expand(w, e.ndim), e)
        return e - s * _expand(w, e.ndim)
    if kind is ModelKind.TRANSR:
        m = params.extras["matrix"][relation]
        acc = np.zeros((m.shape[0],) + e.shape[1:])
        for k in range(m.shape[1]):
            acc += _expand(m[:, k], e.ndim) * e[k]
        return acc
    # TransD: (r_p e_p^T + I) e = r_p (e_p . e) + I e, I rectangular
    ep = params.extras["entity_proj"][idx].T
    rp = params.extras["relation_proj"][relation]
    s = _dot_dfirst(ep, e)
    d_r = rp.shape[0]
    base = np.zeros((d_r,) + e.shape[1:])
    n = min(d_r, e.shape[0])
    base[:n] = e[:n]
    return s * _expand(rp, e.ndim) + base


def relation_vector(params: ModelParams, relation: int) -> np.ndarray:
    return params.relation[relation].reshape(-1, 1)


def score(params: ModelParams, dis, triple) -> float:
    """Dissimilarity of one ``(h, r, t)`` triple; lower means more plausible."""
    h, r, t = (int(x) for x in triple)
    dis = Dissimilarity.parse(dis)
    ph = project(params, r, [h])
    pt = project(params, r, [t])
    return float(translation_distance(ph, relation_vector(params, r), pt, dis)[0])


def score_triples(params: ModelParams, dis, triples) -> np.ndarray:
    """Scores for many triples, with the same arithmetic as :func:`score`."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    dis = Dissimilarity.parse(dis)
    out = np.empty(len(triples))
    for r in np.unique(triples[:, 1]):
        sel = np.flatnonzero(triples[:, 1] == r)
        ph = project(params, int(r), triples[sel, 0])
        pt = project(params, int(r), triples[sel, 2])
        out[sel] = translation_distance(ph, relation_vector(params, int(r)), pt, dis)
    return out


def margin_loss(pos, neg, gamma: float):
    """Hinge max(0, gamma + pos - neg)."""
    if gamma < 0:
        raise ValueError("margin must be non-negative")
    return np.maximum(0.0, gamma + np.asarray(pos) - np.asarray(neg))


# ---------------------------------------------------------- initialisation

def rectangular_identity(rows: int, cols: int) -> np.ndarray:
    return np.eye(rows, cols)


def _uniform(rng, shape, dim):
    bound = 6.0 / np.sqrt(dim)
    return rng.uniform(-bound, bound, size=shape)


def _row_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def init_random(kind, n_entities: int, n_relations: int, dim: int,
                dim_relation: int | None = None, seed: int = 0) -> ModelParams:
    """Random initialisation, fully determined by ``seed``.

    Entity and relation coordinates are uniform in [-6/sqrt(d), 6/sqrt(d)];
    relation rows are then L2-normalised once. TransH normals are random unit
    vectors, TransR matrices start as the (rectangular) identity. TransD
    relation projection vectors start at zero, which makes both dynamic
    matrices the identity; entity projection vectors are random so that the
    projection gradients are not identically zero.
    """
    kind = ModelKind.parse(kind)
    if dim <= 0 or (dim_relation is not None and dim_relation <= 0):
        raise ConfigError("dimensions must be positive")
    d_r = dim if dim_relation is None else dim_relation
    if kind in (ModelKind.TRANSE, ModelKind.TRANSH) and d_r != dim:
        raise ConfigError(f"{kind.value} uses a single dimension")
    rng = np.random.default_rng(seed)
    entity = _uniform(rng, (n_entities, dim), dim)
    relation = _row_normalize(_uniform(rng, (n_relations, d_r), d_r))
    extras = {}
    if kind is ModelKind.TRANSH:
        extras["normal"] = _row_normalize(_uniform(rng, (n_relations, dim), dim))
    elif kind is ModelKind.TRANSR:
        extras["matrix"] = np.broadcast_to(rectangular_identity(d_r, dim), (n_relations, d_r, dim)).copy()
    elif kind is ModelKind.TRANSD:
        extras["entity_proj"] = _uniform(rng, (n_entities, dim), dim)
        extras["relation_proj"] = np.zeros((n_relations, d_r))
    return ModelParams(kind, entity, relation, extras)


def init_pretrained(kind, transe: ModelParams, seed: int = 0) -> ModelParams:
    """Start a projection model from trained TransE embeddings.

    Embeddings are copied; TransR matrices are identities, TransD relation
    projections are zero (entity projections random, see :func:`init_random`),
    TransH normals are random unit vectors.
    """
    kind = ModelKind.parse(kind)
    if transe.kind is not ModelKind.TRANSE:
        raise ConfigError("pretrained initialisation needs TransE parameters")
    if kind is ModelKind.TRANSE:
        return transe.copy()
    fresh = init_random(kind, transe.n_entities, transe.n_relations, transe.dim_entity,
                        transe.dim_relation, seed=seed)
    return ModelParams(kind, transe.entity.copy(), transe.relation.copy(), fresh.extras)


def apply_constraints(params: ModelParams) -> ModelParams:
    """Project entity rows onto the unit L2 ball and renormalise TransH normals, in place."""
    norms = np.linalg.norm(params.entity, axis=1)
    over = norms > 1.0 + 1e-12
    if over.any():
        params.entity[over] /= norms[over, None]
    if params.kind is ModelKind.TRANSH:
        w = params.extras["normal"]
        wn = np.linalg.norm(w, axis=1)
        off = (np.abs(wn - 1.0) > 1e-12) & (wn > 0)
        if off.any():
            w[off] /= wn[off, None]
    return params


# ------------------------------------------------------------- checkpoints

MAGIC = b"KGE1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: ModelParams, dis) -> None:
    """Write params atomically as float32 little-endian blocks after a text header."""
    dis = Dissimilarity.parse(dis)
    header = (f"{params.kind.value} {params.dim_entity} {params.dim_relation} "
              f"{params.n_entities} {params.n_relations} {dis.value}\n").encode("ascii")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(header)
            for block in params.blocks().values():
                fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _block_shapes(kind: ModelKind, d_e, d_r, n_ent, n_rel):
    shapes = {"entity": (n_ent, d_e), "relation": (n_rel, d_r)}
    if kind is ModelKind.TRANSH:
        shapes["normal"] = (n_rel, d_e)
    elif kind is ModelKind.TRANSR:
        shapes["matrix"] = (n_rel, d_r, d_e)
    elif kind is ModelKind.TRANSD:
        shapes["entity_proj"] = (n_ent, d_e)
        shapes["relation_proj"] = (n_rel, d_r)
    return shapes


def load_checkpoint(path) -> tuple[ModelParams, Dissimilarity]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        kind_s, d_e, d_r, n_ent, n_rel, dis_s = data[len(MAGIC):end].decode("ascii").split()
        kind = ModelKind.parse(kind_s)
        d_e, d_r, n_ent, n_rel = int(d_e), int(d_r), int(n_ent), int(n_rel)
        dis = Dissimilarity.parse(dis_s)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header") from exc
    shapes = _block_shapes(kind, d_e, d_r, n_ent, n_rel)
    body = np.frombuffer(data, dtype="<f4", offset=end + 1) if len(data) > end + 1 else np.empty(0, "<f4")
    expected = sum(int(np.prod(s)) for s in shapes.values())
    if body.size != expected:
        raise CheckpointError(f"{path}: expected {expected} floats, found {body.size}")
    blocks, pos = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        blocks[name] = body[pos:pos + size].astype(np.float64).reshape(shape)
        pos += size
    entity, relation = blocks.pop("entity"), blocks.pop("relation")
    return ModelParams(kind, entity, relation, blocks), dis
