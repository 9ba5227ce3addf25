"""Dual-attention Siamese scorer over contextualized concept representations.

A concept is scored from its label vector plus a context vector distilled
from four facets (ancestor lineage paths, children, object-property and
datatype-property neighbors). Lineage paths go through two attention stages:
path-level attention weighs whole paths against the focal label, the weighted
paths are merged position-by-position, then node-level attention weighs the
merged positions, scaled by trainable per-depth weights. One-hop facets use
path-level attention only (each neighbor is a path of length one). The four
facet vectors are mixed by a softmax-constrained convex combination and the
concatenated [label, context] vector is projected down by a bias-free linear
map. Pairs are scored with cosine similarity; training minimizes mean squared
error against 0/1 labels.

Label embeddings are frozen, so the trainable parameters are exactly: the
projection matrix, the per-depth weights and the facet-mixing logits.
`backward` returns their analytic gradients for one pair's squared error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FACETS = ("ancestors", "object", "children", "data")
ONE_HOP_FACETS = ("object", "children", "data")

MODE_FULL = "full"
MODE_SINGLE_ATTENTION = "single_attention"
MODE_NO_CONTEXT = "no_context"
MODES = (MODE_FULL, MODE_SINGLE_ATTENTION, MODE_NO_CONTEXT)

POOL_WEIGHTED_SUM = "weighted_sum"
POOL_MAX = "max_pool"
POOLINGS = (POOL_WEIGHTED_SUM, POOL_MAX)

CHECKPOINT_FORMAT = "ontoalign-checkpoint-v1"


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 512
    out_dim: int = 300
    max_depth: int = 6
    pooling: str = POOL_WEIGHTED_SUM
    mode: str = MODE_FULL
    facets: tuple[str, ...] = FACETS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        unknown = set(self.facets) - set(FACETS)
        if unknown:
            raise ValueError(f"unknown facets {sorted(unknown)}")


@dataclass
class ModelParams:
    projection: np.ndarray  # (out_dim, 2*dim), no bias
    depth_weights: np.ndarray  # (max_depth,)
    category_logits: np.ndarray  # (4,), softmaxed into facet mixing weights
    config: ModelConfig


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Symmetric uniform init for the projection; depth weights start at one
    (no depth preference), mixing logits at zero (uniform facet weights)."""
    rng = np.random.default_rng(seed)
    fan_in, fan_out = 2 * config.dim, config.out_dim
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return ModelParams(
        projection=rng.uniform(-bound, bound, size=(config.out_dim, 2 * config.dim)),
        depth_weights=np.ones(config.max_depth),
        category_logits=np.zeros(len(FACETS)),
        config=config,
    )


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores)
    e = np.exp(shifted)
    return e / e.sum()


def category_weights(logits: np.ndarray) -> np.ndarray:
    return softmax(np.asarray(logits, dtype=float))


# ---------------------------------------------------------------------------
# attention building blocks
# ---------------------------------------------------------------------------

def path_node_scores(u_focal: np.ndarray, path_node_vectors: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Raw relevance of each node on one path: dot with the focal vector."""
    nodes = np.asarray(path_node_vectors, dtype=float)
    if nodes.ndim != 2 or nodes.shape[1] != u_focal.shape[0]:
        raise ValueError(f"path nodes shape {nodes.shape} incompatible with focal dim {u_focal.shape[0]}")
    return nodes @ u_focal


def path_attention(per_path_scores: list[np.ndarray]) -> np.ndarray:
    """Path weights: softmax over the per-path score sums."""
    if not per_path_scores:
        raise ValueError("path attention needs at least one path")
    sums = np.array([float(np.sum(s)) for s in per_path_scores])
    return softmax(sums)


def pad_paths(paths: list[np.ndarray], dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length paths into (P, t, dim) with zero-vector padding;
    returns the padded block and the original lengths."""
    lengths = np.array([p.shape[0] for p in paths], dtype=int)
    t = int(lengths.max()) if len(paths) else 0
    padded = np.zeros((len(paths), t, dim))
    for j, p in enumerate(paths):
        padded[j, : p.shape[0]] = p
    return padded, lengths


def unify_paths(
    path_weights: np.ndarray,
    padded_paths: np.ndarray,
    lengths: np.ndarray,
    pooling: str = POOL_WEIGHTED_SUM,
) -> np.ndarray:
    """Merge weighted paths into one (t, dim) sequence.

    Weighted-sum mode: position k is the weight-blended sum over paths, where
    zero-vector padding contributes no mass. Max-pool mode takes the
    elementwise max of the weighted contributions, restricted to paths that
    actually reach position k.
    """
    n_paths, t, dim = padded_paths.shape
    if pooling == POOL_WEIGHTED_SUM:
        return np.einsum("j,jkd->kd", path_weights, padded_paths)
    merged = np.zeros((t, dim))
    weighted = path_weights[:, None, None] * padded_paths
    for k in range(t):
        alive = lengths > k
        merged[k] = weighted[alive, k].max(axis=0)
    return merged


def node_attention_weights(u_focal: np.ndarray, merged_path: np.ndarray, max_depth: int) -> np.ndarray:
    """Softmax over dots with the merged positions, laid out in a max-depth
    vector with exact zeros at positions past the merged path's end."""
    t = merged_path.shape[0]
    if t > max_depth:
        raise ValueError(f"merged path length {t} exceeds max depth {max_depth}")
    node_weights = np.zeros(max_depth)
    if t:
        node_weights[:t] = softmax(merged_path @ u_focal)
    return node_weights


def node_attention_combine(
    u_focal: np.ndarray, merged_path: np.ndarray, depth_weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Second attention stage over the merged path.

    Returns (facet vector, node weight vector); the facet vector sums the
    merged positions scaled by node weight times per-depth weight. An empty
    merged path yields a zero facet vector.
    """
    node_weights = node_attention_weights(u_focal, merged_path, depth_weights.shape[0])
    t = merged_path.shape[0]
    if t == 0:
        return np.zeros(u_focal.shape[0]), node_weights
    facet = (depth_weights[:t] * node_weights[:t]) @ merged_path
    return facet, node_weights


def facet_vector_single_hop(
    u_focal: np.ndarray, neighbor_vectors: np.ndarray, uniform: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """One-hop facet: path-level attention over length-one paths.

    Scores are dots with the focal vector (or uniform when path attention is
    ablated); the facet vector is the weighted sum of neighbors. Depth
    weights never apply here. No neighbors yields a zero vector.
    """
    if neighbor_vectors.shape[0] == 0:
        return np.zeros(u_focal.shape[0]), np.zeros(0)
    if uniform:
        weights = np.full(neighbor_vectors.shape[0], 1.0 / neighbor_vectors.shape[0])
    else:
        weights = softmax(neighbor_vectors @ u_focal)
    return weights @ neighbor_vectors, weights


def combine_contexts(
    f_ancestors: np.ndarray,
    f_object: np.ndarray,
    f_children: np.ndarray,
    f_data: np.ndarray,
    category_logits: np.ndarray,
) -> np.ndarray:
    """Convex combination of the four facet vectors; the mixing weights are
    the softmax of the logits, so they always sum to one."""
    w = category_weights(category_logits)
    return w[0] * f_ancestors + w[1] * f_object + w[2] * f_children + w[3] * f_data


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

@dataclass
class ContextVectors:
    """Embedded context of one concept: one array per lineage path plus one
    (n, dim) block per one-hop facet."""

    paths: list[np.ndarray]
    children: np.ndarray
    object_neighbors: np.ndarray
    data_neighbors: np.ndarray

    @staticmethod
    def empty(dim: int) -> "ContextVectors":
        none = np.zeros((0, dim))
        return ContextVectors(paths=[], children=none, object_neighbors=none, data_neighbors=none)


@dataclass
class ContextEncoding:
    """Parameter-independent part of a concept's forward pass.

    With frozen label embeddings, every attention weight and merged node here
    depends only on the inputs, so it can be computed once per concept and
    reused across training steps. `depth_basis` row k is node_weight_k times
    merged node k: the ancestors facet is just depth_weights @ depth_basis.
    """

    u: np.ndarray
    path_node_scores: tuple[np.ndarray, ...]
    path_weights: np.ndarray  # (P,)
    merged_path: np.ndarray  # (t, dim)
    node_weights: np.ndarray  # (max_depth,), exact zeros past t
    depth_basis: np.ndarray  # (max_depth, dim), zero rows past t
    facet_weights: dict[str, np.ndarray] = field(default_factory=dict)
    facet_fixed: dict[str, np.ndarray] = field(default_factory=dict)  # object/children/data


@dataclass
class ForwardTrace:
    """All intermediates of one concept forward pass."""

    encoding: ContextEncoding
    category_wts: np.ndarray  # (4,)
    facet_ancestors: np.ndarray  # (dim,)
    context: np.ndarray  # (dim,)
    joint: np.ndarray  # (2*dim,) concatenated [label, context]
    out: np.ndarray  # (out_dim,)

    @property
    def u(self) -> np.ndarray:
        return self.encoding.u

    @property
    def path_weights(self) -> np.ndarray:
        return self.encoding.path_weights

    @property
    def node_weights(self) -> np.ndarray:
        return self.encoding.node_weights

    def facet_vectors(self) -> dict[str, np.ndarray]:
        return {
            "ancestors": self.facet_ancestors,
            "object": self.encoding.facet_fixed["object"],
            "children": self.encoding.facet_fixed["children"],
            "data": self.encoding.facet_fixed["data"],
        }

    def attention_groups(self) -> list[tuple[str, np.ndarray]]:
        """Every weight group that must sum to one (skipping empty ones)."""
        groups = []
        if self.encoding.path_weights.shape[0]:
            groups.append(("paths", self.encoding.path_weights))
        if self.encoding.merged_path.shape[0]:
            groups.append(("nodes", self.encoding.node_weights))
        for name in ONE_HOP_FACETS:
            w = self.encoding.facet_weights.get(name, np.zeros(0))
            if w.shape[0]:
                groups.append((name, w))
        groups.append(("categories", self.category_wts))
        return groups


def encode_context(u_focal: np.ndarray, ctx: ContextVectors, config: ModelConfig) -> ContextEncoding:
    dim = config.dim
    empty = ContextEncoding(
        u=u_focal,
        path_node_scores=(),
        path_weights=np.zeros(0),
        merged_path=np.zeros((0, dim)),
        node_weights=np.zeros(config.max_depth),
        depth_basis=np.zeros((config.max_depth, dim)),
        facet_weights={},
        facet_fixed={name: np.zeros(dim) for name in ONE_HOP_FACETS},
    )
    if config.mode == MODE_NO_CONTEXT:
        return empty

    uniform = config.mode == MODE_SINGLE_ATTENTION
    enc = empty

    if "ancestors" in config.facets and ctx.paths:
        scores = tuple(path_node_scores(u_focal, p) for p in ctx.paths)
        if uniform:
            path_wts = np.full(len(ctx.paths), 1.0 / len(ctx.paths))
        else:
            path_wts = path_attention(list(scores))
        padded, lengths = pad_paths(ctx.paths, dim)
        merged = unify_paths(path_wts, padded, lengths, config.pooling)
        node_weights = node_attention_weights(u_focal, merged, config.max_depth)
        t = merged.shape[0]
        basis = np.zeros((config.max_depth, dim))
        basis[:t] = node_weights[:t, None] * merged
        enc.path_node_scores = scores
        enc.path_weights = path_wts
        enc.merged_path = merged
        enc.node_weights = node_weights
        enc.depth_basis = basis

    facet_inputs = {
        "object": ctx.object_neighbors,
        "children": ctx.children,
        "data": ctx.data_neighbors,
    }
    for name in ONE_HOP_FACETS:
        if name not in config.facets:
            continue
        vec, wts = facet_vector_single_hop(u_focal, facet_inputs[name], uniform=uniform)
        enc.facet_fixed[name] = vec
        if wts.shape[0]:
            enc.facet_weights[name] = wts
    return enc


def forward_from_encoding(params: ModelParams, enc: ContextEncoding) -> ForwardTrace:
    """Apply the trainable parameters to a precomputed context encoding."""
    f_ancestors = params.depth_weights @ enc.depth_basis
    context = combine_contexts(
        f_ancestors,
        enc.facet_fixed["object"],
        enc.facet_fixed["children"],
        enc.facet_fixed["data"],
        params.category_logits,
    )
    joint = np.concatenate([enc.u, context])
    return ForwardTrace(
        encoding=enc,
        category_wts=category_weights(params.category_logits),
        facet_ancestors=f_ancestors,
        context=context,
        joint=joint,
        out=params.projection @ joint,
    )


def concept_forward(
    params: ModelParams, u_focal: np.ndarray, ctx: ContextVectors
) -> tuple[np.ndarray, ForwardTrace]:
    if u_focal.shape[0] != params.config.dim:
        raise ValueError(f"focal dim {u_focal.shape[0]} != configured dim {params.config.dim}")
    trace = forward_from_encoding(params, encode_context(u_focal, ctx, params.config))
    return trace.out, trace


def property_forward(u_property: np.ndarray) -> np.ndarray:
    """Properties are scored without context: the label embedding itself."""
    return u_property


# ---------------------------------------------------------------------------
# similarity, loss, gradients
# ---------------------------------------------------------------------------

def similarity(x: np.ndarray, y: np.ndarray) -> float:
    """Cosine similarity; zero whenever either vector is zero (a zero
    representation never counts as a match)."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


def mse_loss(predictions: list[float] | np.ndarray, labels: list[float] | np.ndarray) -> float:
    p = np.asarray(predictions, dtype=float)
    l = np.asarray(labels, dtype=float)
    if p.shape != l.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {l.shape}")
    if p.size == 0:
        raise ValueError("loss needs at least one prediction")
    return float(np.mean((p - l) ** 2))


@dataclass
class Gradients:
    projection: np.ndarray
    depth_weights: np.ndarray
    category_logits: np.ndarray

    @staticmethod
    def zeros_like(params: ModelParams) -> "Gradients":
        return Gradients(
            projection=np.zeros_like(params.projection),
            depth_weights=np.zeros_like(params.depth_weights),
            category_logits=np.zeros_like(params.category_logits),
        )

    def add_(self, other: "Gradients") -> None:
        self.projection += other.projection
        self.depth_weights += other.depth_weights
        self.category_logits += other.category_logits

    def scale_(self, factor: float) -> None:
        self.projection *= factor
        self.depth_weights *= factor
        self.category_logits *= factor

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.projection))
            and np.all(np.isfinite(self.depth_weights))
            and np.all(np.isfinite(self.category_logits))
        )


def _cosine_grads(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """(cos, d cos/dx, d cos/dy); zero gradients at the zero-vector convention."""
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0, np.zeros_like(x), np.zeros_like(y)
    h = float(np.dot(x, y) / (nx * ny))
    return h, y / (nx * ny) - h * x / nx**2, x / (nx * ny) - h * y / ny**2


def backward(
    trace_s: ForwardTrace, trace_t: ForwardTrace, label: float, params: ModelParams
) -> Gradients:
    """Analytic gradients of one pair's squared error (cos - label)^2.

    Label embeddings are frozen, so attention weights and merged nodes are
    constants here; only the projection, the depth weights (inside the
    ancestors facet) and the mixing logits carry gradient.
    """
    dim = params.config.dim
    h, dh_ds, dh_dt = _cosine_grads(trace_s.out, trace_t.out)
    dloss_dh = 2.0 * (h - label)
    g_s = dloss_dh * dh_ds
    g_t = dloss_dh * dh_dt

    grads = Gradients.zeros_like(params)
    grads.projection = np.outer(g_s, trace_s.joint) + np.outer(g_t, trace_t.joint)

    proj_ctx = params.projection[:, dim:]
    dv_s = proj_ctx.T @ g_s
    dv_t = proj_ctx.T @ g_t

    w = trace_s.category_wts  # shared parameters: identical on both sides
    grads.depth_weights = w[0] * (
        trace_s.encoding.depth_basis @ dv_s + trace_t.encoding.depth_basis @ dv_t
    )

    facets_s = trace_s.facet_vectors()
    facets_t = trace_t.facet_vectors()
    dloss_dw = np.array(
        [float(facets_s[name] @ dv_s + facets_t[name] @ dv_t) for name in FACETS]
    )
    grads.category_logits = w * (dloss_dw - float(w @ dloss_dw))
    return grads


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": {
            "dim": params.config.dim,
            "out_dim": params.config.out_dim,
            "max_depth": params.config.max_depth,
            "pooling": params.config.pooling,
            "mode": params.config.mode,
            "facets": list(params.config.facets),
        },
        "projection": [[float(v) for v in row] for row in params.projection],
        "depth_weights": [float(v) for v in params.depth_weights],
        "category_logits": [float(v) for v in params.category_logits],
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_checkpoint(path: str | Path) -> ModelParams:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    cfg = payload["config"]
    config = ModelConfig(
        dim=cfg["dim"],
        out_dim=cfg["out_dim"],
        max_depth=cfg["max_depth"],
        pooling=cfg["pooling"],
        mode=cfg["mode"],
        facets=tuple(cfg["facets"]),
    )
    params = ModelParams(
        projection=np.array(payload["projection"], dtype=float),
        depth_weights=np.array(payload["depth_weights"], dtype=float),
        category_logits=np.array(payload["category_logits"], dtype=float),
        config=config,
    )
    if params.projection.shape != (config.out_dim, 2 * config.dim):
        raise ValueError(f"{path}: projection shape mismatch")
    if params.depth_weights.shape != (config.max_depth,):
        raise ValueError(f"{path}: depth weight length mismatch")
    return params
