"""Candidate-pair datasets, oversampling, seeded Adam training, thresholds.

Candidate construction is the all-pairs recipe: every source/target concept
combination is a candidate, labeled positive exactly when the reference
alignment holds an '=' cell for it; likewise for properties (object x object
and datatype x datatype). Positives are oversampled to a 1:1 ratio against
negatives during training. Property pairs carry no trainable parameters, so
they are scored at inference time only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .context import ContextBundle, ContextConfig, build_context
from .embeddings import EmbeddingStore
from .model import (
    ContextEncoding,
    ContextVectors,
    Gradients,
    ModelConfig,
    ModelParams,
    backward,
    encode_context,
    forward_from_encoding,
    property_forward,
    similarity,
)
from .ontology import DATATYPE_PROPERTY, OBJECT_PROPERTY, Ontology, ReferenceAlignment, entity_label

log = logging.getLogger(__name__)

Pair = tuple[str, str, int]  # (source id, target id, label)


@dataclass
class AlignmentDataset:
    concept_pairs: list[Pair]
    property_pairs: list[Pair]
    provenance: tuple[str, str]  # (source ontology IRI, target ontology IRI)
    unmatched_cells: int = 0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    oversample: bool = True


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def build_dataset(source: Ontology, target: Ontology, ref: ReferenceAlignment) -> AlignmentDataset:
    """All-pairs candidates over both ontologies, labeled from the reference.

    Cells are matched in either orientation; cells naming entities absent
    from the parsed ontologies are counted on the result and logged.
    """
    positives = ref.equivalence_pairs()
    src_concepts = sorted(source.concepts)
    tgt_concepts = sorted(target.concepts)

    matched: set[tuple[str, str]] = set()

    def oriented(a: str, b: str, src_pool, tgt_pool) -> tuple[str, str] | None:
        if a in src_pool and b in tgt_pool:
            return a, b
        if b in src_pool and a in tgt_pool:
            return b, a
        return None

    concept_truth: set[tuple[str, str]] = set()
    src_pool = set(src_concepts)
    tgt_pool = set(tgt_concepts)
    src_props = {p.id: p for p in source.properties}
    tgt_props = {p.id: p for p in target.properties}
    property_truth: set[tuple[str, str]] = set()
    for a, b in positives:
        pair = oriented(a, b, src_pool, tgt_pool)
        if pair is not None:
            concept_truth.add(pair)
            matched.add((a, b))
            continue
        pair = oriented(a, b, src_props, tgt_props)
        if pair is not None and src_props[pair[0]].kind == tgt_props[pair[1]].kind:
            property_truth.add(pair)
            matched.add((a, b))

    unmatched = len(positives) - len(matched)
    if unmatched:
        log.warning("reference alignment: %d '=' cell(s) reference unparsed entities", unmatched)

    concept_pairs = [
        (s, t, 1 if (s, t) in concept_truth else 0) for s in src_concepts for t in tgt_concepts
    ]
    property_pairs = []
    for kind in (OBJECT_PROPERTY, DATATYPE_PROPERTY):
        for sp in source.properties:
            if sp.kind != kind:
                continue
            for tp in target.properties:
                if tp.kind != kind:
                    continue
                property_pairs.append((sp.id, tp.id, 1 if (sp.id, tp.id) in property_truth else 0))

    return AlignmentDataset(
        concept_pairs=concept_pairs,
        property_pairs=property_pairs,
        provenance=(source.iri, target.iri),
        unmatched_cells=unmatched,
    )


def oversample_positives(pairs: list, rng: int | np.random.Generator) -> list:
    """Duplicate positives until they match the negative count, then shuffle.

    Every original positive appears at least once; the remainder beyond full
    copies is sampled without replacement from the seeded generator. With no
    negatives (or positives already in the majority) only the shuffle
    applies.
    """
    rng = np.random.default_rng(rng)
    positives = [p for p in pairs if p[-1] == 1]
    negatives = [p for p in pairs if p[-1] != 1]
    if not positives:
        raise ValueError("cannot oversample with zero positives; disable oversampling instead")
    out = list(pairs)
    deficit = len(negatives) - len(positives)
    if deficit > 0:
        full_copies, remainder = divmod(deficit, len(positives))
        out.extend(positives * full_copies)
        if remainder:
            picks = rng.choice(len(positives), size=remainder, replace=False)
            out.extend(positives[i] for i in picks)
    order = rng.permutation(len(out))
    return [out[i] for i in order]


# ---------------------------------------------------------------------------
# per-concept encoding cache
# ---------------------------------------------------------------------------

def context_vectors(
    onto: Ontology, bundle: ContextBundle, store: EmbeddingStore
) -> ContextVectors:
    """Resolve a context bundle into embedding space. Datatype neighbors are
    property ids; their labels come from the property declarations."""

    def vec(entity_id: str) -> np.ndarray:
        return store.lookup(entity_label(onto, entity_id))

    def block(ids) -> np.ndarray:
        if not ids:
            return np.zeros((0, store.dim))
        return np.stack([vec(i) for i in ids])

    return ContextVectors(
        paths=[block(path) for path in bundle.lineage_paths],
        children=block(bundle.children),
        object_neighbors=block(bundle.obj_neighbors),
        data_neighbors=block(bundle.data_neighbors),
    )


def encode_concepts(
    onto: Ontology,
    store: EmbeddingStore,
    ctx_cfg: ContextConfig,
    model_cfg: ModelConfig,
) -> dict[str, ContextEncoding]:
    """Precompute the parameter-independent encoding of every concept."""
    encodings = {}
    for cid in sorted(onto.concepts):
        u = store.lookup(entity_label(onto, cid))
        ctx = context_vectors(onto, build_context(onto, cid, ctx_cfg), store)
        encodings[cid] = encode_context(u, ctx, model_cfg)
    return encodings


def property_vectors(onto: Ontology, store: EmbeddingStore) -> dict[str, np.ndarray]:
    return {p.id: property_forward(store.lookup(p.label)) for p in onto.properties}


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: Gradients | None = None
    v: Gradients | None = None

    @staticmethod
    def init(params: ModelParams) -> "AdamState":
        return AdamState(step=0, m=Gradients.zeros_like(params), v=Gradients.zeros_like(params))


def adam_step(params: ModelParams, grads: Gradients, state: AdamState, cfg: TrainConfig) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for name in ("projection", "depth_weights", "category_logits"):
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / corr1) / (np.sqrt(v / corr2) + cfg.adam_eps)
        getattr(params, name)[...] -= cfg.learning_rate * update


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def pair_score(
    params: ModelParams, enc_s: ContextEncoding, enc_t: ContextEncoding
) -> float:
    return similarity(
        forward_from_encoding(params, enc_s).out, forward_from_encoding(params, enc_t).out
    )


def train(
    params: ModelParams,
    dataset: AlignmentDataset,
    source_encodings: dict[str, ContextEncoding],
    target_encodings: dict[str, ContextEncoding],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[ModelParams, list[float]]:
    """Seeded epochs of forward/backward/Adam over the concept pairs.

    Mutates and returns `params`; the loss history holds one mean squared
    error per epoch. Property pairs are not trained (no parameters reach
    them). Deterministic for a fixed (dataset, config) and seed.
    """
    pairs = [
        (source_encodings[s], target_encodings[t], lab) for s, t, lab in dataset.concept_pairs
    ]
    return train_encoded(params, pairs, cfg)


def train_encoded(
    params: ModelParams,
    pairs: list[tuple[ContextEncoding, ContextEncoding, int]],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[ModelParams, list[float]]:
    if not pairs:
        raise ValueError("training needs at least one pair")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.init(params)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        if cfg.oversample:
            epoch_pairs = oversample_positives(pairs, rng)
        else:
            order = rng.permutation(len(pairs))
            epoch_pairs = [pairs[i] for i in order]
        sq_sum = 0.0
        for batch_idx in range(0, len(epoch_pairs), cfg.batch_size):
            batch = epoch_pairs[batch_idx : batch_idx + cfg.batch_size]
            grads = Gradients.zeros_like(params)
            for enc_s, enc_t, lab in batch:
                trace_s = forward_from_encoding(params, enc_s)
                trace_t = forward_from_encoding(params, enc_t)
                sq_sum += (similarity(trace_s.out, trace_t.out) - lab) ** 2
                grads.add_(backward(trace_s, trace_t, lab, params))
            grads.scale_(1.0 / len(batch))
            if not grads.is_finite() or not np.isfinite(sq_sum):
                raise TrainingDivergedError(epoch, batch_idx // cfg.batch_size)
            adam_step(params, grads, state, cfg)
        history.append(sq_sum / len(epoch_pairs))
    return params, history


# ---------------------------------------------------------------------------
# thresholds and prediction
# ---------------------------------------------------------------------------

THRESHOLD_GRID = tuple(i / 100 for i in range(101))


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def select_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Grid search over [0, 1] in 0.01 steps for the cutoff maximizing F1 of
    the positive class; ties resolve to the smallest cutoff. Prediction is
    strict: a pair is positive only when its score exceeds the cutoff."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.size == 0 or labels.sum() == 0:
        log.warning("threshold selection without positives; falling back to 0.5")
        return 0.5
    if np.all(scores == scores[0]):
        log.warning("all validation scores identical; threshold selection is degenerate")
    best_theta, best_f1 = 0.0, -1.0
    for theta in THRESHOLD_GRID:
        pred = scores > theta
        tp = int(np.sum(pred & (labels == 1)))
        fp = int(np.sum(pred & (labels == 0)))
        fn = int(np.sum(~pred & (labels == 1)))
        f1 = _f1(tp, fp, fn)
        if f1 > best_f1:
            best_theta, best_f1 = theta, f1
    return best_theta


def score_concept_pairs(
    params: ModelParams,
    pairs: list[Pair],
    source_encodings: dict[str, ContextEncoding],
    target_encodings: dict[str, ContextEncoding],
) -> np.ndarray:
    return np.array(
        [pair_score(params, source_encodings[s], target_encodings[t]) for s, t, _ in pairs]
    )


def score_property_pairs(
    pairs: list[Pair],
    source_vectors: dict[str, np.ndarray],
    target_vectors: dict[str, np.ndarray],
) -> np.ndarray:
    return np.array([similarity(source_vectors[s], target_vectors[t]) for s, t, _ in pairs])


def predict(pairs: list[Pair], scores: np.ndarray, threshold: float) -> list[tuple[Pair, float, int]]:
    """Label each scored pair: positive only when score strictly exceeds the
    threshold."""
    return [
        (pair, float(score), int(score > threshold)) for pair, score in zip(pairs, scores)
    ]
