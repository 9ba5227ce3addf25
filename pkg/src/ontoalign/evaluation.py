"""Sliding-window K-fold experiment driver and positive-class metrics.

Two fold granularities: whole ontology pairs (the held-out block per fold
splits into validation pairs plus one test pair) and labeled candidate pairs
(test takes one block of roughly a fifth, validation half of the next block,
training the rest; the window rotates one block per fold). Per fold the model
is trained from a fresh seed, the decision threshold tuned on validation, and
the test pairs scored; reports aggregate both micro (pooled confusion counts)
and macro (mean of per-fold metrics).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .context import ContextConfig
from .embeddings import EmbeddingStore
from .model import ModelConfig, ModelParams, FACETS, MODE_FULL, MODE_NO_CONTEXT, MODE_SINGLE_ATTENTION, init_params
from .ontology import Ontology, ReferenceAlignment
from .training import (
    AlignmentDataset,
    TrainConfig,
    build_dataset,
    encode_concepts,
    property_vectors,
    score_concept_pairs,
    score_property_pairs,
    select_threshold,
    train_encoded,
)

GRANULARITY_ONTOLOGY_PAIR = "ontology-pair"
GRANULARITY_CONCEPT_PAIR = "concept-pair"

REPORT_FIELDS = ("fold", "theta_concept", "theta_property", "tp", "fp", "fn", "precision", "recall", "f1")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def metrics(predictions: Sequence[int], ground_truth: Sequence[int]) -> Metrics:
    """Positive-class precision/recall/F1 with 0-valued empty denominators."""
    if len(predictions) != len(ground_truth):
        raise ValueError("predictions and ground truth must align")
    tp = sum(1 for p, g in zip(predictions, ground_truth) if p == 1 and g == 1)
    fp = sum(1 for p, g in zip(predictions, ground_truth) if p == 1 and g != 1)
    fn = sum(1 for p, g in zip(predictions, ground_truth) if p != 1 and g == 1)
    return _metrics_from_counts(tp, fp, fn)


def _metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)


# ---------------------------------------------------------------------------
# fold planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldSplit:
    train: tuple
    validation: tuple
    test: tuple


@dataclass(frozen=True)
class FoldPlan:
    granularity: str
    k: int
    folds: tuple[FoldSplit, ...]


def _blocks(order: list, k: int) -> list[list]:
    """k contiguous blocks; remainders go to the earlier blocks."""
    n = len(order)
    size, extra = divmod(n, k)
    blocks, start = [], 0
    for i in range(k):
        end = start + size + (1 if i < extra else 0)
        blocks.append(order[start:end])
        start = end
    return blocks


def plan_folds(units: Sequence, k: int, granularity: str, seed: int = 0) -> FoldPlan:
    """Deterministic sliding-window folds over a seeded shuffle of `units`.

    Ontology-pair granularity holds out one block per fold: all but its last
    unit validate, the last unit tests, the other blocks train. Concept-pair
    granularity tests on block i, validates on the first half of block i+1
    (circularly) and trains on everything else.
    """
    if k < 2:
        raise ValueError("k must be at least 2: a sliding window over one fold is undefined")
    if k > len(units):
        raise ValueError(f"k={k} exceeds the {len(units)} available units")
    if granularity not in (GRANULARITY_ONTOLOGY_PAIR, GRANULARITY_CONCEPT_PAIR):
        raise ValueError(f"unknown granularity {granularity!r}")

    rng = np.random.default_rng(seed)
    order = [units[i] for i in rng.permutation(len(units))]
    blocks = _blocks(order, k)

    folds = []
    if granularity == GRANULARITY_ONTOLOGY_PAIR:
        for i in range(k):
            held = blocks[i]
            train = [u for j, b in enumerate(blocks) if j != i for u in b]
            folds.append(FoldSplit(train=tuple(train), validation=tuple(held[:-1]), test=(held[-1],)))
    else:
        for i in range(k):
            nxt = blocks[(i + 1) % k]
            validation = nxt[: len(nxt) // 2]
            test = blocks[i]
            claimed = set(test) | set(validation)
            train = [u for u in order if u not in claimed]
            folds.append(FoldSplit(train=tuple(train), validation=tuple(validation), test=tuple(test)))
    return FoldPlan(granularity=granularity, k=k, folds=tuple(folds))


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

@dataclass
class PairCase:
    """One source/target ontology pair with its reference ground truth."""

    name: str
    source: Ontology
    target: Ontology
    reference: ReferenceAlignment
    dataset: AlignmentDataset

    @staticmethod
    def build(name: str, source: Ontology, target: Ontology, ref: ReferenceAlignment) -> "PairCase":
        return PairCase(name, source, target, ref, build_dataset(source, target, ref))


@dataclass
class FoldResult:
    fold: int
    theta_concept: float | None
    theta_property: float | None
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class ExperimentReport:
    folds: list[FoldResult]
    micro: Metrics
    macro: Metrics
    config_echo: dict
    fold_predictions: list[list[tuple]]  # per fold: (kind, pair, score, predicted, label)


def labeled_pair_units(dataset: AlignmentDataset) -> list[tuple[str, int]]:
    """Units for concept-pair folding: every labeled candidate, kind-tagged."""
    units = [("concept", i) for i in range(len(dataset.concept_pairs))]
    units += [("property", i) for i in range(len(dataset.property_pairs))]
    return units


def run_experiment(
    cases: list[PairCase],
    store: EmbeddingStore,
    plan: FoldPlan,
    model_cfg: ModelConfig = ModelConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    ctx_cfg: ContextConfig = ContextConfig(),
) -> ExperimentReport:
    """Train/validate/test per fold and aggregate micro + macro metrics.

    Concept pairs are scored by the trained model, property pairs by label
    embedding similarity (thresholds tuned per entity kind). Any fold failure
    aborts the whole run, naming the fold.
    """
    if plan.granularity == GRANULARITY_CONCEPT_PAIR and len(cases) != 1:
        raise ExperimentError("concept-pair folding expects exactly one ontology pair")

    encodings: dict[int, dict] = {}
    prop_vecs: dict[int, dict] = {}

    def enc(onto: Ontology) -> dict:
        key = id(onto)
        if key not in encodings:
            encodings[key] = encode_concepts(onto, store, ctx_cfg, model_cfg)
        return encodings[key]

    def pvec(onto: Ontology) -> dict:
        key = id(onto)
        if key not in prop_vecs:
            prop_vecs[key] = property_vectors(onto, store)
        return prop_vecs[key]

    case_by_name = {c.name: c for c in cases}
    has_properties = any(c.dataset.property_pairs for c in cases)

    def fold_streams(split: FoldSplit):
        """(train concept triples+encodings, val streams, test streams)."""
        if plan.granularity == GRANULARITY_ONTOLOGY_PAIR:
            def stream(names, which):
                out = []
                for name in names:
                    case = case_by_name[name]
                    pairs = case.dataset.concept_pairs if which == "concept" else case.dataset.property_pairs
                    out.extend((case, p) for p in pairs)
                return out

            return (
                stream(split.train, "concept"),
                (stream(split.validation, "concept"), stream(split.validation, "property")),
                (stream(split.test, "concept"), stream(split.test, "property")),
            )
        case = cases[0]

        def stream(units, which):
            pool = case.dataset.concept_pairs if which == "concept" else case.dataset.property_pairs
            return [(case, pool[i]) for kind, i in units if kind == which]

        return (
            stream(split.train, "concept"),
            (stream(split.validation, "concept"), stream(split.validation, "property")),
            (stream(split.test, "concept"), stream(split.test, "property")),
        )

    def score_stream(params, concept_stream, property_stream):
        scores, labels = [], []
        for case, (s, t, lab) in concept_stream:
            scores.extend(score_concept_pairs(params, [(s, t, lab)], enc(case.source), enc(case.target)))
            labels.append(lab)
        for case, (s, t, lab) in property_stream:
            scores.extend(score_property_pairs([(s, t, lab)], pvec(case.source), pvec(case.target)))
            labels.append(lab)
        return np.array(scores), np.array(labels)

    rows: list[FoldResult] = []
    all_predictions: list[list[tuple]] = []
    pooled_tp = pooled_fp = pooled_fn = 0

    for i, split in enumerate(plan.folds):
        try:
            fold_cfg = replace(train_cfg, seed=train_cfg.seed + i)
            params = init_params(model_cfg, seed=fold_cfg.seed)
            train_stream, (val_c, val_p), (test_c, test_p) = fold_streams(split)
            triples = [
                (enc(case.source)[s], enc(case.target)[t], lab) for case, (s, t, lab) in train_stream
            ]
            train_encoded(params, triples, fold_cfg)

            vc_scores, vc_labels = score_stream(params, val_c, [])
            theta_c = select_threshold(vc_scores, vc_labels)
            theta_p = None
            if has_properties:
                vp_scores, vp_labels = score_stream(params, [], val_p)
                theta_p = select_threshold(vp_scores, vp_labels)

            fold_preds = []
            tp = fp = fn = 0
            for kind, stream, theta in (("concept", test_c, theta_c), ("property", test_p, theta_p)):
                if not stream:
                    continue
                scores, labels = score_stream(params, stream if kind == "concept" else [], stream if kind == "property" else [])
                for (case, pair), score, lab in zip(stream, scores, labels):
                    predicted = int(score > theta)
                    fold_preds.append((kind, (pair[0], pair[1]), float(score), predicted, int(lab)))
                    tp += predicted and lab
                    fp += predicted and not lab
                    fn += (not predicted) and lab
            m = _metrics_from_counts(int(tp), int(fp), int(fn))
            rows.append(
                FoldResult(
                    fold=i,
                    theta_concept=theta_c,
                    theta_property=theta_p,
                    tp=m.tp,
                    fp=m.fp,
                    fn=m.fn,
                    precision=m.precision,
                    recall=m.recall,
                    f1=m.f1,
                )
            )
            all_predictions.append(fold_preds)
            pooled_tp += m.tp
            pooled_fp += m.fp
            pooled_fn += m.fn
        except Exception as exc:
            raise ExperimentError(f"fold {i} failed: {exc}") from exc

    micro = _metrics_from_counts(pooled_tp, pooled_fp, pooled_fn)
    macro = Metrics(
        precision=float(np.mean([r.precision for r in rows])),
        recall=float(np.mean([r.recall for r in rows])),
        f1=float(np.mean([r.f1 for r in rows])),
        tp=pooled_tp,
        fp=pooled_fp,
        fn=pooled_fn,
    )
    config_echo = {
        "granularity": plan.granularity,
        "k": plan.k,
        "model": {
            "dim": model_cfg.dim,
            "out_dim": model_cfg.out_dim,
            "max_depth": model_cfg.max_depth,
            "pooling": model_cfg.pooling,
            "mode": model_cfg.mode,
            "facets": list(model_cfg.facets),
        },
        "train": {
            "learning_rate": train_cfg.learning_rate,
            "epochs": train_cfg.epochs,
            "batch_size": train_cfg.batch_size,
            "seed": train_cfg.seed,
            "oversample": train_cfg.oversample,
        },
        "context": {"max_depth": ctx_cfg.max_depth, "max_paths": ctx_cfg.max_paths},
    }
    return ExperimentReport(
        folds=rows, micro=micro, macro=macro, config_echo=config_echo, fold_predictions=all_predictions
    )


ABLATION_MODES = (
    "no_context",
    "single_attention",
    "full",
    "ancestors_only",
    "children_only",
    "object_only",
    "data_only",
)


def ablation_sweep(
    cases: list[PairCase],
    store: EmbeddingStore,
    plan: FoldPlan,
    model_cfg: ModelConfig = ModelConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    ctx_cfg: ContextConfig = ContextConfig(),
) -> dict[str, ExperimentReport]:
    """Run the attention ablations plus the four single-facet restrictions."""
    variants = {
        "no_context": replace(model_cfg, mode=MODE_NO_CONTEXT, facets=FACETS),
        "single_attention": replace(model_cfg, mode=MODE_SINGLE_ATTENTION, facets=FACETS),
        "full": replace(model_cfg, mode=MODE_FULL, facets=FACETS),
        "ancestors_only": replace(model_cfg, mode=MODE_FULL, facets=("ancestors",)),
        "children_only": replace(model_cfg, mode=MODE_FULL, facets=("children",)),
        "object_only": replace(model_cfg, mode=MODE_FULL, facets=("object",)),
        "data_only": replace(model_cfg, mode=MODE_FULL, facets=("data",)),
    }
    return {
        name: run_experiment(cases, store, plan, cfg, train_cfg, ctx_cfg)
        for name, cfg in variants.items()
    }


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

def _fold_record(row: FoldResult) -> dict:
    return {
        "fold": row.fold,
        "theta_concept": row.theta_concept,
        "theta_property": row.theta_property,
        "tp": row.tp,
        "fp": row.fp,
        "fn": row.fn,
        "precision": row.precision,
        "recall": row.recall,
        "f1": row.f1,
    }


def _aggregate_record(name: str, m: Metrics) -> dict:
    return {
        "fold": name,
        "theta_concept": None,
        "theta_property": None,
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
    }


def report_records(report: ExperimentReport) -> list[dict]:
    records = [_fold_record(r) for r in report.folds]
    records.append(_aggregate_record("micro", report.micro))
    records.append(_aggregate_record("macro", report.macro))
    return records


def write_report(report: ExperimentReport, path: str | Path) -> None:
    lines = [json.dumps(rec, sort_keys=True) for rec in report_records(report)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ablation_report(reports: dict[str, ExperimentReport], path: str | Path) -> None:
    """One record per ablation mode, carrying that mode's micro aggregate."""
    lines = []
    for name in ABLATION_MODES:
        rec = _aggregate_record("micro", reports[name].micro)
        rec["mode"] = name
        lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_table(report: ExperimentReport) -> str:
    header = f"{'fold':>6} {'theta_c':>8} {'theta_p':>8} {'tp':>5} {'fp':>5} {'fn':>5} {'prec':>7} {'rec':>7} {'f1':>7}"
    lines = [header, "-" * len(header)]

    def fmt(theta):
        return f"{theta:.2f}" if theta is not None else "-"

    for r in report.folds:
        lines.append(
            f"{r.fold:>6} {fmt(r.theta_concept):>8} {fmt(r.theta_property):>8} "
            f"{r.tp:>5} {r.fp:>5} {r.fn:>5} {r.precision:>7.3f} {r.recall:>7.3f} {r.f1:>7.3f}"
        )
    for name, m in (("micro", report.micro), ("macro", report.macro)):
        lines.append(
            f"{name:>6} {'-':>8} {'-':>8} {m.tp:>5} {m.fp:>5} {m.fn:>5} "
            f"{m.precision:>7.3f} {m.recall:>7.3f} {m.f1:>7.3f}"
        )
    return "\n".join(lines)
