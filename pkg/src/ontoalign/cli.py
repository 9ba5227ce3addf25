"""Command-line entry point: train, evaluate, align, inspect-context.

Configuration comes from an optional flat ``key = value`` file plus
command-line overrides (later wins); unknown keys are rejected. Every run
prints the fully-resolved configuration before doing anything. Exit codes:
0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from xml.sax.saxutils import escape

from .context import ContextConfig, build_context
from .embeddings import EmbeddingStore, load_store
from .evaluation import (
    GRANULARITY_CONCEPT_PAIR,
    GRANULARITY_ONTOLOGY_PAIR,
    PairCase,
    ablation_sweep,
    labeled_pair_units,
    plan_folds,
    render_table,
    run_experiment,
    write_ablation_report,
    write_report,
)
from .model import ModelConfig, init_params, load_checkpoint, save_checkpoint
from .ontology import Ontology, parse_ontology, parse_reference_alignment
from .training import (
    TrainConfig,
    build_dataset,
    encode_concepts,
    predict,
    property_vectors,
    score_concept_pairs,
    score_property_pairs,
    train,
)


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    source: str | None = None
    target: str | None = None
    reference: str | None = None
    ontology_dir: str | None = None
    reference_dir: str | None = None
    embeddings: str | None = None
    fallback_hash_embed: bool = False
    hash_seed: int = 0
    checkpoint: str | None = None
    report: str | None = None
    loss_log: str | None = None
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    oversample: bool = True
    dim: int = 512
    out_dim: int = 300
    max_depth: int = 6
    max_paths: int = 8
    pooling: str = "weighted_sum"
    mode: str = "full"
    facets: str = "ancestors,object,children,data"
    granularity: str = ""
    k: int = 0
    ablation: bool = False
    threshold: float | None = None
    threshold_concept: float | None = None
    threshold_property: float | None = None

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            dim=self.dim,
            out_dim=self.out_dim,
            max_depth=self.max_depth,
            pooling=self.pooling,
            mode=self.mode,
            facets=tuple(f.strip() for f in self.facets.split(",") if f.strip()),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            oversample=self.oversample,
        )

    def context_config(self) -> ContextConfig:
        return ContextConfig(max_depth=self.max_depth, max_paths=self.max_paths)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}

_BOOL_VALUES = {"true": True, "on": True, "1": True, "yes": True,
                "false": False, "off": False, "0": False, "no": False}


def _coerce(key: str, raw: str):
    typ = _FIELDS[key].type
    if typ == "bool":
        val = _BOOL_VALUES.get(raw.strip().lower())
        if val is None:
            raise ConfigError(f"bad boolean for {key}: {raw!r}")
        return val
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    if typ == "float | None":
        return float(raw)
    return raw.strip()


def parse_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw.strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, val in parse_config_file(args.config).items():
            setattr(cfg, key, val)
    for key in _FIELDS:
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def print_config(cfg: RunConfig) -> None:
    print("# resolved configuration")
    for key in sorted(_FIELDS):
        print(f"{key} = {getattr(cfg, key)}")
    print()


# ---------------------------------------------------------------------------
# shared loading helpers
# ---------------------------------------------------------------------------

def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if not getattr(cfg, k)]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _load_ontology(path: str) -> Ontology:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read ontology {path}: {exc}") from exc
    return parse_ontology(data)


def _load_reference(path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read reference alignment {path}: {exc}") from exc
    return parse_reference_alignment(data)


def _build_store(cfg: RunConfig) -> EmbeddingStore:
    fallback = cfg.hash_seed if cfg.fallback_hash_embed else None
    if cfg.embeddings:
        if not Path(cfg.embeddings).exists():
            raise ConfigError(f"embedding file not found: {cfg.embeddings}")
        store = load_store(cfg.embeddings, fallback_seed=fallback)
        if store.dim != cfg.dim:
            raise ConfigError(
                f"embedding file dim {store.dim} does not match configured dim {cfg.dim}"
            )
        return store
    return EmbeddingStore(dim=cfg.dim, vectors={}, fallback_seed=fallback)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "source", "target", "reference", "checkpoint")
    source = _load_ontology(cfg.source)
    target = _load_ontology(cfg.target)
    ref = _load_reference(cfg.reference)
    store = _build_store(cfg)

    dataset = build_dataset(source, target, ref)
    model_cfg = cfg.model_config()
    ctx_cfg = cfg.context_config()
    src_enc = encode_concepts(source, store, ctx_cfg, model_cfg)
    tgt_enc = encode_concepts(target, store, ctx_cfg, model_cfg)

    params = init_params(model_cfg, seed=cfg.seed)
    params, history = train(params, dataset, src_enc, tgt_enc, cfg.train_config())
    save_checkpoint(params, cfg.checkpoint)
    print(f"checkpoint written to {cfg.checkpoint}")
    if cfg.loss_log:
        lines = [f"{epoch}\t{loss!r}" for epoch, loss in enumerate(history)]
        Path(cfg.loss_log).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"loss log written to {cfg.loss_log}")
    if history:
        print(f"final epoch loss: {history[-1]:.6f}")
    return 0


def _discover_cases(cfg: RunConfig) -> list[PairCase]:
    onto_dir = Path(cfg.ontology_dir)
    ref_dir = Path(cfg.reference_dir)
    if not onto_dir.is_dir():
        raise ConfigError(f"ontology_dir not found: {onto_dir}")
    if not ref_dir.is_dir():
        raise ConfigError(f"reference_dir not found: {ref_dir}")

    ontologies: dict[str, Ontology] = {}

    def by_stem(stem: str) -> Ontology:
        if stem not in ontologies:
            hits = sorted(p for p in onto_dir.iterdir() if p.stem == stem)
            if not hits:
                raise ConfigError(f"no ontology file for {stem!r} in {onto_dir}")
            ontologies[stem] = _load_ontology(str(hits[0]))
        return ontologies[stem]

    cases = []
    for ref_path in sorted(ref_dir.iterdir()):
        if ref_path.is_dir() or "-" not in ref_path.stem:
            continue
        left, _, right = ref_path.stem.partition("-")
        cases.append(
            PairCase.build(ref_path.stem, by_stem(left), by_stem(right), _load_reference(str(ref_path)))
        )
    if not cases:
        raise ConfigError(f"no reference alignments found in {ref_dir}")
    return cases


def cmd_evaluate(cfg: RunConfig) -> int:
    store = _build_store(cfg)

    if cfg.granularity:
        granularity = cfg.granularity
    elif cfg.ontology_dir:
        granularity = GRANULARITY_ONTOLOGY_PAIR
    else:
        granularity = GRANULARITY_CONCEPT_PAIR

    if granularity == GRANULARITY_ONTOLOGY_PAIR:
        _require(cfg, "ontology_dir", "reference_dir")
        cases = _discover_cases(cfg)
        units = [c.name for c in cases]
        k = cfg.k or 7
    elif granularity == GRANULARITY_CONCEPT_PAIR:
        _require(cfg, "source", "target", "reference")
        case = PairCase.build(
            "pair", _load_ontology(cfg.source), _load_ontology(cfg.target), _load_reference(cfg.reference)
        )
        cases = [case]
        units = labeled_pair_units(case.dataset)
        k = cfg.k or 5
    else:
        raise ConfigError(f"unknown granularity {granularity!r}")

    try:
        plan = plan_folds(units, k, granularity, seed=cfg.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    model_cfg = cfg.model_config()
    train_cfg = cfg.train_config()
    ctx_cfg = cfg.context_config()

    if cfg.ablation:
        reports = ablation_sweep(cases, store, plan, model_cfg, train_cfg, ctx_cfg)
        for name in reports:
            m = reports[name].micro
            print(f"{name:>18}: P={m.precision:.3f} R={m.recall:.3f} F1={m.f1:.3f}")
        if cfg.report:
            write_ablation_report(reports, cfg.report)
            print(f"report written to {cfg.report}")
        return 0

    report = run_experiment(cases, store, plan, model_cfg, train_cfg, ctx_cfg)
    print(render_table(report))
    if cfg.report:
        write_report(report, cfg.report)
        print(f"report written to {cfg.report}")
    return 0


def render_alignment(cells: list[tuple[str, str, str, float]]) -> str:
    """OAEI Alignment-format document for the predicted correspondences."""
    lines = [
        "<?xml version='1.0' encoding='utf-8'?>",
        "<rdf:RDF xmlns='http://knowledgeweb.semanticweb.org/heterogeneity/alignment'",
        "         xmlns:rdf='http://www.w3.org/1999/02/22-rdf-syntax-ns#'>",
        "<Alignment>",
        "  <xml>yes</xml>",
        "  <level>0</level>",
        "  <type>11</type>",
    ]
    for e1, e2, relation, measure in cells:
        lines += [
            "  <map><Cell>",
            f"    <entity1 rdf:resource='{escape(e1)}'/>",
            f"    <entity2 rdf:resource='{escape(e2)}'/>",
            f"    <relation>{escape(relation)}</relation>",
            f"    <measure>{measure!r}</measure>",
            "  </Cell></map>",
        ]
    lines += ["</Alignment>", "</rdf:RDF>", ""]
    return "\n".join(lines)


def cmd_align(cfg: RunConfig, output: str | None) -> int:
    _require(cfg, "source", "target", "checkpoint")
    try:
        params = load_checkpoint(cfg.checkpoint)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    source = _load_ontology(cfg.source)
    target = _load_ontology(cfg.target)
    cfg.dim = params.config.dim  # the checkpoint owns the model geometry
    store = _build_store(cfg)

    ctx_cfg = ContextConfig(max_depth=params.config.max_depth, max_paths=cfg.max_paths)
    src_enc = encode_concepts(source, store, ctx_cfg, params.config)
    tgt_enc = encode_concepts(target, store, ctx_cfg, params.config)

    theta_c = cfg.threshold_concept if cfg.threshold_concept is not None else cfg.threshold
    theta_p = cfg.threshold_property if cfg.threshold_property is not None else cfg.threshold
    theta_c = 0.5 if theta_c is None else theta_c
    theta_p = 0.5 if theta_p is None else theta_p

    concept_pairs = [(s, t, 0) for s in sorted(source.concepts) for t in sorted(target.concepts)]
    scores = score_concept_pairs(params, concept_pairs, src_enc, tgt_enc)
    cells = [
        (pair[0], pair[1], "=", score)
        for pair, score, positive in predict(concept_pairs, scores, theta_c)
        if positive
    ]

    src_pvecs = property_vectors(source, store)
    tgt_pvecs = property_vectors(target, store)
    property_pairs = [
        (sp.id, tp.id, 0)
        for sp in source.properties
        for tp in target.properties
        if sp.kind == tp.kind
    ]
    if property_pairs:
        pscores = score_property_pairs(property_pairs, src_pvecs, tgt_pvecs)
        cells += [
            (pair[0], pair[1], "=", score)
            for pair, score, positive in predict(property_pairs, pscores, theta_p)
            if positive
        ]

    document = render_alignment(cells)
    if output:
        Path(output).write_text(document, encoding="utf-8")
        print(f"{len(cells)} cell(s) written to {output}")
    else:
        print(document)
    return 0


def cmd_inspect_context(cfg: RunConfig, concept: str) -> int:
    _require(cfg, "source")
    source = _load_ontology(cfg.source)
    if concept not in source.concepts:
        print(f"error: concept {concept!r} not in ontology", file=sys.stderr)
        return 1
    bundle = build_context(source, concept, cfg.context_config())
    print(
        json.dumps(
            {
                "concept": concept,
                "lineage_paths": [list(p) for p in bundle.lineage_paths],
                "children": list(bundle.children),
                "object_neighbors": list(bundle.obj_neighbors),
                "data_neighbors": list(bundle.data_neighbors),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value configuration file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--embeddings", help="embedding file (dim=<N> header format)")
    sub.add_argument(
        "--fallback-hash-embed", dest="fallback_hash_embed", action="store_const", const=True
    )
    sub.add_argument("--source")
    sub.add_argument("--target")
    sub.add_argument("--reference")
    sub.add_argument("--checkpoint")
    sub.add_argument("--report")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--dim", type=int)
    sub.add_argument("--out-dim", dest="out_dim", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--mode")
    sub.add_argument("--k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ontoalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_common(p_train)
    p_train.add_argument("--loss-log", dest="loss_log")

    p_eval = sub.add_parser("evaluate", help="run the K-fold experiment")
    _add_common(p_eval)
    p_eval.add_argument("--ablation", action="store_const", const=True)
    p_eval.add_argument("--ontology-dir", dest="ontology_dir")
    p_eval.add_argument("--reference-dir", dest="reference_dir")
    p_eval.add_argument("--granularity")

    p_align = sub.add_parser("align", help="emit an alignment file from a checkpoint")
    _add_common(p_align)
    p_align.add_argument("--threshold", type=float)
    p_align.add_argument("--threshold-concept", dest="threshold_concept", type=float)
    p_align.add_argument("--threshold-property", dest="threshold_property", type=float)
    p_align.add_argument("--output", help="alignment output path (stdout when omitted)")

    p_inspect = sub.add_parser("inspect-context", help="dump one concept's context bundle")
    _add_common(p_inspect)
    p_inspect.add_argument("concept", help="concept IRI")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        cfg = resolve_config(args)
        print_config(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "align":
            return cmd_align(cfg, getattr(args, "output", None))
        if args.command == "inspect-context":
            return cmd_inspect_context(cfg, args.concept)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
