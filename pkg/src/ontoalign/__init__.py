"""Context-aware ontology alignment with a dual-attention Siamese scorer."""

from .context import ContextBundle, ContextConfig, build_context, enumerate_lineage_paths
from .embeddings import EmbeddingStore, hash_embed, load_store, save_store, tokenize
from .evaluation import (
    ExperimentReport,
    FoldPlan,
    Metrics,
    PairCase,
    ablation_sweep,
    metrics,
    plan_folds,
    run_experiment,
)
from .model import (
    ModelConfig,
    ModelParams,
    backward,
    concept_forward,
    init_params,
    load_checkpoint,
    mse_loss,
    property_forward,
    save_checkpoint,
    similarity,
)
from .ontology import (
    Ontology,
    PropertyDecl,
    ReferenceAlignment,
    entity_label,
    parse_ontology,
    parse_reference_alignment,
)
from .training import (
    AlignmentDataset,
    TrainConfig,
    build_dataset,
    oversample_positives,
    select_threshold,
    train,
)

__version__ = "0.1.0"
