"""Multi-label classification with label-dependency embeddings.

The pipeline learns label embeddings from annotation co-occurrence
statistics, maps them through a stacked graph convolution into an
inter-dependent classifier matrix, and optionally sharpens sample
representations with a cluster-relabeled contrastive term.
"""

from .corpus import (
    Dataset,
    DatasetFormatError,
    LabelVocabulary,
    Sample,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_by_subject,
)
from .cooccur import (
    AdjacencyConfig,
    CooccurrenceMatrix,
    NormalizedCorrelation,
    WeightingConfig,
    build_adjacency,
    build_cooccurrence,
    normalize_adjacency,
)
from .glove import EmbeddingMatrix, GloveConfig, train_glove
from .graph import GcnLayer, GcnStack, gcn_forward, init_gcn_stack
from .encoder import EncoderConfig, EncoderParams, encode, init_encoder
from .relabel import ClusterModel, KMeansResult, kmeans, mean_embedding, relabel
from .losses import LossConfig, contrastive_loss, cosine_similarity, mll_loss, total_loss
from .metrics import MetricsReport, ScoreTable, compute_report
from .trainer import (
    Checkpoint,
    TrainConfig,
    VariantSpec,
    evaluate,
    load_checkpoint,
    run_pipeline,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyConfig",
    "Checkpoint",
    "ClusterModel",
    "CooccurrenceMatrix",
    "Dataset",
    "DatasetFormatError",
    "EmbeddingMatrix",
    "EncoderConfig",
    "EncoderParams",
    "GcnLayer",
    "GcnStack",
    "GloveConfig",
    "KMeansResult",
    "LabelVocabulary",
    "LossConfig",
    "MetricsReport",
    "NormalizedCorrelation",
    "Sample",
    "ScoreTable",
    "SyntheticConfig",
    "TrainConfig",
    "VariantSpec",
    "WeightingConfig",
    "build_adjacency",
    "build_cooccurrence",
    "compute_report",
    "contrastive_loss",
    "cosine_similarity",
    "encode",
    "evaluate",
    "gcn_forward",
    "generate_synthetic",
    "init_encoder",
    "init_gcn_stack",
    "kmeans",
    "load_checkpoint",
    "load_dataset",
    "mean_embedding",
    "mll_loss",
    "normalize_adjacency",
    "relabel",
    "run_pipeline",
    "save_checkpoint",
    "save_dataset",
    "split_by_subject",
    "total_loss",
    "train_glove",
]
