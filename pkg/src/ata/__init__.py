"""Appearance and temporal alignment scores for few-shot sequence classification."""

from .alignment import (
    AlignmentConfig,
    AlignmentMatrices,
    alignment_matrices,
    normalize_pair,
    pairwise_similarity,
    sim_a,
    sim_max,
    sim_ot,
    sim_t,
    similarity_matrix,
    sinkhorn_plan,
    temporal_prior,
)
from .classifier import (
    InferenceConfig,
    assignment,
    classify_episode,
    init_prototypes,
    predict,
    refine_inductive,
    refine_transductive,
    soft_kmeans_update,
)
from .episodes import (
    Dataset,
    Episode,
    EpisodeSpec,
    FeatureSequence,
    SyntheticSpec,
    generate,
    load_features,
    sample_episodes,
    save_features,
    split_dataset,
)
from .harness import EvalReport, SweepReport, evaluate, schema_path, sweep, write_report
from .linalg import cosine_sim, log_sum_exp, softmax_row
from .losses import (
    LossBreakdown,
    LossConfig,
    PrototypeBank,
    grad_prototypes,
    load_checkpoint,
    loss_info,
    loss_sup,
    nearest_prototype,
    save_checkpoint,
    total_loss_batch,
    train_prototypes,
)

__version__ = "0.1.0"
