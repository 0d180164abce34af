from .bilinear import (
    BilinearScorer,
    TrainingConfig,
    init_scorer,
    load_scorer,
    save_scorer,
    train_triplet,
    triplet_loss,
)
from .criteria import PES_WEIGHTS, WeightProfile, u_score
from .ranking import (
    CalibrationCoefficients,
    ConsiderationCutoffs,
    RankDivergence,
    RankedList,
    apply_calibration,
    consideration_set,
    gamma_rank,
    gamma_score,
    match_ranks_from_scores,
    mix_rank,
    rank_divergence,
    rank_top_k,
    ranks_from_scores,
    recall_at_k,
    recall_curve,
)

__all__ = [
    "BilinearScorer",
    "CalibrationCoefficients",
    "ConsiderationCutoffs",
    "PES_WEIGHTS",
    "RankDivergence",
    "RankedList",
    "TrainingConfig",
    "WeightProfile",
    "apply_calibration",
    "consideration_set",
    "gamma_rank",
    "gamma_score",
    "init_scorer",
    "load_scorer",
    "match_ranks_from_scores",
    "mix_rank",
    "rank_divergence",
    "rank_top_k",
    "ranks_from_scores",
    "recall_at_k",
    "recall_curve",
    "save_scorer",
    "train_triplet",
    "triplet_loss",
    "u_score",
]
