"""Factual-and-counterfactual explanation toolkit for session recommenders.

The package finds minimal sub-sessions that are simultaneously sufficient
(feeding them alone keeps the target item recommended) and necessary
(removing them drops it from the top-K), certifies them against an exact
enumeration oracle, scores explanation quality, and reuses the kept/removed
views as contrastive samples to fine-tune the recommender.
"""

from .core import (
    Catalog,
    ExplanationRecord,
    ExplanationView,
    Mask,
    RecList,
    Session,
    apply_mask,
    mask_complexity,
)
from .env import ExplainEnv, ExplainTask, RewardBreakdown, make_task, terminal_reward
from .finetune import FinetuneConfig, FinetuneTriple, build_triples, contrastive_loss, finetune
from .metrics import (
    ExplanationReport,
    RecReport,
    explanation_metrics,
    hr_at_k,
    ndcg_at_k,
    next_item_cases,
    random_explanations,
    rec_report,
)
from .oracle import OracleResult, solve_exact, verify
from .policy import (
    ReinforceExplainer,
    TrainerConfig,
    discounted_returns,
    reinforce_update,
    train_explainer,
)
from .recommenders import (
    MarkovCountRecommender,
    NeuralEmbeddingRecommender,
    RecommenderBase,
    load_recommender,
    save_recommender,
)

__all__ = [
    "Catalog",
    "Session",
    "Mask",
    "RecList",
    "ExplanationView",
    "ExplanationRecord",
    "apply_mask",
    "mask_complexity",
    "RecommenderBase",
    "MarkovCountRecommender",
    "NeuralEmbeddingRecommender",
    "save_recommender",
    "load_recommender",
    "ExplainTask",
    "ExplainEnv",
    "RewardBreakdown",
    "make_task",
    "terminal_reward",
    "ReinforceExplainer",
    "TrainerConfig",
    "discounted_returns",
    "reinforce_update",
    "train_explainer",
    "OracleResult",
    "solve_exact",
    "verify",
    "ExplanationReport",
    "RecReport",
    "explanation_metrics",
    "hr_at_k",
    "ndcg_at_k",
    "next_item_cases",
    "rec_report",
    "random_explanations",
    "FinetuneTriple",
    "FinetuneConfig",
    "build_triples",
    "contrastive_loss",
    "finetune",
]

__version__ = "0.1.0"
