"""Episode environment for mask selection over one session.

An episode walks the session left to right; at each step the agent decides
whether the current item joins the explanation. The observation concatenates
the frozen session embedding, the embedding of the items selected so far,
the embedding of the item under decision, and the elementwise product of the
session and item embeddings (which exposes how much the candidate carries of
the session representation). A one-hidden-layer ReLU preprocessor, whose
weights belong to the policy parameter set, maps this to the policy state.
The reward is emitted once, at the terminal step, from the final mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ExplanationRecord, Mask, RecList, Session, apply_mask
from .recommenders import RecommenderBase
from .validation import check_k, check_mask_for, check_session


@dataclass(frozen=True, slots=True)
class ExplainTask:
    """One explanation problem: a session, the item to explain, and the cutoff.

    The target is the top-1 item the frozen recommender produces for the full
    session, so the task always explains something the model actually
    recommends.
    """

    session: Session
    target_item: int
    k: int
    recommender: RecommenderBase
    session_embedding: np.ndarray
    original_topk: RecList


@dataclass(frozen=True, slots=True)
class RewardBreakdown:
    """The four terminal reward terms and their sum.

    ``r_fe``/``r_cfe`` are the 0/1 indicators of the sufficiency and
    necessity conditions; ``r_sp`` = 1/ln(|selected|+2) favors sparse masks
    and ``r_rank`` = 1/ln(rank+2) favors a high rank of the target when
    scoring the selected items alone.
    """

    r_fe: float
    r_cfe: float
    r_sp: float
    r_rank: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "r_fe": self.r_fe,
            "r_cfe": self.r_cfe,
            "r_sp": self.r_sp,
            "r_rank": self.r_rank,
            "total": self.total,
        }


@dataclass(frozen=True, slots=True)
class EpisodeState:
    """Progress through one episode; terminal once ``t`` reaches the length."""

    t: int
    session_length: int
    partial_bits: tuple[int, ...]
    e_sstar: np.ndarray
    features: np.ndarray
    state_vector: np.ndarray

    @property
    def terminal(self) -> bool:
        return self.t >= self.session_length


def make_task(session: Session, recommender: RecommenderBase, k: int) -> ExplainTask:
    """Build the task of explaining the recommender's top pick for ``session``."""
    check_session(session, recommender.catalog)
    check_k(k, recommender.catalog)
    if len(session) < 2:
        raise ValueError(
            f"sessions must have at least 2 items to explain, got {len(session)}"
        )
    top = recommender.topk(session, k)
    return ExplainTask(
        session=session,
        target_item=top.item_ids[0],
        k=k,
        recommender=recommender,
        session_embedding=recommender.encode(session),
        original_topk=top,
    )


def state_dim(embed_dim: int) -> int:
    """Width of the raw observation: session, selection, current item, and
    session-item interaction blocks."""
    return 4 * embed_dim


def preprocess(params: dict[str, np.ndarray], features: np.ndarray) -> np.ndarray:
    """One hidden ReLU layer mapping raw features to the policy state."""
    pre = params["state_w"] @ features + params["state_b"]
    return np.maximum(pre, 0.0)


def terminal_reward(task: ExplainTask, mask: Mask) -> RewardBreakdown:
    """Evaluate the four reward terms for a completed mask.

    The rank term uses the full-catalog rank of the target given the selected
    sub-session, so it keeps providing signal even when the target falls
    outside the top-K.
    """
    check_mask_for(task.session, mask)
    view = apply_mask(task.session, mask)
    rec = task.recommender
    rank_sel = rec.rank_of(view.selected, task.target_item)
    rank_rem = rec.rank_of(view.remainder, task.target_item)
    r_fe = 1.0 if rank_sel <= task.k else 0.0
    r_cfe = 1.0 if rank_rem > task.k else 0.0
    r_sp = 1.0 / math.log(mask.complexity + 2)
    r_rank = 1.0 / math.log(rank_sel + 2)
    return RewardBreakdown(r_fe, r_cfe, r_sp, r_rank, r_fe + r_cfe + r_sp + r_rank)


class ExplainEnv:
    """Sequential include/exclude traversal of one task's session."""

    def __init__(self, task: ExplainTask, policy_params: dict[str, np.ndarray]):
        self.task = task
        self.params = policy_params
        self._item_embeddings: dict[int, np.ndarray] = {}

    def _embed_item(self, item: int) -> np.ndarray:
        cached = self._item_embeddings.get(item)
        if cached is None:
            cached = self.task.recommender.encode(Session((item,)))
            self._item_embeddings[item] = cached
        return cached

    def _observe(self, t: int, bits: tuple[int, ...], e_sstar: np.ndarray) -> EpisodeState:
        n = len(self.task.session)
        if t < n:
            e_item = self._embed_item(self.task.session.items[t])
        else:
            e_item = np.zeros_like(self.task.session_embedding)
        e_session = self.task.session_embedding
        features = np.concatenate([e_session, e_sstar, e_item, e_session * e_item])
        return EpisodeState(
            t=t,
            session_length=n,
            partial_bits=bits,
            e_sstar=e_sstar,
            features=features,
            state_vector=preprocess(self.params, features),
        )

    def reset(self) -> EpisodeState:
        zero = np.zeros_like(self.task.session_embedding)
        return self._observe(0, (), zero)

    def step(
        self, state: EpisodeState, action: int
    ) -> tuple[EpisodeState, RewardBreakdown | None]:
        """Apply one include/exclude decision; reward arrives at the final step."""
        if state.terminal:
            raise RuntimeError("episode already terminal; call reset() for a new one")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action}")
        bits = state.partial_bits + (action,)
        if action == 1:
            selected = tuple(
                v for v, b in zip(self.task.session.items, bits) if b == 1
            )
            e_sstar = self.task.recommender.encode(Session(selected))
        else:
            e_sstar = state.e_sstar
        nxt = self._observe(state.t + 1, bits, e_sstar)
        reward = terminal_reward(self.task, Mask(bits)) if nxt.terminal else None
        return nxt, reward


def build_record(
    task: ExplainTask,
    mask: Mask,
    trace: tuple[tuple[int, int, float], ...] | None = None,
) -> ExplanationRecord:
    """Assemble the emitted record for a finished mask, verdicts included."""
    reward = terminal_reward(task, mask)
    view = apply_mask(task.session, mask)
    return ExplanationRecord(
        session_id=task.session.session_id,
        items=task.session.items,
        target_item=task.target_item,
        mask=mask,
        factual_ok=reward.r_fe == 1.0,
        counterfactual_ok=reward.r_cfe == 1.0,
        complexity=mask.complexity,
        rank_of_target=task.recommender.rank_of(view.selected, task.target_item),
        reward_terms=reward.as_dict(),
        trace=trace,
    )
