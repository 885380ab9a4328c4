"""Contrastive fine-tuning of a trainable recommender from explanation views.

Each explanation splits its session into a kept part (a view that preserves
the recommendation) and a removed part (a view that breaks it). The kept
part acts as the positive sample and the removed parts of the whole batch as
negatives in an InfoNCE-style loss over cosine similarities, added to the
usual next-item cross-entropy with a mixing weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ExplanationRecord, Session, apply_mask
from .recommenders import (
    NeuralEmbeddingRecommender,
    RecommenderBase,
    iter_batches,
    next_item_pairs,
    require_trainable,
)

MODES = ("both", "pos_only", "neg_only")


@dataclass(frozen=True, slots=True)
class FinetuneTriple:
    """Anchor session with its positive (kept) and negative (removed) views."""

    anchor: Session
    positive: Session
    negative: Session
    target: int


@dataclass
class FinetuneConfig:
    lambda_weight: float = 0.5
    temperature: float = 1.0
    batch_size: int = 32
    epochs: int = 3
    learning_rate: float = 0.05
    mode: str = "both"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda_weight < 0:
            raise ValueError(f"lambda_weight must be >= 0, got {self.lambda_weight}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True, slots=True)
class FinetuneEpoch:
    epoch: int
    l_rec: float
    l_c: float
    total: float


def ablation_variants(mode: str) -> str:
    """Validate and pass through a contrastive-term configuration.

    ``both`` is the full loss; ``pos_only`` keeps only the pull toward the
    kept view (negated anchor-positive similarity); ``neg_only`` keeps only
    the push away from the removed views.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def build_triples(
    records: list[ExplanationRecord], sessions: list[Session]
) -> tuple[list[FinetuneTriple], int]:
    """Pair each record with its session and split along the record's mask.

    Triples whose kept view is empty carry no positive signal and are
    dropped; the drop count is reported.
    """
    by_id = {s.session_id: s for s in sessions}
    triples: list[FinetuneTriple] = []
    dropped = 0
    for record in records:
        session = by_id.get(record.session_id)
        if session is None:
            session = Session(record.items, session_id=record.session_id)
        if record.complexity == 0:
            dropped += 1
            continue
        view = apply_mask(session, record.mask)
        triples.append(
            FinetuneTriple(
                anchor=session,
                positive=view.selected,
                negative=view.remainder,
                target=record.target_item,
            )
        )
    return triples, dropped


def _cosine_and_grads(a: np.ndarray, b: np.ndarray):
    """Cosine similarity with partials; zero-norm vectors pin it to 0."""
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0, np.zeros_like(a), np.zeros_like(b), True
    sim = float(a @ b) / (na * nb)
    da = b / (na * nb) - sim * a / (na * na)
    db = a / (na * nb) - sim * b / (nb * nb)
    return sim, da, db, False


def contrastive_loss(
    batch: list[FinetuneTriple],
    recommender: RecommenderBase,
    temperature: float = 1.0,
    mode: str = "both",
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed contrastive loss over the batch with embedding-table gradients.

    For each anchor the positive logit is sim(anchor, kept)/tau and the
    negative logits are sim(anchor, removed_k)/tau over every removed view in
    the batch (the anchor's own included). Zero-norm embeddings (empty views)
    contribute similarity 0 and no gradient, with a counted warning.
    """
    rec = require_trainable(recommender)
    if not batch:
        raise ValueError("contrastive_loss needs a non-empty batch")
    ablation_variants(mode)

    anchors = [rec.encode(t.anchor) for t in batch]
    positives = [rec.encode(t.positive) for t in batch]
    negatives = [rec.encode(t.negative) for t in batch]

    grad_emb = np.zeros_like(rec.item_embeddings)
    n_zero = 0

    def accumulate(session: Session, d_embedding: np.ndarray) -> None:
        if len(session) == 0:
            return
        pooled = rec._encode_weights(session)
        for w, v in zip(pooled, session.items):
            grad_emb[v] += w * d_embedding

    total = 0.0
    for i, triple in enumerate(batch):
        u, du_da, du_dp, zero_u = _cosine_and_grads(anchors[i], positives[i])
        n_zero += zero_u
        u /= temperature
        sims = []
        for k in range(len(batch)):
            v, dv_da, dv_dn, zero_v = _cosine_and_grads(anchors[i], negatives[k])
            n_zero += zero_v
            sims.append((v / temperature, dv_da, dv_dn))

        if mode == "pos_only":
            total += -u
            d_u = -1.0
            d_vs = [0.0] * len(batch)
        elif mode == "both":
            logits = [u] + [v for v, _, _ in sims]
            m = max(logits)
            exps = [np.exp(l - m) for l in logits]
            z = sum(exps)
            total += float(np.log(z) + m - u)
            d_u = float(exps[0] / z) - 1.0
            d_vs = [float(e / z) for e in exps[1:]]
        else:  # neg_only: ln(1 + sum_k exp(v_k))
            logits = [0.0] + [v for v, _, _ in sims]
            m = max(logits)
            exps = [np.exp(l - m) for l in logits]
            z = sum(exps)
            total += float(np.log(z) + m)
            d_u = 0.0
            d_vs = [float(e / z) for e in exps[1:]]

        inv_t = 1.0 / temperature
        grad_anchor = d_u * inv_t * du_da
        accumulate(triple.positive, d_u * inv_t * du_dp)
        for k, ((_, dv_da, dv_dn), dv) in enumerate(zip(sims, d_vs)):
            grad_anchor = grad_anchor + dv * inv_t * dv_da
            accumulate(batch[k].negative, dv * inv_t * dv_dn)
        accumulate(triple.anchor, grad_anchor)

    if n_zero:
        warnings.warn(f"{n_zero} zero-norm embeddings contributed similarity 0")
    return total, {"item_embeddings": grad_emb, "item_bias": np.zeros_like(rec.item_bias)}


def finetune(
    recommender: RecommenderBase,
    triples: list[FinetuneTriple],
    train_sessions: list[Session],
    config: FinetuneConfig,
) -> tuple[NeuralEmbeddingRecommender, list[FinetuneEpoch]]:
    """Mini-batch descent on cross-entropy plus the weighted contrastive term.

    The cross-entropy stream consumes its own seeded shuffle, so with
    ``lambda_weight == 0`` the parameter trajectory is identical to plain
    next-item training under the same seed. Triples cycle through their own
    independently seeded shuffle.
    """
    rec = require_trainable(recommender)
    if config.lambda_weight > 0 and not triples:
        raise ValueError("finetune needs triples when lambda_weight > 0")
    pairs = next_item_pairs(train_sessions)
    if not pairs:
        raise ValueError("no (prefix, target) pairs in train_sessions")
    rec_rng = np.random.default_rng(config.seed)
    triple_rng = np.random.default_rng((config.seed, 1))

    triple_order: list[int] = []

    def next_triple_batch() -> list[FinetuneTriple]:
        nonlocal triple_order
        size = min(config.batch_size, len(triples))
        if len(triple_order) < size:
            triple_order = list(triple_rng.permutation(len(triples)))
        chosen, triple_order = triple_order[:size], triple_order[size:]
        return [triples[i] for i in chosen]

    curves: list[FinetuneEpoch] = []
    for epoch in range(config.epochs):
        rec_losses: list[float] = []
        con_losses: list[float] = []
        for batch in iter_batches(pairs, config.batch_size, rec_rng):
            l_rec, grads = rec.rec_loss_and_grads(batch)
            rec_losses.append(l_rec)
            if config.lambda_weight > 0:
                l_c, c_grads = contrastive_loss(
                    next_triple_batch(), rec, config.temperature, config.mode
                )
                con_losses.append(l_c)
                for name in grads:
                    grads[name] = grads[name] + config.lambda_weight * c_grads[name]
            rec.apply_grads(grads, config.learning_rate)
        l_rec_mean = float(np.mean(rec_losses))
        l_c_mean = float(np.mean(con_losses)) if con_losses else 0.0
        curves.append(
            FinetuneEpoch(
                epoch=epoch + 1,
                l_rec=l_rec_mean,
                l_c=l_c_mean,
                total=l_rec_mean + config.lambda_weight * l_c_mean,
            )
        )
    return rec, curves
