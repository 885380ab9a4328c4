"""Session recommenders behind one scoring interface.

Every recommender maps a session to an embedding and to scores over the full
catalog; top-K lists and target ranks are derived from the scores with a
fixed tie-break (ascending item id) so results are reproducible everywhere.
Two concrete models are provided: a transition-count model for frozen
explanation targets, and a trainable embedding model for fine-tuning.
"""

from __future__ import annotations

import numpy as np

from .base import ParamsMixin
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .core import Catalog, RecList, Session
from .errors import NotTrainableError
from .validation import check_k, check_session

PairBatch = list[tuple[Session, int]]


def score_order(scores: np.ndarray) -> np.ndarray:
    """Item ids sorted by score descending, ties broken by ascending id."""
    return np.lexsort((np.arange(scores.shape[0]), -scores))


class RecommenderBase(ParamsMixin):
    """Common scoring surface; subclasses implement ``encode`` and ``scores``."""

    catalog: Catalog
    embed_dim: int
    trainable = False

    def encode(self, session: Session) -> np.ndarray:
        raise NotImplementedError

    def scores(self, session: Session) -> np.ndarray:
        raise NotImplementedError

    def fit(self, sessions: list[Session]):
        raise NotImplementedError

    def topk(self, session: Session, k: int) -> RecList:
        check_k(k, self.catalog)
        check_session(session, self.catalog)
        s = self.scores(session)
        order = score_order(s)[:k]
        return RecList(tuple((int(i), float(s[i])) for i in order), k=k)

    def rank_of(self, session: Session, item: int) -> int:
        """1-based rank of ``item`` in the full-catalog ordering for ``session``."""
        self.catalog.check_item(item)
        check_session(session, self.catalog)
        s = self.scores(session)
        better = int(np.sum(s > s[item]))
        tied_before = int(np.sum(s[:item] == s[item]))
        return better + tied_before + 1

    def in_topk(self, session: Session, item: int, k: int) -> bool:
        check_k(k, self.catalog)
        return self.rank_of(session, item) <= k


class MarkovCountRecommender(RecommenderBase):
    """First-order transition counts with a popularity prior.

    score(S, j) = transitions[last(S), j] + alpha * popularity[j] / sum(popularity);
    an empty session falls back to the popularity prior alone. The session
    embedding is the model's sufficient statistic: a one-hot of the last item
    (the zero vector for the empty session). Not trainable; gradient
    operations are rejected.
    """

    def __init__(self, catalog: Catalog, alpha: float = 0.1):
        if alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {alpha}")
        self.catalog = catalog
        self.alpha = alpha
        self.embed_dim = catalog.item_count
        n = catalog.item_count
        self.transition_counts = np.zeros((n, n), dtype=np.float64)
        self.popularity_counts = np.zeros(n, dtype=np.float64)

    def fit(self, sessions: list[Session]):
        for session in sessions:
            check_session(session, self.catalog)
            for v in session.items:
                self.popularity_counts[v] += 1
            for a, b in zip(session.items, session.items[1:]):
                self.transition_counts[a, b] += 1
        return self

    def encode(self, session: Session) -> np.ndarray:
        check_session(session, self.catalog)
        e = np.zeros(self.embed_dim, dtype=np.float64)
        if len(session) > 0:
            e[session.items[-1]] = 1.0
        return e

    def scores(self, session: Session) -> np.ndarray:
        check_session(session, self.catalog)
        total_pop = self.popularity_counts.sum()
        prior = self.popularity_counts / total_pop if total_pop > 0 else 0.0
        s = self.alpha * np.asarray(prior, dtype=np.float64) * np.ones(self.embed_dim)
        if len(session) > 0:
            s = s + self.transition_counts[session.items[-1]]
        return s


class NeuralEmbeddingRecommender(RecommenderBase):
    """Trainable item-embedding model with recency-weighted mean pooling.

    encode(S) averages item embeddings with weights decay^(|S|-j) for the
    j-th item (1-based), so later items dominate; score(S, i) is the dot
    product with item i's embedding plus a per-item bias, and next-item
    probabilities are the softmax over all catalog scores. Parameters are
    kept in float64; checkpoints store float32.
    """

    trainable = True

    def __init__(
        self,
        catalog: Catalog,
        embed_dim: int = 32,
        recency_decay: float = 0.8,
        learning_rate: float = 0.1,
        epochs: int = 5,
        batch_size: int = 32,
        seed: int = 0,
    ):
        if not 0.0 < recency_decay <= 1.0:
            raise ValueError(f"recency_decay must lie in (0, 1], got {recency_decay}")
        if embed_dim < 1:
            raise ValueError(f"embed_dim must be positive, got {embed_dim}")
        self.catalog = catalog
        self.embed_dim = embed_dim
        self.recency_decay = recency_decay
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        rng = np.random.default_rng(seed)
        n = catalog.item_count
        self.item_embeddings = rng.normal(0.0, 0.1, size=(n, embed_dim))
        self.item_bias = np.zeros(n, dtype=np.float64)

    @property
    def parameters(self) -> dict[str, np.ndarray]:
        return {"item_embeddings": self.item_embeddings, "item_bias": self.item_bias}

    def encode(self, session: Session) -> np.ndarray:
        check_session(session, self.catalog)
        n = len(session)
        if n == 0:
            return np.zeros(self.embed_dim, dtype=np.float64)
        weights = self.recency_decay ** np.arange(n - 1, -1, -1, dtype=np.float64)
        emb = self.item_embeddings[list(session.items)]
        return weights @ emb / weights.sum()

    def _encode_weights(self, session: Session) -> np.ndarray:
        n = len(session)
        w = self.recency_decay ** np.arange(n - 1, -1, -1, dtype=np.float64)
        return w / w.sum()

    def scores(self, session: Session) -> np.ndarray:
        e = self.encode(session)
        return self.item_embeddings @ e + self.item_bias

    def next_item_probs(self, session: Session) -> np.ndarray:
        z = self.scores(session)
        z = z - z.max()
        p = np.exp(z)
        return p / p.sum()

    def rec_loss_and_grads(self, batch: PairBatch) -> tuple[float, dict[str, np.ndarray]]:
        """Mean softmax cross-entropy against the batch targets, with gradients.

        Returns the loss and gradients for ``item_embeddings`` and
        ``item_bias`` (averaged over the batch), suitable for
        ``apply_grads``. The score of every candidate depends on the session
        embedding, so embedding rows receive two gradient contributions: as
        scored candidates and as pooled session members.
        """
        if not batch:
            raise ValueError("rec_loss_and_grads needs a non-empty batch")
        grad_emb = np.zeros_like(self.item_embeddings)
        grad_bias = np.zeros_like(self.item_bias)
        total = 0.0
        scale = 1.0 / len(batch)
        for session, target in batch:
            self.catalog.check_item(target)
            e = self.encode(session)
            z = self.item_embeddings @ e + self.item_bias
            z = z - z.max()
            expz = np.exp(z)
            probs = expz / expz.sum()
            total += -np.log(probs[target])
            dz = probs.copy()
            dz[target] -= 1.0
            grad_bias += scale * dz
            grad_emb += scale * np.outer(dz, e)
            de = self.item_embeddings.T @ dz
            if len(session) > 0:
                pooled = self._encode_weights(session)
                for w, v in zip(pooled, session.items):
                    grad_emb[v] += scale * w * de
        return total * scale, {"item_embeddings": grad_emb, "item_bias": grad_bias}

    def apply_grads(self, grads: dict[str, np.ndarray], learning_rate: float) -> None:
        """Plain gradient-descent step on the named parameters."""
        if learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {learning_rate}")
        params = self.parameters
        for name, g in grads.items():
            if name not in params:
                raise ValueError(f"unknown parameter {name!r}")
            if g.shape != params[name].shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name!r} of shape {params[name].shape}"
                )
            params[name] -= learning_rate * g

    def fit(self, sessions: list[Session]):
        """Train on all (prefix, next-item) pairs derived from the sessions."""
        pairs = next_item_pairs(sessions)
        if not pairs:
            raise ValueError("no trainable (prefix, target) pairs in sessions")
        rng = np.random.default_rng(self.seed)
        for _ in range(self.epochs):
            for batch in iter_batches(pairs, self.batch_size, rng):
                _, grads = self.rec_loss_and_grads(batch)
                self.apply_grads(grads, self.learning_rate)
        return self


def next_item_pairs(sessions: list[Session]) -> PairBatch:
    """All (prefix session, next item) training pairs, in session order."""
    pairs: PairBatch = []
    for s in sessions:
        for j in range(1, len(s)):
            prefix = Session(s.items[:j], session_id=f"{s.session_id}[:{j}]")
            pairs.append((prefix, s.items[j]))
    return pairs


def iter_batches(pairs: PairBatch, batch_size: int, rng: np.random.Generator):
    """Shuffled mini-batches covering all pairs once."""
    order = rng.permutation(len(pairs))
    for start in range(0, len(pairs), batch_size):
        yield [pairs[i] for i in order[start : start + batch_size]]


def save_recommender(rec: RecommenderBase, path) -> None:
    if isinstance(rec, MarkovCountRecommender):
        ckpt = Checkpoint(
            catalog_size=rec.catalog.item_count,
            dim=rec.embed_dim,
            decay=0.0,
            alpha=rec.alpha,
            tensors={
                "transition_counts": rec.transition_counts,
                "popularity_counts": rec.popularity_counts,
            },
        )
    elif isinstance(rec, NeuralEmbeddingRecommender):
        ckpt = Checkpoint(
            catalog_size=rec.catalog.item_count,
            dim=rec.embed_dim,
            decay=rec.recency_decay,
            alpha=0.0,
            tensors={
                "item_embeddings": rec.item_embeddings,
                "item_bias": rec.item_bias,
            },
        )
    else:
        raise TypeError(f"cannot checkpoint recommender of type {type(rec).__name__}")
    save_checkpoint(path, ckpt)


def load_recommender(path, catalog: Catalog | None = None) -> RecommenderBase:
    ckpt = load_checkpoint(path)
    if catalog is None:
        catalog = Catalog(ckpt.catalog_size)
    if catalog.item_count != ckpt.catalog_size:
        raise ValueError(
            f"catalog size {catalog.item_count} does not match checkpoint "
            f"({ckpt.catalog_size})"
        )
    if "transition_counts" in ckpt.tensors:
        rec = MarkovCountRecommender(catalog, alpha=ckpt.alpha)
        rec.transition_counts = ckpt.tensors["transition_counts"].astype(np.float64)
        rec.popularity_counts = ckpt.tensors["popularity_counts"].astype(np.float64)
        return rec
    if "item_embeddings" in ckpt.tensors:
        emb = ckpt.tensors["item_embeddings"]
        rec = NeuralEmbeddingRecommender(
            catalog, embed_dim=emb.shape[1], recency_decay=ckpt.decay
        )
        rec.item_embeddings = emb.astype(np.float64)
        rec.item_bias = ckpt.tensors["item_bias"].astype(np.float64)
        return rec
    raise ValueError(f"{path}: unrecognized tensor set {sorted(ckpt.tensors)}")


def require_trainable(rec: RecommenderBase) -> NeuralEmbeddingRecommender:
    if not rec.trainable:
        raise NotTrainableError(
            f"{type(rec).__name__} has no trainable parameters; "
            "use NeuralEmbeddingRecommender for gradient-based operations"
        )
    return rec  # type: ignore[return-value]
