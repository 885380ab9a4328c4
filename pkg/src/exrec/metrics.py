"""Quality metrics for explanations and recommendations, plus the random baseline."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ExplanationRecord, Mask, Session
from .env import build_record, make_task
from .oracle import verify
from .recommenders import RecommenderBase
from .validation import as_rng, check_probability


@dataclass(frozen=True, slots=True)
class ExplanationReport:
    """Sufficiency (ps), necessity (pn), their harmonic mean, and mean length."""

    ps: float
    pn: float
    f_ns: float
    avg_len: float
    n_sessions: int


@dataclass(frozen=True, slots=True)
class RecReport:
    """Hit ratio and NDCG per cutoff, over next-item prediction cases."""

    values: dict[int, dict[str, float]]
    n_sessions: int
    n_skipped: int


def f_score(pn: float, ps: float) -> float:
    return 2.0 * pn * ps / (pn + ps) if pn + ps > 0 else 0.0


def explanation_metrics(records: list[ExplanationRecord]) -> ExplanationReport:
    """Fractions of sessions meeting each condition, and the mean mask size."""
    if not records:
        raise ValueError("explanation_metrics needs at least one record")
    ps = sum(1 for r in records if r.factual_ok) / len(records)
    pn = sum(1 for r in records if r.counterfactual_ok) / len(records)
    avg_len = sum(r.complexity for r in records) / len(records)
    return ExplanationReport(ps, pn, f_score(pn, ps), avg_len, len(records))


def next_item_cases(sessions: list[Session]) -> tuple[list[tuple[Session, int]], int]:
    """Split each session into (all-but-last, last) for next-item evaluation.

    Sessions shorter than two interactions cannot be split and are skipped;
    the skip count is returned alongside the cases.
    """
    cases: list[tuple[Session, int]] = []
    skipped = 0
    for s in sessions:
        if len(s) < 2:
            skipped += 1
            continue
        cases.append((Session(s.items[:-1], session_id=s.session_id), s.items[-1]))
    return cases, skipped


def _usable(cases: list[tuple[Session, int]]) -> tuple[list[tuple[Session, int]], int]:
    usable = [(s, t) for s, t in cases if len(s) >= 1]
    skipped = len(cases) - len(usable)
    if skipped:
        warnings.warn(f"skipped {skipped} cases with empty input sessions")
    if not usable:
        raise ValueError("no evaluable cases (all inputs empty)")
    return usable, skipped


def hr_at_k(cases: list[tuple[Session, int]], recommender: RecommenderBase, k: int) -> float:
    """Fraction of cases whose target lands in the top-K list."""
    usable, _ = _usable(cases)
    hits = sum(1 for s, t in usable if recommender.rank_of(s, t) <= k)
    return hits / len(usable)


def ndcg_at_k(cases: list[tuple[Session, int]], recommender: RecommenderBase, k: int) -> float:
    """Single-relevant-item NDCG: 1/log2(rank+1) when the target ranks within K."""
    usable, _ = _usable(cases)
    total = 0.0
    for s, t in usable:
        rank = recommender.rank_of(s, t)
        if rank <= k:
            total += 1.0 / math.log2(rank + 1)
    return total / len(usable)


def rec_report(
    cases: list[tuple[Session, int]], recommender: RecommenderBase, ks: tuple[int, ...]
) -> RecReport:
    usable, skipped = _usable(cases)
    values: dict[int, dict[str, float]] = {}
    ranks = [recommender.rank_of(s, t) for s, t in usable]
    for k in ks:
        hits = sum(1 for r in ranks if r <= k)
        gain = sum(1.0 / math.log2(r + 1) for r in ranks if r <= k)
        values[k] = {"hr": hits / len(ranks), "ndcg": gain / len(ranks)}
    return RecReport(values, n_sessions=len(usable), n_skipped=skipped)


def random_explanations(
    sessions: list[Session],
    recommender: RecommenderBase,
    k: int,
    keep_prob: float = 0.5,
    rng: np.random.Generator | int | None = 0,
) -> list[ExplanationRecord]:
    """Baseline that keeps each session item independently with ``keep_prob``.

    Verdicts are certified through the oracle's condition checker rather than
    the environment, on the same tasks the policy would see.
    """
    check_probability(keep_prob, "keep_prob")
    rng = as_rng(rng)
    records: list[ExplanationRecord] = []
    for session in sessions:
        if len(session) < 2:
            continue
        task = make_task(session, recommender, k)
        bits = tuple(int(rng.random() < keep_prob) for _ in range(len(session)))
        mask = Mask(bits)
        factual_ok, counterfactual_ok = verify(task, mask)
        record = build_record(task, mask)
        assert (record.factual_ok, record.counterfactual_ok) == (factual_ok, counterfactual_ok)
        records.append(record)
    return records
