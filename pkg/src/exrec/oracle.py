"""Exact minimal-mask solver by exhaustive enumeration.

Every mask over the session is checked against both conditions, so the
result is a ground-truth certificate: the reported optimum is the smallest
feasible complexity, with ties broken by the lexicographically smallest bit
pattern (reading left to right). The cost is 2^|session| condition checks,
which is why sessions above ``max_len`` are refused outright.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Mask, Session, apply_mask
from .env import ExplainTask
from .errors import SessionLengthError
from .validation import check_mask_for

DEFAULT_MAX_LEN = 20


@dataclass(frozen=True, slots=True)
class OracleResult:
    feasible: bool
    optimal_mask: Mask | None
    optimal_complexity: int | None
    feasible_count: int
    enumerated: int


def _mask_bits(value: int, n: int) -> tuple[int, ...]:
    # bit (n-1-j) of the integer is position j, so ascending integers give
    # ascending lexicographic bit patterns
    return tuple((value >> (n - 1 - j)) & 1 for j in range(n))


def _iter_by_complexity(n: int):
    """All mask integers, complexity ascending, lexicographic within a class."""
    yield 0
    limit = 1 << n
    for c in range(1, n + 1):
        value = (1 << c) - 1
        while value < limit:
            yield value
            # Gosper's hack: next integer with the same popcount
            low = value & -value
            ripple = value + low
            value = ripple | (((value ^ ripple) >> 2) // low)


class _ConditionCache:
    """Memoizes the top-K membership checks per distinct sub-session."""

    def __init__(self, task: ExplainTask):
        self.task = task
        self._memo: dict[tuple[int, ...], bool] = {}

    def target_in_topk(self, items: tuple[int, ...]) -> bool:
        hit = self._memo.get(items)
        if hit is None:
            hit = self.task.recommender.in_topk(
                Session(items), self.task.target_item, self.task.k
            )
            self._memo[items] = hit
        return hit

    def evaluate(self, value: int, n: int) -> tuple[bool, bool, tuple[int, ...]]:
        bits = _mask_bits(value, n)
        selected = tuple(v for v, b in zip(self.task.session.items, bits) if b)
        remainder = tuple(v for v, b in zip(self.task.session.items, bits) if not b)
        fe = self.target_in_topk(selected)
        cfe = not self.target_in_topk(remainder)
        return fe, cfe, bits


def _scan(task: ExplainTask, values, n: int) -> tuple[tuple[int, int] | None, int]:
    """Scan mask integers; return the best (complexity, value) key and count."""
    cache = _ConditionCache(task)
    best: tuple[int, int] | None = None
    count = 0
    for value in values:
        fe, cfe, _ = cache.evaluate(value, n)
        if fe and cfe:
            count += 1
            key = (value.bit_count(), value)
            if best is None or key < best:
                best = key
    return best, count


def solve_exact(
    task: ExplainTask,
    max_len: int = DEFAULT_MAX_LEN,
    order: str = "forward",
    workers: int | None = None,
) -> OracleResult:
    """Enumerate every mask and return the minimal feasible one.

    ``order`` switches between the forward (complexity-ascending) walk and a
    reverse lexicographic walk; both must agree, which the tests use as an
    enumeration-order sanity check. ``workers`` shards the integer range
    across threads; shards merge by the (complexity, pattern) key, so the
    result is identical for any worker count.
    """
    n = len(task.session)
    if n > max_len:
        raise SessionLengthError(
            f"session of length {n} exceeds the enumeration limit {max_len}; "
            f"2^{n} masks is past the exhaustive-search budget"
        )
    total = 1 << n
    if workers is not None and workers > 1 and total >= 1 << 10:
        from concurrent.futures import ThreadPoolExecutor

        bounds = [
            (total * i // workers, total * (i + 1) // workers) for i in range(workers)
        ]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda b: _scan(task, range(b[0], b[1]), n), bounds)
            )
        best = min((p[0] for p in parts if p[0] is not None), default=None)
        count = sum(p[1] for p in parts)
    else:
        if order == "forward":
            values = _iter_by_complexity(n)
        elif order == "reverse":
            values = range(total - 1, -1, -1)
        else:
            raise ValueError(f"unknown enumeration order {order!r}")
        best, count = _scan(task, values, n)
    if best is None:
        return OracleResult(False, None, None, 0, total)
    complexity, value = best
    return OracleResult(True, Mask(_mask_bits(value, n)), complexity, count, total)


def verify(task: ExplainTask, mask: Mask) -> tuple[bool, bool]:
    """Re-evaluate both conditions for a mask directly against the recommender."""
    check_mask_for(task.session, mask)
    view = apply_mask(task.session, mask)
    rec = task.recommender
    factual_ok = rec.in_topk(view.selected, task.target_item, task.k)
    counterfactual_ok = not rec.in_topk(view.remainder, task.target_item, task.k)
    return factual_ok, counterfactual_ok
