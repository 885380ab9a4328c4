"""Core domain types: catalogs, sessions, masks, explanation views and records.

All types here are immutable after construction and safe to share across
threads. Item identifiers are dense 0-based integers; the data pipeline owns
the mapping back to raw item keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True, slots=True)
class Catalog:
    """The item universe. Ids are the contiguous range 0..item_count-1."""

    item_count: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.item_count < 1:
            raise ValueError(f"catalog needs at least one item, got {self.item_count}")
        if self.labels is not None and len(self.labels) != self.item_count:
            raise ValueError("labels length must equal item_count")

    def check_item(self, item: int) -> int:
        if not 0 <= item < self.item_count:
            raise ValueError(f"item id {item} outside catalog of size {self.item_count}")
        return item


@dataclass(frozen=True, slots=True)
class Session:
    """An ordered sequence of item interactions. Duplicates are allowed."""

    items: tuple[int, ...]
    session_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(int(v) for v in self.items))

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True, slots=True)
class Mask:
    """Binary inclusion vector over the positions of one session."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"mask bits must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def complexity(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True, slots=True)
class ExplanationView:
    """A session split by a mask into the selected sub-session and the rest.

    ``selected`` keeps the positions with bit 1, ``remainder`` the positions
    with bit 0; both preserve the original ordering, and together they
    partition the session's positions.
    """

    session: Session
    mask: Mask
    selected: Session
    remainder: Session


def apply_mask(session: Session, mask: Mask) -> ExplanationView:
    """Split ``session`` into (selected, remainder) sub-sessions along ``mask``."""
    if len(mask) != len(session):
        raise ValueError(
            f"mask length {len(mask)} does not match session length {len(session)}"
        )
    selected = tuple(v for v, b in zip(session.items, mask.bits) if b == 1)
    remainder = tuple(v for v, b in zip(session.items, mask.bits) if b == 0)
    return ExplanationView(
        session=session,
        mask=mask,
        selected=Session(selected, session_id=session.session_id + "+sel"),
        remainder=Session(remainder, session_id=session.session_id + "+rem"),
    )


def mask_complexity(mask: Mask) -> int:
    """Number of selected positions (the L0 norm of the mask)."""
    return mask.complexity


@dataclass(frozen=True, slots=True)
class RecList:
    """A ranked top-K list of (item id, score) pairs.

    Scores are non-increasing; ties are broken by ascending item id; no item
    appears twice.
    """

    entries: tuple[tuple[int, float], ...]
    k: int

    def __post_init__(self) -> None:
        if len(self.entries) != self.k:
            raise ValueError(f"expected {self.k} entries, got {len(self.entries)}")
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate item ids in recommendation list")
        for (i0, s0), (i1, s1) in zip(self.entries, self.entries[1:]):
            if s1 > s0 or (s1 == s0 and i1 < i0):
                raise ValueError("entries not sorted by (score desc, id asc)")

    @property
    def item_ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    def __contains__(self, item: int) -> bool:
        return any(i == item for i, _ in self.entries)


@dataclass(frozen=True, slots=True)
class ExplanationRecord:
    """One emitted explanation together with its verdicts and provenance.

    ``factual_ok`` means the target item is still recommended from the
    selected sub-session alone; ``counterfactual_ok`` means it drops out of
    the top-K once the selected items are removed. ``rank_of_target`` is the
    1-based rank of the target over the full catalog when scoring the
    selected sub-session.
    """

    session_id: str
    items: tuple[int, ...]
    target_item: int
    mask: Mask
    factual_ok: bool
    counterfactual_ok: bool
    complexity: int
    rank_of_target: int
    reward_terms: dict[str, float] = field(default_factory=dict)
    trace: tuple[tuple[int, int, float], ...] | None = None

    @property
    def conditions_unmet(self) -> bool:
        return not (self.factual_ok and self.counterfactual_ok)
