"""Ingestion, preprocessing, splitting, and the planted synthetic generator.

Raw interaction logs are tab-separated ``user_id item_key timestamp`` lines.
Interactions bucket into one session per user per UTC calendar day; items are
re-mapped to dense integer ids after filtering, with the id-to-key mapping
kept in the catalog labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import Catalog, ExplanationRecord, Mask, Session
from .errors import EmptyDatasetError

SECONDS_PER_DAY = 86400


@dataclass(frozen=True, slots=True)
class RawInteraction:
    user_id: str
    item_key: str
    timestamp: int

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")


@dataclass(frozen=True, slots=True)
class RawSession:
    """One user-day bucket of interactions, before items get integer ids."""

    user_id: str
    day: int
    item_keys: tuple[str, ...]

    @property
    def session_id(self) -> str:
        return f"{self.user_id}/d{self.day}"


@dataclass(slots=True)
class DatasetStats:
    n_train: int
    n_valid: int
    n_test: int
    item_count: int
    mean_train_length: float

    def as_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_valid": self.n_valid,
            "n_test": self.n_test,
            "item_count": self.item_count,
            "mean_train_length": self.mean_train_length,
        }


@dataclass(slots=True)
class DatasetSplit:
    train: list[Session]
    valid: list[Session]
    test: list[Session]
    catalog: Catalog
    stats: DatasetStats
    users: dict[str, str] = field(default_factory=dict)
    trigger_positions: dict[str, tuple[int, ...]] | None = None


def parse_interactions_tsv(path) -> list[RawInteraction]:
    """Read a raw log; a first line whose third column is not an integer is
    treated as a header."""
    interactions: list[RawInteraction] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno + 1}: expected 3 tab-separated fields")
            try:
                ts = int(parts[2])
            except ValueError:
                if lineno == 0:
                    continue
                raise ValueError(f"{path}:{lineno + 1}: bad timestamp {parts[2]!r}")
            interactions.append(RawInteraction(parts[0], parts[1], ts))
    return interactions


def sessionize(interactions: list[RawInteraction]) -> list[RawSession]:
    """Group interactions into per-user, per-UTC-day sessions.

    Within a session, items keep timestamp order; equal timestamps keep input
    order. Sessions are emitted sorted by (user, day).
    """
    keyed = sorted(
        enumerate(interactions),
        key=lambda e: (e[1].user_id, e[1].timestamp // SECONDS_PER_DAY, e[1].timestamp, e[0]),
    )
    sessions: list[RawSession] = []
    current: list[str] = []
    current_key: tuple[str, int] | None = None
    for _, it in keyed:
        key = (it.user_id, it.timestamp // SECONDS_PER_DAY)
        if key != current_key:
            if current_key is not None:
                sessions.append(RawSession(current_key[0], current_key[1], tuple(current)))
            current_key = key
            current = []
        current.append(it.item_key)
    if current_key is not None:
        sessions.append(RawSession(current_key[0], current_key[1], tuple(current)))
    return sessions


@dataclass(slots=True)
class FilterResult:
    sessions: list[Session]
    catalog: Catalog
    users: dict[str, str]
    n_dropped_sessions: int
    n_dropped_items: int


def filter_sessions(
    raw_sessions: list[RawSession],
    min_len: int = 2,
    min_item_freq: int = 1,
    max_item_freq: int | None = 100,
) -> FilterResult:
    """Drop short sessions and out-of-frequency items, then build dense ids.

    Length and frequency filtering interact (dropping one can re-trigger the
    other), so the two rules run to a fixed point; the result is therefore
    idempotent. Item ids are assigned to the surviving keys in sorted order
    and recorded as catalog labels.
    """
    sessions = [s for s in raw_sessions if len(s.item_keys) >= min_len]
    dropped_items: set[str] = set()
    while True:
        freq: dict[str, int] = {}
        for s in sessions:
            for key in s.item_keys:
                freq[key] = freq.get(key, 0) + 1
        bad = {
            key
            for key, n in freq.items()
            if n < min_item_freq or (max_item_freq is not None and n > max_item_freq)
        }
        if not bad:
            break
        dropped_items |= bad
        trimmed = []
        for s in sessions:
            kept = tuple(k for k in s.item_keys if k not in bad)
            if len(kept) >= min_len:
                trimmed.append(RawSession(s.user_id, s.day, kept))
        sessions = trimmed
    if not sessions:
        raise EmptyDatasetError(
            "no sessions survive filtering "
            f"(min_len={min_len}, freq bounds [{min_item_freq}, {max_item_freq}])"
        )
    keys = sorted({k for s in sessions for k in s.item_keys})
    key_to_id = {k: i for i, k in enumerate(keys)}
    catalog = Catalog(item_count=len(keys), labels=tuple(keys))
    out: list[Session] = []
    users: dict[str, str] = {}
    n_dropped = len(raw_sessions) - len(sessions)
    for s in sessions:
        sid = s.session_id
        out.append(Session(tuple(key_to_id[k] for k in s.item_keys), session_id=sid))
        users[sid] = s.user_id
    return FilterResult(out, catalog, users, n_dropped, len(dropped_items))


def split(
    sessions: list[Session],
    scheme: str = "ratio",
    seed: int = 0,
    users: dict[str, str] | None = None,
    catalog: Catalog | None = None,
) -> DatasetSplit:
    """Partition sessions into train/valid/test.

    ``ratio`` shuffles with the seed and cuts 75/15/10. ``last_session_per_user``
    holds out each user's final session for testing and sets aside a seeded
    10% of the remaining training sessions for validation.
    """
    if catalog is None:
        max_item = max((max(s.items) for s in sessions if len(s)), default=0)
        catalog = Catalog(max_item + 1)
    rng = np.random.default_rng(seed)
    if scheme == "ratio":
        if len(sessions) < 10:
            raise ValueError(f"ratio split needs >= 10 sessions, got {len(sessions)}")
        order = rng.permutation(len(sessions))
        n_train = int(len(sessions) * 0.75)
        n_valid = int(len(sessions) * 0.15)
        train = [sessions[i] for i in order[:n_train]]
        valid = [sessions[i] for i in order[n_train : n_train + n_valid]]
        test = [sessions[i] for i in order[n_train + n_valid :]]
    elif scheme == "last_session_per_user":
        if not users:
            raise ValueError("last_session_per_user split needs user provenance")
        last_of_user: dict[str, int] = {}
        for i, s in enumerate(sessions):
            last_of_user[users[s.session_id]] = i
        test_idx = set(last_of_user.values())
        test = [s for i, s in enumerate(sessions) if i in test_idx]
        rest = [s for i, s in enumerate(sessions) if i not in test_idx]
        n_valid = len(rest) // 10
        valid_pick = set(rng.permutation(len(rest))[:n_valid].tolist())
        valid = [s for i, s in enumerate(rest) if i in valid_pick]
        train = [s for i, s in enumerate(rest) if i not in valid_pick]
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")
    mean_len = float(np.mean([len(s) for s in train])) if train else 0.0
    stats = DatasetStats(len(train), len(valid), len(test), catalog.item_count, mean_len)
    return DatasetSplit(train, valid, test, catalog, stats, users=dict(users or {}))


@dataclass
class SynthSpec:
    """Planted-structure generator settings.

    ``trigger_rules`` maps trigger items to dedicated successor items; after
    a trigger the successor follows with probability ``p_trigger``. All other
    transitions come from a per-item habitual-successor table, replaced by a
    uniform draw with probability ``noise``. Successor items never appear in
    habitual tables, so outside rule firings they only occur by noise.
    """

    catalog_size: int = 50
    n_sessions: int = 200
    min_len: int = 5
    max_len: int = 10
    trigger_rules: dict[int, int] | None = None
    p_trigger: float = 0.9
    noise: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trigger_rules is None:
            n_rules = max(1, self.catalog_size // 10)
            self.trigger_rules = {t: t + n_rules for t in range(n_rules)}
        if not 0.5 < self.p_trigger <= 1.0:
            raise ValueError(f"p_trigger must lie in (0.5, 1], got {self.p_trigger}")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {self.noise}")
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("need 2 <= min_len <= max_len")
        triggers = set(self.trigger_rules)
        successors = set(self.trigger_rules.values())
        if triggers & successors:
            raise ValueError("trigger items must be disjoint from successor items")
        for v in triggers | successors:
            if not 0 <= v < self.catalog_size:
                raise ValueError(f"rule item {v} outside catalog")


def generate_synthetic(spec: SynthSpec) -> DatasetSplit:
    """Sample sessions with planted trigger-successor structure.

    Ground-truth rule firings are recorded per session (the position of each
    rule-generated successor). The split is the seeded 75/15/10 ratio scheme.
    """
    if spec.n_sessions < 10:
        raise EmptyDatasetError(
            f"need at least 10 sessions for a ratio split, got {spec.n_sessions}"
        )
    rng = np.random.default_rng(spec.seed)
    successors = set(spec.trigger_rules.values())
    background = [v for v in range(spec.catalog_size) if v not in successors]
    habit_size = min(12, max(2, len(background) - 1))
    habits: dict[int, np.ndarray] = {}
    habit_weights = 1.0 / np.arange(2, habit_size + 2, dtype=np.float64)
    habit_weights /= habit_weights.sum()
    for v in range(spec.catalog_size):
        pool = [u for u in background if u != v]
        habits[v] = rng.choice(pool, size=habit_size, replace=False)

    sessions: list[Session] = []
    trigger_positions: dict[str, tuple[int, ...]] = {}
    for idx in range(spec.n_sessions):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        items = [int(rng.choice(background))]
        fired: list[int] = []
        for pos in range(1, length):
            prev = items[-1]
            successor = spec.trigger_rules.get(prev)
            if successor is not None and rng.random() < spec.p_trigger:
                items.append(successor)
                fired.append(pos)
            elif spec.noise > 0.0 and rng.random() < spec.noise:
                items.append(int(rng.integers(spec.catalog_size)))
            else:
                items.append(int(rng.choice(habits[prev], p=habit_weights)))
        sid = f"synth-{idx:04d}"
        sessions.append(Session(tuple(items), session_id=sid))
        trigger_positions[sid] = tuple(fired)

    catalog = Catalog(spec.catalog_size)
    result = split(sessions, scheme="ratio", seed=spec.seed, catalog=catalog)
    result.trigger_positions = trigger_positions
    return result


# ---------------------------------------------------------------------------
# serialization


def write_session_store(path, sessions: list[Session], users: dict[str, str] | None = None) -> None:
    users = users or {}
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            row = {
                "session_id": s.session_id,
                "user_id": users.get(s.session_id, ""),
                "items": list(s.items),
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def read_session_store(path) -> tuple[list[Session], dict[str, str]]:
    sessions: list[Session] = []
    users: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            sessions.append(Session(tuple(row["items"]), session_id=row["session_id"]))
            if row.get("user_id"):
                users[row["session_id"]] = row["user_id"]
    return sessions, users


def write_catalog(path, catalog: Catalog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(catalog.item_count):
            label = catalog.labels[i] if catalog.labels else str(i)
            fh.write(f"{i}\t{label}\n")


def read_catalog(path) -> Catalog:
    labels: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            idx, label = line.rstrip("\n").split("\t")
            if int(idx) != len(labels):
                raise ValueError(f"{path}: non-contiguous catalog ids")
            labels.append(label)
    if not labels:
        raise EmptyDatasetError(f"{path}: empty catalog")
    return Catalog(item_count=len(labels), labels=tuple(labels))


def write_explanations(path, records: list[ExplanationRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            row = {
                "session_id": r.session_id,
                "items": list(r.items),
                "target": r.target_item,
                "mask": list(r.mask.bits),
                "factual_ok": r.factual_ok,
                "counterfactual_ok": r.counterfactual_ok,
                "complexity": r.complexity,
                "rank": r.rank_of_target,
                "reward_terms": r.reward_terms,
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def read_explanations(path) -> list[ExplanationRecord]:
    records: list[ExplanationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(
                ExplanationRecord(
                    session_id=row["session_id"],
                    items=tuple(row["items"]),
                    target_item=row["target"],
                    mask=Mask(tuple(row["mask"])),
                    factual_ok=row["factual_ok"],
                    counterfactual_ok=row["counterfactual_ok"],
                    complexity=row["complexity"],
                    rank_of_target=row["rank"],
                    reward_terms=row.get("reward_terms", {}),
                )
            )
    return records
