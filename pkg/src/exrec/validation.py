"""Input validation helpers used by the estimator-style classes."""

from __future__ import annotations

import numpy as np

from .core import Catalog, Mask, Session


def check_session(session: Session, catalog: Catalog) -> Session:
    """Validate that every item in the session exists in the catalog."""
    for v in session.items:
        catalog.check_item(v)
    return session


def check_sessions(sessions, catalog: Catalog) -> list[Session]:
    return [check_session(s, catalog) for s in sessions]


def check_k(k: int, catalog: Catalog) -> int:
    if not 1 <= k <= catalog.item_count:
        raise ValueError(f"K must be in [1, {catalog.item_count}], got {k}")
    return k


def check_mask_for(session: Session, mask: Mask) -> Mask:
    if len(mask) != len(session):
        raise ValueError(
            f"mask length {len(mask)} does not match session length {len(session)}"
        )
    return mask


def check_probability(value: float, name: str, *, closed: bool = False) -> float:
    lo_ok = value > 0.0 or (closed and value >= 0.0)
    hi_ok = value < 1.0 or (closed and value <= 1.0)
    if not (lo_ok and hi_ok):
        bounds = "[0, 1]" if closed else "(0, 1)"
        raise ValueError(f"{name} must lie in {bounds}, got {value}")
    return value


def check_finite(array: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise FloatingPointError(f"{name} contains non-finite values")
    return array


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    """Accept a Generator, a seed, or None (fresh nondeterministic stream)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
