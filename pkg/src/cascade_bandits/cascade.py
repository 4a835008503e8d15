"""Cascade click-model primitives: actions, feedback, rewards and regret.

The user model: a ranked list of K items is shown, the user scans top-down,
clicks the first attractive item and stops. Positions at or above the click
are "examined"; if nothing is clicked every position is examined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RankedAction",
    "Feedback",
    "RegretRecord",
    "expected_cascade_reward",
    "simulate_cascade_round",
    "best_action",
    "step_regret",
    "linear_step_regret",
]


@dataclass(frozen=True)
class RankedAction:
    """An ordered list of K distinct item indices (the displayed ranking)."""

    items: tuple[int, ...]

    def __post_init__(self):
        items = tuple(int(i) for i in self.items)
        object.__setattr__(self, "items", items)
        if len(set(items)) != len(items):
            raise ValueError(f"action items must be distinct, got {items}")
        if any(i < 0 for i in items):
            raise ValueError(f"item indices must be nonnegative, got {items}")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


@dataclass(frozen=True)
class Feedback:
    """Per-round feedback under the cascade scan.

    values: attraction feedback per displayed position (0/1 for click
        models, real-valued in the scalar-feedback mode). Positions past
        the click carry 0 (they were never examined).
    click_position: 1-indexed first clicked position; equals K when the
        round ends without a click.
    examined: examined[j] is True exactly for positions j+1 <= click_position.
    """

    values: tuple[float, ...]
    click_position: int
    examined: tuple[bool, ...]

    def __post_init__(self):
        k = len(self.values)
        if not 1 <= self.click_position <= k:
            raise ValueError(
                f"click_position {self.click_position} outside [1, {k}]"
            )
        if len(self.examined) != k:
            raise ValueError("examined and values must have equal length")
        for j, flag in enumerate(self.examined):
            if flag != (j + 1 <= self.click_position):
                raise ValueError("examined flags inconsistent with click_position")

    @property
    def clicked(self) -> bool:
        """True iff the click position actually carries a click."""
        return self.values[self.click_position - 1] == 1.0


@dataclass
class RegretRecord:
    round: int
    step_regret: float
    cumulative_regret: float = field(default=0.0)


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return probs


def expected_cascade_reward(probs) -> float:
    """Probability that at least one of the displayed items attracts a click.

    Equals 1 - prod(1 - p_k); permutation invariant in the probabilities.
    """
    probs = _check_probs(probs)
    return float(1.0 - np.prod(1.0 - probs))


def simulate_cascade_round(
    action: RankedAction,
    attraction_means,
    rng: np.random.Generator,
    attractions=None,
) -> Feedback:
    """Simulate one cascade round for ``action``.

    Draws a Bernoulli attraction per displayed item (or reads it from the
    precomputed 0/1 ``attractions`` vector over all L items, which lets a
    harness share one realization across algorithms). The click position is
    the first attracted position, or K when none is; positions past the
    click are masked to 0 and flagged unexamined.
    """
    means = _check_probs(attraction_means)
    idx = np.fromiter(action.items, dtype=int, count=len(action))
    if idx.size and idx.max() >= means.size:
        raise ValueError("action references an item outside the catalog")
    if attractions is None:
        draws = (rng.random(idx.size) < means[idx]).astype(float)
    else:
        draws = np.asarray(attractions, dtype=float)[idx]
    hits = np.flatnonzero(draws == 1.0)
    click_position = int(hits[0]) + 1 if hits.size else idx.size
    values = draws.copy()
    values[click_position:] = 0.0
    examined = tuple(j + 1 <= click_position for j in range(idx.size))
    return Feedback(tuple(values), click_position, examined)


def best_action(attraction_means, K: int) -> RankedAction:
    """The K items with the largest means, sorted descending.

    Ties break toward the smaller item index so results are deterministic.
    """
    means = np.asarray(attraction_means, dtype=float)
    if K > means.size:
        raise ValueError(f"K={K} exceeds number of items L={means.size}")
    order = np.argsort(-means, kind="stable")
    return RankedAction(tuple(int(i) for i in order[:K]))


def step_regret(attraction_means, action: RankedAction, K: int) -> float:
    """Expected-reward gap between the best list and ``action``."""
    means = _check_probs(attraction_means)
    best = best_action(means, K)
    idx = np.fromiter(action.items, dtype=int, count=len(action))
    return expected_cascade_reward(means[list(best.items)]) - expected_cascade_reward(
        means[idx]
    )


def linear_step_regret(item_means, action: RankedAction, K: int) -> float:
    """Sum-of-means gap used when item rewards add up instead of cascading."""
    means = np.asarray(item_means, dtype=float)
    top = np.sort(means)[::-1][:K]
    idx = np.fromiter(action.items, dtype=int, count=len(action))
    return float(top.sum() - means[idx].sum())
