"""Allocation stage: knapsack factor selection and capital weighting.

Factor selection is an exact 0/1 knapsack over predicted utilities under
a token budget; items with non-positive utility are pre-excluded since
they can only lower the objective. Capital weights are proportional to
positive predicted utilities, with an all-cash fallback when nothing is
positive. The context-capacity model (value times a sigmoid capability
decay in total length) is exposed for analysis and budget sweeps.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .agents import TextualFactor

DEFAULT_STEEPNESS = 3e-4
DEFAULT_INFLECTION = 32_768
DEFAULT_BUDGET = 16_384


@dataclass(frozen=True)
class ContextModel:
    """Capability decay in total context length: sigmoid with inflection L0."""

    k: float = DEFAULT_STEEPNESS
    L0: int = DEFAULT_INFLECTION
    L_star: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("steepness k must be > 0")
        if not (0 < self.L_star < self.L0):
            raise ValueError("budget L_star must satisfy 0 < L_star < L0")


def decision_capability(model: ContextModel, length: float) -> float:
    """Probability-like capability at total context length ``length``."""
    if length < 0:
        raise ValueError("length must be >= 0")
    x = model.k * (length - model.L0)
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def decision_value(values, lengths, model: ContextModel) -> float:
    """Total information value discounted by capability at total length."""
    values = list(values)
    lengths = list(lengths)
    if len(values) != len(lengths):
        raise ValueError("values and lengths must align")
    if not values:
        return 0.0
    return sum(values) * decision_capability(model, sum(lengths))


@dataclass(frozen=True)
class KnapsackItem:
    agent_id: str
    utility: float
    tokens: int
    factor: TextualFactor | None = None

    def __post_init__(self):
        if self.tokens < 1:
            raise ValueError(f"{self.agent_id}: item length must be >= 1 token")


@dataclass(frozen=True)
class FactorPortfolio:
    """The selected factor set for one rebalance period."""

    date: dt.date | None
    selected: tuple[tuple[str, TextualFactor | None], ...]
    total_tokens: int
    total_utility: float

    def agent_ids(self) -> list[str]:
        return [a for a, _ in self.selected]

    def mentioned_symbols(self) -> list[str]:
        syms: set[str] = set()
        for _, factor in self.selected:
            if factor is not None:
                syms.update(factor.mentioned_symbols())
        return sorted(syms)


def empty_portfolio(date: dt.date | None = None) -> FactorPortfolio:
    return FactorPortfolio(date=date, selected=(), total_tokens=0, total_utility=0.0)


def knapsack_select(items, budget: int, date: dt.date | None = None) -> FactorPortfolio:
    """Exact utility-maximizing subset under the token budget.

    Non-positive-utility items are dropped up front. The dynamic program
    runs over capacity quantized at one token; when subsets tie, denser
    items (higher utility per token, then lower agent id) win, so replays
    are bit-identical.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    items = list(items)
    ids = [it.agent_id for it in items]
    if len(set(ids)) != len(ids):
        raise ValueError("item agent_ids must be distinct")
    cand = [it for it in items if it.utility > 0 and it.tokens <= budget]
    cand.sort(key=lambda it: (-(it.utility / it.tokens), it.agent_id))
    if not cand:
        return empty_portfolio(date)

    dp = np.zeros(budget + 1)
    keep = np.zeros((len(cand), budget + 1), dtype=bool)
    neg_inf = -np.inf
    for i, it in enumerate(cand):
        shifted = np.concatenate([np.full(it.tokens, neg_inf), dp[: budget + 1 - it.tokens]])
        take = shifted + it.utility
        better = take > dp  # skip on ties: denser, earlier items stand
        keep[i] = better
        dp = np.where(better, take, dp)

    chosen: list[KnapsackItem] = []
    w = budget
    for i in range(len(cand) - 1, -1, -1):
        if keep[i, w]:
            chosen.append(cand[i])
            w -= cand[i].tokens
    chosen.sort(key=lambda it: it.agent_id)
    return FactorPortfolio(
        date=date,
        selected=tuple((it.agent_id, it.factor) for it in chosen),
        total_tokens=sum(it.tokens for it in chosen),
        total_utility=float(sum(it.utility for it in chosen)),
    )


@dataclass(frozen=True)
class CapitalWeights:
    """Per-agent capital fractions; all-zero means fully in cash."""

    date: dt.date | None
    weights: dict[str, float]

    def __post_init__(self):
        total = sum(self.weights.values())
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be nonnegative")
        if self.weights and total > 0 and abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 or 0, got {total}")


def sharpe_weights(utilities: dict[str, float], date: dt.date | None = None) -> CapitalWeights:
    """Capital proportional to positive predicted utility; cash if none."""
    if not utilities:
        raise ValueError("utilities must be nonempty")
    clipped = {a: max(0.0, u) for a, u in sorted(utilities.items())}
    total = sum(clipped.values())
    if total <= 0.0:
        return CapitalWeights(date=date, weights={a: 0.0 for a in clipped})
    return CapitalWeights(date=date, weights={a: v / total for a, v in clipped.items()})
