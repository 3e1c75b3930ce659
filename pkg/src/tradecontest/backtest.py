"""Daily portfolio evolution under T+1 settlement, move limits, and costs.

Orders fill at the day's close. Shares bought today are unsettled until
the next trading day and cannot be sold today. A buy is blocked when the
close-to-close move has already reached the upper limit (and a sell at
the lower limit), since the queue at a locked limit never reaches a
passive participant. Costs are proportional on both sides. No shorting:
a sell means exit to cash.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedCorrelationError
from .market import Bar
from .prediction import rank_ic

DEFAULT_FEE = 0.001
DEFAULT_LIMIT_PCT = 0.10
LIMIT_EPS = 5e-4
ANNUALIZATION = math.sqrt(252.0)


@dataclass
class Fill:
    date: dt.date
    symbol: str
    side: str  # "buy" | "sell"
    shares: float
    price: float
    value: float
    cost: float


@dataclass
class DayLedger:
    date: dt.date
    nav_pre: float
    costs: float
    nav_post: float
    rejected: list[str] = field(default_factory=list)


@dataclass
class PortfolioState:
    """Cash plus settled/unsettled long positions; evolves day by day."""

    cash: float
    settled: dict[str, float] = field(default_factory=dict)
    unsettled: dict[str, dict[dt.date, float]] = field(default_factory=dict)
    marks: dict[str, float] = field(default_factory=dict)
    prev_closes: dict[str, float] = field(default_factory=dict)
    nav_history: list[tuple[dt.date, float]] = field(default_factory=list)
    fills: list[Fill] = field(default_factory=list)
    days: list[DayLedger] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def shares(self, symbol: str) -> float:
        pending = sum(self.unsettled.get(symbol, {}).values())
        return self.settled.get(symbol, 0.0) + pending

    def held_symbols(self) -> list[str]:
        held = {s for s, v in self.settled.items() if v > 0}
        held |= {s for s, lots in self.unsettled.items() if sum(lots.values()) > 0}
        return sorted(held)

    def nav(self) -> float:
        return self.cash + sum(self.shares(s) * self.marks[s] for s in self.held_symbols())


@dataclass(frozen=True)
class BacktestRules:
    fee: float = DEFAULT_FEE
    limit_pct: float = DEFAULT_LIMIT_PCT
    limit_eps: float = LIMIT_EPS


def new_state(initial_cash: float) -> PortfolioState:
    if initial_cash <= 0:
        raise ValueError("initial cash must be positive")
    return PortfolioState(cash=float(initial_cash))


def _settle(state: PortfolioState, t: dt.date) -> None:
    for symbol in list(state.unsettled):
        lots = state.unsettled[symbol]
        ready = [d for d in lots if d < t]
        for d in ready:
            state.settled[symbol] = state.settled.get(symbol, 0.0) + lots.pop(d)
        if not lots:
            del state.unsettled[symbol]


def _move(state: PortfolioState, symbol: str, bar: Bar | None) -> float | None:
    """Close-to-close move for the limit check; None when unknowable."""
    if bar is None:
        return None
    prev = state.prev_closes.get(symbol)
    if prev is None or prev <= 0:
        return None
    return bar.close / prev - 1.0


def apply_day(state: PortfolioState, target_weights: dict[str, float],
              bars_t: dict[str, Bar], t: dt.date,
              rules: BacktestRules = BacktestRules()) -> PortfolioState:
    """Advance the portfolio one day toward ``target_weights``.

    Sequence: settle yesterday's buys, mark positions at today's close
    (held symbols without a bar keep their last mark and are flagged),
    then trade toward the targets subject to T+1, move limits, and cash.
    Returns the same state object, updated in place.
    """
    total_w = sum(target_weights.values())
    if total_w > 1.0 + 1e-9:
        raise ValueError(f"target weights sum to {total_w}, must be <= 1")
    if any(w < 0 for w in target_weights.values()):
        raise ValueError("target weights must be nonnegative")

    _settle(state, t)

    for symbol in set(state.held_symbols()) | set(target_weights):
        bar = bars_t.get(symbol)
        if bar is not None:
            state.marks[symbol] = bar.close
        elif symbol in state.marks:
            state.flags.append(f"{t}: stale mark for {symbol}")
        # symbols never seen and not in today's bars simply cannot trade

    nav_pre = state.nav()
    ledger = DayLedger(date=t, nav_pre=nav_pre, costs=0.0, nav_post=nav_pre)

    # sells first, freeing cash for the buys
    for symbol in sorted(set(state.held_symbols()) | set(target_weights)):
        bar = bars_t.get(symbol)
        target_value = target_weights.get(symbol, 0.0) * nav_pre
        current = state.shares(symbol) * state.marks.get(symbol, 0.0)
        if current - target_value <= 1e-12:
            continue
        if bar is None:
            ledger.rejected.append(f"sell {symbol}: no bar")
            continue
        move = _move(state, symbol, bar)
        if move is not None and move <= -(rules.limit_pct - rules.limit_eps):
            ledger.rejected.append(f"sell {symbol}: limit-down")
            continue
        price = bar.close
        sellable = state.settled.get(symbol, 0.0)
        want_shares = (current - target_value) / price
        shares = min(want_shares, sellable)
        if shares <= 0:
            if want_shares > 0:
                ledger.rejected.append(f"sell {symbol}: unsettled (T+1)")
            continue
        value = shares * price
        cost = rules.fee * value
        state.settled[symbol] = sellable - shares
        if state.settled[symbol] <= 1e-15:
            state.settled[symbol] = 0.0
        state.cash += value - cost
        ledger.costs += cost
        state.fills.append(Fill(date=t, symbol=symbol, side="sell", shares=shares,
                                price=price, value=value, cost=cost))

    # buys, scaled down together if cash cannot cover them all
    buy_plan: list[tuple[str, float, Bar]] = []
    for symbol in sorted(target_weights):
        bar = bars_t.get(symbol)
        target_value = target_weights[symbol] * nav_pre
        current = state.shares(symbol) * state.marks.get(symbol, 0.0)
        buy_value = target_value - current
        if buy_value <= 1e-12:
            continue
        if bar is None:
            ledger.rejected.append(f"buy {symbol}: no bar")
            continue
        move = _move(state, symbol, bar)
        if move is not None and move >= rules.limit_pct - rules.limit_eps:
            ledger.rejected.append(f"buy {symbol}: limit-up")
            continue
        buy_plan.append((symbol, buy_value, bar))

    total_buy = sum(v for _, v, _ in buy_plan)
    if total_buy > 0:
        affordable = state.cash / (1.0 + rules.fee)
        scale = min(1.0, affordable / total_buy)
        for symbol, buy_value, bar in buy_plan:
            value = buy_value * scale
            if value <= 0:
                continue
            shares = value / bar.close
            cost = rules.fee * value
            state.cash -= value + cost
            lots = state.unsettled.setdefault(symbol, {})
            lots[t] = lots.get(t, 0.0) + shares
            ledger.costs += cost
            state.fills.append(Fill(date=t, symbol=symbol, side="buy", shares=shares,
                                    price=bar.close, value=value, cost=cost))
        if state.cash < 0:  # float dust from the scale division
            state.cash = 0.0 if state.cash > -1e-9 else state.cash
    if state.cash < 0:
        raise AssertionError(f"cash went negative: {state.cash}")

    for symbol, bar in bars_t.items():
        state.prev_closes[symbol] = bar.close

    nav_post = state.nav()
    ledger.nav_post = nav_post
    state.days.append(ledger)
    state.nav_history.append((t, nav_post))
    return state


def signals_to_weights(signals, capital_weights) -> dict[str, float]:
    """Per-symbol long weights: each agent's capital goes to the symbol it
    buys; hold and sell park that agent's capital in cash."""
    if capital_weights is None:
        return {}
    out: dict[str, float] = {}
    for signal in signals:
        if signal.action != "buy":
            continue
        w = capital_weights.weights.get(signal.agent_id, 0.0)
        if w > 0:
            out[signal.symbol] = out.get(signal.symbol, 0.0) + w
    return out


@dataclass(frozen=True)
class MetricsReport:
    cumulative_return: float
    sharpe: float
    max_drawdown: float
    rank_ic_series: tuple[float, ...]
    mean_rank_ic: float
    icir: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "CR": self.cumulative_return,
            "SR": self.sharpe,
            "MDD": self.max_drawdown,
            "RankIC": self.mean_rank_ic,
            "ICIR": self.icir,
            "rank_ic_series": list(self.rank_ic_series),
            "flags": list(self.flags),
        }


def max_drawdown(navs) -> float:
    peak = -np.inf
    worst = 0.0
    for v in navs:
        peak = max(peak, v)
        worst = max(worst, (peak - v) / peak)
    return worst


def compute_metrics(nav_history, predicted_ranks_by_day=(), realized_ranks_by_day=()) -> MetricsReport:
    """Strategy metrics from the nav path plus contest-effectiveness rank
    ICs from aligned per-day prediction/realization cross-sections."""
    navs = [v for _, v in nav_history] if nav_history and isinstance(nav_history[0], tuple) \
        else list(nav_history)
    if len(navs) < 2:
        raise ValueError("need at least 2 nav points")
    flags: list[str] = []
    navs_arr = np.asarray(navs, dtype=np.float64)
    returns = navs_arr[1:] / navs_arr[:-1] - 1.0
    cr = float(navs_arr[-1] / navs_arr[0] - 1.0)
    std = float(returns.std())
    if std == 0.0:
        sharpe = 0.0
        flags.append("sr_undefined_constant_nav")
    else:
        sharpe = float(returns.mean() / std) * ANNUALIZATION
    mdd = float(max_drawdown(navs_arr))

    ics: list[float] = []
    skipped = 0
    for xs, ys in zip(predicted_ranks_by_day, realized_ranks_by_day):
        try:
            ics.append(rank_ic(xs, ys))
        except (UndefinedCorrelationError, ValueError):
            skipped += 1
    if skipped:
        flags.append(f"rank_ic_skipped_{skipped}_days")
    if ics:
        mean_ic = float(np.mean(ics))
        ic_std = float(np.std(ics))
        if ic_std == 0.0:
            icir = 0.0
            flags.append("icir_undefined_constant_ic")
        else:
            icir = mean_ic / ic_std
    else:
        mean_ic = 0.0
        icir = 0.0
        flags.append("no_rank_ic_days")
    return MetricsReport(
        cumulative_return=cr, sharpe=sharpe, max_drawdown=mdd,
        rank_ic_series=tuple(ics), mean_rank_ic=mean_ic, icir=icir,
        flags=tuple(flags),
    )
