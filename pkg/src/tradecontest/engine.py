"""Daily contest orchestration: quantify, predict, allocate, hand off.

The day loop runs on the trading calendar. Factors produced on day t are
scored once t+1's close resolves, so every prediction made on day t sees
only fully-resolved scores (getting this lag wrong is look-ahead bias).
The data contest rebuilds the factor portfolio on its rebalance cadence;
research agents consume the active portfolio and are themselves scored,
predicted, and capital-weighted on their own cadence. Agents that fail
or stay silent simply score as absent; the run never crashes on them.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

from .agents import CASH_SYMBOL, TextualFactor, TradingSignal
from .allocation import (
    CapitalWeights,
    FactorPortfolio,
    KnapsackItem,
    empty_portfolio,
    knapsack_select,
    sharpe_weights,
)
from .backtest import signals_to_weights
from .errors import (
    AgentUnavailableError,
    ConfigurationError,
    MissingDataError,
    ProtocolError,
)
from .market import MarketStore, price_change, view_until
from .prediction import (
    PredictorModel,
    PredictorSpec,
    baseline_model,
    clipped_utility,
    features_from_window,
    train,
)
from .scoring import (
    ScoreSeries,
    factor_score,
    realized_sharpe,
    researcher_score,
    stub_judger,
)
from .seeding import stream

AGENT_FAILURES = (AgentUnavailableError, ProtocolError)


@dataclass(frozen=True)
class ContestConfig:
    m: int = 5
    n_data: int = 3
    n_research: int = 5
    budget: int = 16_384
    predictor: PredictorSpec = field(default_factory=lambda: PredictorSpec(kind="gbdt"))
    seed: int = 0
    no_data_contest: bool = False
    no_research_contest: bool = False
    no_judger: bool = False
    no_deep_inputs: bool = False
    research_rebalance_daily: bool = False
    min_train_pairs: int = 30
    train_window_days: int | None = None

    def __post_init__(self):
        if self.m < 2:
            raise ConfigurationError("m must be >= 2")
        if self.n_data < 1 or self.n_research < 1:
            raise ConfigurationError("rebalance horizons must be >= 1")
        if self.budget < 0:
            raise ConfigurationError("budget must be >= 0")

    @property
    def warmup_days(self) -> int:
        # one extra day because scores resolve with a one-day lag
        return self.m + max(self.n_data, self.n_research) + 1


@dataclass
class DailyRecord:
    """One day of the run ledger."""

    date: dt.date
    factor_scores: dict[str, float]
    researcher_scores: dict[str, dict[str, float]]
    data_utilities: dict[str, float]
    research_utilities: dict[str, float]
    portfolio: FactorPortfolio | None
    weights: CapitalWeights | None
    signals: list[TradingSignal]
    target_weights: dict[str, float]
    data_rebalance: bool
    research_rebalance: bool
    model_kinds: dict[str, str]
    absent: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "factor_scores": dict(sorted(self.factor_scores.items())),
            "researcher_scores": {
                a: dict(sorted(v.items()))
                for a, v in sorted(self.researcher_scores.items())
            },
            "data_utilities": dict(sorted(self.data_utilities.items())),
            "research_utilities": dict(sorted(self.research_utilities.items())),
            "portfolio": _portfolio_dict(self.portfolio),
            "weights": None if self.weights is None else dict(sorted(self.weights.weights.items())),
            "signals": [_signal_dict(s) for s in self.signals],
            "target_weights": dict(sorted(self.target_weights.items())),
            "data_rebalance": self.data_rebalance,
            "research_rebalance": self.research_rebalance,
            "model_kinds": dict(sorted(self.model_kinds.items())),
            "absent": sorted(set(self.absent)),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _portfolio_dict(portfolio: FactorPortfolio | None):
    if portfolio is None:
        return None
    return {
        "date": None if portfolio.date is None else portfolio.date.isoformat(),
        "total_tokens": portfolio.total_tokens,
        "total_utility": portfolio.total_utility,
        "selected": [
            {
                "agent_id": agent_id,
                "factor": None if factor is None else {
                    "date": factor.date.isoformat(),
                    "token_length": factor.token_length,
                    "observations": [
                        {"text": o.text, "rated_symbols": [list(p) for p in o.rated_symbols]}
                        for o in factor.observations
                    ],
                },
            }
            for agent_id, factor in portfolio.selected
        ],
    }


def _signal_dict(s: TradingSignal) -> dict:
    return {
        "agent_id": s.agent_id, "date": s.date.isoformat(), "symbol": s.symbol,
        "action": s.action, "evidence": list(s.evidence), "limitation": s.limitation,
    }


def _window_matrix(values: np.ndarray, m: int) -> np.ndarray:
    """(count, 4) feature matrix for every m-window of ``values``."""
    W = np.lib.stride_tricks.sliding_window_view(values, m)
    x = np.arange(m, dtype=np.float64)
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    means = W.mean(axis=1)
    stds = W.std(axis=1)
    lasts = W[:, -1]
    slopes = (W - means[:, None]) @ xc / denom
    return np.column_stack([means, stds, lasts, slopes])


def _training_pairs(series_map: dict[str, ScoreSeries], extras, m: int, n: int,
                    cutoff: dt.date, cap: int | None):
    """Pooled (features, (future mean, future std)) pairs across agents.

    ``extras`` maps (agent_id, date) to an optional extra feature tuple.
    ``cap`` keeps only each agent's most recent anchors, bounding the
    expanding window.
    """
    pairs: list[tuple[np.ndarray, tuple[float, float]]] = []
    for agent_id in sorted(series_map):
        entries = [(d, v) for d, v in series_map[agent_id].entries if d <= cutoff]
        L = len(entries)
        if L < m + n:
            continue
        values = np.array([v for _, v in entries], dtype=np.float64)
        feats = _window_matrix(values, m)           # rows end at index m-1..L-1
        F = np.lib.stride_tricks.sliding_window_view(values, n)
        fut_mu = F.mean(axis=1)                     # rows start at index 0..L-n
        fut_sigma = F.std(axis=1)
        anchors = list(range(m - 1, L - n))
        if cap is not None:
            anchors = anchors[-cap:]
        for i in anchors:
            x = feats[i - (m - 1)]
            extra = extras(agent_id, entries[i][0]) if extras is not None else None
            if extra is not None:
                x = np.concatenate([x, np.asarray(extra, dtype=np.float64)])
            pairs.append((x, (float(fut_mu[i + 1]), float(fut_sigma[i + 1]))))
    return pairs


def _current_features(series: ScoreSeries, extras_vec, m: int, cutoff: dt.date):
    values = series.values_until(cutoff)
    if len(values) < m:
        return None
    x = features_from_window(np.asarray(values[-m:], dtype=np.float64)).as_array()
    if extras_vec is not None:
        x = np.concatenate([x, np.asarray(extras_vec, dtype=np.float64)])
    return x


def _fit_or_baseline(config: ContestConfig, pairs) -> PredictorModel:
    threshold = max(config.min_train_pairs, 30)
    if config.predictor.kind == "gbdt" and len(pairs) >= threshold:
        return train(config.predictor, pairs)
    return baseline_model()


class ContestEngine:
    """Stateful day-by-day runner; see run_full for the one-shot API."""

    def __init__(self, config: ContestConfig, store: MarketStore,
                 data_agents, research_agents):
        ids = [a.agent_id for a in data_agents] + [a.agent_id for a in research_agents]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("agent ids must be unique across the roster")
        if not data_agents:
            raise ConfigurationError("need at least one data agent")
        if not research_agents:
            raise ConfigurationError("need at least one research agent")
        if not store.calendar:
            raise ConfigurationError("market store has an empty calendar")
        self.config = config
        self.store = store
        self.data_agents = sorted(data_agents, key=lambda a: a.agent_id)
        self.research_agents = sorted(research_agents, key=lambda a: a.agent_id)

        self.factors: dict[dt.date, dict[str, TextualFactor]] = {}
        self.signals: dict[dt.date, dict[str, TradingSignal]] = {}
        self.data_scores: dict[str, ScoreSeries] = {
            a.agent_id: ScoreSeries(a.agent_id) for a in self.data_agents
        }
        self.research_returns: dict[str, list[tuple[dt.date, float]]] = {
            a.agent_id: [] for a in self.research_agents
        }
        self.research_sharpe: dict[str, ScoreSeries] = {
            a.agent_id: ScoreSeries(a.agent_id) for a in self.research_agents
        }
        self.judger_history: dict[str, list[tuple[dt.date, tuple[float, float]]]] = {
            a.agent_id: [] for a in self.research_agents
        }
        self.active_portfolio: FactorPortfolio | None = None
        self.active_weights: CapitalWeights | None = None

    # -- per-day stages -------------------------------------------------

    def _collect_factors(self, view, t: dt.date, absent: list[str]) -> dict[str, TextualFactor]:
        out: dict[str, TextualFactor] = {}
        for agent in self.data_agents:
            try:
                factor = agent.produce(view, t)
                if factor.date != t:
                    raise ProtocolError(f"{agent.agent_id}: factor dated {factor.date}, expected {t}")
                out[agent.agent_id] = factor
            except AGENT_FAILURES:
                absent.append(agent.agent_id)
        self.factors[t] = out
        return out

    def _resolve_scores(self, i: int, t: dt.date, absent: list[str]) -> tuple[dict, dict]:
        """Score day t-1 factors and researcher returns, now that t's close
        is known."""
        factor_scores: dict[str, float] = {}
        researcher_scores: dict[str, dict[str, float]] = {}
        if i == 0:
            return factor_scores, researcher_scores
        t_prev = self.store.calendar[i - 1]
        for agent_id, factor in sorted(self.factors.get(t_prev, {}).items()):
            try:
                q = factor_score(factor, self.store)
            except MissingDataError:
                absent.append(agent_id)
                continue
            self.data_scores[agent_id].append(t_prev, q)
            factor_scores[agent_id] = q

        m = self.config.m
        for agent_id, signal in sorted(self.signals.get(t_prev, {}).items()):
            if signal.action == "buy" and signal.symbol != CASH_SYMBOL:
                try:
                    ret = price_change(self.store, signal.symbol, t_prev)
                except MissingDataError:
                    absent.append(agent_id)
                    continue
            else:
                ret = 0.0
            self.research_returns[agent_id].append((t_prev, ret))
            window = [r for _, r in self.research_returns[agent_id][-m:]]
            judger = None if self.config.no_judger else stub_judger(signal)
            entry: dict[str, float] = {}
            if len(window) >= 2:
                if judger is not None:
                    hybrid = researcher_score([signal], window, judger)
                    sharpe = hybrid.realized_sharpe_m
                else:
                    sharpe = realized_sharpe(window)
                self.research_sharpe[agent_id].append(t_prev, sharpe)
                entry["sharpe"] = sharpe
            if judger is not None:
                self.judger_history[agent_id].append(
                    (t_prev, (judger.logical_soundness, judger.evidence_quality))
                )
                entry["soundness"] = judger.logical_soundness
                entry["quality"] = judger.evidence_quality
            if entry:
                researcher_scores[agent_id] = entry
        return factor_scores, researcher_scores

    def _judger_extras(self, agent_id: str, cutoff: dt.date):
        if self.config.no_judger:
            return None
        hist = [v for d, v in self.judger_history[agent_id] if d <= cutoff]
        if not hist:
            return None
        window = hist[-self.config.m:]
        sound = sum(v[0] for v in window) / len(window)
        qual = sum(v[1] for v in window) / len(window)
        return (sound, qual)

    def _predict_utilities(self, series_map, extras_fn, n: int, cutoff: dt.date):
        pairs = _training_pairs(series_map, extras_fn, self.config.m, n, cutoff,
                                self.config.train_window_days)
        model = _fit_or_baseline(self.config, pairs)
        agents: list[str] = []
        rows: list[np.ndarray] = []
        for agent_id in sorted(series_map):
            extras_vec = extras_fn(agent_id, cutoff) if extras_fn is not None else None
            x = _current_features(series_map[agent_id], extras_vec, self.config.m, cutoff)
            if x is None:
                continue
            agents.append(agent_id)
            rows.append(x)
        if not agents:
            return {}, model.kind
        mu, sigma = model.predict_batch(np.vstack(rows))
        utilities = {
            a: clipped_utility(float(mu[i]), float(sigma[i])).utility
            for i, a in enumerate(agents)
        }
        return utilities, model.kind

    def _rebalance_data(self, t: dt.date, t_prev: dt.date,
                        factors_t: dict[str, TextualFactor]):
        if self.config.no_data_contest:
            rng = stream(self.config.seed, "ablation", "data", t.isoformat())
            ids = sorted(a for a, f in factors_t.items() if f.token_length >= 1)
            order = [ids[j] for j in rng.permutation(len(ids))]
            total = 0
            chosen = []
            for agent_id in order:
                tokens = factors_t[agent_id].token_length
                if total + tokens <= self.config.budget:
                    chosen.append(agent_id)
                    total += tokens
            chosen.sort()
            self.active_portfolio = FactorPortfolio(
                date=t,
                selected=tuple((a, factors_t[a]) for a in chosen),
                total_tokens=total,
                total_utility=0.0,
            )
            return {}, "random"

        utilities, model_kind = self._predict_utilities(
            self.data_scores, None, self.config.n_data, t_prev)
        items = [
            KnapsackItem(agent_id=a, utility=u, tokens=factors_t[a].token_length,
                         factor=factors_t[a])
            for a, u in sorted(utilities.items())
            if a in factors_t and factors_t[a].token_length >= 1
        ]
        self.active_portfolio = knapsack_select(items, self.config.budget, date=t)
        return utilities, model_kind

    def _collect_signals(self, view, t: dt.date, absent: list[str]) -> dict[str, TradingSignal]:
        out: dict[str, TradingSignal] = {}
        portfolio = self.active_portfolio if self.active_portfolio is not None \
            else empty_portfolio(t)
        research_view = None if self.config.no_deep_inputs else view
        for agent in self.research_agents:
            try:
                signal = agent.produce(portfolio, research_view, t)
                if signal.date != t:
                    raise ProtocolError(f"{agent.agent_id}: signal dated {signal.date}, expected {t}")
                out[agent.agent_id] = signal
            except AGENT_FAILURES:
                absent.append(agent.agent_id)
        self.signals[t] = out
        return out

    def _rebalance_research(self, t: dt.date, t_prev: dt.date,
                            signals_t: dict[str, TradingSignal]):
        if self.config.no_research_contest:
            rng = stream(self.config.seed, "ablation", "research", t.isoformat())
            ids = sorted(signals_t)
            if not ids:
                self.active_weights = None
                return {}, "random"
            pick = ids[int(rng.integers(len(ids)))]
            self.active_weights = CapitalWeights(date=t, weights={pick: 1.0})
            return {}, "random"

        utilities, model_kind = self._predict_utilities(
            self.research_sharpe, self._judger_extras, self.config.n_research, t_prev)
        if not utilities:
            self.active_weights = None
            return {}, model_kind
        self.active_weights = sharpe_weights(utilities, date=t)
        return utilities, model_kind

    # -- day driver -------------------------------------------------------

    def run_contest_day(self, i: int, t: dt.date, eval_idx: int) -> DailyRecord:
        absent: list[str] = []
        view = view_until(self.store, t)
        factors_t = self._collect_factors(view, t, absent)
        factor_scores, researcher_scores = self._resolve_scores(i, t, absent)
        t_prev = self.store.calendar[i - 1] if i > 0 else t

        data_utilities: dict[str, float] = {}
        research_utilities: dict[str, float] = {}
        model_kinds: dict[str, str] = {}

        data_reb = i >= self.config.m and (i - eval_idx) % self.config.n_data == 0
        if data_reb:
            data_utilities, kind = self._rebalance_data(t, t_prev, factors_t)
            model_kinds["data"] = kind

        signals_t = self._collect_signals(view, t, absent)

        research_reb = i >= self.config.m and (
            self.config.research_rebalance_daily
            or (i - eval_idx) % self.config.n_research == 0
        )
        if research_reb:
            research_utilities, kind = self._rebalance_research(t, t_prev, signals_t)
            model_kinds["research"] = kind

        target = signals_to_weights(
            [signals_t[a] for a in sorted(signals_t)], self.active_weights)

        return DailyRecord(
            date=t,
            factor_scores=factor_scores,
            researcher_scores=researcher_scores,
            data_utilities=data_utilities,
            research_utilities=research_utilities,
            portfolio=self.active_portfolio,
            weights=self.active_weights,
            signals=[signals_t[a] for a in sorted(signals_t)],
            target_weights=target,
            data_rebalance=data_reb,
            research_rebalance=research_reb,
            model_kinds=model_kinds,
            absent=absent,
        )


def run_full(config: ContestConfig, store: MarketStore, data_agents,
             research_agents, eval_start: dt.date | None = None,
             eval_end: dt.date | None = None) -> list[DailyRecord]:
    """Run the full contest over the store's calendar.

    Records are emitted for the evaluation period only; everything before
    ``eval_start`` is warm-up used to accumulate resolved score history.
    Identical inputs give identical ledgers, byte for byte.
    """
    engine = ContestEngine(config, store, data_agents, research_agents)
    calendar = store.calendar
    required = config.warmup_days
    if eval_start is None:
        if len(calendar) <= required:
            raise ConfigurationError(
                f"calendar has {len(calendar)} days; need more than the "
                f"{required}-day warm-up"
            )
        eval_start = calendar[required]
    try:
        eval_idx = store.day_index(eval_start)
    except MissingDataError:
        raise ConfigurationError(f"eval start {eval_start} not on the trading calendar") from None
    if eval_idx < required:
        raise ConfigurationError(
            f"warm-up too short: need at least {required} trading days before "
            f"{eval_start}, have {eval_idx}"
        )
    if eval_end is None:
        eval_end = calendar[-1]

    records: list[DailyRecord] = []
    for i, t in enumerate(calendar):
        if t > eval_end:
            break
        record = engine.run_contest_day(i, t, eval_idx)
        if t >= eval_start:
            records.append(record)
    if not records:
        raise ConfigurationError("evaluation window contains no trading days")
    return records


# -- ledger post-processing ---------------------------------------------


def contest_ic_pairs(record_dicts: list[dict], horizon: int, side: str):
    """Aligned (predicted, realized) cross-sections per rebalance day.

    Works on serialized ledger records. Predictions made on record k are
    compared to the mean resolved score over the following ``horizon``
    days; scores resolve with a one-day lag, so those live in records
    k+2 .. k+horizon+1.
    """
    util_key = "data_utilities" if side == "data" else "research_utilities"
    predicted_days: list[list[float]] = []
    realized_days: list[list[float]] = []
    for k, record in enumerate(record_dicts):
        utilities = record.get(util_key) or {}
        if not utilities:
            continue
        if k + horizon + 1 >= len(record_dicts):
            continue
        realized: dict[str, list[float]] = {}
        for j in range(2, horizon + 2):
            future = record_dicts[k + j]
            if side == "data":
                day_scores = future.get("factor_scores") or {}
            else:
                day_scores = {a: v["sharpe"]
                              for a, v in (future.get("researcher_scores") or {}).items()
                              if "sharpe" in v}
            for agent_id, q in day_scores.items():
                realized.setdefault(agent_id, []).append(float(q))
        agents = sorted(set(utilities) & set(realized))
        if len(agents) < 2:
            continue
        predicted_days.append([float(utilities[a]) for a in agents])
        realized_days.append([float(np.mean(realized[a])) for a in agents])
    return predicted_days, realized_days
