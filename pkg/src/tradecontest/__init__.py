"""Deterministic multi-agent trading contest engine and daily backtester."""

from .agents import (
    AgentRequest,
    Observation,
    SyntheticAgentSpec,
    TextualFactor,
    TradingSignal,
    external_agent_call,
    synthetic_data_agent,
    synthetic_research_agent,
)
from .allocation import (
    CapitalWeights,
    ContextModel,
    FactorPortfolio,
    KnapsackItem,
    decision_capability,
    decision_value,
    knapsack_select,
    sharpe_weights,
)
from .backtest import (
    BacktestRules,
    MetricsReport,
    PortfolioState,
    apply_day,
    compute_metrics,
    new_state,
    signals_to_weights,
)
from .engine import ContestConfig, DailyRecord, run_full
from .market import (
    Bar,
    MarketStore,
    PlantedEffect,
    SyntheticSpec,
    generate_synthetic,
    ingest_csv,
    price_change,
    view_until,
)
from .prediction import (
    FeatureVector,
    PredictorModel,
    PredictorSpec,
    UtilityPrediction,
    extract_features,
    predict_utility,
    rank_ic,
    train,
    validate_momentum,
)
from .scoring import (
    HybridScore,
    JudgerScore,
    ScoreSeries,
    factor_score,
    researcher_score,
    stub_judger,
    zi_trade,
)

__version__ = "0.1.0"
