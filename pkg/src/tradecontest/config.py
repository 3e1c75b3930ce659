"""Run configuration: YAML file schema, validation, and round-tripping.

One file describes a full run: data source, train/test period, agent
roster, contest parameters, and backtest rules. Everything random in a
run derives from the single root seed, so rerunning a config reproduces
outputs byte for byte and ablation variants stay paired.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import yaml

from .agents import (
    ExternalDataAgent,
    ExternalResearchAgent,
    SyntheticAgentSpec,
    SyntheticDataAgent,
    SyntheticResearchAgent,
)
from .backtest import DEFAULT_FEE, DEFAULT_LIMIT_PCT, BacktestRules
from .engine import ContestConfig
from .errors import ConfigurationError
from .market import MarketStore, PlantedEffect, SyntheticSpec, generate_synthetic, ingest_csv
from .prediction import PredictorSpec
from .seeding import child_seed

DEFAULT_DATA_AGENTS = 16
DEFAULT_RESEARCH_AGENTS = 8


def _date(value, where: str) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigurationError(f"{where}: bad date {value!r}") from None


@dataclass(frozen=True)
class DataSection:
    kind: str = "synthetic"  # synthetic | csv
    csv_path: str | None = None
    n_symbols: int = 10
    n_days: int = 250
    daily_vol: float = 0.02
    limit_pct: float = 0.10
    start: dt.date = dt.date(2024, 1, 2)
    start_price: float = 100.0
    planted: tuple[PlantedEffect, ...] = ()

    def validate(self):
        if self.kind not in ("synthetic", "csv"):
            raise ConfigurationError(f"data.kind: must be synthetic or csv, got {self.kind!r}")
        if self.kind == "csv" and not self.csv_path:
            raise ConfigurationError("data.csv_path: required when data.kind is csv")


@dataclass(frozen=True)
class PeriodSection:
    train_start: dt.date | None = None
    train_end: dt.date | None = None
    test_start: dt.date | None = None
    test_end: dt.date | None = None

    def validate(self):
        if self.test_start is not None and self.train_end is not None:
            if self.test_start <= self.train_end:
                raise ConfigurationError(
                    f"period: train/test overlap (train_end {self.train_end} >= "
                    f"test_start {self.test_start})"
                )
        if self.train_start is not None and self.train_end is not None:
            if self.train_end < self.train_start:
                raise ConfigurationError("period: train_end before train_start")
        if self.test_start is not None and self.test_end is not None:
            if self.test_end < self.test_start:
                raise ConfigurationError("period: test_end before test_start")


@dataclass(frozen=True)
class AgentEntry:
    kind: str  # synthetic | external
    agent_id: str
    skill: float = 0.0
    obs_per_day: int = 3
    belief: str = "momentum"
    endpoint: str | None = None
    timeout: float = 60.0
    lookback: int = 30
    noise_seed: int | None = None

    def validate(self, where: str):
        if self.kind not in ("synthetic", "external"):
            raise ConfigurationError(f"{where}.kind: must be synthetic or external")
        if self.kind == "external" and not self.endpoint:
            raise ConfigurationError(f"{where}.endpoint: required for external agents")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/out"
    data: DataSection = field(default_factory=DataSection)
    period: PeriodSection = field(default_factory=PeriodSection)
    data_agents: tuple[AgentEntry, ...] = ()
    research_agents: tuple[AgentEntry, ...] = ()
    m: int = 5
    n_data: int = 3
    n_research: int = 5
    budget: int = 16_384
    predictor: str = "gbdt"
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    research_rebalance_daily: bool = False
    initial_cash: float = 1_000_000.0
    fee: float = DEFAULT_FEE
    limit_pct: float = DEFAULT_LIMIT_PCT
    ric_source: str = "panel"  # panel | ledger
    ric_panel_kind: str = "ar1"
    ric_phi: float = 0.6
    ric_agents: int = 16
    ric_days: int = 300
    ric_ledger: str | None = None
    ric_windows: tuple[int, int, int, int] = (5, 3, 60, 30)


def default_roster(seed: int) -> tuple[tuple[AgentEntry, ...], tuple[AgentEntry, ...]]:
    """16 data agents (4 stronger readers) and 8 mixed-belief researchers."""
    data = []
    for i in range(DEFAULT_DATA_AGENTS):
        skill = 0.8 if i < 4 else 0.0
        data.append(AgentEntry(kind="synthetic", agent_id=f"data{i:02d}", skill=skill))
    beliefs = ["momentum", "momentum", "momentum", "reversal", "reversal", "reversal",
               "random", "random"]
    research = [
        AgentEntry(kind="synthetic", agent_id=f"res{i:02d}", belief=beliefs[i])
        for i in range(DEFAULT_RESEARCH_AGENTS)
    ]
    return tuple(data), tuple(research)


def _agent_entry(raw: dict, where: str) -> AgentEntry:
    if "agent_id" not in raw:
        raise ConfigurationError(f"{where}.agent_id: required")
    entry = AgentEntry(
        kind=str(raw.get("kind", "synthetic")),
        agent_id=str(raw["agent_id"]),
        skill=float(raw.get("skill", 0.0)),
        obs_per_day=int(raw.get("obs_per_day", 3)),
        belief=str(raw.get("belief", "momentum")),
        endpoint=raw.get("endpoint"),
        timeout=float(raw.get("timeout", 60.0)),
        lookback=int(raw.get("lookback", 30)),
        noise_seed=None if raw.get("noise_seed") is None else int(raw["noise_seed"]),
    )
    entry.validate(where)
    return entry


def from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a mapping")
    data_raw = raw.get("data", {}) or {}
    planted = tuple(
        PlantedEffect(symbol=str(p["symbol"]), start_day=int(p.get("start_day", 0)),
                      drift=float(p["drift"]))
        for p in (data_raw.get("planted") or [])
    )
    data = DataSection(
        kind=str(data_raw.get("kind", "synthetic")),
        csv_path=data_raw.get("csv_path"),
        n_symbols=int(data_raw.get("n_symbols", 10)),
        n_days=int(data_raw.get("n_days", 250)),
        daily_vol=float(data_raw.get("daily_vol", 0.02)),
        limit_pct=float(data_raw.get("limit_pct", 0.10)),
        start=_date(data_raw.get("start", "2024-01-02"), "data.start"),
        start_price=float(data_raw.get("start_price", 100.0)),
        planted=planted,
    )
    data.validate()

    period_raw = raw.get("period", {}) or {}
    period = PeriodSection(
        train_start=None if period_raw.get("train_start") is None
        else _date(period_raw["train_start"], "period.train_start"),
        train_end=None if period_raw.get("train_end") is None
        else _date(period_raw["train_end"], "period.train_end"),
        test_start=None if period_raw.get("test_start") is None
        else _date(period_raw["test_start"], "period.test_start"),
        test_end=None if period_raw.get("test_end") is None
        else _date(period_raw["test_end"], "period.test_end"),
    )
    period.validate()

    seed = int(raw.get("seed", 0))
    agents_raw = raw.get("agents", {}) or {}
    if agents_raw.get("data") or agents_raw.get("research"):
        data_agents = tuple(
            _agent_entry(a, f"agents.data[{i}]") for i, a in enumerate(agents_raw.get("data") or [])
        )
        research_agents = tuple(
            _agent_entry(a, f"agents.research[{i}]")
            for i, a in enumerate(agents_raw.get("research") or [])
        )
    else:
        data_agents, research_agents = default_roster(seed)

    contest_raw = raw.get("contest", {}) or {}
    backtest_raw = raw.get("backtest", {}) or {}
    ric_raw = raw.get("validate_ric", {}) or {}
    panel_raw = ric_raw.get("panel", {}) or {}
    windows_raw = ric_raw.get("windows", {}) or {}

    predictor = str(contest_raw.get("predictor", "gbdt"))
    if predictor not in ("baseline", "gbdt"):
        raise ConfigurationError(f"contest.predictor: must be baseline or gbdt, got {predictor!r}")

    return RunConfig(
        seed=seed,
        output_dir=str(raw.get("output_dir", "runs/out")),
        data=data,
        period=period,
        data_agents=data_agents,
        research_agents=research_agents,
        m=int(contest_raw.get("m", 5)),
        n_data=int(contest_raw.get("n_data", 3)),
        n_research=int(contest_raw.get("n_research", 5)),
        budget=int(contest_raw.get("budget", 16_384)),
        predictor=predictor,
        n_trees=int(contest_raw.get("n_trees", 50)),
        max_depth=int(contest_raw.get("max_depth", 3)),
        learning_rate=float(contest_raw.get("learning_rate", 0.1)),
        research_rebalance_daily=bool(contest_raw.get("research_rebalance_daily", False)),
        initial_cash=float(backtest_raw.get("initial_cash", 1_000_000.0)),
        fee=float(backtest_raw.get("fee", DEFAULT_FEE)),
        limit_pct=float(backtest_raw.get("limit_pct", DEFAULT_LIMIT_PCT)),
        ric_source=str(ric_raw.get("source", "panel")),
        ric_panel_kind=str(panel_raw.get("kind", "ar1")),
        ric_phi=float(panel_raw.get("phi", 0.6)),
        ric_agents=int(panel_raw.get("agents", 16)),
        ric_days=int(panel_raw.get("days", 300)),
        ric_ledger=ric_raw.get("ledger"),
        ric_windows=(
            int(windows_raw.get("m", 5)), int(windows_raw.get("n", 3)),
            int(windows_raw.get("M", 60)), int(windows_raw.get("N", 30)),
        ),
    )


def to_dict(config: RunConfig) -> dict:
    return {
        "seed": config.seed,
        "output_dir": config.output_dir,
        "data": {
            "kind": config.data.kind,
            "csv_path": config.data.csv_path,
            "n_symbols": config.data.n_symbols,
            "n_days": config.data.n_days,
            "daily_vol": config.data.daily_vol,
            "limit_pct": config.data.limit_pct,
            "start": config.data.start.isoformat(),
            "start_price": config.data.start_price,
            "planted": [
                {"symbol": p.symbol, "start_day": p.start_day, "drift": p.drift}
                for p in config.data.planted
            ],
        },
        "period": {
            "train_start": None if config.period.train_start is None else config.period.train_start.isoformat(),
            "train_end": None if config.period.train_end is None else config.period.train_end.isoformat(),
            "test_start": None if config.period.test_start is None else config.period.test_start.isoformat(),
            "test_end": None if config.period.test_end is None else config.period.test_end.isoformat(),
        },
        "agents": {
            "data": [_entry_dict(a) for a in config.data_agents],
            "research": [_entry_dict(a) for a in config.research_agents],
        },
        "contest": {
            "m": config.m,
            "n_data": config.n_data,
            "n_research": config.n_research,
            "budget": config.budget,
            "predictor": config.predictor,
            "n_trees": config.n_trees,
            "max_depth": config.max_depth,
            "learning_rate": config.learning_rate,
            "research_rebalance_daily": config.research_rebalance_daily,
        },
        "backtest": {
            "initial_cash": config.initial_cash,
            "fee": config.fee,
            "limit_pct": config.limit_pct,
        },
        "validate_ric": {
            "source": config.ric_source,
            "panel": {
                "kind": config.ric_panel_kind,
                "phi": config.ric_phi,
                "agents": config.ric_agents,
                "days": config.ric_days,
            },
            "ledger": config.ric_ledger,
            "windows": {
                "m": config.ric_windows[0], "n": config.ric_windows[1],
                "M": config.ric_windows[2], "N": config.ric_windows[3],
            },
        },
    }


def _entry_dict(entry: AgentEntry) -> dict:
    out = {"kind": entry.kind, "agent_id": entry.agent_id}
    if entry.kind == "synthetic":
        out.update(skill=entry.skill, obs_per_day=entry.obs_per_day, belief=entry.belief)
        if entry.noise_seed is not None:
            out["noise_seed"] = entry.noise_seed
    else:
        out.update(endpoint=entry.endpoint, timeout=entry.timeout, lookback=entry.lookback)
    return out


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from None
    if raw is None:
        raw = {}
    return from_dict(raw)


def emit_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(config), fh, sort_keys=True)


def build_store(config: RunConfig) -> MarketStore:
    if config.data.kind == "csv":
        return ingest_csv(config.data.csv_path)
    try:
        spec = SyntheticSpec(
            n_symbols=config.data.n_symbols,
            n_days=config.data.n_days,
            seed=child_seed(config.seed, "market"),
            daily_vol=config.data.daily_vol,
            limit_pct=config.data.limit_pct,
            start=config.data.start,
            start_price=config.data.start_price,
            planted_effects=config.data.planted,
        )
        return generate_synthetic(spec)
    except ValueError as exc:
        raise ConfigurationError(f"data: {exc}") from exc


def build_agents(config: RunConfig):
    data_agents = []
    for entry in config.data_agents:
        if entry.kind == "external":
            data_agents.append(ExternalDataAgent(
                agent_id=entry.agent_id, endpoint=entry.endpoint,
                timeout=entry.timeout, lookback=entry.lookback))
        else:
            seed = entry.noise_seed if entry.noise_seed is not None \
                else child_seed(config.seed, "agent", entry.agent_id)
            data_agents.append(SyntheticDataAgent(SyntheticAgentSpec(
                agent_id=entry.agent_id, kind="data", noise_seed=seed,
                skill=entry.skill, obs_per_day=entry.obs_per_day)))
    research_agents = []
    for entry in config.research_agents:
        if entry.kind == "external":
            research_agents.append(ExternalResearchAgent(
                agent_id=entry.agent_id, endpoint=entry.endpoint,
                timeout=entry.timeout, lookback=entry.lookback))
        else:
            seed = entry.noise_seed if entry.noise_seed is not None \
                else child_seed(config.seed, "agent", entry.agent_id)
            research_agents.append(SyntheticResearchAgent(SyntheticAgentSpec(
                agent_id=entry.agent_id, kind="research", noise_seed=seed,
                belief_bias=entry.belief)))
    return data_agents, research_agents


def contest_config(config: RunConfig, store: MarketStore, **overrides) -> ContestConfig:
    train_window = None
    if config.period.train_start is not None and config.period.train_end is not None:
        train_window = sum(
            1 for d in store.calendar
            if config.period.train_start <= d <= config.period.train_end
        )
    params = dict(
        m=config.m,
        n_data=config.n_data,
        n_research=config.n_research,
        budget=config.budget,
        predictor=PredictorSpec(
            kind=config.predictor, n_trees=config.n_trees,
            max_depth=config.max_depth, learning_rate=config.learning_rate,
        ),
        seed=config.seed,
        research_rebalance_daily=config.research_rebalance_daily,
        train_window_days=train_window,
    )
    params.update(overrides)
    return ContestConfig(**params)


def backtest_rules(config: RunConfig) -> BacktestRules:
    return BacktestRules(fee=config.fee, limit_pct=config.limit_pct)
