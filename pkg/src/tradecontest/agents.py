"""Agent boundary: output contracts, synthetic agents, external adapters.

Data agents emit a TextualFactor per day (observations with per-symbol
conviction ratings, length-capped). Research agents emit a TradingSignal.
Synthetic implementations are pure functions of (spec, day, view) so runs
replay bit-exactly; the external adapter speaks one-line JSON over a child
process's stdio or HTTP POST and enforces all contract invariants before
accepting a response.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import shlex
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import AgentUnavailableError, ProtocolError
from .market import MarketView
from .seeding import stream

TOKEN_CAP = 4096
RATING_SET = (-2, -1, 0, 1, 2)
ACTIONS = ("buy", "hold", "sell")
CASH_SYMBOL = "CASH"

MOMENTUM_WINDOW = 5


@dataclass(frozen=True)
class Observation:
    """One atomic statement grounded to rated instruments."""

    text: str
    rated_symbols: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        for sym, rating in self.rated_symbols:
            if rating not in RATING_SET:
                raise ValueError(f"rating out of range: {sym} rated {rating}")


@dataclass(frozen=True)
class TextualFactor:
    """One data agent's daily output; the unit of portfolio selection."""

    agent_id: str
    date: dt.date
    observations: tuple[Observation, ...]
    token_length: int

    def __post_init__(self):
        if self.token_length > TOKEN_CAP:
            raise ValueError(f"token cap exceeded: {self.token_length} > {TOKEN_CAP}")
        if self.observations and self.token_length < 1:
            raise ValueError("token_length must be >= 1 for a nonempty factor")
        if self.token_length < 0:
            raise ValueError("token_length must be >= 0")

    def mentioned_symbols(self) -> list[str]:
        return sorted({s for obs in self.observations for s, _ in obs.rated_symbols})


@dataclass(frozen=True)
class TradingSignal:
    """One research agent's daily output."""

    agent_id: str
    date: dt.date
    symbol: str
    action: str
    evidence: tuple[str, ...] = ()
    limitation: str = ""

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}, got {self.action!r}")
        if self.action in ("buy", "sell") and not self.evidence:
            raise ValueError(f"evidence required for a {self.action} signal")


@dataclass(frozen=True)
class SyntheticAgentSpec:
    """Parameters for a deterministic synthetic agent."""

    agent_id: str
    kind: str  # "data" or "research"
    noise_seed: int
    skill: float = 0.0
    obs_per_day: int = 3
    belief_bias: str = "momentum"  # momentum | reversal | random

    def __post_init__(self):
        if self.kind not in ("data", "research"):
            raise ValueError(f"kind must be data or research, got {self.kind!r}")
        if not (0.0 <= self.skill <= 1.0):
            raise ValueError("skill must be in [0, 1]")
        if self.obs_per_day < 0:
            raise ValueError("obs_per_day must be >= 0")
        if self.belief_bias not in ("momentum", "reversal", "random"):
            raise ValueError(f"unknown belief_bias {self.belief_bias!r}")


def token_count(texts) -> int:
    """Character-based token heuristic: ceil(total characters / 4)."""
    chars = sum(len(t) for t in texts)
    return math.ceil(chars / 4)


def _trailing_momentum(view: MarketView, symbols) -> dict[str, float]:
    """Mean daily return over the last MOMENTUM_WINDOW steps per symbol."""
    out = {}
    for sym in symbols:
        rets = view.trailing_returns(sym, MOMENTUM_WINDOW)
        if rets:
            out[sym] = sum(rets) / len(rets)
    return out


def synthetic_data_agent(spec: SyntheticAgentSpec, view: MarketView, t: dt.date) -> TextualFactor:
    """Deterministic stand-in for a data agent.

    Each observation is, with probability ``skill``, an informed read: the
    agent rates a strong-trend symbol in the direction of its own trailing
    momentum, which on a drifting market tracks the realized next-day move.
    Otherwise the observation is a random symbol with a random rating. The
    agent sees only the view (dates <= t) and a noise stream keyed by
    (noise_seed, t); it never reads ahead.
    """
    if spec.kind != "data":
        raise ValueError(f"{spec.agent_id} is not a data agent")
    rng = stream(spec.noise_seed, "data", t.isoformat())
    universe = list(view.symbols)
    momentum = _trailing_momentum(view, universe)
    ranked = sorted(momentum, key=lambda s: (-abs(momentum[s]), s))

    observations = []
    for k in range(spec.obs_per_day):
        informed = ranked and rng.random() < spec.skill
        if informed:
            sym = ranked[k % len(ranked)]
            m = momentum[sym]
            direction = 0 if m == 0 else (1 if m > 0 else -1)
            rating = direction * (2 if abs(m) > 0.01 else 1)
            text = (f"{sym} has averaged {m:+.4f} per session over the last "
                    f"{MOMENTUM_WINDOW} trading days; stance {rating:+d}.")
        elif universe:
            sym = universe[int(rng.integers(len(universe)))]
            rating = int(rng.integers(-2, 3))
            text = f"No conviction read on {sym} today; speculative stance {rating:+d}."
        else:
            continue
        observations.append(Observation(text=text, rated_symbols=((sym, rating),)))

    return TextualFactor(
        agent_id=spec.agent_id,
        date=t,
        observations=tuple(observations),
        token_length=token_count(o.text for o in observations),
    )


def _portfolio_sentiment(portfolio) -> dict[str, int]:
    """Net rating per symbol across all observations in a factor portfolio."""
    sentiment: dict[str, int] = {}
    for _, factor in portfolio.selected:
        if factor is None:
            continue
        for obs in factor.observations:
            for sym, rating in obs.rated_symbols:
                sentiment[sym] = sentiment.get(sym, 0) + rating
    return sentiment


def synthetic_research_agent(
    spec: SyntheticAgentSpec,
    portfolio_input,
    view: MarketView | None,
    t: dt.date,
) -> TradingSignal:
    """Deterministic stand-in for a research agent.

    Picks among the symbols mentioned in the factor portfolio: momentum
    buys the strongest trailing 5-day return, reversal the weakest, random
    draws from its noise stream. Without a market view (deep inputs cut
    off) momentum/reversal fall back to the portfolio's net sentiment.
    Emits hold when the portfolio mentions nothing.
    """
    if spec.kind != "research":
        raise ValueError(f"{spec.agent_id} is not a research agent")
    rng = stream(spec.noise_seed, "research", t.isoformat())
    sentiment = _portfolio_sentiment(portfolio_input) if portfolio_input is not None else {}
    mentioned = sorted(sentiment)
    if not mentioned:
        return TradingSignal(
            agent_id=spec.agent_id, date=t, symbol=CASH_SYMBOL, action="hold",
            limitation="factor portfolio mentions no instruments",
        )

    if spec.belief_bias == "random":
        sym = mentioned[int(rng.integers(len(mentioned)))]
        action = ACTIONS[int(rng.integers(len(ACTIONS)))]
        if action == "hold":
            return TradingSignal(
                agent_id=spec.agent_id, date=t, symbol=sym, action="hold",
                limitation="no edge identified; staying in cash",
            )
        return TradingSignal(
            agent_id=spec.agent_id, date=t, symbol=sym, action=action,
            evidence=(f"speculative {action} of {sym}",),
            limitation="randomized belief; evidence is not data-backed",
        )

    if view is not None:
        score = {s: m for s, m in _trailing_momentum(view, mentioned).items()}
        basis = f"trailing {MOMENTUM_WINDOW}-day mean return"
    else:
        score = {s: float(sentiment[s]) for s in mentioned}
        basis = "net factor-portfolio sentiment"
    if not score:
        return TradingSignal(
            agent_id=spec.agent_id, date=t, symbol=CASH_SYMBOL, action="hold",
            limitation="no usable history for mentioned instruments",
        )
    target = max(score.values()) if spec.belief_bias == "momentum" else min(score.values())
    best = min(s for s in score if score[s] == target)  # lexicographic tie-break
    return TradingSignal(
        agent_id=spec.agent_id, date=t, symbol=best, action="buy",
        evidence=(
            f"{best} ranks {'highest' if spec.belief_bias == 'momentum' else 'lowest'} "
            f"on {basis} ({score[best]:+.4f}) among {len(mentioned)} mentioned instruments",
            f"belief bias: {spec.belief_bias}",
        ),
        limitation="synthetic belief agent; uses price history only",
    )


# --- external JSON-line protocol ------------------------------------------


@dataclass(frozen=True)
class AgentRequest:
    """One request to an external agent; serializes to a single JSON line."""

    kind: str  # "data" | "research"
    date: dt.date
    agent_id: str
    universe: tuple[str, ...]
    bars: tuple[dict, ...] = ()
    factor_portfolio: str | None = None

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "date": self.date.isoformat(),
            "agent_id": self.agent_id,
            "universe": list(self.universe),
            "bars": list(self.bars),
            "factor_portfolio": self.factor_portfolio,
        }
        return json.dumps(payload, sort_keys=True)


def build_request(kind: str, agent_id: str, view: MarketView, t: dt.date,
                  portfolio_text: str | None = None, lookback: int = 30) -> AgentRequest:
    """Request payload using only data visible through the view."""
    days = view.calendar[-lookback:]
    bars = []
    for day in days:
        for sym in view.symbols:
            if view.has_bar(sym, day):
                b = view.get_bar(sym, day)
                bars.append({
                    "date": b.date.isoformat(), "symbol": b.symbol,
                    "open": b.open, "high": b.high, "low": b.low,
                    "close": b.close, "volume": b.volume,
                })
    return AgentRequest(kind=kind, date=t, agent_id=agent_id,
                        universe=view.symbols, bars=tuple(bars),
                        factor_portfolio=portfolio_text)


def _require(payload: dict, key: str):
    if key not in payload:
        raise ProtocolError(f"missing field {key!r} in agent response")
    return payload[key]


def parse_factor_response(payload: dict) -> TextualFactor:
    observations = []
    for i, obs in enumerate(_require(payload, "observations")):
        rated = []
        for pair in obs.get("rated_symbols", []):
            if isinstance(pair, dict):
                sym, rating = pair.get("symbol"), pair.get("rating")
            else:
                if len(pair) != 2:
                    raise ProtocolError(f"observation {i}: rated_symbols entries must be pairs")
                sym, rating = pair
            if not isinstance(rating, int) or rating not in RATING_SET:
                raise ProtocolError(f"rating out of range: {sym} rated {rating}")
            rated.append((str(sym), rating))
        observations.append(Observation(text=str(obs.get("text", "")), rated_symbols=tuple(rated)))
    token_length = _require(payload, "token_length")
    if not isinstance(token_length, int) or token_length < 0:
        raise ProtocolError(f"token_length must be a non-negative integer, got {token_length!r}")
    if token_length > TOKEN_CAP:
        raise ProtocolError(f"token cap exceeded: {token_length} > {TOKEN_CAP}")
    try:
        return TextualFactor(
            agent_id=str(_require(payload, "agent_id")),
            date=dt.date.fromisoformat(str(_require(payload, "date"))),
            observations=tuple(observations),
            token_length=token_length,
        )
    except ValueError as exc:
        raise ProtocolError(str(exc)) from exc


def parse_signal_response(payload: dict) -> TradingSignal:
    action = _require(payload, "action")
    if action not in ACTIONS:
        raise ProtocolError(f"action must be one of {ACTIONS}, got {action!r}")
    evidence = tuple(str(e) for e in payload.get("evidence", []))
    try:
        return TradingSignal(
            agent_id=str(_require(payload, "agent_id")),
            date=dt.date.fromisoformat(str(_require(payload, "date"))),
            symbol=str(_require(payload, "symbol")),
            action=action,
            evidence=evidence,
            limitation=str(payload.get("limitation", "")),
        )
    except ValueError as exc:
        raise ProtocolError(str(exc)) from exc


def _call_subprocess(command: str, line: str, timeout: float) -> str:
    try:
        proc = subprocess.run(
            shlex.split(command), input=line.encode(), capture_output=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        raise AgentUnavailableError(f"agent process timed out after {timeout}s") from exc
    except OSError as exc:
        raise AgentUnavailableError(f"agent process failed to start: {exc}") from exc
    if proc.returncode != 0:
        raise AgentUnavailableError(
            f"agent process exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:200]}"
        )
    out = proc.stdout.decode(errors="replace").strip()
    if not out:
        raise AgentUnavailableError("agent process produced no response line")
    return out.splitlines()[0]


def _call_http(url: str, line: str, timeout: float) -> str:
    req = urllib.request.Request(
        url, data=line.encode(), headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read().decode(errors="replace").strip()
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise AgentUnavailableError(f"agent endpoint unreachable: {exc}") from exc
    if not body:
        raise AgentUnavailableError("agent endpoint returned an empty body")
    return body.splitlines()[0]


def external_agent_call(endpoint: str, request: AgentRequest, timeout: float = 60.0):
    """Send one request line, read one response line, validate, return.

    ``endpoint`` is either an http(s) URL (POST) or a command line to run
    as a child process reading stdin and writing stdout.
    """
    line = request.to_json() + "\n"
    if endpoint.startswith(("http://", "https://")):
        raw = _call_http(endpoint, line, timeout)
    else:
        raw = _call_subprocess(endpoint, line, timeout)
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON from agent: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProtocolError("agent response must be a JSON object")
    if request.kind == "data":
        return parse_factor_response(payload)
    return parse_signal_response(payload)


# --- engine-facing wrappers -------------------------------------------------


class SyntheticDataAgent:
    def __init__(self, spec: SyntheticAgentSpec):
        self.spec = spec
        self.agent_id = spec.agent_id

    def produce(self, view: MarketView, t: dt.date) -> TextualFactor:
        return synthetic_data_agent(self.spec, view, t)


class SyntheticResearchAgent:
    def __init__(self, spec: SyntheticAgentSpec):
        self.spec = spec
        self.agent_id = spec.agent_id

    def produce(self, portfolio, view: MarketView | None, t: dt.date) -> TradingSignal:
        return synthetic_research_agent(self.spec, portfolio, view, t)


@dataclass
class ExternalDataAgent:
    agent_id: str
    endpoint: str
    timeout: float = 60.0
    lookback: int = 30

    def produce(self, view: MarketView, t: dt.date) -> TextualFactor:
        req = build_request("data", self.agent_id, view, t, lookback=self.lookback)
        factor = external_agent_call(self.endpoint, req, timeout=self.timeout)
        if not isinstance(factor, TextualFactor):
            raise ProtocolError("data agent returned a trading signal")
        return factor


@dataclass
class ExternalResearchAgent:
    agent_id: str
    endpoint: str
    timeout: float = 60.0
    lookback: int = 30

    def produce(self, portfolio, view: MarketView | None, t: dt.date) -> TradingSignal:
        text = render_portfolio_text(portfolio)
        if view is not None:
            req = build_request("research", self.agent_id, view, t,
                                portfolio_text=text, lookback=self.lookback)
        else:
            req = AgentRequest(kind="research", date=t, agent_id=self.agent_id,
                               universe=(), bars=(), factor_portfolio=text)
        signal = external_agent_call(self.endpoint, req, timeout=self.timeout)
        if not isinstance(signal, TradingSignal):
            raise ProtocolError("research agent returned a textual factor")
        return signal


def render_portfolio_text(portfolio) -> str:
    """Flatten the active factor portfolio into the text block fed to
    research agents."""
    if portfolio is None:
        return ""
    lines = []
    for agent_id, factor in portfolio.selected:
        if factor is None:
            continue
        for obs in factor.observations:
            tags = " ".join(f"[{s}:{r:+d}]" for s, r in obs.rated_symbols)
            lines.append(f"{agent_id}: {obs.text} {tags}".rstrip())
    return "\n".join(lines)
