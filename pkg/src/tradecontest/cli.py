"""Command-line driver: backtest, ablate, validate-ric, gen-data, report.

Exit codes: 0 success, 1 runtime/data failure, 2 invalid configuration.
The output directory comes from the config file, overridable by the
TRADECONTEST_OUTPUT_DIR environment variable and then by --output-dir.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .backtest import apply_day, compute_metrics, new_state
from .engine import contest_ic_pairs, run_full
from .errors import ConfigurationError, TradeContestError
from .market import write_csv
from .prediction import ar1_score_panel, validate_momentum
from .scoring import ScoreSeries
from .seeding import child_seed

ABLATION_VARIANTS = {
    "no_judger": {"no_judger": True},
    "no_research_contest": {"no_research_contest": True},
    "no_data_contest": {"no_data_contest": True},
    "no_deep_inputs": {"no_deep_inputs": True},
    "none_all": {"no_data_contest": True, "no_research_contest": True,
                 "no_deep_inputs": True},
}


def _resolve_output_dir(config, cli_override: str | None) -> Path:
    out = config.output_dir
    env = os.environ.get("TRADECONTEST_OUTPUT_DIR")
    if env:
        out = env
    if cli_override:
        out = cli_override
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_contest_backtest(config: cfgmod.RunConfig, **contest_overrides):
    """Run the contest and the backtest; returns (record_dicts, state, metrics)."""
    store = cfgmod.build_store(config)
    data_agents, research_agents = cfgmod.build_agents(config)
    ccfg = cfgmod.contest_config(config, store, **contest_overrides)
    records = run_full(
        ccfg, store, data_agents, research_agents,
        eval_start=config.period.test_start, eval_end=config.period.test_end,
    )
    state = new_state(config.initial_cash)
    rules = cfgmod.backtest_rules(config)
    for record in records:
        bars_t = {
            s: store.get_bar(s, record.date)
            for s in store.symbols if store.has_bar(s, record.date)
        }
        apply_day(state, record.target_weights, bars_t, record.date, rules)
    record_dicts = [r.to_dict() for r in records]
    metrics = _metrics_dict(config, ccfg.n_data, ccfg.n_research,
                            state.nav_history, record_dicts)
    return record_dicts, state, metrics


def _metrics_dict(config, n_data: int, n_research: int, nav_history, record_dicts) -> dict:
    data_pred, data_real = contest_ic_pairs(record_dicts, n_data, "data")
    res_pred, res_real = contest_ic_pairs(record_dicts, n_research, "research")
    base = compute_metrics(nav_history, data_pred, data_real)
    research = compute_metrics(nav_history, res_pred, res_real)
    return {
        "CR": base.cumulative_return,
        "SR": base.sharpe,
        "MDD": base.max_drawdown,
        "RankIC": base.mean_rank_ic,
        "ICIR": base.icir,
        "RankIC_research": research.mean_rank_ic,
        "ICIR_research": research.icir,
        "rank_ic_series": list(base.rank_ic_series),
        "rank_ic_series_research": list(research.rank_ic_series),
        "flags": sorted(set(base.flags) | set(research.flags)),
        "eval_start": nav_history[0][0].isoformat(),
        "eval_end": nav_history[-1][0].isoformat(),
        "n_days": len(nav_history),
        "final_nav": nav_history[-1][1],
        "seed": config.seed,
        "config": cfgmod.to_dict(config),
    }


def _write_run_outputs(out_dir: Path, record_dicts, state, metrics) -> None:
    with open(out_dir / "ledger.jsonl", "w") as fh:
        for rec in record_dicts:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(out_dir / "nav.csv", "w") as fh:
        fh.write("date,nav\n")
        for date, nav in state.nav_history:
            fh.write(f"{date.isoformat()},{nav!r}\n")
    with open(out_dir / "fills.csv", "w") as fh:
        fh.write("date,symbol,side,shares,price,value,cost\n")
        for f in state.fills:
            fh.write(f"{f.date.isoformat()},{f.symbol},{f.side},"
                     f"{f.shares!r},{f.price!r},{f.value!r},{f.cost!r}\n")
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_backtest(config_path: str, output_dir: str | None = None) -> int:
    config = cfgmod.load_config(config_path)
    out_dir = _resolve_output_dir(config, output_dir)
    record_dicts, state, metrics = run_contest_backtest(config)
    _write_run_outputs(out_dir, record_dicts, state, metrics)
    print(f"backtest complete: {metrics['n_days']} days, "
          f"CR {metrics['CR']:+.2%}, SR {metrics['SR']:.2f}, "
          f"MDD {metrics['MDD']:.2%} -> {out_dir}")
    return 0


def _ablation_row(name: str, metrics: dict) -> str:
    return (f"{name:<22} | {metrics['CR'] * 100:>8.2f} | {metrics['SR']:>6.2f} "
            f"| {metrics['MDD'] * 100:>7.2f}")


def cmd_ablate(config_path: str, variant: str, output_dir: str | None = None) -> int:
    if variant not in ABLATION_VARIANTS:
        raise ConfigurationError(
            f"unknown ablation variant {variant!r}; pick from {sorted(ABLATION_VARIANTS)}"
        )
    config = cfgmod.load_config(config_path)
    out_dir = _resolve_output_dir(config, output_dir)
    _, _, full_metrics = run_contest_backtest(config)
    _, _, variant_metrics = run_contest_backtest(config, **ABLATION_VARIANTS[variant])
    table = "\n".join([
        f"{'Configuration':<22} |   CR (%) |     SR | MDD (%)",
        _ablation_row("full", full_metrics),
        _ablation_row(f"w/o {variant}", variant_metrics),
    ])
    payload = {
        "variant": variant,
        "full": full_metrics,
        "ablated": variant_metrics,
        "delta_CR": variant_metrics["CR"] - full_metrics["CR"],
        "delta_SR": variant_metrics["SR"] - full_metrics["SR"],
    }
    with open(out_dir / f"ablation_{variant}.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out_dir / f"ablation_{variant}.txt", "w") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def _panel_from_ledger(path: str) -> list[ScoreSeries]:
    series: dict[str, ScoreSeries] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            day = dt.date.fromisoformat(rec["date"])
            for agent_id, score in rec.get("factor_scores", {}).items():
                series.setdefault(agent_id, ScoreSeries(agent_id)).append(day, float(score))
    return [series[a] for a in sorted(series)]


def cmd_validate_ric(config_path: str, output_dir: str | None = None) -> int:
    config = cfgmod.load_config(config_path)
    out_dir = _resolve_output_dir(config, output_dir)
    m, n, M, N = config.ric_windows
    if config.ric_source == "ledger":
        if not config.ric_ledger:
            raise ConfigurationError("validate_ric.ledger: path required when source is ledger")
        panel = _panel_from_ledger(config.ric_ledger)
    else:
        phi = config.ric_phi if config.ric_panel_kind == "ar1" else 0.0
        panel = ar1_score_panel(config.ric_agents, config.ric_days, phi,
                                seed=child_seed(config.seed, "ric-panel"))
    report = validate_momentum(panel, m, n, M, N)
    payload = {
        "m": report.m, "n": report.n, "M": report.M, "N": report.N,
        "ric_short": report.ric_short, "ric_long": report.ric_long,
        "difference": report.difference,
        "days_short": report.days_short, "days_long": report.days_long,
        "skipped_undefined": report.skipped_undefined,
        "seed": config.seed,
    }
    with open(out_dir / "ric_report.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"rank IC (m={m}, n={n}): {report.ric_short:+.4f}   "
          f"(M={M}, N={N}): {report.ric_long:+.4f}   "
          f"difference: {report.difference:+.4f}")
    return 0


def cmd_gen_data(config_path: str, out_file: str) -> int:
    config = cfgmod.load_config(config_path)
    if config.data.kind != "synthetic":
        raise ConfigurationError("gen-data requires data.kind = synthetic")
    store = cfgmod.build_store(config)
    write_csv(store, out_file)
    print(f"wrote {len(store.calendar)} days x {len(store.symbols)} symbols to {out_file}")
    return 0


def cmd_report(run_dir: str) -> int:
    run = Path(run_dir)
    ledger_path = run / "ledger.jsonl"
    nav_path = run / "nav.csv"
    if not ledger_path.exists() or not nav_path.exists():
        raise TradeContestError(f"{run_dir} does not contain ledger.jsonl and nav.csv")
    record_dicts = []
    with open(ledger_path) as fh:
        for line in fh:
            if line.strip():
                record_dicts.append(json.loads(line))
    nav_history = []
    with open(nav_path) as fh:
        next(fh)
        for line in fh:
            date_str, nav_str = line.strip().split(",")
            nav_history.append((dt.date.fromisoformat(date_str), float(nav_str)))
    n_data, n_research = 3, 5
    metrics_path = run / "metrics.json"
    config_dict = None
    if metrics_path.exists():
        with open(metrics_path) as fh:
            old = json.load(fh)
        config_dict = old.get("config")
        contest = (config_dict or {}).get("contest", {})
        n_data = int(contest.get("n_data", n_data))
        n_research = int(contest.get("n_research", n_research))
    data_pred, data_real = contest_ic_pairs(record_dicts, n_data, "data")
    res_pred, res_real = contest_ic_pairs(record_dicts, n_research, "research")
    base = compute_metrics(nav_history, data_pred, data_real)
    research = compute_metrics(nav_history, res_pred, res_real)
    print(json.dumps({
        "CR": base.cumulative_return, "SR": base.sharpe, "MDD": base.max_drawdown,
        "RankIC": base.mean_rank_ic, "ICIR": base.icir,
        "RankIC_research": research.mean_rank_ic, "ICIR_research": research.icir,
        "n_days": len(nav_history),
    }, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tradecontest",
        description="Deterministic multi-agent trading contest engine and backtester",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_back = sub.add_parser("backtest", help="run the contest and backtest a config")
    p_back.add_argument("config")
    p_back.add_argument("--output-dir")

    p_abl = sub.add_parser("ablate", help="run a config with one mechanism removed")
    p_abl.add_argument("config")
    p_abl.add_argument("--variant", required=True)
    p_abl.add_argument("--output-dir")

    p_ric = sub.add_parser("validate-ric", help="short- vs long-window score momentum check")
    p_ric.add_argument("config")
    p_ric.add_argument("--output-dir")

    p_gen = sub.add_parser("gen-data", help="write the synthetic market to CSV")
    p_gen.add_argument("config")
    p_gen.add_argument("--out", required=True)

    p_rep = sub.add_parser("report", help="re-render metrics from a run directory")
    p_rep.add_argument("run_dir")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "backtest":
            return cmd_backtest(args.config, args.output_dir)
        if args.command == "ablate":
            return cmd_ablate(args.config, args.variant, args.output_dir)
        if args.command == "validate-ric":
            return cmd_validate_ric(args.config, args.output_dir)
        if args.command == "gen-data":
            return cmd_gen_data(args.config, args.out)
        if args.command == "report":
            return cmd_report(args.run_dir)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TradeContestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
