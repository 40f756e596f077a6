"""Deterministic multi-miner simulation and attack experiments."""

from .config import (
    ConfigError,
    DoubleSpendConfig,
    MinerSpec,
    ScheduledUpload,
    SimConfig,
    key_for,
    load_json,
    parse_chain_params,
    parse_doublespend_config,
    parse_sim_config,
)
from .doublespend import DoubleSpendOutcome, oracle_success_probability, run_double_spend
from .engine import Engine, smooth_wrr
from .experiments import (
    ModeMismatch,
    run_fairness,
    run_fee_market,
    run_naive_attack,
)
from .report import (
    SimReport,
    render_events_jsonl,
    render_report_json,
    render_summary_csv,
    write_artifacts,
)

__all__ = [
    "ConfigError",
    "DoubleSpendConfig",
    "DoubleSpendOutcome",
    "Engine",
    "MinerSpec",
    "ModeMismatch",
    "ScheduledUpload",
    "SimConfig",
    "SimReport",
    "key_for",
    "load_json",
    "oracle_success_probability",
    "parse_chain_params",
    "parse_doublespend_config",
    "parse_sim_config",
    "render_events_jsonl",
    "render_report_json",
    "render_summary_csv",
    "run_double_spend",
    "run_fairness",
    "run_fee_market",
    "run_naive_attack",
    "smooth_wrr",
    "write_artifacts",
]
