"""Named experiments over the simulation engine.

Each takes a parsed SimConfig, enforces the mode it is meaningful in, runs
the engine(s), and returns the report(s) plus the engine(s) so callers can
write chain and event artifacts. Nothing here asserts outcomes — that is
the test suite's job — but expected values and standard errors are
included so a report is interpretable on its own.
"""

from __future__ import annotations

import math

from .config import SimConfig
from .engine import Engine
from .report import SimReport


class ModeMismatch(Exception):
    """The config's chain mode contradicts the experiment's premise."""


def _require_mode(config: SimConfig, mode: str, experiment: str) -> None:
    if config.params.mode != mode:
        raise ModeMismatch(
            f"{experiment} requires mode {mode!r}, config says {config.params.mode!r}"
        )


def _per_pass_block_probability(config: SimConfig) -> float:
    return (config.params.difficulty + 1) / 2.0**256


def run_fairness(config: SimConfig) -> tuple[SimReport, Engine]:
    """Honest miners only: block share should track eval share."""
    _require_mode(config, "decoupled", "fairness")
    engine = Engine(config).run()
    report = engine.report("fairness")
    height = report.chain_height
    checks = []
    for row in report.miners:
        expected = row["eval_share"]
        sigma = (
            math.sqrt(expected * (1.0 - expected) / height) if height else 0.0
        )
        checks.append(
            {
                "miner": row["miner"],
                "expected_share": expected,
                "observed_share": row["block_share"],
                "deviation": row["block_share"] - expected,
                "sigma": sigma,
                "within_3_sigma": abs(row["block_share"] - expected) <= 3 * sigma,
            }
        )
    report.extras["share_checks"] = checks
    report.extras["per_pass_block_probability"] = _per_pass_block_probability(config)
    return report, engine


def _naive_expected_share(config: SimConfig, attacker_key: bytes) -> dict:
    """Arithmetic prediction of the naive-coupled attacker block share.

    In naive-coupled mode a pass wins a block if it meets the difficulty
    OR solves any subset problem. The attacker stuffs its own width-w
    problem into every pass, so its per-pass win rate is
    1 - (1 - 2^-w)(1 - p_diff), while honest passes (mining fillers only)
    win at p_diff.
    """
    p_diff = _per_pass_block_probability(config)
    own = [u.problem for u in config.uploads if u.problem.uploader == attacker_key]
    width = min(p.window.width for p in own) if own else None
    p_att = (
        1.0 - (1.0 - 2.0**-width) * (1.0 - p_diff) if width is not None else p_diff
    )
    rate_att = sum(m.eval_rate for m in config.miners if m.key == attacker_key)
    rate_honest = sum(m.eval_rate for m in config.miners if m.key != attacker_key)
    weight = rate_att * p_att + rate_honest * p_diff
    return {
        "self_problem_width": width,
        "attacker_pass_win_rate": p_att,
        "honest_pass_win_rate": p_diff,
        "expected_attacker_share": rate_att * p_att / weight if weight else 0.0,
    }


def run_naive_attack(
    config: SimConfig,
) -> tuple[SimReport, Engine, SimReport, Engine]:
    """Objective-stuffing attack: naive-coupled run plus a decoupled twin.

    The config must declare mode "naive-coupled" and exactly one
    naive-objective miner. The same config (same seed) is re-run in
    decoupled mode to show the coupling is what the attacker exploits.
    Returns (naive report, naive engine, decoupled report, decoupled engine).
    """
    _require_mode(config, "naive-coupled", "naive-attack")
    attackers = [m for m in config.miners if m.strategy == "naive-objective"]
    if len(attackers) != 1:
        raise ModeMismatch("naive-attack needs exactly one naive-objective miner")
    attacker = attackers[0]

    naive_engine = Engine(config).run()
    report = naive_engine.report("naive-attack")

    decoupled_engine = Engine(config.with_mode("decoupled")).run()
    decoupled = decoupled_engine.report("naive-attack-decoupled")

    def share_of(rep: SimReport) -> dict:
        row = next(r for r in rep.miners if r["miner"] == attacker.name)
        return {
            "block_share": row["block_share"],
            "blocks": row["blocks"],
            "chain_height": rep.chain_height,
            "eval_share": row["eval_share"],
        }

    prediction = _naive_expected_share(config, attacker.key)
    report.extras["attacker"] = attacker.name
    report.extras["prediction"] = prediction
    report.extras["naive"] = share_of(report)
    report.extras["decoupled"] = share_of(decoupled)
    decoupled.extras["attacker"] = attacker.name
    decoupled.extras["prediction"] = prediction
    return report, naive_engine, decoupled, decoupled_engine


def run_fee_market(config: SimConfig) -> tuple[SimReport, Engine]:
    """Prize-ordered service: which problems get solved, and how fast."""
    _require_mode(config, "decoupled", "fee-market")
    engine = Engine(config).run()
    report = engine.report("fee-market")
    table = sorted(
        report.extras["problems"],
        key=lambda row: (-row["prize"], row["problem"]),
    )
    report.extras["by_prize"] = [
        {
            "problem": row["problem"],
            "prize": row["prize"],
            "solved": row["first_solve"] is not None,
            "solve_round": (row["first_solve"] or {}).get("round"),
            "passes_to_solve": (row["first_solve"] or {}).get("passes"),
            "claim_height": row.get("claim_height"),
        }
        for row in table
    ]
    return report, engine
