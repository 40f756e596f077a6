"""Simulation reports and deterministic artifact writers.

A run produces up to four files in the output directory: report.json
(summary + experiment extras), summary.csv (per-miner table), events.jsonl
(one timeline event per line), and chain.jsonl (the final main chain,
replayable with the storage module). Identical configs must produce
byte-identical files, so writers sort keys and never embed timestamps.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .. import storage
from ..ledger import Chain

CSV_COLUMNS = [
    "miner",
    "strategy",
    "eval_rate",
    "eval_share",
    "eval_executions",
    "blocks",
    "block_share",
    "orphaned",
    "solutions_claimed",
    "prizes_earned",
]


@dataclass
class SimReport:
    experiment: str
    seed: int
    rounds: int
    mode: str
    chain_height: int
    state_hash: str
    miners: list[dict]  # one row per miner, CSV_COLUMNS keys
    efficiency: dict
    forks: int
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "rounds": self.rounds,
            "mode": self.mode,
            "chain_height": self.chain_height,
            "state_hash": self.state_hash,
            "miners": self.miners,
            "efficiency": self.efficiency,
            "forks": self.forks,
            "extras": self.extras,
        }


def render_report_json(report: SimReport) -> str:
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def render_summary_csv(report: SimReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report.miners:
        writer.writerow({c: row.get(c, "") for c in CSV_COLUMNS})
    return buf.getvalue()


def render_events_jsonl(events: list[Mapping[str, Any]]) -> str:
    return "".join(
        json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in events
    )


def write_artifacts(
    outdir: str | Path,
    report: SimReport,
    events: list[Mapping[str, Any]] | None = None,
    chain: Chain | None = None,
    balances: Mapping[bytes, int] | None = None,
    aliases: Mapping[str, bytes] | None = None,
    force: bool = False,
    chain_name: str = "chain.jsonl",
) -> list[Path]:
    """Write all artifacts for a run; refuses to clobber without force."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    planned: list[tuple[Path, str]] = [
        (out / "report.json", render_report_json(report)),
        (out / "summary.csv", render_summary_csv(report)),
    ]
    if events is not None:
        planned.append((out / "events.jsonl", render_events_jsonl(events)))
    written: list[Path] = []
    chain_path = out / chain_name if chain is not None else None
    for path, _ in planned:
        if path.exists() and not force:
            raise FileExistsError(f"{path} exists (use force to overwrite)")
    if chain_path is not None and chain_path.exists() and not force:
        raise FileExistsError(f"{chain_path} exists (use force to overwrite)")
    for path, text in planned:
        path.write_text(text)
        written.append(path)
    if chain is not None and chain_path is not None:
        storage.write_chain(chain_path, chain, balances or {}, aliases or {})
        written.append(chain_path)
    return written
