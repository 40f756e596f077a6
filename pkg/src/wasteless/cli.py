"""Command-line interface.

Three command families: `sim` runs a named experiment from a JSON config
into an output directory of deterministic artifacts; `chain` manipulates a
local JSONL chain file (init/mine/upload/claim/validate/show) with a
side-car pending-transaction pool; `bench` compares the pipeline backends.

Success output is JSON on stdout. Failures print one JSON object on
stderr — {"error": {"kind": ..., "detail": ...}} — and exit 2 for
configuration or usage problems, 1 for everything else. Existing files are
never overwritten without --force.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from . import storage
from .bench import run_benchmark
from .hashing import BitWindow, sha256
from .ledger import (
    Block,
    BlockInvalid,
    ProblemUpload,
    SolutionClaim,
    TxInvalid,
    refresh_active,
    state_hash,
    tx_hash,
    tx_root_of,
)
from .objectives import (
    Problem,
    ProblemRejected,
    SelectionPolicy,
    select_subset,
    validate_problem,
)
from .pipeline import backend_name
from .protocol import (
    BlockEvent,
    CounterSeedSource,
    HeaderDraft,
    MiningStopped,
    SolveEvent,
    mine,
    subset_root,
)
from .simulator import (
    ConfigError,
    ModeMismatch,
    key_for,
    run_double_spend,
    run_fairness,
    run_fee_market,
    run_naive_attack,
    write_artifacts,
)
from .simulator.config import (
    load_json,
    parse_doublespend_config,
    parse_sim_config,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class CliError(Exception):
    def __init__(self, kind: str, detail: str, code: int = EXIT_RUNTIME, **extra: Any):
        self.kind = kind
        self.detail = detail
        self.code = code
        self.extra = extra
        super().__init__(f"{kind}: {detail}")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as error JSON, like the rest."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError("UsageError", message, code=EXIT_CONFIG)


def _emit(doc: Any) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2))


def _account_key(value: str) -> bytes:
    """Accept an account name or a 64-char hex key."""
    if len(value) == 64:
        try:
            return bytes.fromhex(value)
        except ValueError:
            pass
    return key_for(value)


# -- sim ------------------------------------------------------------------


def _cmd_sim(args: argparse.Namespace) -> int:
    doc = load_json(args.config)
    out = Path(args.out)
    if args.experiment == "doublespend":
        cfg = parse_doublespend_config(doc)
        if args.seed is not None:
            cfg = type(cfg)(
                seed=args.seed,
                attacker_share=cfg.attacker_share,
                confirmations=cfg.confirmations,
                trials=cfg.trials,
                cap_factor=cfg.cap_factor,
            )
        outcome = run_double_spend(
            cfg.attacker_share,
            cfg.confirmations,
            cfg.trials,
            seed=cfg.seed,
            cap_factor=cfg.cap_factor,
        )
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        if path.exists() and not args.force:
            raise CliError("OutputExists", f"{path} exists (use --force)")
        path.write_text(
            json.dumps(
                {"experiment": "doublespend", **outcome.to_json_dict()},
                sort_keys=True,
                indent=2,
            )
            + "\n"
        )
        _emit(
            {
                "experiment": "doublespend",
                "observed": outcome.observed,
                "oracle": outcome.oracle,
                "written": [str(path)],
            }
        )
        return EXIT_OK

    cfg = parse_sim_config(doc)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    if args.experiment == "fairness":
        report, engine = run_fairness(cfg)
        written = write_artifacts(
            out,
            report,
            events=engine.events,
            chain=engine.chain,
            balances=cfg.balances,
            aliases=cfg.aliases,
            force=args.force,
        )
    elif args.experiment == "fee-market":
        report, engine = run_fee_market(cfg)
        written = write_artifacts(
            out,
            report,
            events=engine.events,
            chain=engine.chain,
            balances=cfg.balances,
            aliases=cfg.aliases,
            force=args.force,
        )
    elif args.experiment == "naive-attack":
        report, engine, dec_report, dec_engine = run_naive_attack(cfg)
        written = write_artifacts(
            out,
            report,
            events=engine.events,
            chain=engine.chain,
            balances=cfg.balances,
            aliases=cfg.aliases,
            force=args.force,
            chain_name="chain_naive.jsonl",
        )
        dec_dir = out / "decoupled"
        written += write_artifacts(
            dec_dir,
            dec_report,
            events=dec_engine.events,
            chain=dec_engine.chain,
            balances=cfg.balances,
            aliases=cfg.aliases,
            force=args.force,
            chain_name="chain_decoupled.jsonl",
        )
    else:  # pragma: no cover - argparse restricts choices
        raise CliError("UsageError", f"unknown experiment {args.experiment}", EXIT_CONFIG)
    _emit(
        {
            "experiment": args.experiment,
            "chain_height": report.chain_height,
            "state_hash": report.state_hash,
            "written": [str(p) for p in written],
        }
    )
    return EXIT_OK


# -- chain ----------------------------------------------------------------

_DEFAULT_GENESIS = {
    "difficulty": hex(1 << 244),
    "score_budget": 4,
    "block_reward": 50,
    "freshness_window": 100,
    "min_prize": 0,
    "mode": "decoupled",
    "balances": {},
}


def _pool_path(args: argparse.Namespace) -> Path:
    return Path(args.pool) if args.pool else Path(args.file + ".pool.jsonl")


def _load_pool(path: Path) -> list:
    if not path.exists():
        return []
    txs = []
    for i, line in enumerate(path.read_text().splitlines()):
        if not line.strip():
            continue
        try:
            txs.append(storage.tx_from_json(json.loads(line)))
        except (json.JSONDecodeError, storage.ChainFileError, KeyError) as exc:
            raise CliError("PoolCorrupt", f"line {i + 1}: {exc}")
    return txs


def _save_pool(path: Path, txs: list) -> None:
    text = "".join(
        json.dumps(storage.tx_to_json(t), sort_keys=True, separators=(",", ":")) + "\n"
        for t in txs
    )
    path.write_text(text)


def _open_chain(args: argparse.Namespace):
    try:
        return storage.replay_chain(args.file)
    except storage.ChainFileError as exc:
        raise CliError("ChainInvalid", str(exc), height=exc.height) from None


def _cmd_chain_init(args: argparse.Namespace) -> int:
    path = Path(args.file)
    if path.exists() and not args.force:
        raise CliError("OutputExists", f"{path} exists (use --force)")
    doc = dict(_DEFAULT_GENESIS)
    if args.config:
        loaded = load_json(args.config, "genesis config")
        if not isinstance(loaded, dict):
            raise CliError("ConfigInvalid", "genesis config must be an object", EXIT_CONFIG)
        doc.update(loaded)
    from .simulator.config import parse_chain_params

    params = parse_chain_params(
        {k: v for k, v in doc.items() if k != "balances"}, "genesis"
    )
    balances_doc = doc.get("balances", {})
    if not isinstance(balances_doc, dict):
        raise CliError("ConfigInvalid", "balances must be an object", EXIT_CONFIG)
    balances: dict[bytes, int] = {}
    aliases: dict[str, bytes] = {}
    for name, amount in balances_doc.items():
        if not isinstance(amount, int) or amount < 0:
            raise CliError("ConfigInvalid", f"balances.{name} must be >= 0", EXIT_CONFIG)
        key = _account_key(name)
        aliases[name] = key
        balances[key] = amount
    record = storage.genesis_record(params, balances, aliases)
    path.write_text(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    _emit({"initialized": str(path), "params": storage.params_to_json(params)})
    return EXIT_OK


def _cmd_chain_mine(args: argparse.Namespace) -> int:
    chain, _ = _open_chain(args)
    pool_path = _pool_path(args)
    pool = _load_pool(pool_path)
    miner_key = _account_key(args.miner)
    prefix = sha256(args.seed.to_bytes(8, "big") + miner_key)[:24]
    counter = 0
    mined = []
    for _ in range(args.blocks):
        state = chain.tip_state
        scratch = state.copy()
        txs = []
        for tx in pool:
            try:
                chain.apply_tx(tx, scratch, chain.tip_hash)
            except TxInvalid:
                continue
            txs.append(tx)
        pending = {t.problem_id for t in txs if isinstance(t, SolutionClaim)}
        active = refresh_active(state.uploaded, state.solved, pending)
        subset = select_subset(
            active,
            chain.params.score_budget,
            SelectionPolicy(min_prize=args.min_prize),
            chain.tip_hash,
        )
        header = HeaderDraft(
            prev=chain.tip_hash,
            height=state.height + 1,
            miner=miner_key,
            tx_root=tx_root_of(txs),
            s_root=subset_root(list(subset.ids)),
        )
        solves = []
        block = None
        try:
            for ev in mine(
                subset,
                header,
                chain.params.difficulty,
                CounterSeedSource(prefix, counter),
                max_attempts=args.max_attempts,
                coupled=chain.params.coupled,
            ):
                if isinstance(ev, SolveEvent):
                    solves.append(ev)
                elif isinstance(ev, BlockEvent):
                    counter += ev.attempt + 1
                    block = Block(
                        header, ev.seed, subset.ids, tuple(txs), ev.result
                    )
                    break
        except MiningStopped as exc:
            raise CliError(
                "MiningStopped",
                f"no block within {exc.attempts} attempts at height "
                f"{state.height + 1}",
            ) from None
        assert block is not None
        try:
            h = chain.add_block(block)
        except BlockInvalid as exc:  # engine bug guard; should not happen
            raise CliError("BlockRejected", str(exc)) from None
        storage.append_block(args.file, block)
        included = {tx_hash(t) for t in txs}
        pool = [t for t in pool if tx_hash(t) not in included]
        pending_claims = {
            t.problem_id for t in pool if isinstance(t, SolutionClaim)
        }
        claimed = set(chain.tip_state.solved)
        for ev in solves:
            problem = subset.problems[ev.stage]
            if problem.uploader == b"\x00" * 32:
                continue  # filler
            if ev.problem_id in pending_claims or ev.problem_id in claimed:
                continue
            pool.append(
                SolutionClaim(
                    problem_id=ev.problem_id,
                    snapshot=header,
                    subset_ids=subset.ids,
                    seed=ev.seed,
                    stage_index=ev.stage,
                    claimant=miner_key,
                    fee=args.claim_fee,
                )
            )
            pending_claims.add(ev.problem_id)
        mined.append(
            {
                "height": block.header.height,
                "block": h.hex(),
                "txs": len(txs),
                "solves": len(solves),
            }
        )
    _save_pool(pool_path, pool)
    _emit(
        {
            "mined": mined,
            "height": chain.height,
            "state_hash": state_hash(chain.tip_state).hex(),
            "pool": len(pool),
        }
    )
    return EXIT_OK


def _cmd_chain_upload(args: argparse.Namespace) -> int:
    chain, _ = _open_chain(args)
    doc = load_json(args.problem, "problem")
    try:
        problem = Problem(
            reps=doc["reps"],
            window=BitWindow(doc["window"][0], doc["window"][1]),
            target=doc["target"],
            prize=doc["prize"],
            uploader=_account_key(doc["uploader"]),
        )
        fee = doc.get("fee", 0)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("ConfigInvalid", f"bad problem document: {exc}", EXIT_CONFIG)
    try:
        validate_problem(problem, chain.params.min_prize)
    except ProblemRejected as exc:
        raise CliError("ProblemRejected", str(exc), EXIT_CONFIG, reason=exc.reason)
    tx = ProblemUpload(problem, fee)
    scratch = chain.tip_state.copy()
    try:
        chain.apply_tx(tx, scratch, chain.tip_hash)
    except TxInvalid as exc:
        raise CliError("TxRejected", str(exc), reason=exc.reason)
    pool_path = _pool_path(args)
    pool = _load_pool(pool_path)
    pool.append(tx)
    _save_pool(pool_path, pool)
    _emit(
        {
            "queued": "problem_upload",
            "problem_id": problem.problem_id.hex(),
            "prize": problem.prize,
            "pool": len(pool),
        }
    )
    return EXIT_OK


def _cmd_chain_claim(args: argparse.Namespace) -> int:
    chain, _ = _open_chain(args)
    doc = load_json(args.claim, "claim")
    try:
        tx = storage.tx_from_json({**doc, "type": "solution_claim"})
    except (storage.ChainFileError, KeyError, TypeError) as exc:
        raise CliError("ConfigInvalid", f"bad claim document: {exc}", EXIT_CONFIG)
    scratch = chain.tip_state.copy()
    try:
        chain.apply_tx(tx, scratch, chain.tip_hash)
    except TxInvalid as exc:
        raise CliError("ClaimRejected", str(exc), reason=exc.reason)
    pool_path = _pool_path(args)
    pool = _load_pool(pool_path)
    pool.append(tx)
    _save_pool(pool_path, pool)
    _emit({"queued": "solution_claim", "problem_id": tx.problem_id.hex(), "pool": len(pool)})
    return EXIT_OK


def _cmd_chain_validate(args: argparse.Namespace) -> int:
    chain, _ = _open_chain(args)
    _emit(
        {
            "ok": True,
            "height": chain.height,
            "tip": chain.tip_hash.hex(),
            "state_hash": state_hash(chain.tip_state).hex(),
        }
    )
    return EXIT_OK


def _cmd_chain_show(args: argparse.Namespace) -> int:
    chain, aliases = _open_chain(args)
    state = chain.tip_state
    names = {key: name for name, key in aliases.items()}

    def label(key: bytes) -> str:
        return names.get(key, key.hex())

    _emit(
        {
            "params": storage.params_to_json(chain.params),
            "height": chain.height,
            "tip": chain.tip_hash.hex(),
            "state_hash": state_hash(chain.tip_state).hex(),
            "balances": {label(k): v for k, v in sorted(state.balances.items())},
            "escrow": {k.hex(): v for k, v in sorted(state.escrow.items())},
            "active_problems": [
                {
                    "problem_id": p.problem_id.hex(),
                    "uploader": label(p.uploader),
                    "prize": p.prize,
                    "reps": p.reps,
                    "window": [p.window.from_bit, p.window.to_bit],
                }
                for p in refresh_active(state.uploaded, state.solved)
            ],
            "solved": len(state.solved),
            "minted": state.minted,
        }
    )
    return EXIT_OK


# -- bench ----------------------------------------------------------------


def _cmd_bench(args: argparse.Namespace) -> int:
    _emit(
        {
            "default_backend": backend_name(),
            **run_benchmark(passes=args.passes, budget=args.budget),
        }
    )
    return EXIT_OK


# -- wiring ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wasteless", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="run a simulation experiment")
    sim.add_argument(
        "experiment",
        choices=["fairness", "doublespend", "naive-attack", "fee-market"],
    )
    sim.add_argument("--config", required=True, help="experiment config JSON")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override config seed")
    sim.add_argument("--force", action="store_true", help="overwrite artifacts")
    sim.set_defaults(func=_cmd_sim)

    chain = sub.add_parser("chain", help="operate on a local chain file")
    chain_sub = chain.add_subparsers(dest="chain_command", required=True)

    def add_common(p):
        p.add_argument("--file", required=True, help="chain JSONL file")
        p.add_argument("--pool", default=None, help="pending tx pool file")

    c_init = chain_sub.add_parser("init", help="create a new chain file")
    c_init.add_argument("--file", required=True)
    c_init.add_argument("--config", default=None, help="genesis config JSON")
    c_init.add_argument("--force", action="store_true")
    c_init.set_defaults(func=_cmd_chain_init)

    c_mine = chain_sub.add_parser("mine", help="mine and append blocks")
    add_common(c_mine)
    c_mine.add_argument("--blocks", type=int, default=1)
    c_mine.add_argument("--miner", default="miner", help="miner account name")
    c_mine.add_argument("--seed", type=int, default=0, help="nonce stream seed")
    c_mine.add_argument("--min-prize", type=int, default=0, dest="min_prize")
    c_mine.add_argument("--claim-fee", type=int, default=0, dest="claim_fee")
    c_mine.add_argument(
        "--max-attempts", type=int, default=None, dest="max_attempts"
    )
    c_mine.set_defaults(func=_cmd_chain_mine)

    c_up = chain_sub.add_parser("upload", help="queue a problem upload")
    add_common(c_up)
    c_up.add_argument("--problem", required=True, help="problem JSON file")
    c_up.set_defaults(func=_cmd_chain_upload)

    c_claim = chain_sub.add_parser("claim", help="queue a solution claim")
    add_common(c_claim)
    c_claim.add_argument("--claim", required=True, help="claim JSON file")
    c_claim.set_defaults(func=_cmd_chain_claim)

    c_val = chain_sub.add_parser("validate", help="re-validate a chain file")
    c_val.add_argument("--file", required=True)
    c_val.set_defaults(func=_cmd_chain_validate)

    c_show = chain_sub.add_parser("show", help="summarize chain state")
    c_show.add_argument("--file", required=True)
    c_show.set_defaults(func=_cmd_chain_show)

    bench = sub.add_parser("bench", help="compare pipeline backends")
    bench.add_argument("--passes", type=int, default=50_000)
    bench.add_argument("--budget", type=int, default=4)
    bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        _fail(exc.kind, exc.detail, **exc.extra)
        return exc.code
    except ConfigError as exc:
        _fail("ConfigInvalid", exc.cause, path=exc.path)
        return EXIT_CONFIG
    except ModeMismatch as exc:
        _fail("ModeMismatch", str(exc))
        return EXIT_CONFIG
    except FileExistsError as exc:
        _fail("OutputExists", str(exc))
        return EXIT_RUNTIME
    except OSError as exc:
        _fail("IOError", str(exc))
        return EXIT_RUNTIME


def _fail(kind: str, detail: str, **extra: Any) -> None:
    doc = {"error": {"kind": kind, "detail": detail, **extra}}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
