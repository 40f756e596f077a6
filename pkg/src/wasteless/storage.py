"""Chain persistence: one JSONL file per chain.

Line 1 is the genesis record (parameters, initial balances, display
aliases); every following line is one main-chain block. Replaying a file
re-validates every block from genesis, so a chain file is self-certifying:
any byte flipped in a committed field fails at the height it corrupts.
All digests and keys serialize as lowercase hex.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .hashing import BitWindow
from .ledger import (
    Block,
    BlockInvalid,
    Chain,
    ChainParams,
    ProblemUpload,
    SolutionClaim,
    Transaction,
    Transfer,
    block_hash,
)
from .objectives import Problem
from .protocol import EvalResult, HeaderDraft


class ChainFileError(Exception):
    """A chain file failed to parse or re-validate.

    height is the block height (or line) at fault when known.
    """

    def __init__(self, detail: str, height: int | None = None):
        self.height = height
        at = f" at height {height}" if height is not None else ""
        super().__init__(f"{detail}{at}")


def _hex(b: bytes) -> str:
    return b.hex()


def _unhex(s: str, size: int, what: str) -> bytes:
    try:
        raw = bytes.fromhex(s)
    except (ValueError, TypeError) as exc:
        raise ChainFileError(f"bad hex in {what}: {exc}") from None
    if len(raw) != size:
        raise ChainFileError(f"{what} must be {size} bytes, got {len(raw)}")
    return raw


def params_to_json(params: ChainParams) -> dict[str, Any]:
    return {
        "difficulty": hex(params.difficulty),
        "score_budget": params.score_budget,
        "block_reward": params.block_reward,
        "freshness_window": params.freshness_window,
        "min_prize": params.min_prize,
        "mode": params.mode,
    }


def params_from_json(doc: Mapping[str, Any]) -> ChainParams:
    difficulty = doc["difficulty"]
    if isinstance(difficulty, str):
        difficulty = int(difficulty, 16)
    return ChainParams(
        difficulty=difficulty,
        score_budget=doc["score_budget"],
        block_reward=doc.get("block_reward", 50),
        freshness_window=doc.get("freshness_window", 100),
        min_prize=doc.get("min_prize", 0),
        mode=doc.get("mode", "decoupled"),
    )


def problem_to_json(p: Problem) -> dict[str, Any]:
    return {
        "reps": p.reps,
        "window": [p.window.from_bit, p.window.to_bit],
        "target": p.target,
        "prize": p.prize,
        "uploader": _hex(p.uploader),
    }


def problem_from_json(doc: Mapping[str, Any]) -> Problem:
    return Problem(
        reps=doc["reps"],
        window=BitWindow(doc["window"][0], doc["window"][1]),
        target=doc["target"],
        prize=doc["prize"],
        uploader=_unhex(doc["uploader"], 32, "uploader"),
    )


def header_to_json(h: HeaderDraft) -> dict[str, Any]:
    return {
        "prev": _hex(h.prev),
        "height": h.height,
        "miner": _hex(h.miner),
        "tx_root": _hex(h.tx_root),
        "s_root": _hex(h.s_root),
    }


def header_from_json(doc: Mapping[str, Any]) -> HeaderDraft:
    return HeaderDraft(
        prev=_unhex(doc["prev"], 32, "prev"),
        height=doc["height"],
        miner=_unhex(doc["miner"], 32, "miner"),
        tx_root=_unhex(doc["tx_root"], 32, "tx_root"),
        s_root=_unhex(doc["s_root"], 32, "s_root"),
    )


def tx_to_json(tx: Transaction) -> dict[str, Any]:
    if isinstance(tx, Transfer):
        return {
            "type": "transfer",
            "from": _hex(tx.sender),
            "to": _hex(tx.recipient),
            "amount": tx.amount,
            "fee": tx.fee,
        }
    if isinstance(tx, ProblemUpload):
        return {
            "type": "problem_upload",
            "problem": problem_to_json(tx.problem),
            "fee": tx.fee,
        }
    if isinstance(tx, SolutionClaim):
        return {
            "type": "solution_claim",
            "problem_id": _hex(tx.problem_id),
            "snapshot": header_to_json(tx.snapshot),
            "subset": [_hex(i) for i in tx.subset_ids],
            "seed": _hex(tx.seed),
            "stage": tx.stage_index,
            "claimant": _hex(tx.claimant),
            "fee": tx.fee,
        }
    raise TypeError(f"unknown transaction type {type(tx).__name__}")


def tx_from_json(doc: Mapping[str, Any]) -> Transaction:
    kind = doc.get("type")
    if kind == "transfer":
        return Transfer(
            sender=_unhex(doc["from"], 32, "from"),
            recipient=_unhex(doc["to"], 32, "to"),
            amount=doc["amount"],
            fee=doc["fee"],
        )
    if kind == "problem_upload":
        return ProblemUpload(problem=problem_from_json(doc["problem"]), fee=doc["fee"])
    if kind == "solution_claim":
        return SolutionClaim(
            problem_id=_unhex(doc["problem_id"], 32, "problem_id"),
            snapshot=header_from_json(doc["snapshot"]),
            subset_ids=tuple(_unhex(i, 32, "subset id") for i in doc["subset"]),
            seed=_unhex(doc["seed"], 32, "seed"),
            stage_index=doc["stage"],
            claimant=_unhex(doc["claimant"], 32, "claimant"),
            fee=doc["fee"],
        )
    raise ChainFileError(f"unknown transaction type {kind!r}")


def result_to_json(r: EvalResult) -> dict[str, Any]:
    return {
        "block_found": r.block_found,
        "solved": {_hex(k): v for k, v in sorted(r.solved.items())},
        "proof": _hex(r.proof),
        "s0": _hex(r.s0),
        "hash_count": r.hash_count,
    }


def result_from_json(doc: Mapping[str, Any]) -> EvalResult:
    return EvalResult(
        block_found=doc["block_found"],
        solved={_unhex(k, 32, "solved id"): v for k, v in doc["solved"].items()},
        proof=_unhex(doc["proof"], 32, "proof"),
        s0=_unhex(doc["s0"], 32, "s0"),
        hash_count=doc["hash_count"],
    )


def block_to_json(b: Block) -> dict[str, Any]:
    return {
        "header": header_to_json(b.header),
        "seed": _hex(b.seed),
        "subset": [_hex(i) for i in b.subset_ids],
        "txs": [tx_to_json(t) for t in b.txs],
        "result": result_to_json(b.result),
    }


def block_from_json(doc: Mapping[str, Any]) -> Block:
    return Block(
        header=header_from_json(doc["header"]),
        seed=_unhex(doc["seed"], 32, "seed"),
        subset_ids=tuple(_unhex(i, 32, "subset id") for i in doc["subset"]),
        txs=tuple(tx_from_json(t) for t in doc["txs"]),
        result=result_from_json(doc["result"]),
    )


def _dump(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def genesis_record(
    params: ChainParams,
    balances: Mapping[bytes, int],
    aliases: Mapping[str, bytes] | None = None,
) -> dict[str, Any]:
    return {
        "genesis": {
            "params": params_to_json(params),
            "balances": {_hex(k): v for k, v in sorted(balances.items())},
            "aliases": {n: _hex(k) for n, k in sorted((aliases or {}).items())},
        }
    }


def write_chain(
    path: str | Path,
    chain: Chain,
    balances: Mapping[bytes, int],
    aliases: Mapping[str, bytes] | None = None,
) -> None:
    """Write genesis plus the current main chain."""
    lines = [_dump(genesis_record(chain.params, balances, aliases))]
    for h in chain.main_chain():
        lines.append(_dump(block_to_json(chain.record(h).block)))
    Path(path).write_text("\n".join(lines) + "\n")


def append_block(path: str | Path, block: Block) -> None:
    with open(path, "a") as fh:
        fh.write(_dump(block_to_json(block)) + "\n")


def replay_chain(path: str | Path) -> tuple[Chain, dict[str, bytes]]:
    """Re-validate a chain file from genesis.

    Returns the chain and the alias map. Raises ChainFileError naming the
    failing height on any parse error or consensus violation.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ChainFileError(f"cannot read chain file: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ChainFileError("chain file is empty")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ChainFileError(f"genesis line is not valid JSON: {exc}", height=0) from None
    if "genesis" not in head:
        raise ChainFileError("first line must be the genesis record", height=0)
    gen = head["genesis"]
    try:
        params = params_from_json(gen["params"])
        balances = {
            _unhex(k, 32, "balance key"): v for k, v in gen.get("balances", {}).items()
        }
        aliases = {
            name: _unhex(k, 32, "alias key")
            for name, k in gen.get("aliases", {}).items()
        }
    except (KeyError, ValueError, TypeError) as exc:
        raise ChainFileError(f"bad genesis record: {exc}", height=0) from None
    chain = Chain(params, balances)
    for lineno, line in enumerate(lines[1:], start=1):
        try:
            doc = json.loads(line)
            block = block_from_json(doc)
        except (json.JSONDecodeError, KeyError, TypeError, ChainFileError) as exc:
            raise ChainFileError(f"bad block record: {exc}", height=lineno) from None
        try:
            chain.add_block(block)
        except (BlockInvalid, ValueError) as exc:
            raise ChainFileError(f"invalid block: {exc}", height=lineno) from None
        if chain.tip_hash != block_hash(block):
            raise ChainFileError("block does not extend the tip", height=lineno)
    return chain, aliases
