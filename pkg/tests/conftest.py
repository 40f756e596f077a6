"""Shared builders: deterministic problems, fixed keys, a one-block miner.

Everything here is deterministic so tests can freeze expected values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from wasteless import (
    BitWindow,
    Block,
    BlockEvent,
    Chain,
    ChainParams,
    CounterSeedSource,
    HeaderDraft,
    Problem,
    SelectionPolicy,
    SolutionClaim,
    SolveEvent,
    Subset,
    mine,
    refresh_active,
    select_subset,
    subset_root,
    tx_root_of,
    unpack_bits,
)

ALICE = b"\xaa" * 32
BOB = b"\xbb" * 32
CAROL = b"\xcc" * 32

# Generous ceiling: a block every ~16 passes keeps ledger tests instant.
EASY_DIFFICULTY = 1 << 252


def sha(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def problem_with(
    width: int = 8,
    reps: int = 1,
    prize: int = 0,
    uploader: bytes = ALICE,
    tag: bytes = b"",
    from_bit: int = 0,
) -> Problem:
    """Problem whose target bits derive from ``tag`` — stable across runs."""
    target = unpack_bits(sha(b"target:" + tag), 256)[:width]
    return Problem(
        reps=reps,
        window=BitWindow(from_bit, from_bit + width),
        target=target,
        prize=prize,
        uploader=uploader,
    )


def easy_params(**overrides) -> ChainParams:
    base = dict(
        difficulty=EASY_DIFFICULTY,
        score_budget=2,
        block_reward=50,
        freshness_window=100,
        min_prize=0,
    )
    base.update(overrides)
    return ChainParams(**base)


@dataclass
class MinedBlock:
    block: Block
    hash_: bytes
    subset: Subset
    solves: list[SolveEvent]
    attempts: int
    next_counter: int


def mine_next_block(
    chain: Chain,
    miner: bytes,
    txs: tuple = (),
    *,
    parent: bytes | None = None,
    counter: int = 0,
    policy: SelectionPolicy | None = None,
    max_attempts: int = 500_000,
    add: bool = True,
) -> MinedBlock:
    """Produce one valid block on ``parent`` (default tip); txs must pre-validate."""
    parent = parent if parent is not None else chain.tip_hash
    state = chain.state_at(parent)
    pending = {t.problem_id for t in txs if isinstance(t, SolutionClaim)}
    active = refresh_active(state.uploaded, state.solved, pending)
    subset = select_subset(
        active, chain.params.score_budget, policy or SelectionPolicy(), parent
    )
    header = HeaderDraft(
        prev=parent,
        height=state.height + 1,
        miner=miner,
        tx_root=tx_root_of(list(txs)),
        s_root=subset_root(list(subset.ids)),
    )
    solves: list[SolveEvent] = []
    prefix = sha(b"nonce:" + miner)[:24]
    for ev in mine(
        subset,
        header,
        chain.params.difficulty,
        CounterSeedSource(prefix, counter),
        max_attempts=max_attempts,
        coupled=chain.params.coupled,
    ):
        if isinstance(ev, SolveEvent):
            solves.append(ev)
        elif isinstance(ev, BlockEvent):
            block = Block(header, ev.seed, subset.ids, tuple(txs), ev.result)
            h = chain.add_block(block) if add else None
            return MinedBlock(
                block, h, subset, solves, ev.attempt + 1, counter + ev.attempt + 1
            )
    raise AssertionError("unreachable: mine() ends with BlockEvent or raises")


def claim_for(
    solve: SolveEvent,
    mined: MinedBlock,
    fee: int = 0,
    claimant: bytes | None = None,
) -> SolutionClaim:
    """Claim transaction for a solve observed while mining ``mined``."""
    return SolutionClaim(
        problem_id=solve.problem_id,
        snapshot=mined.block.header,
        subset_ids=mined.block.subset_ids,
        seed=solve.seed,
        stage_index=solve.stage,
        claimant=claimant if claimant is not None else mined.block.header.miner,
        fee=fee,
    )
