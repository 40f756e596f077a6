"""Account ledger, blocks, and chain maintenance.

Balances are plain account -> amount maps keyed by 32-byte public keys;
there are no signatures, so "authorization" is structural: a claim pays the
miner key committed in the snapshot header that did the work, an upload
escrows the uploader's own funds. The conservation invariant — total
balances plus escrow equals genesis supply plus minted rewards — is
asserted after every block application.

Solved-ness is claim-driven: a problem stays active (prize escrowed,
selectable by miners) until a block carries a valid claim for it, even if
some earlier block's solved flag was true. Forgetting to claim forfeits
nothing permanently; anyone who later solves it again may claim.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from .hashing import MAX_THRESHOLD, iterate_hash, sha256, trim_bits
from .merkle import merkle_root
from .objectives import (
    Problem,
    ProblemRejected,
    Subset,
    make_filler,
    refresh_active,
    validate_problem,
)
from .protocol import (
    EvalResult,
    HeaderDraft,
    VerificationError,
    eval_key,
    verify,
)

ZERO32 = b"\x00" * 32

#: tx_root sentinel for a block carrying no transactions.
EMPTY_TX_ROOT = ZERO32


@dataclass(frozen=True)
class ChainParams:
    difficulty: int
    score_budget: int
    block_reward: int = 50
    freshness_window: int = 100
    min_prize: int = 0
    mode: str = "decoupled"

    def __post_init__(self) -> None:
        if not (0 < self.difficulty <= MAX_THRESHOLD):
            raise ValueError("difficulty out of range")
        if self.score_budget < 1:
            raise ValueError("score budget must be >= 1")
        if self.block_reward < 0 or self.freshness_window < 0 or self.min_prize < 0:
            raise ValueError("params must be non-negative")
        if self.mode not in ("decoupled", "naive-coupled"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def coupled(self) -> bool:
        """True only for the insecure demonstration mode."""
        return self.mode == "naive-coupled"


@dataclass(frozen=True)
class Transfer:
    sender: bytes
    recipient: bytes
    amount: int
    fee: int


@dataclass(frozen=True)
class ProblemUpload:
    problem: Problem
    fee: int


@dataclass(frozen=True)
class SolutionClaim:
    """Proof that some pipeline pass solved a problem.

    snapshot is the full header the solver was mining when the solve
    occurred; subset_ids reopens its s_root commitment; stage_index points
    at the solved problem's position. claimant must equal snapshot.miner —
    the key baked into the pipeline input — which is what makes claims
    theft-proof without signatures.
    """

    problem_id: bytes
    snapshot: HeaderDraft
    subset_ids: tuple[bytes, ...]
    seed: bytes
    stage_index: int
    claimant: bytes
    fee: int


Transaction = Union[Transfer, ProblemUpload, SolutionClaim]


def encode_tx(tx: Transaction) -> bytes:
    if isinstance(tx, Transfer):
        return (
            b"\x01"
            + tx.sender
            + tx.recipient
            + tx.amount.to_bytes(8, "big")
            + tx.fee.to_bytes(8, "big")
        )
    if isinstance(tx, ProblemUpload):
        return (
            b"\x02"
            + tx.problem.encode()
            + tx.problem.prize.to_bytes(8, "big")
            + tx.fee.to_bytes(8, "big")
        )
    if isinstance(tx, SolutionClaim):
        return (
            b"\x03"
            + tx.problem_id
            + tx.snapshot.encode()
            + tx.seed
            + tx.stage_index.to_bytes(4, "big")
            + len(tx.subset_ids).to_bytes(4, "big")
            + b"".join(tx.subset_ids)
            + tx.claimant
            + tx.fee.to_bytes(8, "big")
        )
    raise TypeError(f"unknown transaction type {type(tx).__name__}")


def tx_hash(tx: Transaction) -> bytes:
    return sha256(encode_tx(tx))


def tx_root_of(txs: Sequence[Transaction]) -> bytes:
    return merkle_root([tx_hash(t) for t in txs]) if txs else EMPTY_TX_ROOT


@dataclass(frozen=True)
class Block:
    """Header plus everything needed to re-verify it from the parent state.

    subset_ids is the full ordered subset (ids only — user problems resolve
    against the chain's upload registry, fillers are recomputed from the
    parent hash).
    """

    header: HeaderDraft
    seed: bytes
    subset_ids: tuple[bytes, ...]
    txs: tuple[Transaction, ...]
    result: EvalResult


def block_hash(block: Block) -> bytes:
    """Block identity: the header hash, i.e. the next evaluation key."""
    return eval_key(block.header)


class TxInvalid(Exception):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ClaimInvalid(TxInvalid):
    """reason is one of: ProblemInactive, ClaimantMismatch, StaleHeader,
    NotInCommittedSubset, BadPreimage, FeeExceedsPrize."""


class BlockInvalid(Exception):
    """reason: UnknownParent, BadHeight, BadTxRoot, BadSubset,
    ScoreBudgetViolation, BadPow, or BadTransaction (with tx_index)."""

    def __init__(self, reason: str, detail: str = "", tx_index: int | None = None):
        self.reason = reason
        self.tx_index = tx_index
        at = f" (tx {tx_index})" if tx_index is not None else ""
        super().__init__(f"{reason}{at}: {detail}" if detail else f"{reason}{at}")


@dataclass
class ChainState:
    """Materialized state after some block. Copied on extension, never
    mutated in place once stored."""

    balances: dict[bytes, int]
    escrow: dict[bytes, int]
    solved: set[bytes]
    uploaded: dict[bytes, Problem]
    height: int
    tip: bytes
    minted: int
    genesis_supply: int

    def copy(self) -> "ChainState":
        return ChainState(
            balances=dict(self.balances),
            escrow=dict(self.escrow),
            solved=set(self.solved),
            uploaded=dict(self.uploaded),
            height=self.height,
            tip=self.tip,
            minted=self.minted,
            genesis_supply=self.genesis_supply,
        )

    def conservation_holds(self) -> bool:
        total = sum(self.balances.values()) + sum(self.escrow.values())
        return total == self.genesis_supply + self.minted


def state_hash(state: ChainState) -> bytes:
    """Canonical digest of the full state, for replay comparison."""
    doc = {
        "height": state.height,
        "tip": state.tip.hex(),
        "minted": state.minted,
        "genesis_supply": state.genesis_supply,
        "balances": {k.hex(): v for k, v in sorted(state.balances.items())},
        "escrow": {k.hex(): v for k, v in sorted(state.escrow.items())},
        "solved": sorted(s.hex() for s in state.solved),
        "uploaded": {
            k.hex(): {"encoding": p.encode().hex(), "prize": p.prize}
            for k, p in sorted(state.uploaded.items())
        },
    }
    return sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode())


def _genesis_commitment(params: ChainParams, balances: Mapping[bytes, int]) -> bytes:
    doc = {
        "balances": {k.hex(): v for k, v in sorted(balances.items())},
        "params": {
            "difficulty": hex(params.difficulty),
            "score_budget": params.score_budget,
            "block_reward": params.block_reward,
            "freshness_window": params.freshness_window,
            "min_prize": params.min_prize,
            "mode": params.mode,
        },
    }
    return sha256(b"genesis:" + json.dumps(doc, sort_keys=True).encode())


def genesis_header(params: ChainParams, balances: Mapping[bytes, int]) -> HeaderDraft:
    """Height-0 header committing to the chain's parameters and funding."""
    return HeaderDraft(
        prev=ZERO32,
        height=0,
        miner=ZERO32,
        tx_root=_genesis_commitment(params, balances),
        s_root=ZERO32,
    )


@dataclass
class _Record:
    block: Block
    parent: bytes | None
    height: int
    seen: tuple[int, int]  # arrival order; ties in fork choice keep earliest
    withheld: bool


class Chain:
    """Block store with per-block states and longest-chain fork choice.

    Every accepted block's state is kept, so reorgs are a tip pointer move.
    Withheld blocks (a simulated attacker's private chain) are validated
    and stored but ignored by fork choice until published.
    """

    def __init__(self, params: ChainParams, balances: Mapping[bytes, int]):
        self.params = params
        self.genesis = genesis_header(params, balances)
        self.genesis_hash = eval_key(self.genesis)
        state = ChainState(
            balances={k: v for k, v in balances.items() if v},
            escrow={},
            solved=set(),
            uploaded={},
            height=0,
            tip=self.genesis_hash,
            minted=0,
            genesis_supply=sum(balances.values()),
        )
        self._records: dict[bytes, _Record] = {}
        self._states: dict[bytes, ChainState] = {self.genesis_hash: state}
        self._heights: dict[bytes, int] = {self.genesis_hash: 0}
        self._order: list[bytes] = []
        self._seen_counter = 0
        self.tip_hash = self.genesis_hash

    # -- lookups ---------------------------------------------------------

    def state_at(self, block_hash_: bytes) -> ChainState:
        return self._states[block_hash_]

    def height_of(self, block_hash_: bytes) -> int:
        return self._heights[block_hash_]

    @property
    def tip_state(self) -> ChainState:
        return self._states[self.tip_hash]

    @property
    def height(self) -> int:
        return self._heights[self.tip_hash]

    def record(self, block_hash_: bytes) -> _Record:
        return self._records[block_hash_]

    def has_block(self, block_hash_: bytes) -> bool:
        return block_hash_ in self._states

    def main_chain(self) -> list[bytes]:
        """Block hashes from genesis to tip (genesis excluded)."""
        path: list[bytes] = []
        h = self.tip_hash
        while h != self.genesis_hash:
            path.append(h)
            h = self._records[h].parent
        path.reverse()
        return path

    def is_recent_ancestor(self, start: bytes, target: bytes, window: int) -> bool:
        """True iff target is start or an ancestor at most ``window`` steps up."""
        h = start
        for _ in range(window + 1):
            if h == target:
                return True
            if h == self.genesis_hash:
                return False
            h = self._records[h].parent
        return False

    # -- validation ------------------------------------------------------

    def validate_claim(
        self, claim: SolutionClaim, state: ChainState, parent_hash: bytes
    ) -> None:
        """Check a claim against an (evolving) state on a specific branch."""
        pid = claim.problem_id
        problem = state.uploaded.get(pid)
        if problem is None or pid in state.solved:
            raise ClaimInvalid("ProblemInactive", pid.hex()[:16])
        if claim.claimant != claim.snapshot.miner:
            raise ClaimInvalid(
                "ClaimantMismatch", "claimant must be the snapshot's miner"
            )
        if not (0 <= claim.fee <= problem.prize):
            raise ClaimInvalid("FeeExceedsPrize", f"fee {claim.fee}")
        if len(claim.seed) != 32:
            raise ClaimInvalid("BadPreimage", "seed must be 32 bytes")
        if not self.is_recent_ancestor(
            parent_hash, claim.snapshot.prev, self.params.freshness_window
        ):
            raise ClaimInvalid(
                "StaleHeader",
                f"snapshot not within {self.params.freshness_window} blocks",
            )
        try:
            if merkle_root(claim.subset_ids) != claim.snapshot.s_root:
                raise ClaimInvalid(
                    "NotInCommittedSubset", "subset does not reopen s_root"
                )
        except ValueError:
            raise ClaimInvalid("NotInCommittedSubset", "empty subset") from None
        if pid not in claim.subset_ids:
            raise ClaimInvalid("NotInCommittedSubset", "problem not in subset")
        try:
            subset = self._resolve_subset(
                claim.subset_ids, claim.snapshot.prev, state.uploaded
            )
        except KeyError as exc:
            raise ClaimInvalid("NotInCommittedSubset", str(exc)) from None
        stage = claim.stage_index
        if not (0 <= stage < len(subset.problems)):
            raise ClaimInvalid("BadPreimage", "stage index out of range")
        if subset.problems[stage].problem_id != pid:
            raise ClaimInvalid("BadPreimage", "stage does not hold the problem")
        digest = sha256(claim.snapshot.encode() + claim.seed)
        for i in range(stage + 1):
            digest = iterate_hash(digest, subset.problems[i].reps)
        if trim_bits(digest, problem.window) != problem.target:
            raise ClaimInvalid("BadPreimage", "seed does not solve the problem")

    def _resolve_subset(
        self,
        ids: Sequence[bytes],
        ek: bytes,
        uploaded: Mapping[bytes, Problem],
    ) -> Subset:
        """Reconstruct full problems from ids; unknown ids must be the
        deterministic filler sequence for ``ek``, in order."""
        problems: list[Problem] = []
        flags: list[bool] = []
        filler_index = 0
        for pid in ids:
            p = uploaded.get(pid)
            if p is not None:
                problems.append(p)
                flags.append(True)
                continue
            filler = make_filler(ek, filler_index)
            filler_index += 1
            if filler.problem_id != pid:
                raise KeyError(f"unresolvable subset id {pid.hex()[:16]}")
            problems.append(filler)
            flags.append(False)
        return Subset(tuple(problems), tuple(flags))

    def validate_block(self, block: Block) -> ChainState:
        """Full validation against the stored parent; returns the new state."""
        parent = block.header.prev
        parent_state = self._states.get(parent)
        if parent_state is None:
            raise BlockInvalid("UnknownParent", parent.hex()[:16])
        if block.header.height != self._heights[parent] + 1:
            raise BlockInvalid(
                "BadHeight",
                f"{block.header.height} after {self._heights[parent]}",
            )
        if tx_root_of(block.txs) != block.header.tx_root:
            raise BlockInvalid("BadTxRoot", "transactions do not match header")

        claimed_here = {
            tx.problem_id for tx in block.txs if isinstance(tx, SolutionClaim)
        }
        subset = self._check_subset(block, parent_state, claimed_here)

        try:
            verify(
                subset,
                block.header,
                block.seed,
                block.result,
                self.params.difficulty,
                coupled=self.params.coupled,
            )
        except VerificationError as exc:
            raise BlockInvalid("BadPow", exc.reason) from None
        if not block.result.block_found:
            raise BlockInvalid("BadPow", "DifficultyNotMet")

        state = parent_state.copy()
        fees = 0
        for i, tx in enumerate(block.txs):
            try:
                fees += self.apply_tx(tx, state, parent)
            except TxInvalid as exc:
                raise BlockInvalid("BadTransaction", exc.reason, tx_index=i) from None
        miner = block.header.miner
        state.balances[miner] = (
            state.balances.get(miner, 0) + self.params.block_reward + fees
        )
        state.minted += self.params.block_reward
        state.height = block.header.height
        state.tip = block_hash(block)
        if not state.conservation_holds():
            raise AssertionError("conservation violated after block application")
        return state

    def _check_subset(
        self, block: Block, parent_state: ChainState, claimed_here: set
    ) -> Subset:
        ids = block.subset_ids
        if not ids:
            raise BlockInvalid("BadSubset", "empty subset")
        if len(set(ids)) != len(ids):
            raise BlockInvalid("BadSubset", "duplicate subset entries")
        ek = block.header.prev
        problems: list[Problem] = []
        flags: list[bool] = []
        filler_index = 0
        for pid in ids:
            p = parent_state.uploaded.get(pid)
            if p is not None:
                if pid in parent_state.solved or pid in claimed_here:
                    raise BlockInvalid("BadSubset", "subset includes inactive problem")
                problems.append(p)
                flags.append(True)
                continue
            filler = make_filler(ek, filler_index)
            filler_index += 1
            if filler.problem_id != pid:
                raise BlockInvalid("BadSubset", f"unknown problem {pid.hex()[:16]}")
            problems.append(filler)
            flags.append(False)
        subset = Subset(tuple(problems), tuple(flags))
        if subset.score != self.params.score_budget:
            raise BlockInvalid(
                "ScoreBudgetViolation",
                f"score {subset.score} != budget {self.params.score_budget}",
            )
        return subset

    def apply_tx(self, tx: Transaction, state: ChainState, parent: bytes) -> int:
        """Validate one tx against an evolving scratch state, mutate it, and
        return the fee. Raises TxInvalid (without mutating) on rejection;
        block builders use this to pre-filter their candidate lists."""
        if isinstance(tx, Transfer):
            if tx.amount < 0 or tx.fee < 0:
                raise TxInvalid("NegativeAmount")
            have = state.balances.get(tx.sender, 0)
            if have < tx.amount + tx.fee:
                raise TxInvalid(
                    "InsufficientFunds", f"{have} < {tx.amount + tx.fee}"
                )
            _debit(state.balances, tx.sender, tx.amount + tx.fee)
            _credit(state.balances, tx.recipient, tx.amount)
            return tx.fee
        if isinstance(tx, ProblemUpload):
            if tx.fee < 0:
                raise TxInvalid("NegativeAmount")
            problem = tx.problem
            try:
                validate_problem(problem, self.params.min_prize)
            except ProblemRejected as exc:
                raise TxInvalid(exc.reason) from None
            pid = problem.problem_id
            if pid in state.uploaded:
                raise TxInvalid("DuplicateProblem", pid.hex()[:16])
            have = state.balances.get(problem.uploader, 0)
            if have < problem.prize + tx.fee:
                raise TxInvalid(
                    "InsufficientFunds", f"{have} < {problem.prize + tx.fee}"
                )
            _debit(state.balances, problem.uploader, problem.prize + tx.fee)
            state.escrow[pid] = problem.prize
            state.uploaded[pid] = problem
            return tx.fee
        if isinstance(tx, SolutionClaim):
            self.validate_claim(tx, state, parent)
            prize = state.escrow.pop(tx.problem_id)
            state.solved.add(tx.problem_id)
            _credit(state.balances, tx.claimant, prize - tx.fee)
            return tx.fee
        raise TxInvalid("UnknownTransaction", type(tx).__name__)

    # -- extension -------------------------------------------------------

    def add_block(self, block: Block, withhold: bool = False) -> bytes:
        """Validate, store, and run fork choice. Returns the block hash."""
        h = block_hash(block)
        if h in self._states:
            return h  # idempotent re-add
        state = self.validate_block(block)
        height = block.header.height
        self._records[h] = _Record(
            block=block,
            parent=block.header.prev,
            height=height,
            seen=(self._seen_counter, 0),
            withheld=withhold,
        )
        self._seen_counter += 1
        self._states[h] = state
        self._heights[h] = height
        self._order.append(h)
        if not withhold and height > self._heights[self.tip_hash]:
            self.tip_hash = h
        return h

    def publish(self, block_hash_: bytes) -> None:
        """Reveal a withheld block and its withheld ancestors."""
        chain: list[bytes] = []
        h = block_hash_
        while h != self.genesis_hash and self._records[h].withheld:
            chain.append(h)
            h = self._records[h].parent
        for h in reversed(chain):
            self._records[h].withheld = False
            if self._heights[h] > self._heights[self.tip_hash]:
                self.tip_hash = h

    def all_blocks(self) -> list[bytes]:
        """Every accepted block hash in arrival order."""
        return list(self._order)


def fork_choice(chain: Chain) -> bytes:
    """Current tip: greatest height among published blocks, earliest-seen
    on ties (maintained incrementally by Chain)."""
    return chain.tip_hash


def active_set_at(chain: Chain, at: bytes | None = None) -> list[Problem]:
    """Problems selectable by a miner extending ``at`` (default: the tip)."""
    state = chain.state_at(at if at is not None else chain.tip_hash)
    return refresh_active(state.uploaded, state.solved)


def _credit(balances: dict[bytes, int], key: bytes, amount: int) -> None:
    if amount:
        balances[key] = balances.get(key, 0) + amount


def _debit(balances: dict[bytes, int], key: bytes, amount: int) -> None:
    remaining = balances.get(key, 0) - amount
    if remaining < 0:
        raise TxInvalid("InsufficientFunds")
    if remaining:
        balances[key] = remaining
    else:
        balances.pop(key, None)
