"""The mining quadruple: key derivation, evaluation, verification, mining.

One evaluation pass threads a seed through every stage of the committed
subset: s0 = sha256(header || seed), then stage i computes
u_i = sha256^reps_i(s_{i-1}) and checks trim(u_i, window_i) == target_i.
The untrimmed u_i always feeds the next stage, and the untrimmed final
digest is both the proof and the value compared against the difficulty
threshold. Block finding is therefore independent of any solved flag —
except in the deliberately insecure "naive-coupled" mode kept around for
the simulator's attack demonstration, where solving any problem also
qualifies the pass as a block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .hashing import iterate_hash, meets_difficulty, sha256, trim_bits
from .merkle import merkle_root
from .objectives import Problem, Subset
from .pipeline import (
    EmptySubset,
    Plan,
    RunOutcome,
    compile_plan,
    nonce_bytes,
    run_attempts,
)

SEED_SIZE = 32
HEADER_SIZE = 136
ZERO32 = b"\x00" * 32


@dataclass(frozen=True)
class HeaderDraft:
    """Block header: the pipeline's domain separator and commitment root.

    prev is the evaluation key of the parent block (the hash of its
    header), so every header pins the tip it extends. s_root commits to
    the ordered problem subset, tx_root to the transaction list.
    """

    prev: bytes
    height: int
    miner: bytes
    tx_root: bytes
    s_root: bytes

    def __post_init__(self) -> None:
        for name in ("prev", "miner", "tx_root", "s_root"):
            if len(getattr(self, name)) != 32:
                raise ValueError(f"header field {name} must be 32 bytes")
        if self.height < 0:
            raise ValueError("height must be >= 0")

    def encode(self) -> bytes:
        return (
            self.prev
            + self.height.to_bytes(8, "big")
            + self.miner
            + self.tx_root
            + self.s_root
        )


def eval_key(header: HeaderDraft) -> bytes:
    """Evaluation key for blocks extending this header: its hash."""
    return sha256(header.encode())


def subset_root(ids: Sequence[bytes]) -> bytes:
    """Commitment placed in header.s_root for an ordered subset."""
    return merkle_root(ids)


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one pipeline pass.

    solved maps problem id -> flag, keyed rather than positional so
    verification is insensitive to dict ordering. proof is the untrimmed
    final stage digest; s0 the seed hash; hash_count the exact number of
    SHA-256 invocations (1 + sum of reps).
    """

    block_found: bool
    solved: dict[bytes, bool]
    proof: bytes
    s0: bytes
    hash_count: int


class VerificationError(Exception):
    """Recomputation disagreed with a claimed result.

    reason is the first failed check: CommitmentMismatch (subset does not
    hash to header.s_root), ProofMismatch (s0/proof recomputation
    differs), FlagsMismatch (solved map or hash count differs),
    DifficultyNotMet (block_found flag differs from the recomputed one).
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass
class HashCounters:
    """Tallied SHA-256 invocations, split by what the work paid for."""

    seed: int = 0
    user_stage: int = 0
    filler_stage: int = 0

    @property
    def total(self) -> int:
        return self.seed + self.user_stage + self.filler_stage

    def add_passes(self, plan: Plan, attempts: int) -> None:
        self.seed += attempts
        self.user_stage += attempts * plan.user_hashes_per_pass
        self.filler_stage += attempts * plan.filler_hashes_per_pass


@dataclass(frozen=True)
class EfficiencyReport:
    """Share of hash work that solved somebody's uploaded problem."""

    useful_hashes: int
    total_hashes: int

    @property
    def ratio(self) -> float:
        return self.useful_hashes / self.total_hashes if self.total_hashes else 0.0


def efficiency_report(counters: HashCounters) -> EfficiencyReport:
    return EfficiencyReport(counters.user_stage, counters.total)


def _as_subset(subset: Subset | Sequence[Problem]) -> Subset:
    if isinstance(subset, Subset):
        return subset
    problems = tuple(subset)
    return Subset(problems, (True,) * len(problems))


def evaluate(
    subset: Subset | Sequence[Problem],
    header: HeaderDraft,
    seed: bytes,
    difficulty: int,
    coupled: bool = False,
    counters: HashCounters | None = None,
) -> EvalResult:
    """One pipeline pass. Pure: same inputs, same result."""
    sub = _as_subset(subset)
    if not sub.problems:
        raise EmptySubset("cannot evaluate an empty subset")
    if len(seed) != SEED_SIZE:
        raise ValueError(f"seed must be {SEED_SIZE} bytes")
    ids = sub.ids
    if len(set(ids)) != len(ids):
        raise ValueError("subset contains duplicate problems")
    for p in sub.problems:
        if p.window.width == 0:
            raise ValueError("width-0 problem cannot be evaluated")

    digest = sha256(header.encode() + seed)
    s0 = digest
    solved: dict[bytes, bool] = {}
    hash_count = 1
    for p in sub.problems:
        digest = iterate_hash(digest, p.reps)
        hash_count += p.reps
        solved[p.problem_id] = trim_bits(digest, p.window) == p.target
    block = meets_difficulty(digest, difficulty) or (
        coupled and any(solved.values())
    )
    if counters is not None:
        counters.seed += 1
        for p, user in zip(sub.problems, sub.is_user):
            if user:
                counters.user_stage += p.reps
            else:
                counters.filler_stage += p.reps
    return EvalResult(block, solved, proof=digest, s0=s0, hash_count=hash_count)


def verify(
    subset: Subset | Sequence[Problem],
    header: HeaderDraft,
    seed: bytes,
    claimed: EvalResult,
    difficulty: int,
    coupled: bool = False,
    counters: HashCounters | None = None,
) -> None:
    """Recompute the pass and compare; raises VerificationError on any gap.

    Costs exactly as many hash invocations as evaluate() — there is no
    shortcut, which is what makes results binding.
    """
    sub = _as_subset(subset)
    if merkle_root([p.problem_id for p in sub.problems]) != header.s_root:
        raise VerificationError(
            "CommitmentMismatch", "subset does not match header.s_root"
        )
    actual = evaluate(sub, header, seed, difficulty, coupled, counters)
    if actual.s0 != claimed.s0 or actual.proof != claimed.proof:
        raise VerificationError("ProofMismatch", "recomputed digests differ")
    if actual.solved != claimed.solved or actual.hash_count != claimed.hash_count:
        raise VerificationError("FlagsMismatch", "solved flags or count differ")
    if actual.block_found != claimed.block_found:
        raise VerificationError(
            "DifficultyNotMet", "block flag does not match recomputation"
        )


@dataclass(frozen=True)
class SolveEvent:
    """A pass satisfied one problem's check (stage index into the subset)."""

    attempt: int
    seed: bytes
    problem_id: bytes
    stage: int


@dataclass(frozen=True)
class BlockEvent:
    """A pass met the block condition; result is the full evaluation."""

    attempt: int
    seed: bytes
    result: EvalResult


class MiningStopped(Exception):
    """Attempt budget exhausted without a block."""

    def __init__(self, attempts: int):
        self.attempts = attempts
        super().__init__(f"no block after {attempts} attempts")


@dataclass(frozen=True)
class CounterSeedSource:
    """Deterministic seed stream: fixed 24-byte prefix + 64-bit counter.

    The batched runners understand this shape, so mining with it uses the
    compiled kernel when available.
    """

    prefix: bytes
    start: int = 0

    def __post_init__(self) -> None:
        if len(self.prefix) != 24:
            raise ValueError("prefix must be 24 bytes")

    def seed_at(self, attempt: int) -> bytes:
        return nonce_bytes(self.prefix, self.start + attempt)


_MINE_CHUNK = 4096


def mine(
    subset: Subset | Sequence[Problem],
    header: HeaderDraft,
    difficulty: int,
    seeds: CounterSeedSource | Iterable[bytes],
    max_attempts: int | None = None,
    coupled: bool = False,
    counters: HashCounters | None = None,
) -> Iterator[SolveEvent | BlockEvent]:
    """Sweep seeds until a block qualifies, yielding events as they occur.

    Yields a SolveEvent for every satisfied problem check and ends with a
    BlockEvent on success. Raises MiningStopped when max_attempts passes
    found no block. With a CounterSeedSource the sweep runs batched.
    """
    sub = _as_subset(subset)
    if isinstance(seeds, CounterSeedSource):
        plan = compile_plan(sub, header.encode(), difficulty, coupled)
        done = 0
        while max_attempts is None or done < max_attempts:
            chunk = _MINE_CHUNK
            if max_attempts is not None:
                chunk = min(chunk, max_attempts - done)
            out: RunOutcome = run_attempts(
                plan, seeds.prefix, seeds.start + done, chunk, stop_on_block=True
            )
            if counters is not None:
                counters.add_passes(plan, out.attempts)
            for attempt_i, stage in out.solves:
                attempt = done + attempt_i
                yield SolveEvent(
                    attempt=attempt,
                    seed=seeds.seed_at(attempt),
                    problem_id=plan.problem_ids[stage],
                    stage=stage,
                )
            if out.block_index is not None:
                attempt = done + out.block_index
                seed = seeds.seed_at(attempt)
                result = evaluate(sub, header, seed, difficulty, coupled)
                yield BlockEvent(attempt=attempt, seed=seed, result=result)
                return
            done += out.attempts
        raise MiningStopped(done)

    attempt = 0
    for seed in seeds:
        if max_attempts is not None and attempt >= max_attempts:
            break
        result = evaluate(sub, header, seed, difficulty, coupled, counters)
        for stage, pid in enumerate(p.problem_id for p in sub.problems):
            if result.solved[pid]:
                yield SolveEvent(attempt=attempt, seed=seed, problem_id=pid, stage=stage)
        if result.block_found:
            yield BlockEvent(attempt=attempt, seed=seed, result=result)
            return
        attempt += 1
    raise MiningStopped(attempt)
