"""Batched execution of the evaluation pipeline.

A Plan freezes one (subset, header, difficulty) combination into flat
arrays; a runner then sweeps a counter-derived nonce range through it. Two
interchangeable runners exist: a compiled kernel (wasteless._kernel, OpenSSL
SHA-256) and a pure-Python fallback. Both must produce identical outcomes
for identical inputs — the tests enforce parity — so everything above this
module is backend-agnostic. WASTELESS_BACKEND=python|native overrides the
import-time pick.
"""

from __future__ import annotations

import hashlib
import os
from array import array
from dataclasses import dataclass
from typing import Sequence

from .hashing import DIGEST_BITS, MAX_THRESHOLD, pack_bits
from .objectives import Problem, Subset

NONCE_PREFIX_SIZE = 24
NONCE_SIZE = 32

try:  # compiled kernel is optional
    from . import _kernel as _native
except ImportError:
    _native = None

_env = os.environ.get("WASTELESS_BACKEND")
if _env == "python":
    _active = None
elif _env == "native":
    if _native is None:
        raise ImportError(
            "WASTELESS_BACKEND=native but the compiled kernel is not built"
        )
    _active = _native
else:
    _active = _native

BACKEND = "native" if _active is not None else "python"


def backend_name() -> str:
    return BACKEND


def native_available() -> bool:
    return _native is not None


class EmptySubset(ValueError):
    """A pipeline needs at least one stage."""


@dataclass(frozen=True)
class Plan:
    """Flattened pipeline: header, per-stage work, checks, difficulty."""

    header_bytes: bytes
    threshold: int
    threshold_bytes: bytes
    coupled: bool
    problem_ids: tuple[bytes, ...]
    is_user: tuple[bool, ...]
    reps: array  # 'q', per stage
    win_from: array  # 'i'
    win_to: array  # 'i'
    targets_blob: bytes  # packed target bits, concatenated
    target_off: array  # 'i', len n+1
    # per-pass int-comparison forms for the Python runner
    shifts: tuple[int, ...]
    masks: tuple[int, ...]
    target_ints: tuple[int, ...]

    @property
    def stage_count(self) -> int:
        return len(self.problem_ids)

    @property
    def hashes_per_pass(self) -> int:
        """One seed hash plus every stage's iterated hashes."""
        return 1 + sum(self.reps)

    @property
    def user_hashes_per_pass(self) -> int:
        return sum(r for r, u in zip(self.reps, self.is_user) if u)

    @property
    def filler_hashes_per_pass(self) -> int:
        return sum(r for r, u in zip(self.reps, self.is_user) if not u)


def compile_plan(
    subset: Subset | Sequence[Problem],
    header_bytes: bytes,
    difficulty: int,
    coupled: bool = False,
) -> Plan:
    """Freeze a subset into a Plan. One problem per stage, subset order."""
    if isinstance(subset, Subset):
        problems: Sequence[Problem] = subset.problems
        is_user = subset.is_user
    else:
        problems = tuple(subset)
        is_user = (True,) * len(problems)
    if not problems:
        raise EmptySubset("pipeline needs at least one problem")
    if not (0 <= difficulty <= MAX_THRESHOLD):
        raise ValueError(f"difficulty {difficulty:#x} out of range")
    ids = tuple(p.problem_id for p in problems)
    if len(set(ids)) != len(ids):
        raise ValueError("subset contains duplicate problems")
    reps = array("q")
    win_from = array("i")
    win_to = array("i")
    target_off = array("i", [0])
    blob = bytearray()
    shifts, masks, targets = [], [], []
    for p in problems:
        if p.window.width == 0:
            raise ValueError("width-0 problem cannot be evaluated")
        if p.reps < 1:
            raise ValueError("problem reps must be >= 1")
        reps.append(p.reps)
        win_from.append(p.window.from_bit)
        win_to.append(p.window.to_bit)
        blob += pack_bits(p.target)
        target_off.append(len(blob))
        shifts.append(DIGEST_BITS - p.window.to_bit)
        masks.append((1 << p.window.width) - 1)
        targets.append(p.target_int)
    return Plan(
        header_bytes=header_bytes,
        threshold=difficulty,
        threshold_bytes=difficulty.to_bytes(32, "big"),
        coupled=coupled,
        problem_ids=ids,
        is_user=tuple(is_user),
        reps=reps,
        win_from=win_from,
        win_to=win_to,
        targets_blob=bytes(blob),
        target_off=target_off,
        shifts=tuple(shifts),
        masks=tuple(masks),
        target_ints=tuple(targets),
    )


@dataclass(frozen=True)
class RunOutcome:
    """Result of sweeping a nonce range through a Plan.

    attempts: passes actually executed (== requested unless stopped early).
    blocks: attempt indices whose final digest met the block condition.
    solves: (attempt index, stage index) pairs, in execution order.
    """

    attempts: int
    blocks: tuple[int, ...]
    solves: tuple[tuple[int, int], ...]

    @property
    def block_index(self) -> int | None:
        return self.blocks[0] if self.blocks else None


def nonce_bytes(prefix: bytes, counter: int) -> bytes:
    """Seed for attempt ``counter``: 24-byte prefix + 8-byte BE counter."""
    if len(prefix) != NONCE_PREFIX_SIZE:
        raise ValueError(f"nonce prefix must be {NONCE_PREFIX_SIZE} bytes")
    return prefix + counter.to_bytes(8, "big")


def run_attempts_python(
    plan: Plan,
    prefix: bytes,
    start: int,
    count: int,
    stop_on_block: bool = True,
) -> RunOutcome:
    h = hashlib.sha256
    header = plan.header_bytes
    stages = list(zip(plan.reps, plan.shifts, plan.masks, plan.target_ints))
    threshold = plan.threshold
    coupled = plan.coupled
    solves: list[tuple[int, int]] = []
    blocks: list[int] = []
    attempts = 0
    for i in range(count):
        digest = h(header + nonce_bytes(prefix, start + i)).digest()
        solved_here = False
        value = 0
        for s, (reps, shift, mask, target) in enumerate(stages):
            for _ in range(reps):
                digest = h(digest).digest()
            value = int.from_bytes(digest, "big")
            if (value >> shift) & mask == target:
                solves.append((i, s))
                solved_here = True
        attempts = i + 1
        if value <= threshold or (coupled and solved_here):
            blocks.append(i)
            if stop_on_block:
                break
    return RunOutcome(attempts, tuple(blocks), tuple(solves))


def run_attempts_native(
    plan: Plan,
    prefix: bytes,
    start: int,
    count: int,
    stop_on_block: bool = True,
) -> RunOutcome:
    if _native is None:
        raise RuntimeError("compiled kernel is not available")
    attempts, blocks, solves = _native.run_attempts(
        plan.header_bytes,
        plan.threshold_bytes,
        prefix,
        start,
        count,
        plan.reps,
        plan.win_from,
        plan.win_to,
        plan.targets_blob,
        plan.target_off,
        plan.coupled,
        stop_on_block,
    )
    return RunOutcome(attempts, tuple(blocks), tuple(solves))


def run_attempts(
    plan: Plan,
    prefix: bytes,
    start: int,
    count: int,
    stop_on_block: bool = True,
) -> RunOutcome:
    """Run ``count`` passes with the selected backend.

    Stops after the first block-qualifying pass when ``stop_on_block`` (the
    qualifying pass itself is included in ``attempts``); otherwise records
    every qualifying pass and runs the full range.
    """
    if len(prefix) != NONCE_PREFIX_SIZE:
        raise ValueError(f"nonce prefix must be {NONCE_PREFIX_SIZE} bytes")
    if count < 0:
        raise ValueError("count must be >= 0")
    if start < 0 or start + count > 1 << 64:
        raise ValueError("counter range must fit in 64 bits")
    if _active is not None:
        return run_attempts_native(plan, prefix, start, count, stop_on_block)
    return run_attempts_python(plan, prefix, start, count, stop_on_block)
