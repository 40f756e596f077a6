"""Mining objectives: uploaded problems, fillers, scoring, subset selection.

A problem asks for a seed whose iterated hash lands on a target bit pattern:
``trim(sha256^reps(state), window) == target``. Its identity is the hash of
the canonical encoding (prize excluded, so re-funding an identical problem
does not mint a new identity). Filler problems are synthesized from the
evaluation key so that a miner can always stretch a subset to the exact
score budget without help from uploaders.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .hashing import BitWindow, DIGEST_BITS, pack_bits, sha256, unpack_bits

#: Reserved uploader key for synthesized fillers; never a funded account.
SYSTEM_KEY = b"\x00" * 32

#: Nodes explored by the exact-fill search before falling back to a greedy
#: prefix; keeps adversarially shaped active sets from stalling selection.
_EXACT_FILL_NODE_CAP = 100_000


class ProblemRejected(ValueError):
    """A problem failed admission; ``reason`` is a stable machine name."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class BudgetUnreachable(RuntimeError):
    """Selection could not hit the score budget exactly.

    Cannot occur with score-1 fillers available; kept as a guard against
    misconfiguration.
    """


@dataclass(frozen=True)
class Problem:
    reps: int
    window: BitWindow
    target: str  # bit string, len == window.width
    prize: int
    uploader: bytes

    def encode(self) -> bytes:
        """Canonical identity encoding. Prize is deliberately excluded."""
        return (
            self.reps.to_bytes(8, "big")
            + self.window.encode()
            + pack_bits(self.target)
            + self.uploader
        )

    @property
    def problem_id(self) -> bytes:
        pid = self.__dict__.get("_pid")
        if pid is None:
            pid = sha256(self.encode())
            object.__setattr__(self, "_pid", pid)
        return pid

    @property
    def score(self) -> int:
        """Work added to every pipeline pass that includes this problem."""
        return self.reps

    @property
    def target_int(self) -> int:
        return int(self.target, 2) if self.target else 0


def validate_problem(problem: Problem, min_prize: int = 0) -> None:
    """Admission checks for an uploaded problem.

    Raises ProblemRejected with one of: ZeroWidthWindow,
    TargetLengthMismatch, ZeroReps, PrizeBelowMinimum.
    """
    if problem.window.width == 0:
        raise ProblemRejected("ZeroWidthWindow", "window selects no bits")
    if len(problem.target) != problem.window.width or any(
        c not in "01" for c in problem.target
    ):
        raise ProblemRejected(
            "TargetLengthMismatch",
            f"target has {len(problem.target)} bits, window wants "
            f"{problem.window.width}",
        )
    if problem.reps < 1:
        raise ProblemRejected("ZeroReps", "iterated hash needs reps >= 1")
    if problem.prize < min_prize:
        raise ProblemRejected(
            "PrizeBelowMinimum", f"prize {problem.prize} < minimum {min_prize}"
        )
    if len(problem.uploader) != 32:
        raise ProblemRejected("BadUploaderKey", "uploader key must be 32 bytes")


def solve_probability(problem: Problem) -> float:
    """Chance a uniform digest matches the target: 2**-width."""
    return 2.0 ** -problem.window.width


def make_filler(ek: bytes, index: int) -> Problem:
    """Deterministic budget padding derived from the evaluation key.

    Full-width target -> practically unsolvable, so fillers carry no prize
    and are never claimable in practice. Unpredictable before the tip is
    known, which stops miners from precomputing filler work.
    """
    digest = sha256(ek + index.to_bytes(8, "big"))
    return Problem(
        reps=1,
        window=BitWindow(0, DIGEST_BITS),
        target=unpack_bits(digest, DIGEST_BITS),
        prize=0,
        uploader=SYSTEM_KEY,
    )


@dataclass(frozen=True)
class SelectionPolicy:
    """How a miner fills its score budget from the active set.

    kind: "fee-priority" (prize-per-score descending, exact-fill backtrack)
    or "uniform-random" (seeded shuffle, first-fit).
    min_prize ignores dust problems below the miner's floor.
    prefer_uploader front-loads that uploader's problems before the rest.
    """

    kind: str = "fee-priority"
    seed: int = 0
    min_prize: int = 0
    prefer_uploader: bytes | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("fee-priority", "uniform-random"):
            raise ValueError(f"unknown selection policy {self.kind!r}")


@dataclass(frozen=True)
class Subset:
    """Ordered problem subset whose scores sum exactly to the budget."""

    problems: tuple[Problem, ...]
    is_user: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.problems) != len(self.is_user):
            raise ValueError("is_user length must match problems")

    @property
    def ids(self) -> tuple[bytes, ...]:
        return tuple(p.problem_id for p in self.problems)

    @property
    def score(self) -> int:
        return sum(p.score for p in self.problems)

    @property
    def user_count(self) -> int:
        return sum(self.is_user)

    def __iter__(self):
        return iter(self.problems)

    def __len__(self) -> int:
        return len(self.problems)


def _exact_fill(ordered: Sequence[Problem], budget: int) -> list[Problem] | None:
    """First exact-sum combination in greedy (take-first) order, or None."""
    chosen: list[Problem] = []
    nodes = 0

    def walk(i: int, remaining: int) -> bool:
        nonlocal nodes
        nodes += 1
        if remaining == 0:
            return True
        if i == len(ordered) or nodes > _EXACT_FILL_NODE_CAP:
            return False
        p = ordered[i]
        if p.score <= remaining:
            chosen.append(p)
            if walk(i + 1, remaining - p.score):
                return True
            chosen.pop()
        return walk(i + 1, remaining)

    return list(chosen) if walk(0, budget) else None


def _greedy_prefix(ordered: Sequence[Problem], budget: int) -> list[Problem]:
    chosen: list[Problem] = []
    remaining = budget
    for p in ordered:
        if p.score <= remaining:
            chosen.append(p)
            remaining -= p.score
    return chosen


def select_subset(
    active: Iterable[Problem],
    budget: int,
    policy: SelectionPolicy,
    ek: bytes,
) -> Subset:
    """Pick an ordered subset with total score exactly ``budget``.

    Deterministic in (active set, budget, policy, ek). Fillers derived from
    ``ek`` pad any shortfall one score point at a time.
    """
    if budget < 1:
        raise ValueError(f"score budget must be >= 1, got {budget}")
    candidates = [
        p for p in active if p.prize >= policy.min_prize and p.score <= budget
    ]

    if policy.kind == "fee-priority":
        candidates.sort(key=lambda p: (-Fraction(p.prize, p.score), p.problem_id))
    else:
        rng = random.Random(
            int.from_bytes(sha256(ek + policy.seed.to_bytes(8, "big", signed=False)), "big")
        )
        candidates.sort(key=lambda p: p.problem_id)
        rng.shuffle(candidates)

    if policy.prefer_uploader is not None:
        own = [p for p in candidates if p.uploader == policy.prefer_uploader]
        rest = [p for p in candidates if p.uploader != policy.prefer_uploader]
        candidates = own + rest

    chosen = _exact_fill(candidates, budget)
    if chosen is None:
        chosen = _greedy_prefix(candidates, budget)

    total = sum(p.score for p in chosen)
    fillers: list[Problem] = []
    index = 0
    while total < budget:
        fillers.append(make_filler(ek, index))
        index += 1
        total += 1
    if total != budget:
        raise BudgetUnreachable(f"reached score {total}, wanted {budget}")
    problems = tuple(chosen) + tuple(fillers)
    flags = (True,) * len(chosen) + (False,) * len(fillers)
    return Subset(problems, flags)


def refresh_active(
    uploaded: Mapping[bytes, Problem],
    solved: Iterable[bytes],
    pending: Iterable[bytes] = (),
) -> list[Problem]:
    """Active problems: uploaded, not yet claimed, not pending in-block.

    Sorted by id for a canonical order. A solved-but-unclaimed problem is
    still active: the prize stays in escrow until some block carries a
    claim, so other miners may keep working it.
    """
    excluded = set(solved) | set(pending)
    return [
        p
        for pid, p in sorted(uploaded.items())
        if pid not in excluded
    ]
