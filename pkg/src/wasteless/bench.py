"""Throughput comparison of the two pipeline runners.

Builds a representative plan (a few user problems plus fillers at a fixed
score budget) and sweeps the same nonce range through the compiled kernel
and the pure-Python runner, reporting passes/s, ns per hash invocation,
and the speedup. The outcome equality check doubles as a quick parity
probe on whatever machine this runs.
"""

from __future__ import annotations

import time
from typing import Any

from .hashing import BitWindow, sha256, unpack_bits
from .objectives import Problem, Subset, make_filler
from .pipeline import (
    compile_plan,
    native_available,
    run_attempts_native,
    run_attempts_python,
)
from .protocol import HeaderDraft


def _sample_plan(budget: int = 4):
    header = HeaderDraft(
        prev=sha256(b"bench-parent"),
        height=1,
        miner=sha256(b"bench-miner"),
        tx_root=b"\x00" * 32,
        s_root=sha256(b"bench-root"),
    )
    uploader = sha256(b"bench-uploader")
    problems = [
        Problem(1, BitWindow(0, 8), unpack_bits(sha256(b"t1"), 8), 10, uploader),
        Problem(2, BitWindow(100, 112), unpack_bits(sha256(b"t2"), 12), 20, uploader),
    ]
    used = sum(p.score for p in problems)
    fillers = [make_filler(header.prev, i) for i in range(budget - used)]
    subset = Subset(
        tuple(problems) + tuple(fillers),
        (True,) * len(problems) + (False,) * len(fillers),
    )
    # difficulty 1: blocks essentially never, so the sweep runs full length
    return compile_plan(subset, header.encode(), 1)


def run_benchmark(passes: int = 50_000, budget: int = 4) -> dict[str, Any]:
    plan = _sample_plan(budget)
    prefix = sha256(b"bench-nonce")[:24]
    hashes = plan.hashes_per_pass * passes
    results: dict[str, Any] = {
        "passes": passes,
        "score_budget": budget,
        "hashes_per_pass": plan.hashes_per_pass,
        "backends": {},
    }
    outcomes = {}
    for name, runner in (
        ("python", run_attempts_python),
        ("native", run_attempts_native if native_available() else None),
    ):
        if runner is None:
            continue
        t0 = time.perf_counter()
        out = runner(plan, prefix, 0, passes, stop_on_block=False)
        dt = time.perf_counter() - t0
        outcomes[name] = out
        results["backends"][name] = {
            "seconds": round(dt, 4),
            "passes_per_second": round(passes / dt, 1),
            "ns_per_hash": round(dt / hashes * 1e9, 1),
        }
    if len(outcomes) == 2:
        results["outcomes_match"] = outcomes["python"] == outcomes["native"]
        results["speedup"] = round(
            results["backends"]["python"]["seconds"]
            / results["backends"]["native"]["seconds"],
            2,
        )
    return results
