"""Wasteless proof-of-work: mining that solves uploaded problems.

Miners sweep seeds through a pipeline of iterated-hash stages committed in
the block header; the final digest decides block finding, intermediate
digests decide whether somebody's uploaded preimage problem got solved.
Block security and problem solving share the same hashes but stay
statistically independent (outside the deliberately insecure
"naive-coupled" simulation mode).
"""

from .hashing import (
    DIGEST_BITS,
    DIGEST_SIZE,
    MAX_THRESHOLD,
    BitWindow,
    digest_int,
    iterate_hash,
    meets_difficulty,
    pack_bits,
    sha256,
    trim_bits,
    unpack_bits,
)
from .ledger import (
    EMPTY_TX_ROOT,
    Block,
    BlockInvalid,
    Chain,
    ChainParams,
    ClaimInvalid,
    ProblemUpload,
    SolutionClaim,
    Transfer,
    TxInvalid,
    active_set_at,
    block_hash,
    fork_choice,
    state_hash,
    tx_hash,
    tx_root_of,
)
from .merkle import EmptyLeaves, merkle_root
from .objectives import (
    SYSTEM_KEY,
    BudgetUnreachable,
    Problem,
    ProblemRejected,
    SelectionPolicy,
    Subset,
    make_filler,
    refresh_active,
    select_subset,
    solve_probability,
    validate_problem,
)
from .pipeline import (
    EmptySubset,
    backend_name,
    compile_plan,
    native_available,
    nonce_bytes,
    run_attempts,
)
from .protocol import (
    BlockEvent,
    CounterSeedSource,
    EfficiencyReport,
    EvalResult,
    HashCounters,
    HeaderDraft,
    MiningStopped,
    SolveEvent,
    VerificationError,
    efficiency_report,
    eval_key,
    evaluate,
    mine,
    subset_root,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "DIGEST_BITS",
    "DIGEST_SIZE",
    "EMPTY_TX_ROOT",
    "MAX_THRESHOLD",
    "SYSTEM_KEY",
    "BitWindow",
    "Block",
    "BlockEvent",
    "BlockInvalid",
    "BudgetUnreachable",
    "Chain",
    "ChainParams",
    "ClaimInvalid",
    "CounterSeedSource",
    "EfficiencyReport",
    "EmptyLeaves",
    "EmptySubset",
    "EvalResult",
    "HashCounters",
    "HeaderDraft",
    "MiningStopped",
    "Problem",
    "ProblemRejected",
    "ProblemUpload",
    "SelectionPolicy",
    "SolutionClaim",
    "SolveEvent",
    "Subset",
    "Transfer",
    "TxInvalid",
    "VerificationError",
    "active_set_at",
    "backend_name",
    "block_hash",
    "compile_plan",
    "digest_int",
    "efficiency_report",
    "eval_key",
    "evaluate",
    "fork_choice",
    "iterate_hash",
    "make_filler",
    "meets_difficulty",
    "merkle_root",
    "mine",
    "native_available",
    "nonce_bytes",
    "pack_bits",
    "refresh_active",
    "run_attempts",
    "select_subset",
    "sha256",
    "solve_probability",
    "state_hash",
    "subset_root",
    "trim_bits",
    "tx_hash",
    "tx_root_of",
    "unpack_bits",
    "validate_problem",
    "verify",
]
