"""Simulation configuration: parsing and validation.

Configs are plain JSON. Accounts are referred to by name; each name maps
to a deterministic 32-byte key so configs stay human-readable while the
chain only ever sees keys. Every parse failure raises ConfigError with a
JSON-path-ish location, which the CLI forwards as a structured error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from ..hashing import BitWindow, sha256
from ..ledger import ChainParams
from ..objectives import Problem, SelectionPolicy

STRATEGIES = ("honest", "private-chain", "naive-objective")


class ConfigError(Exception):
    def __init__(self, path: str, cause: str):
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {cause}")


def key_for(name: str) -> bytes:
    """Deterministic account key for a config-level name."""
    return sha256(b"account:" + name.encode())


@dataclass(frozen=True)
class MinerSpec:
    name: str
    key: bytes
    eval_rate: int  # pipeline passes per round
    strategy: str = "honest"
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)


@dataclass(frozen=True)
class ScheduledUpload:
    round: int
    problem: Problem
    fee: int


@dataclass(frozen=True)
class SimConfig:
    seed: int
    rounds: int
    params: ChainParams
    balances: dict[bytes, int]
    aliases: dict[str, bytes]
    miners: tuple[MinerSpec, ...]
    uploads: tuple[ScheduledUpload, ...]
    claim_fee: int = 0

    def with_mode(self, mode: str) -> "SimConfig":
        return replace(self, params=replace(self.params, mode=mode))


def _need(doc: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in doc:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return doc[key]


def _check_keys(doc: Mapping[str, Any], allowed: frozenset[str], path: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _int(value: Any, path: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(path, f"expected integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return value


def _difficulty(value: Any, path: str) -> int:
    if isinstance(value, str):
        try:
            value = int(value, 16)
        except ValueError:
            raise ConfigError(path, f"not a hex integer: {value!r}") from None
    return _int(value, path, minimum=1)


_CHAIN_KEYS = frozenset(
    {
        "difficulty",
        "score_budget",
        "block_reward",
        "freshness_window",
        "min_prize",
        "mode",
    }
)


def parse_chain_params(doc: Mapping[str, Any], path: str = "chain") -> ChainParams:
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected an object")
    _check_keys(doc, _CHAIN_KEYS, path)
    mode = doc.get("mode", "decoupled")
    if mode not in ("decoupled", "naive-coupled"):
        raise ConfigError(f"{path}.mode", f"unknown mode {mode!r}")
    try:
        return ChainParams(
            difficulty=_difficulty(_need(doc, "difficulty", path), f"{path}.difficulty"),
            score_budget=_int(_need(doc, "score_budget", path), f"{path}.score_budget", 1),
            block_reward=_int(doc.get("block_reward", 50), f"{path}.block_reward", 0),
            freshness_window=_int(
                doc.get("freshness_window", 100), f"{path}.freshness_window", 0
            ),
            min_prize=_int(doc.get("min_prize", 0), f"{path}.min_prize", 0),
            mode=mode,
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


_POLICY_KEYS = frozenset({"kind", "seed", "min_prize"})
_MINER_KEYS = frozenset({"name", "eval_rate", "strategy", "policy"})
_UPLOAD_KEYS = frozenset(
    {"round", "uploader", "reps", "window", "target", "prize", "fee"}
)


def _parse_policy(doc: Mapping[str, Any], path: str) -> SelectionPolicy:
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected an object")
    _check_keys(doc, _POLICY_KEYS, path)
    kind = doc.get("kind", "fee-priority")
    if kind not in ("fee-priority", "uniform-random"):
        raise ConfigError(f"{path}.kind", f"unknown policy {kind!r}")
    return SelectionPolicy(
        kind=kind,
        seed=_int(doc.get("seed", 0), f"{path}.seed", 0),
        min_prize=_int(doc.get("min_prize", 0), f"{path}.min_prize", 0),
    )


def _parse_miner(doc: Mapping[str, Any], path: str) -> MinerSpec:
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected an object")
    _check_keys(doc, _MINER_KEYS, path)
    name = _need(doc, "name", path)
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{path}.name", "must be a non-empty string")
    strategy = doc.get("strategy", "honest")
    if strategy not in STRATEGIES:
        raise ConfigError(f"{path}.strategy", f"unknown strategy {strategy!r}")
    return MinerSpec(
        name=name,
        key=key_for(name),
        eval_rate=_int(_need(doc, "eval_rate", path), f"{path}.eval_rate", 1),
        strategy=strategy,
        policy=_parse_policy(doc.get("policy", {}), f"{path}.policy"),
    )


def _parse_upload(doc: Mapping[str, Any], path: str) -> ScheduledUpload:
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected an object")
    _check_keys(doc, _UPLOAD_KEYS, path)
    uploader = _need(doc, "uploader", path)
    if not isinstance(uploader, str):
        raise ConfigError(f"{path}.uploader", "must be an account name")
    window = _need(doc, "window", path)
    if (
        not isinstance(window, (list, tuple))
        or len(window) != 2
        or not all(isinstance(v, int) for v in window)
    ):
        raise ConfigError(f"{path}.window", "expected [from_bit, to_bit]")
    try:
        bw = BitWindow(window[0], window[1])
    except ValueError as exc:
        raise ConfigError(f"{path}.window", str(exc)) from None
    target = _need(doc, "target", path)
    if not isinstance(target, str) or any(c not in "01" for c in target):
        raise ConfigError(f"{path}.target", "expected a '0'/'1' bit string")
    problem = Problem(
        reps=_int(_need(doc, "reps", path), f"{path}.reps", 1),
        window=bw,
        target=target,
        prize=_int(_need(doc, "prize", path), f"{path}.prize", 0),
        uploader=key_for(uploader),
    )
    return ScheduledUpload(
        round=_int(doc.get("round", 0), f"{path}.round", 0),
        problem=problem,
        fee=_int(doc.get("fee", 0), f"{path}.fee", 0),
    )


_SIM_KEYS = frozenset(
    {"seed", "rounds", "chain", "balances", "miners", "problems", "claim_fee"}
)


def parse_sim_config(doc: Mapping[str, Any]) -> SimConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("$", "top level must be an object")
    _check_keys(doc, _SIM_KEYS, "$")
    params = parse_chain_params(_need(doc, "chain", "$"))
    miners_doc = _need(doc, "miners", "$")
    if not isinstance(miners_doc, list) or not miners_doc:
        raise ConfigError("miners", "expected a non-empty array")
    miners = tuple(
        _parse_miner(m, f"miners[{i}]") for i, m in enumerate(miners_doc)
    )
    names = [m.name for m in miners]
    if len(set(names)) != len(names):
        raise ConfigError("miners", "miner names must be unique")

    balances_doc = doc.get("balances", {})
    if not isinstance(balances_doc, Mapping):
        raise ConfigError("balances", "expected an object")
    aliases = {name: key_for(name) for name in names}
    balances: dict[bytes, int] = {}
    for name, amount in balances_doc.items():
        aliases[name] = key_for(name)
        balances[key_for(name)] = _int(amount, f"balances.{name}", 0)

    uploads_doc = doc.get("problems", [])
    if not isinstance(uploads_doc, list):
        raise ConfigError("problems", "expected an array")
    uploads = tuple(
        _parse_upload(u, f"problems[{i}]") for i, u in enumerate(uploads_doc)
    )
    for i, up in enumerate(uploads):
        if up.problem.uploader not in balances:
            raise ConfigError(
                f"problems[{i}].uploader", "uploader has no funded balance"
            )

    return SimConfig(
        seed=_int(doc.get("seed", 0), "seed", 0),
        rounds=_int(_need(doc, "rounds", "$"), "rounds", 1),
        params=params,
        balances=balances,
        aliases=aliases,
        miners=miners,
        uploads=uploads,
        claim_fee=_int(doc.get("claim_fee", 0), "claim_fee", 0),
    )


@dataclass(frozen=True)
class DoubleSpendConfig:
    seed: int
    attacker_share: float
    confirmations: int
    trials: int
    cap_factor: int = 10


_DOUBLESPEND_KEYS = frozenset(
    {"seed", "attacker_share", "confirmations", "trials", "cap_factor"}
)


def parse_doublespend_config(doc: Mapping[str, Any]) -> DoubleSpendConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("$", "top level must be an object")
    _check_keys(doc, _DOUBLESPEND_KEYS, "$")
    share = _need(doc, "attacker_share", "$")
    if not isinstance(share, (int, float)) or isinstance(share, bool):
        raise ConfigError("attacker_share", "expected a number")
    if not 0.0 <= float(share) < 0.5:
        raise ConfigError("attacker_share", "must be in [0, 0.5)")
    return DoubleSpendConfig(
        seed=_int(doc.get("seed", 0), "seed", 0),
        attacker_share=float(share),
        confirmations=_int(_need(doc, "confirmations", "$"), "confirmations", 0),
        trials=_int(_need(doc, "trials", "$"), "trials", 1),
        cap_factor=_int(doc.get("cap_factor", 10), "cap_factor", 1),
    )


def load_json(path: str | Path, what: str = "config") -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("$", f"cannot read {what}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"{what} is not valid JSON: {exc}") from None
