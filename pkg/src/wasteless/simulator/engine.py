"""Discrete-round multi-miner simulation.

Time advances in rounds; each round interleaves every miner's pipeline
passes into global slots via smooth weighted round-robin over eval rates,
so a miner with twice the rate gets twice the slots, spread evenly.
Within a round miners see nothing of each other: blocks found this round
are stored but stay unpublished until the round ends, when they are
revealed in slot order (earliest slot wins height ties), claims for this
round's solves join the pool, and every honest miner adopts the fork
choice winner. A block finder does keep extending its own find mid-round.

Strategies: "honest" mines the public tip and claims every solve;
"private-chain" keeps its blocks withheld until its private chain is
strictly longer than the public one (double-spend behavior);
"naive-objective" fills its subset with its own problems first and never
claims them, keeping them active forever — profitable only in the
insecure naive-coupled mode.

Everything is deterministic in the config: per-miner nonce streams are
counter-based, iteration orders are fixed, and no wall-clock values leak
into events or reports.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Any

from ..hashing import sha256
from ..ledger import (
    Block,
    Chain,
    ProblemUpload,
    SolutionClaim,
    Transaction,
    TxInvalid,
    state_hash,
    tx_hash,
    tx_root_of,
)
from ..objectives import SelectionPolicy, Subset, refresh_active, select_subset
from ..pipeline import Plan, compile_plan, nonce_bytes, run_attempts
from ..protocol import (
    HashCounters,
    HeaderDraft,
    efficiency_report,
    evaluate,
    subset_root,
)
from .config import MinerSpec, SimConfig
from .report import SimReport


def smooth_wrr(rates: list[int]) -> list[int]:
    """Smooth weighted round-robin slot order for one round."""
    total = sum(rates)
    credits = [0] * len(rates)
    order: list[int] = []
    for _ in range(total):
        for i, r in enumerate(rates):
            credits[i] += r
        best = max(range(len(rates)), key=lambda i: (credits[i], -i))
        credits[best] -= total
        order.append(best)
    return order


class TxPool:
    """Arrival-ordered pending transactions, one live claim per problem."""

    def __init__(self) -> None:
        self._recs: dict[bytes, tuple[Transaction, tuple]] = {}
        self._claim_for: dict[bytes, bytes] = {}
        self.version = 0

    def add(self, h: bytes, tx: Transaction, arrival: tuple) -> bool:
        if h in self._recs:
            return False
        if isinstance(tx, SolutionClaim):
            if tx.problem_id in self._claim_for:
                return False  # an earlier claim already races for this prize
            self._claim_for[tx.problem_id] = h
        self._recs[h] = (tx, arrival)
        self.version += 1
        return True

    def remove(self, h: bytes) -> None:
        rec = self._recs.pop(h, None)
        if rec is None:
            return
        tx = rec[0]
        if isinstance(tx, SolutionClaim) and self._claim_for.get(tx.problem_id) == h:
            del self._claim_for[tx.problem_id]
        self.version += 1

    def ordered(self) -> list[tuple[bytes, Transaction]]:
        return [
            (h, tx)
            for h, (tx, _) in sorted(self._recs.items(), key=lambda kv: kv[1][1])
        ]

    def snapshot(self) -> list[tuple[bytes, Transaction, tuple]]:
        return [(h, tx, arr) for h, (tx, arr) in self._recs.items()]

    def __len__(self) -> int:
        return len(self._recs)


@dataclass(frozen=True)
class _Template:
    """One miner's frozen block candidate for a given tip and pool state."""

    header: HeaderDraft
    subset: Subset
    txs: tuple[Transaction, ...]
    plan: Plan
    user_pids: tuple[bytes, ...]


@dataclass(frozen=True)
class _Solve:
    round: int
    slot: int
    miner: int
    problem_id: bytes
    stage: int
    seed: bytes
    template: _Template
    passes_at: int  # network-wide passes over this problem, inclusive


class _MinerState:
    def __init__(self, spec: MinerSpec, prefix: bytes, tip: bytes):
        self.spec = spec
        self.prefix = prefix
        self.counter = 0
        self.local_tip = tip
        self.tmpl: _Template | None = None
        self.tmpl_key: tuple | None = None

    def policy(self) -> SelectionPolicy:
        if self.spec.strategy == "naive-objective":
            return SelectionPolicy(
                kind=self.spec.policy.kind,
                seed=self.spec.policy.seed,
                min_prize=self.spec.policy.min_prize,
                prefer_uploader=self.spec.key,
            )
        return self.spec.policy


class Engine:
    def __init__(self, config: SimConfig):
        self.config = config
        self.params = config.params
        self.chain = Chain(self.params, config.balances)
        self.pool = TxPool()
        self.names = {key: name for name, key in config.aliases.items()}
        rates = [m.eval_rate for m in config.miners]
        schedule = smooth_wrr(rates)
        self._slots = [
            [s for s, who in enumerate(schedule) if who == i]
            for i in range(len(config.miners))
        ]
        self._total_slots = len(schedule)
        seed8 = config.seed.to_bytes(8, "big")
        self.miners = [
            _MinerState(m, sha256(seed8 + m.key)[:24], self.chain.genesis_hash)
            for m in config.miners
        ]
        self._uploads_by_round: dict[int, list] = {}
        for up in config.uploads:
            self._uploads_by_round.setdefault(up.round, []).append(up)

        self.counters = HashCounters()
        self.executions = [0] * len(config.miners)
        self.blocks_found = [0] * len(config.miners)
        self.problem_passes: dict[bytes, int] = {}
        self.first_solve: dict[bytes, dict] = {}
        self.events: list[dict[str, Any]] = []
        self.rounds_run = 0

        self._arrival: dict[bytes, tuple] = {}
        self._seq_counter = 0
        self._main: list[bytes] = []  # main-chain hashes by height-1
        self._round_events: list[tuple[tuple, dict]] = []
        self._solve_recs: list[_Solve] = []
        self._blocks_this_round: list[tuple[int, int, bytes, bool]] = []

    # -- plumbing ---------------------------------------------------------

    def _seq(self) -> int:
        self._seq_counter += 1
        return self._seq_counter

    def _name(self, key: bytes) -> str:
        return self.names.get(key, key.hex()[:12])

    def _event(self, seq: tuple, **fields: Any) -> None:
        self._round_events.append((seq, fields))

    def _add_tx(self, tx: Transaction, arrival: tuple) -> bool:
        h = tx_hash(tx)
        self._arrival.setdefault(h, arrival)
        return self.pool.add(h, tx, self._arrival[h])

    # -- per-round flow ---------------------------------------------------

    def run(self, rounds: int | None = None) -> "Engine":
        for _ in range(self.config.rounds if rounds is None else rounds):
            self._round(self.rounds_run)
            self.rounds_run += 1
        return self

    def _round(self, r: int) -> None:
        self._round_events = []
        self._solve_recs = []
        self._blocks_this_round = []
        for up in self._uploads_by_round.get(r, ()):
            tx = ProblemUpload(up.problem, up.fee)
            if self._add_tx(tx, (r, -1, self._seq())):
                self._event(
                    (-1, 0),
                    event="problem-queued",
                    round=r,
                    problem=up.problem.problem_id.hex(),
                    uploader=self._name(up.problem.uploader),
                    prize=up.problem.prize,
                )
        for mi, miner in enumerate(self.miners):
            self._mine_round(r, mi, miner)
        self._round_end(r)

    def _template(self, miner: _MinerState) -> _Template:
        key = (miner.local_tip, self.pool.version)
        if miner.tmpl_key == key:
            assert miner.tmpl is not None
            return miner.tmpl
        state = self.chain.state_at(miner.local_tip)
        scratch = state.copy()
        txs: list[Transaction] = []
        for _, tx in self.pool.ordered():
            try:
                self.chain.apply_tx(tx, scratch, miner.local_tip)
            except TxInvalid:
                continue
            txs.append(tx)
        pending = {t.problem_id for t in txs if isinstance(t, SolutionClaim)}
        active = refresh_active(state.uploaded, state.solved, pending)
        subset = select_subset(
            active, self.params.score_budget, miner.policy(), miner.local_tip
        )
        header = HeaderDraft(
            prev=miner.local_tip,
            height=state.height + 1,
            miner=miner.spec.key,
            tx_root=tx_root_of(txs),
            s_root=subset_root(list(subset.ids)),
        )
        plan = compile_plan(
            subset, header.encode(), self.params.difficulty, self.params.coupled
        )
        tmpl = _Template(
            header=header,
            subset=subset,
            txs=tuple(txs),
            plan=plan,
            user_pids=tuple(
                pid for pid, user in zip(plan.problem_ids, plan.is_user) if user
            ),
        )
        miner.tmpl, miner.tmpl_key = tmpl, key
        return tmpl

    def _mine_round(self, r: int, mi: int, miner: _MinerState) -> None:
        rate = miner.spec.eval_rate
        slots = self._slots[mi]
        done = 0
        while done < rate:
            tmpl = self._template(miner)
            out = run_attempts(
                tmpl.plan, miner.prefix, miner.counter, rate - done, stop_on_block=True
            )
            base_counter = miner.counter
            miner.counter += out.attempts
            self.executions[mi] += out.attempts
            self.counters.add_passes(tmpl.plan, out.attempts)
            for pid in tmpl.user_pids:
                self.problem_passes[pid] = (
                    self.problem_passes.get(pid, 0) + out.attempts
                )
            for local_i, stage in out.solves:
                if not tmpl.plan.is_user[stage]:
                    continue  # filler solves are not claimable
                pid = tmpl.plan.problem_ids[stage]
                self._solve_recs.append(
                    _Solve(
                        round=r,
                        slot=slots[done + local_i],
                        miner=mi,
                        problem_id=pid,
                        stage=stage,
                        seed=nonce_bytes(miner.prefix, base_counter + local_i),
                        template=tmpl,
                        passes_at=self.problem_passes[pid]
                        - (out.attempts - (local_i + 1)),
                    )
                )
            if out.block_index is not None:
                local_i = out.block_index
                slot = slots[done + local_i]
                seed = nonce_bytes(miner.prefix, base_counter + local_i)
                result = evaluate(
                    tmpl.subset,
                    tmpl.header,
                    seed,
                    self.params.difficulty,
                    coupled=self.params.coupled,
                )
                block = Block(
                    tmpl.header, seed, tmpl.subset.ids, tmpl.txs, result
                )
                h = self.chain.add_block(block, withhold=True)
                self.blocks_found[mi] += 1
                private = miner.spec.strategy == "private-chain"
                self._blocks_this_round.append((slot, mi, h, private))
                self._event(
                    (slot, 1),
                    event="block-found",
                    round=r,
                    slot=slot,
                    miner=miner.spec.name,
                    height=block.header.height,
                    block=h.hex(),
                    txs=len(block.txs),
                    withheld=private,
                )
                miner.local_tip = h  # keep extending the own find mid-round
            done += out.attempts

    def _round_end(self, r: int) -> None:
        end_seq = (self._total_slots, 0)
        old_tip = self.chain.tip_hash

        # reveal this round's finds, earliest slot first
        for slot, _, h, private in sorted(self._blocks_this_round):
            if not private:
                self.chain.publish(h)

        # private miners release once strictly ahead of the public chain
        for miner in self.miners:
            if miner.spec.strategy != "private-chain":
                continue
            if self.chain.height_of(miner.local_tip) > self.chain.height_of(
                self.chain.tip_hash
            ):
                self.chain.publish(miner.local_tip)
                self._event(
                    end_seq,
                    event="release",
                    round=r,
                    miner=miner.spec.name,
                    tip=miner.local_tip.hex(),
                    height=self.chain.height_of(miner.local_tip),
                )

        popped = self._sync_main()
        if popped:
            self._event(
                end_seq,
                event="reorg",
                round=r,
                depth=popped,
                from_block=old_tip.hex(),
                to_block=self.chain.tip_hash.hex(),
            )

        # queue claims for this round's solves
        for rec in sorted(self._solve_recs, key=lambda s: (s.slot, s.miner)):
            miner = self.miners[rec.miner]
            problem = rec.template.subset.problems[rec.stage]
            suppressed = (
                miner.spec.strategy == "naive-objective"
                and problem.uploader == miner.spec.key
            )
            queued = False
            if not suppressed:
                claim = SolutionClaim(
                    problem_id=rec.problem_id,
                    snapshot=rec.template.header,
                    subset_ids=rec.template.subset.ids,
                    seed=rec.seed,
                    stage_index=rec.stage,
                    claimant=miner.spec.key,
                    fee=min(self.config.claim_fee, problem.prize),
                )
                queued = self._add_tx(claim, (r, rec.slot, self._seq()))
            self.first_solve.setdefault(
                rec.problem_id,
                {
                    "round": r,
                    "slot": rec.slot,
                    "miner": miner.spec.name,
                    "passes": rec.passes_at,
                },
            )
            self._event(
                (rec.slot, 0),
                event="solve",
                round=r,
                slot=rec.slot,
                miner=miner.spec.name,
                problem=rec.problem_id.hex(),
                stage=rec.stage,
                claim_queued=queued,
            )

        # drop claims that can never be included on the new tip
        tip_state = self.chain.tip_state
        for h, tx, _ in self.pool.snapshot():
            if not isinstance(tx, SolutionClaim):
                continue
            if tx.problem_id in tip_state.solved or not self.chain.is_recent_ancestor(
                self.chain.tip_hash,
                tx.snapshot.prev,
                self.params.freshness_window,
            ):
                self.pool.remove(h)

        # zero-latency broadcast
        tip = self.chain.tip_hash
        for miner in self.miners:
            if miner.spec.strategy == "private-chain":
                if self.chain.height_of(tip) > self.chain.height_of(miner.local_tip):
                    miner.local_tip = tip  # attack branch fell behind; reset
            else:
                miner.local_tip = tip
        if tip != old_tip:
            self._event(
                end_seq,
                event="tip",
                round=r,
                height=self.chain.height_of(tip),
                block=tip.hex(),
            )

        self._round_events.sort(key=lambda kv: kv[0])
        self.events.extend(fields for _, fields in self._round_events)

    def _sync_main(self) -> int:
        """Align the cached main path and tx pool with the fork choice.

        Returns the number of blocks popped (reorg depth). Transactions in
        popped blocks return to the pool; transactions in pushed blocks
        leave it.
        """
        new_tip = self.chain.tip_hash
        if self._main and self._main[-1] == new_tip:
            return 0
        if new_tip == self.chain.genesis_hash and not self._main:
            return 0
        addition: list[bytes] = []
        h = new_tip
        while h != self.chain.genesis_hash:
            rec = self.chain.record(h)
            idx = rec.height - 1
            if idx < len(self._main) and self._main[idx] == h:
                break
            addition.append(h)
            h = rec.parent
        join_height = 0 if h == self.chain.genesis_hash else self.chain.height_of(h)
        popped = 0
        while len(self._main) > join_height:
            gone = self._main.pop()
            popped += 1
            for tx in self.chain.record(gone).block.txs:
                th = tx_hash(tx)
                self.pool.add(th, tx, self._arrival.get(th, (0, -1, 0)))
        for h2 in reversed(addition):
            self._main.append(h2)
            for tx in self.chain.record(h2).block.txs:
                self.pool.remove(tx_hash(tx))
        return popped

    # -- reporting --------------------------------------------------------

    def report(self, experiment: str) -> SimReport:
        chain = self.chain
        path = chain.main_chain()
        height = len(path)
        blocks_by: Counter = Counter()
        claims_by: Counter = Counter()
        prizes_by: Counter = Counter()
        chain_info: dict[bytes, dict] = {}
        for idx, h in enumerate(path, start=1):
            blk = chain.record(h).block
            blocks_by[blk.header.miner] += 1
            for tx in blk.txs:
                if isinstance(tx, ProblemUpload):
                    chain_info.setdefault(tx.problem.problem_id, {})[
                        "upload_height"
                    ] = idx
                elif isinstance(tx, SolutionClaim):
                    info = chain_info.setdefault(tx.problem_id, {})
                    info["claim_height"] = idx
                    info["claimant"] = self._name(tx.claimant)
                    prize = chain.state_at(h).uploaded[tx.problem_id].prize
                    claims_by[tx.claimant] += 1
                    prizes_by[tx.claimant] += prize - tx.fee

        total_rate = sum(m.spec.eval_rate for m in self.miners)
        rows = []
        for mi, miner in enumerate(self.miners):
            key = miner.spec.key
            mined = blocks_by.get(key, 0)
            rows.append(
                {
                    "miner": miner.spec.name,
                    "strategy": miner.spec.strategy,
                    "eval_rate": miner.spec.eval_rate,
                    "eval_share": miner.spec.eval_rate / total_rate,
                    "eval_executions": self.executions[mi],
                    "blocks": mined,
                    "block_share": mined / height if height else 0.0,
                    "orphaned": self.blocks_found[mi] - mined,
                    "solutions_claimed": claims_by.get(key, 0),
                    "prizes_earned": prizes_by.get(key, 0),
                }
            )

        eff = efficiency_report(self.counters)
        problems = []
        for up in self.config.uploads:
            pid = up.problem.problem_id
            entry = {
                "problem": pid.hex(),
                "uploader": self._name(up.problem.uploader),
                "prize": up.problem.prize,
                "reps": up.problem.reps,
                "width": up.problem.window.width,
                "scheduled_round": up.round,
                "passes_total": self.problem_passes.get(pid, 0),
                "first_solve": self.first_solve.get(pid),
            }
            entry.update(chain_info.get(pid, {}))
            problems.append(entry)

        return SimReport(
            experiment=experiment,
            seed=self.config.seed,
            rounds=self.rounds_run,
            mode=self.params.mode,
            chain_height=height,
            state_hash=state_hash(chain.tip_state).hex(),
            miners=rows,
            efficiency={
                "seed_hashes": self.counters.seed,
                "user_stage_hashes": self.counters.user_stage,
                "filler_stage_hashes": self.counters.filler_stage,
                "total_hashes": self.counters.total,
                "useful_ratio": eff.ratio,
            },
            forks=len(chain.all_blocks()) - height,
            extras={"problems": problems},
        )
