"""Double-spend race analysis: closed-form success probability plus a
Monte Carlo estimator over the generative race model.

Model: the merchant waits for z confirmations. While those z blocks are
mined, an attacker with hash share q privately extends a fork; its head
start k is Poisson with mean z*q/p (p = 1-q). Afterwards the race is a
biased walk on the attacker's deficit d = z - k: each subsequent block is
the attacker's with probability q (deficit -1) or honest (deficit +1).
The attack succeeds when the deficit ever reaches zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_CHUNK = 100_000  # fixed chunk size keeps the RNG stream layout stable


def oracle_success_probability(q: float, z: int) -> float:
    """P(attacker ever catches up) = 1 - sum_{k<=z} P(k)(1 - (q/p)^(z-k))."""
    if not 0.0 <= q < 0.5:
        raise ValueError("attacker share must be in [0, 0.5)")
    if z < 0:
        raise ValueError("confirmations must be >= 0")
    if z == 0 or q == 0.5:
        return 1.0
    if q == 0.0:
        return 0.0
    p = 1.0 - q
    lam = z * q / p
    ratio = q / p
    poisson = math.exp(-lam)
    total = 0.0
    for k in range(z + 1):
        if k > 0:
            poisson *= lam / k
        total += poisson * (1.0 - ratio ** (z - k))
    return 1.0 - total


@dataclass(frozen=True)
class DoubleSpendOutcome:
    attacker_share: float
    confirmations: int
    trials: int
    successes: int
    oracle: float
    sigma: float  # binomial std of the estimator under the oracle rate
    truncation_bias: float  # success mass forfeited by capping the race
    cap_steps: int
    seed: int

    @property
    def observed(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def to_json_dict(self) -> dict:
        return {
            "attacker_share": self.attacker_share,
            "confirmations": self.confirmations,
            "trials": self.trials,
            "successes": self.successes,
            "observed": self.observed,
            "oracle": self.oracle,
            "sigma": self.sigma,
            "truncation_bias": self.truncation_bias,
            "cap_steps": self.cap_steps,
            "seed": self.seed,
        }


def run_double_spend(
    q: float,
    z: int,
    trials: int,
    seed: int = 0,
    cap_factor: int = 10,
) -> DoubleSpendOutcome:
    """Monte Carlo the race; vectorized, deterministic in (inputs, seed).

    The catch-up walk is truncated at cap_factor * max(z, 1) steps; the
    expected success mass beyond the cap — each still-alive walk would
    finish with probability (q/p)^deficit — is summed into
    truncation_bias, so the reported estimate is biased low by at most
    that amount.
    """
    if not 0.0 <= q < 0.5:
        raise ValueError("attacker share must be in [0, 0.5)")
    if z < 0 or trials < 1:
        raise ValueError("need z >= 0 and trials >= 1")
    oracle = oracle_success_probability(q, z)
    sigma = math.sqrt(oracle * (1.0 - oracle) / trials)
    if z == 0 or q == 0.0:
        # degenerate races: immediate success / hopeless walk
        successes = trials if z == 0 else 0
        bias = 0.0 if z == 0 else oracle
        return DoubleSpendOutcome(q, z, trials, successes, oracle, sigma, bias, 0, seed)

    p = 1.0 - q
    ratio = q / p
    lam = z * q / p
    cap = cap_factor * max(z, 1)
    rng = np.random.default_rng(seed)
    successes = 0
    residual = 0.0
    remaining = trials
    while remaining > 0:
        n = min(_CHUNK, remaining)
        remaining -= n
        head_start = rng.poisson(lam, n)
        deficit = z - head_start
        immediate = deficit <= 0
        successes += int(immediate.sum())
        d = deficit[~immediate].astype(np.int64)
        if d.size == 0:
            continue
        steps = rng.random((cap, d.size)) < q
        walk = np.where(steps, -1, 1).astype(np.int32).cumsum(axis=0)
        caught = walk.min(axis=0) <= -d
        successes += int(caught.sum())
        final_deficit = d[~caught] + walk[-1, ~caught]
        if final_deficit.size:
            residual += float(np.sum(ratio ** final_deficit.astype(np.float64)))
    return DoubleSpendOutcome(
        attacker_share=q,
        confirmations=z,
        trials=trials,
        successes=successes,
        oracle=oracle,
        sigma=sigma,
        truncation_bias=residual / trials,
        cap_steps=cap,
        seed=seed,
    )
