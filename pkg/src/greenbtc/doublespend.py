"""Profitable double-spend guard: catch-up-race analytics and a
required-confirmations rule for large transactions.

Model: while a paid transaction collects z confirmations the attacker
privately mines, producing a Poisson(z * q / (1 - q)) head start, and
then races the honest chain block by block, winning each block with
probability q (its share of every toss committee).  The attack succeeds
if the private chain ever draws level.  Renting hash power costs money
per block of attack duration, so deep confirmations make the attack
unprofitable before they make it impossible.

Duration is counted in block events: z during the confirmation wait
plus every race block from either chain, with the race capped at a
finite horizon because rental contracts end.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import poisson

UNSAFE = "unsafe"


@dataclass(frozen=True)
class PdsParams:
    tx_value: float
    attacker_share: float
    rental_cost_per_block: float
    block_reward: float
    max_z: int = 100
    horizon_blocks: int = 100

    def __post_init__(self) -> None:
        if self.tx_value < 0:
            raise ValueError("tx_value must be non-negative")
        if not 0 <= self.attacker_share <= 1:
            raise ValueError("attacker_share must be in [0, 1]")
        if self.rental_cost_per_block < 0:
            raise ValueError("rental_cost_per_block must be non-negative")
        if self.block_reward < 0:
            raise ValueError("block_reward must be non-negative")
        if self.max_z < 0:
            raise ValueError("max_z must be non-negative")
        if self.horizon_blocks < 1:
            raise ValueError("horizon_blocks must be at least 1")


def double_spend_success_prob(q: float, z: int) -> float:
    """Probability the private chain ever catches up.

    An attacker with no hash power never mines a block, so q = 0 gives
    0 at every depth, including z = 0 where the raw series would report
    the empty catch-up as a success.  At q >= 1/2 the race is recurrent
    and the catch-up is certain.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must be in [0, 1]")
    if z < 0:
        raise ValueError("z must be non-negative")
    if q == 0:
        return 0.0
    if q >= 0.5:
        return 1.0
    lam = z * q / (1.0 - q)
    r = q / (1.0 - q)
    ks = np.arange(z + 1)
    total = float(np.dot(poisson.pmf(ks, lam), 1.0 - r ** (z - ks)))
    return min(1.0, max(0.0, 1.0 - total))


def expected_attack_duration(q: float, z: int, horizon_blocks: int = 100) -> float:
    """Expected block events the attacker pays rent for.

    z events pass while the transaction is confirmed; the race phase
    then runs until the attacker catches up or the horizon ends it.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must be in [0, 1]")
    if z < 0:
        raise ValueError("z must be non-negative")
    if horizon_blocks < 1:
        raise ValueError("horizon_blocks must be at least 1")
    if q >= 1:
        # honest side never mines: the z-block deficit is erased directly
        return float(2 * z)
    lam = z * q / (1.0 - q)
    lengths = _race_lengths(q, z, horizon_blocks)
    ks = np.arange(z + 1)
    weights = poisson.pmf(ks, lam)
    race = float(np.dot(weights, lengths[z - ks]))
    # premined k > z leave a zero-length race, adding nothing
    return z + race


@lru_cache(maxsize=64)
def _race_lengths(q: float, z: int, horizon: int) -> np.ndarray:
    """Expected race length by starting deficit, truncated at horizon.

    length(d, h) = 0 when d = 0 or h = 0, else one block plus the
    continuation after winning (deficit - 1) or losing (deficit + 1).
    """
    max_d = z + horizon + 1
    prev = np.zeros(max_d + 2)
    for _ in range(horizon):
        cur = np.zeros(max_d + 2)
        cur[1 : max_d + 1] = 1.0 + q * prev[0:max_d] + (1.0 - q) * prev[2 : max_d + 2]
        prev = cur
    prev.flags.writeable = False
    return prev


@dataclass(frozen=True)
class AttackProfit:
    z: int
    success_prob: float
    expected_duration_blocks: float
    revenue: float
    cost: float
    profit: float


def attack_profit(params: PdsParams, z: int) -> AttackProfit:
    """Expected profit of a double spend against z confirmations.

    Revenue is the reversed payment plus the rewards of the replacing
    blocks, weighted by success; cost is rent for the expected attack
    duration and is paid win or lose.
    """
    q = params.attacker_share
    prob = double_spend_success_prob(q, z)
    duration = expected_attack_duration(q, z, params.horizon_blocks)
    revenue = prob * (params.tx_value + z * params.block_reward)
    cost = duration * params.rental_cost_per_block
    return AttackProfit(
        z=z,
        success_prob=prob,
        expected_duration_blocks=duration,
        revenue=revenue,
        cost=cost,
        profit=revenue - cost,
    )


def required_confirmations(params: PdsParams) -> int | str:
    """Smallest confirmation depth that makes the attack unprofitable.

    Returns ``"unsafe"`` when no depth up to max_z works; at attacker
    share 1/2 and above the catch-up is certain at every depth, so no
    confirmation count can protect the transaction.
    """
    if params.attacker_share >= 0.5:
        return UNSAFE
    for z in range(params.max_z + 1):
        if attack_profit(params, z).profit <= 0:
            return z
    return UNSAFE
