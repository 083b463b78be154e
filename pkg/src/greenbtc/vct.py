"""Verifiable coin toss: self-election by deterministic-signature VRF.

A node evaluates the VRF over the previous block header bytes and wins
the toss when the derived 256-bit value is at least a threshold fixed by
the pass probability.  Because the signature scheme is deterministic,
each key gets exactly one toss per parent block: re-signing the same
header reproduces the same value, so there is nothing to grind.

Pass probabilities are exact rationals; the threshold is computed in
integer arithmetic so that a pass probability of k/d admits exactly the
top k/d fraction of the 2^256 value space.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import crypto

TWO_256 = 1 << 256
MAX_PP_DENOMINATOR = 10**9


@dataclass(frozen=True)
class VrfOutput:
    """Proof is the signature over the input; value = SHA256(proof)."""

    proof: bytes
    value: bytes


def parse_pass_probability(text: str) -> Fraction:
    """Exact rational in [0, 1] from a decimal string.

    The denominator cap keeps thresholds portable across config files;
    binary floats are rejected by construction since parsing is exact.
    """
    try:
        pp = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a decimal pass probability: {text!r}") from exc
    if not 0 <= pp <= 1:
        raise ValueError(f"pass probability outside [0, 1]: {text!r}")
    if pp.denominator > MAX_PP_DENOMINATOR:
        raise ValueError(f"pass probability denominator exceeds 10^9: {text!r}")
    return pp


def threshold(pp: Fraction) -> int:
    """ceil((1 - pp) * 2^256), exactly.

    pp = 1 gives 0 (every value passes); pp = 0 gives 2^256 (no value
    can pass, the maximum value being 2^256 - 1).
    """
    rest = 1 - pp
    return -((-rest.numerator * TWO_256) // rest.denominator)


def vrf_eval(secret_key: bytes, message: bytes) -> VrfOutput:
    proof = crypto.sign(secret_key, message)
    return VrfOutput(proof=proof, value=crypto.sha256(proof))


def vrf_verify(public_key: bytes, message: bytes, output: VrfOutput) -> bool:
    if not crypto.verify(public_key, message, output.proof):
        return False
    return crypto.sha256(output.proof) == output.value


def value_passes(value: bytes, pp: Fraction) -> bool:
    return int.from_bytes(value, "big") >= threshold(pp)


def toss(secret_key: bytes, prev_header_bytes: bytes, pp: Fraction) -> tuple[bool, VrfOutput]:
    """One self-election draw for the given parent header."""
    output = vrf_eval(secret_key, prev_header_bytes)
    return value_passes(output.value, pp), output


def verify_toss(
    public_key: bytes, prev_header_bytes: bytes, output: VrfOutput, pp: Fraction
) -> bool:
    """Validator-side check: proof genuine and value at or above threshold."""
    return vrf_verify(public_key, prev_header_bytes, output) and value_passes(output.value, pp)


def weighted_pass_probability(
    base_pp: Fraction, stake: int, total_stake: int, node_count: int
) -> Fraction:
    """Stake-weighted per-node pass probability, capped at 1.

    With equal stakes this reduces to ``base_pp`` for every node; the
    network-wide expected committee size is preserved under reweighting
    (up to the cap).
    """
    if total_stake <= 0:
        raise ValueError("total stake must be positive")
    if stake < 0:
        raise ValueError("stake must be non-negative")
    return min(Fraction(1), base_pp * node_count * Fraction(stake, total_stake))
