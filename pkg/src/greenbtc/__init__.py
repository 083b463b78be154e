"""Desk-scale implementation of an energy-gated Bitcoin-style consensus.

Block production is gated by a verifiable coin toss (a deterministic-
signature VRF), the proof of computation is an LDPC decoding puzzle whose
solution is bound to the miner's key, and the simulator quantifies the
energy and fault-tolerance behaviour of the combined protocol.
"""

__version__ = "0.1.0"
