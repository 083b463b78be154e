"""LDPC decoding puzzle that serves as the proof of computation.

A puzzle instance is a Gallager-ensemble parity-check matrix derived
deterministically from the previous block hash, so the puzzle changes
every block and cannot be precomputed.  One solution attempt signs the
candidate header preimage, expands the signature digest into an n-bit
word, and runs a hard-decision bit-flipping decoder; the attempt wins
when the decoder converges to a codeword.  Because the word is derived
from a signature only the key holder can produce, work cannot be
outsourced to helpers that hold nothing but the public key.

Difficulty is an index into a fixed parameter table ordered by falling
empirical solve probability; `difficulty_control` nudges that index to
keep the observed block interval near its target.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import crypto
from .blocks import BlockHeader, serialize_header


@dataclass(frozen=True)
class CodeParams:
    """Parity-check ensemble parameters for one difficulty level."""

    n: int        # codeword length in bits
    wc: int       # column weight (checks per bit)
    wr: int       # row weight (bits per check)
    level: int
    max_iter: int

    def __post_init__(self) -> None:
        if self.wc < 2:
            raise ValueError("column weight must be at least 2")
        if self.wr <= self.wc:
            raise ValueError("row weight must exceed column weight")
        if (self.n * self.wc) % self.wr != 0:
            raise ValueError("n*wc must be divisible by wr")
        if self.n % self.wr != 0:
            raise ValueError("n must be divisible by wr")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    @property
    def m(self) -> int:
        return self.n * self.wc // self.wr


_TABLE_N = (16, 24, 36, 48, 60, 72, 96, 126, 192, 384)

DIFFICULTY_TABLE: tuple[CodeParams, ...] = tuple(
    CodeParams(
        n=n,
        wc=2 if n == 16 else 3,
        wr=4 if n == 16 else 6,
        level=i,
        max_iter=20,
    )
    for i, n in enumerate(_TABLE_N)
)


class _CounterStream:
    """Byte stream SHA256(key || ctr32be) for ctr = 0, 1, 2, ..."""

    def __init__(self, key: bytes):
        self._key = key
        self._ctr = 0
        self._buf = b""
        self._pos = 0

    def take(self, k: int) -> bytes:
        while len(self._buf) - self._pos < k:
            self._buf = self._buf[self._pos :] + crypto.sha256(
                self._key + self._ctr.to_bytes(4, "big")
            )
            self._pos = 0
            self._ctr += 1
        out = self._buf[self._pos : self._pos + k]
        self._pos += k
        return out

    def uint64(self) -> int:
        return int.from_bytes(self.take(8), "big")


def _permutation(key: bytes, n: int) -> np.ndarray:
    """Fisher-Yates over a counter-mode hash stream; pure in (key, n)."""
    stream = _CounterStream(key)
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = stream.uint64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def gen_matrix(seed: bytes, params: CodeParams) -> np.ndarray:
    """Gallager-ensemble parity-check matrix, shape (m, n), dtype uint8.

    Band 0 places wr consecutive ones per row; band b > 0 is a column
    permutation of band 0 keyed by SHA256(seed || b).  Every column has
    weight exactly wc and every row weight exactly wr.
    """
    n, wc, wr = params.n, params.wc, params.wr
    rows_per_band = n // wr
    h_mat = np.zeros((params.m, n), dtype=np.uint8)
    cols = np.arange(n)
    h_mat[cols // wr, cols] = 1
    for band in range(1, wc):
        key = crypto.sha256(seed + band.to_bytes(4, "big"))
        perm = _permutation(key, n)
        h_mat[band * rows_per_band + perm // wr, cols] = 1
    return h_mat


def expand_hash(out: bytes, n: int) -> np.ndarray:
    """Expand a 32-byte digest into n bits, MSB-first.

    Concatenates SHA256(out || ctr32be) blocks for ctr = 0, 1, ... and
    truncates to n bits.
    """
    nbytes = (n + 7) // 8
    chunks = []
    ctr = 0
    while nbytes > 0:
        chunks.append(crypto.sha256(out + ctr.to_bytes(4, "big")))
        nbytes -= 32
        ctr += 1
    buf = b"".join(chunks)[: (n + 7) // 8]
    return np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[:n].astype(np.uint8)


@dataclass(frozen=True)
class DecoderResult:
    converged: bool
    word: bytes  # one byte per bit, post-flipping state
    iterations: int


def decode(h_mat: np.ndarray, received: np.ndarray, max_iter: int) -> DecoderResult:
    """Hard-decision bit flipping (Gallager B with strict majority).

    Each iteration flips every bit whose count of unsatisfied incident
    checks strictly exceeds wc/2, then re-evaluates the syndrome.  Stops
    on a zero syndrome (converged) or after max_iter iterations; an
    iteration that flips nothing can never progress, so it stops early
    as non-converged.
    """
    h32 = h_mat.astype(np.int32)
    wc = int(h_mat[:, 0].sum())
    word = np.array(received, dtype=np.int32)
    syndrome = (h32 @ word) & 1
    iterations = 0
    while syndrome.any() and iterations < max_iter:
        unsatisfied = h32.T @ syndrome
        flips = (2 * unsatisfied) > wc
        if not flips.any():
            break
        word[flips] ^= 1
        iterations += 1
        syndrome = (h32 @ word) & 1
    return DecoderResult(
        converged=not syndrome.any(),
        word=word.astype(np.uint8).tobytes(),
        iterations=iterations,
    )


@dataclass(frozen=True)
class PocProof:
    """A winning attempt: the nonce, the header signature, the codeword."""

    nonce: int
    header_signature: bytes
    codeword: bytes  # one byte per bit


def solve(
    template: BlockHeader,
    secret_key: bytes,
    params: CodeParams,
    nonce_start: int = 0,
    nonce_limit: int | None = None,
) -> PocProof | None:
    """Search nonces until one signature-derived word decodes.

    The signature covers the header preimage including the nonce but
    excluding the proof fields.  Returns None if the nonce range is
    exhausted without a solution.
    """
    h_mat = gen_matrix(template.prev_hash, params)
    nonce = nonce_start
    while nonce_limit is None or nonce < nonce_limit:
        preimage = serialize_header(replace(template, nonce=nonce), include_poc=False)
        signature = crypto.sign(secret_key, preimage)
        received = expand_hash(crypto.sha256(signature), params.n)
        result = decode(h_mat, received, params.max_iter)
        if result.converged:
            return PocProof(nonce=nonce, header_signature=signature, codeword=result.word)
        nonce += 1
    return None


def verify_poc(
    header: BlockHeader,
    coinbase_pubkey: bytes,
    proof: PocProof,
    params: CodeParams,
) -> bool:
    """Check a proof: signature binding, decoder reproduction, syndrome.

    (a) the signature must verify under the coinbase key over the header
    preimage with the proof's nonce; (b) re-running the decoder on the
    expanded signature digest must converge to exactly the claimed
    codeword; (c) the codeword must satisfy every parity check.
    """
    preimage = serialize_header(replace(header, nonce=proof.nonce), include_poc=False)
    if not crypto.verify(coinbase_pubkey, preimage, proof.header_signature):
        return False
    if len(proof.codeword) != params.n:
        return False
    h_mat = gen_matrix(header.prev_hash, params)
    received = expand_hash(crypto.sha256(proof.header_signature), params.n)
    result = decode(h_mat, received, params.max_iter)
    if not result.converged or result.word != proof.codeword:
        return False
    codeword = np.frombuffer(proof.codeword, dtype=np.uint8).astype(np.int32)
    syndrome = (h_mat.astype(np.int32) @ codeword) & 1
    return not syndrome.any()


@dataclass(frozen=True)
class SolveEstimate:
    p_hat: float
    std_err: float
    samples: int


def estimate_solve_prob(
    params: CodeParams, samples: int, rng: np.random.Generator
) -> SolveEstimate:
    """Monte Carlo fraction of random (seed, digest) pairs that decode."""
    hits = 0
    for _ in range(samples):
        h_mat = gen_matrix(rng.bytes(32), params)
        received = expand_hash(rng.bytes(32), params.n)
        if decode(h_mat, received, params.max_iter).converged:
            hits += 1
    p_hat = hits / samples
    std_err = float(np.sqrt(p_hat * (1.0 - p_hat) / samples))
    return SolveEstimate(p_hat=p_hat, std_err=std_err, samples=samples)


def difficulty_control(
    recent: list[tuple[int, int]],
    current_level: int,
    target_interval_s: float,
    window: int,
    table_size: int = len(DIFFICULTY_TABLE),
) -> int:
    """One retarget step from observed block timestamps.

    ``recent`` holds (timestamp, level) pairs, oldest first.  The mean
    inter-block interval over the last ``window`` intervals is compared
    against the target: below half the target, step one level harder;
    above twice the target, step one level easier; otherwise hold.  The
    result is clamped to the difficulty table.  Fewer than two entries
    give no interval evidence, so the level is kept.
    """
    if len(recent) < 2:
        return current_level
    stamps = [t for t, _ in recent[-(window + 1) :]]
    gaps = [b - a for a, b in zip(stamps, stamps[1:])]
    mean_gap = sum(gaps) / len(gaps)
    if mean_gap < target_interval_s / 2:
        return min(current_level + 1, table_size - 1)
    if mean_gap > 2 * target_interval_s:
        return max(current_level - 1, 0)
    return current_level
