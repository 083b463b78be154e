"""Chain state: storage, validation, fork choice, rewards, difficulty.

Fork choice follows accumulated work, where one block's work is the
expected number of solve attempts at its difficulty level (1 / solve
probability, from the calibration table).  Ties prefer the block that
arrived first, then the lexicographically smaller hash, so every replica
fed the same blocks in the same order picks the same tip.

The difficulty level is a consensus rule: a block's level must equal the
retarget output for its height.  Retargeting runs at epoch boundaries
(heights divisible by the window) from the mean inter-block interval of
the previous epoch; within an epoch the parent's level is inherited.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import eccpow, vct
from .blocks import (
    MAX_BLOCK_BYTES,
    Block,
    BlockHeader,
    Transaction,
    block_hash,
    merkle_root,
    serialize_header,
)
from .calibration import Calibration, default_calibration

INITIAL_REWARD = 50 * 10**8  # base units; 10^8 units per coin
HALVING_INTERVAL = 210_000
MAX_FUTURE_SKEW_S = 7200


def emission(height: int) -> int:
    """Coinbase reward at a height: 50 coins halving every 210000 blocks."""
    era = height // HALVING_INTERVAL
    if era >= 64:
        return 0
    return INITIAL_REWARD >> era


def work(level: int, calibration: Calibration | None = None) -> int:
    """Expected solve attempts for one block at this level (integer ≥ 1)."""
    cal = calibration if calibration is not None else default_calibration()
    return cal.work(level)


@dataclass(frozen=True)
class ConsensusParams:
    pass_probability: Fraction
    target_interval_s: float = 600.0
    retarget_window: int = 12
    initial_level: int = 0
    table: tuple[eccpow.CodeParams, ...] = eccpow.DIFFICULTY_TABLE
    max_future_skew_s: float = MAX_FUTURE_SKEW_S


@dataclass(frozen=True)
class StoredBlock:
    hash: bytes
    parent_hash: bytes
    height: int
    level: int
    timestamp: int
    total_work: int
    arrival_index: int
    block: Block | None  # None for summary entries (abstract simulation)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None


class ChainStore:
    """Block index shared by the concrete and abstract paths.

    Entries carry everything fork choice and retargeting need (parent,
    height, level, timestamp, accumulated work, arrival order); full
    blocks are attached when they exist.
    """

    def __init__(self, genesis: StoredBlock):
        self.blocks: dict[bytes, StoredBlock] = {genesis.hash: genesis}
        self.children: dict[bytes, list[bytes]] = {}
        self.genesis_hash = genesis.hash
        self.tip_hash = genesis.hash
        self._next_arrival = genesis.arrival_index + 1

    def __contains__(self, block_id: bytes) -> bool:
        return block_id in self.blocks

    def get(self, block_id: bytes) -> StoredBlock | None:
        return self.blocks.get(block_id)

    def insert(
        self,
        block_id: bytes,
        parent_hash: bytes,
        level: int,
        timestamp: int,
        work_value: int,
        block: Block | None = None,
    ) -> StoredBlock:
        """Index a block whose parent is known; updates the tip."""
        if block_id in self.blocks:
            return self.blocks[block_id]
        parent = self.blocks[parent_hash]
        entry = StoredBlock(
            hash=block_id,
            parent_hash=parent_hash,
            height=parent.height + 1,
            level=level,
            timestamp=timestamp,
            total_work=parent.total_work + work_value,
            arrival_index=self._next_arrival,
            block=block,
        )
        self._next_arrival += 1
        self.blocks[block_id] = entry
        self.children.setdefault(parent_hash, []).append(block_id)
        if self._better_tip(entry, self.blocks[self.tip_hash]):
            self.tip_hash = block_id
        return entry

    @staticmethod
    def _better_tip(candidate: StoredBlock, incumbent: StoredBlock) -> bool:
        if candidate.total_work != incumbent.total_work:
            return candidate.total_work > incumbent.total_work
        if candidate.arrival_index != incumbent.arrival_index:
            return candidate.arrival_index < incumbent.arrival_index
        return candidate.hash < incumbent.hash

    def lineage(self, block_id: bytes, count: int) -> list[StoredBlock]:
        """Up to ``count`` ancestors ending at ``block_id``, oldest first."""
        out: list[StoredBlock] = []
        cur = self.blocks.get(block_id)
        while cur is not None and len(out) < count:
            out.append(cur)
            if cur.hash == self.genesis_hash:
                break
            cur = self.blocks.get(cur.parent_hash)
        out.reverse()
        return out

    def canonical_chain(self) -> list[StoredBlock]:
        chain = self.lineage(self.tip_hash, len(self.blocks) + 1)
        return chain


def fork_choice(store: ChainStore) -> bytes:
    """Recompute the best tip from scratch (the store tracks it live)."""
    best = store.blocks[store.genesis_hash]
    for entry in store.blocks.values():
        if ChainStore._better_tip(entry, best):
            best = entry
    return best.hash


def expected_level(store: ChainStore, parent_hash: bytes, params: ConsensusParams) -> int:
    """Consensus difficulty level for the child of ``parent_hash``.

    Retarget decisions only happen when the child height is a multiple
    of the window, so the window being averaged was mined entirely at
    one level and a burst cannot ratchet the level once per block.
    """
    parent = store.blocks[parent_hash]
    child_height = parent.height + 1
    window = params.retarget_window
    if window <= 0 or child_height % window != 0:
        return parent.level
    recent = [(b.timestamp, b.level) for b in store.lineage(parent_hash, window + 1)]
    return eccpow.difficulty_control(
        recent, parent.level, params.target_interval_s, window, len(params.table)
    )


def make_genesis(params: ConsensusParams) -> Block:
    """Deterministic genesis: zeroed linkage, timestamp 0, initial level."""
    header = BlockHeader(
        version=1,
        prev_hash=b"\x00" * 32,
        merkle_root=b"\x00" * 32,
        timestamp=0,
        level=params.initial_level,
        nonce=0,
        coinbase_pubkey_hash=b"\x00" * 32,
        vct_value=b"\x00" * 32,
        vct_proof=b"",
    )
    return Block(header=header, transactions=())


def new_store(params: ConsensusParams) -> ChainStore:
    genesis = make_genesis(params)
    entry = StoredBlock(
        hash=block_hash(genesis.header),
        parent_hash=b"\x00" * 32,
        height=0,
        level=params.initial_level,
        timestamp=0,
        total_work=0,
        arrival_index=0,
        block=genesis,
    )
    return ChainStore(entry)


def validate_block(
    block: Block,
    store: ChainStore,
    params: ConsensusParams,
    local_time: float | None,
    calibration: Calibration | None = None,
) -> ValidationResult:
    """Full consensus validation; the reason code names the first failure.

    ``local_time=None`` skips the future-timestamp bound (used when
    replaying an exported chain with no live clock).
    """
    header = block.header
    parent = store.get(header.prev_hash)
    if parent is None:
        return ValidationResult(False, "parent-unknown")
    if header.timestamp <= parent.timestamp:
        return ValidationResult(False, "timestamp-not-after-parent")
    if local_time is not None and header.timestamp > local_time + params.max_future_skew_s:
        return ValidationResult(False, "timestamp-too-far-future")
    if header.level != expected_level(store, header.prev_hash, params):
        return ValidationResult(False, "level-mismatch")
    if header.level >= len(params.table):
        return ValidationResult(False, "level-mismatch")
    if not block.transactions:
        return ValidationResult(False, "coinbase-missing")
    coinbase = block.transactions[0]
    miner_key = coinbase.payload
    if len(miner_key) != 32 or vct.crypto.sha256(miner_key) != header.coinbase_pubkey_hash:
        return ValidationResult(False, "coinbase-key-mismatch")
    parent_block = parent.block
    if parent_block is None:
        return ValidationResult(False, "parent-unknown")
    parent_bytes = serialize_header(parent_block.header, include_poc=True)
    toss_output = vct.VrfOutput(proof=header.vct_proof, value=header.vct_value)
    if not vct.verify_toss(miner_key, parent_bytes, toss_output, params.pass_probability):
        return ValidationResult(False, "vct-invalid")
    proof = eccpow.PocProof(
        nonce=header.nonce,
        header_signature=header.poc_signature,
        codeword=header.poc_codeword,
    )
    if not eccpow.verify_poc(header, miner_key, proof, params.table[header.level]):
        return ValidationResult(False, "poc-invalid")
    if merkle_root([tx.txid for tx in block.transactions]) != header.merkle_root:
        return ValidationResult(False, "merkle-mismatch")
    if len(block.serialize()) > MAX_BLOCK_BYTES:
        return ValidationResult(False, "block-too-large")
    if coinbase.value != emission(parent.height + 1):
        return ValidationResult(False, "reward-mismatch")
    return ValidationResult(True, None)


def accept_block(
    block: Block,
    store: ChainStore,
    params: ConsensusParams,
    local_time: float | None,
    calibration: Calibration | None = None,
) -> ValidationResult:
    """Validate and, on success, index the block."""
    result = validate_block(block, store, params, local_time, calibration)
    if result.ok:
        header = block.header
        store.insert(
            block_hash(header),
            header.prev_hash,
            header.level,
            header.timestamp,
            work(header.level, calibration),
            block=block,
        )
    return result


def export_chain(store: ChainStore) -> list[str]:
    """Canonical chain, genesis first, one lowercase hex block per line."""
    lines = []
    for entry in store.canonical_chain():
        if entry.block is None:
            raise ValueError("cannot export a summary-only chain")
        lines.append(entry.block.serialize().hex())
    return lines


def import_chain(
    lines: list[str],
    params: ConsensusParams,
    local_time: float | None = None,
    calibration: Calibration | None = None,
) -> ChainStore:
    """Rebuild and fully re-validate an exported chain.

    The first line must be this network's genesis; any invalid later
    line raises with its validation reason.
    """
    from .blocks import parse_block

    store = new_store(params)
    if not lines:
        raise ValueError("empty chain export")
    genesis = parse_block(bytes.fromhex(lines[0].strip()))
    if block_hash(genesis.header) != store.genesis_hash:
        raise ValueError("genesis mismatch")
    for i, line in enumerate(lines[1:], start=1):
        block = parse_block(bytes.fromhex(line.strip()))
        result = accept_block(block, store, params, local_time, calibration)
        if not result.ok:
            raise ValueError(f"invalid block at line {i}: {result.reason}")
    return store
