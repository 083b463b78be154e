"""Block and transaction wire structures.

Integers are fixed-width big-endian and variable-length fields carry
explicit length prefixes, so every structure round-trips byte-exactly.
A header has two byte forms: the signing preimage (proof-of-computation
fields excluded, since they are produced after the preimage is signed)
and the full form whose SHA-256 is the block hash.

Codewords are held in memory as one byte per bit (values 0 or 1) and are
packed MSB-first only on the wire.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import crypto

MAX_BLOCK_BYTES = 1_000_000

_ZERO32 = b"\x00" * 32


def pack_bits(bits: bytes) -> bytes:
    """Pack a byte-per-bit string MSB-first, zero-padded to a whole byte."""
    if not bits:
        return b""
    return np.packbits(np.frombuffer(bits, dtype=np.uint8)).tobytes()


def unpack_bits(packed: bytes, nbits: int) -> bytes:
    """Inverse of :func:`pack_bits` given the original bit count."""
    if nbits == 0:
        return b""
    return np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:nbits].astype(np.uint8).tobytes()


@dataclass(frozen=True)
class Transaction:
    """Value transfer with an opaque payload; the id commits to both."""

    value: int
    payload: bytes

    def serialize(self) -> bytes:
        return struct.pack(">QI", self.value, len(self.payload)) + self.payload

    @property
    def txid(self) -> bytes:
        return crypto.sha256(self.serialize())


def parse_transaction(buf: bytes, offset: int = 0) -> tuple[Transaction, int]:
    if len(buf) - offset < 12:
        raise ValueError("truncated transaction")
    value, plen = struct.unpack_from(">QI", buf, offset)
    offset += 12
    if len(buf) - offset < plen:
        raise ValueError("truncated transaction payload")
    return Transaction(value=value, payload=buf[offset : offset + plen]), offset + plen


def merkle_root(txids: list[bytes]) -> bytes:
    """Binary SHA-256 tree over transaction ids, duplicating an odd tail."""
    if not txids:
        return _ZERO32
    layer = list(txids)
    while len(layer) > 1:
        if len(layer) % 2:
            layer.append(layer[-1])
        layer = [crypto.sha256(layer[i] + layer[i + 1]) for i in range(0, len(layer), 2)]
    return layer[0]


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    level: int
    nonce: int
    coinbase_pubkey_hash: bytes
    vct_value: bytes
    vct_proof: bytes
    poc_signature: bytes = b""
    poc_codeword: bytes = b""  # one byte per bit


def serialize_header(header: BlockHeader, include_poc: bool = True) -> bytes:
    """Canonical header bytes; ``include_poc=False`` is the signing preimage."""
    parts = [
        struct.pack(">I", header.version),
        header.prev_hash,
        header.merkle_root,
        struct.pack(">Q", header.timestamp),
        struct.pack(">I", header.level),
        struct.pack(">Q", header.nonce),
        header.coinbase_pubkey_hash,
        header.vct_value,
        struct.pack(">H", len(header.vct_proof)),
        header.vct_proof,
    ]
    if include_poc:
        parts += [
            struct.pack(">H", len(header.poc_signature)),
            header.poc_signature,
            struct.pack(">I", len(header.poc_codeword)),
            pack_bits(header.poc_codeword),
        ]
    return b"".join(parts)


def parse_header(buf: bytes, offset: int = 0) -> tuple[BlockHeader, int]:
    def need(k: int) -> None:
        if len(buf) - offset < k:
            raise ValueError("truncated header")

    need(4)
    version = struct.unpack_from(">I", buf, offset)[0]
    offset += 4
    need(32)
    prev_hash = buf[offset : offset + 32]
    offset += 32
    need(32)
    root = buf[offset : offset + 32]
    offset += 32
    need(8 + 4 + 8)
    timestamp, level, nonce = struct.unpack_from(">QIQ", buf, offset)
    offset += 20
    need(32)
    cph = buf[offset : offset + 32]
    offset += 32
    need(32)
    vct_value = buf[offset : offset + 32]
    offset += 32
    need(2)
    plen = struct.unpack_from(">H", buf, offset)[0]
    offset += 2
    need(plen)
    vct_proof = buf[offset : offset + plen]
    offset += plen
    need(2)
    slen = struct.unpack_from(">H", buf, offset)[0]
    offset += 2
    need(slen)
    poc_sig = buf[offset : offset + slen]
    offset += slen
    need(4)
    nbits = struct.unpack_from(">I", buf, offset)[0]
    offset += 4
    nbytes = (nbits + 7) // 8
    need(nbytes)
    codeword = unpack_bits(buf[offset : offset + nbytes], nbits)
    offset += nbytes
    header = BlockHeader(
        version=version,
        prev_hash=prev_hash,
        merkle_root=root,
        timestamp=timestamp,
        level=level,
        nonce=nonce,
        coinbase_pubkey_hash=cph,
        vct_value=vct_value,
        vct_proof=vct_proof,
        poc_signature=poc_sig,
        poc_codeword=codeword,
    )
    return header, offset


def block_hash(header: BlockHeader) -> bytes:
    return crypto.sha256(serialize_header(header, include_poc=True))


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]

    def serialize(self) -> bytes:
        parts = [serialize_header(self.header, include_poc=True)]
        parts.append(struct.pack(">I", len(self.transactions)))
        parts += [tx.serialize() for tx in self.transactions]
        return b"".join(parts)


def parse_block(buf: bytes) -> Block:
    header, offset = parse_header(buf, 0)
    if len(buf) - offset < 4:
        raise ValueError("truncated block")
    count = struct.unpack_from(">I", buf, offset)[0]
    offset += 4
    txs = []
    for _ in range(count):
        tx, offset = parse_transaction(buf, offset)
        txs.append(tx)
    if offset != len(buf):
        raise ValueError("trailing bytes after block")
    return Block(header=header, transactions=tuple(txs))


def with_nonce(header: BlockHeader, nonce: int) -> BlockHeader:
    return replace(header, nonce=nonce)
