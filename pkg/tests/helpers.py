"""Shared fixtures for the test suite: reproducible keys and real mining.

Everything here derives from integer seeds so test failures replay
exactly; no test touches the wall clock or OS entropy.
"""
from __future__ import annotations

from fractions import Fraction

from greenbtc import chain, crypto, eccpow, vct
from greenbtc.blocks import Block, BlockHeader, Transaction, merkle_root, serialize_header
from greenbtc.calibration import default_calibration


def key_from_int(i: int) -> crypto.KeyPair:
    return crypto.keygen(crypto.sha256(b"test-key" + i.to_bytes(8, "big")))


def make_params(
    pp: Fraction = Fraction(1),
    initial_level: int = 0,
    retarget_window: int = 0,
    target_interval_s: float = 600.0,
) -> chain.ConsensusParams:
    return chain.ConsensusParams(
        pass_probability=pp,
        target_interval_s=target_interval_s,
        retarget_window=retarget_window,
        initial_level=initial_level,
    )


def passing_key(parent_bytes: bytes, pp: Fraction, start: int = 0) -> crypto.KeyPair:
    """First derived key whose toss over ``parent_bytes`` passes at ``pp``."""
    i = start
    while True:
        pair = key_from_int(i)
        ok, _ = vct.toss(pair.secret_key, parent_bytes, pp)
        if ok:
            return pair
        i += 1


def mine_block(
    store: chain.ChainStore,
    parent_id: bytes,
    keypair: crypto.KeyPair,
    params: chain.ConsensusParams,
    timestamp: int,
    extra_txs: tuple[Transaction, ...] = (),
) -> Block:
    """Produce a fully valid block on ``parent_id`` (keypair must pass VCT)."""
    parent = store.get(parent_id)
    assert parent is not None and parent.block is not None
    parent_bytes = serialize_header(parent.block.header, include_poc=True)
    passed, out = vct.toss(keypair.secret_key, parent_bytes, params.pass_probability)
    assert passed, "keypair does not win the toss for this parent"
    height = parent.height + 1
    coinbase = Transaction(value=chain.emission(height), payload=keypair.public_key)
    txs = (coinbase,) + extra_txs
    level = chain.expected_level(store, parent_id, params)
    template = BlockHeader(
        version=1,
        prev_hash=parent_id,
        merkle_root=merkle_root([tx.txid for tx in txs]),
        timestamp=timestamp,
        level=level,
        nonce=0,
        coinbase_pubkey_hash=crypto.sha256(keypair.public_key),
        vct_value=out.value,
        vct_proof=out.proof,
    )
    proof = eccpow.solve(template, keypair.secret_key, params.table[level])
    assert proof is not None
    header = BlockHeader(
        version=template.version,
        prev_hash=template.prev_hash,
        merkle_root=template.merkle_root,
        timestamp=template.timestamp,
        level=template.level,
        nonce=proof.nonce,
        coinbase_pubkey_hash=template.coinbase_pubkey_hash,
        vct_value=template.vct_value,
        vct_proof=template.vct_proof,
        poc_signature=proof.header_signature,
        poc_codeword=proof.codeword,
    )
    return Block(header=header, transactions=txs)


def reference_decode(h_mat, received, max_iter: int):
    """Independent plain-Python bit-flipping decoder (oracle twin).

    Same rule as the production decoder, written loop-by-loop from the
    rule statement: flip every bit whose unsatisfied incident checks
    strictly outnumber half its column weight; stop on zero syndrome,
    iteration cap, or an iteration that flips nothing.
    Returns (converged, word_tuple, iterations).
    """
    rows = [[c for c in range(h_mat.shape[1]) if h_mat[r][c]] for r in range(h_mat.shape[0])]
    wc = sum(int(h_mat[r][0]) for r in range(h_mat.shape[0]))
    incident = [[] for _ in range(h_mat.shape[1])]
    for r, cols in enumerate(rows):
        for c in cols:
            incident[c].append(r)
    word = [int(b) for b in received]

    def syndrome():
        return [sum(word[c] for c in cols) % 2 for cols in rows]

    syn = syndrome()
    iterations = 0
    while any(syn) and iterations < max_iter:
        flips = [b for b in range(len(word)) if 2 * sum(syn[r] for r in incident[b]) > wc]
        if not flips:
            break
        for b in flips:
            word[b] ^= 1
        iterations += 1
        syn = syndrome()
    return (not any(syn), tuple(word), iterations)


def grow_chain(
    store: chain.ChainStore,
    params: chain.ConsensusParams,
    count: int,
    interval_s: int = 600,
    key_index: int = 0,
) -> list[Block]:
    """Mine and accept ``count`` blocks on the current tip; returns them."""
    cal = default_calibration()
    blocks = []
    for _ in range(count):
        tip = store.get(store.tip_hash)
        assert tip is not None
        pair = key_from_int(key_index)
        if params.pass_probability != 1:
            parent_bytes = serialize_header(tip.block.header, include_poc=True)
            pair = passing_key(parent_bytes, params.pass_probability, start=key_index)
        block = mine_block(store, store.tip_hash, pair, params, tip.timestamp + interval_s)
        result = chain.accept_block(block, store, params, None, calibration=cal)
        assert result.ok, result.reason
        blocks.append(block)
    return blocks
