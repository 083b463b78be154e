"""Puzzle layer: matrix generation, decoding, solve/verify, retarget rule."""
import hashlib

import numpy as np
import pytest

from greenbtc import crypto
from greenbtc.blocks import BlockHeader
from greenbtc.calibration import default_calibration
from greenbtc.eccpow import (
    DIFFICULTY_TABLE,
    CodeParams,
    PocProof,
    decode,
    difficulty_control,
    estimate_solve_prob,
    expand_hash,
    gen_matrix,
    solve,
    verify_poc,
)

from helpers import key_from_int, reference_decode

EASY = CodeParams(n=16, wc=2, wr=4, level=0, max_iter=8)
SMALL = CodeParams(n=12, wc=2, wr=4, level=0, max_iter=20)


def template_for(prev_hash: bytes, pubkey: bytes) -> BlockHeader:
    return BlockHeader(
        version=1,
        prev_hash=prev_hash,
        merkle_root=b"\x11" * 32,
        timestamp=1000,
        level=0,
        nonce=0,
        coinbase_pubkey_hash=crypto.sha256(pubkey),
        vct_value=b"\x22" * 32,
        vct_proof=b"\x33" * 64,
    )


def test_code_params_validation():
    with pytest.raises(ValueError):
        CodeParams(n=16, wc=1, wr=4, level=0, max_iter=8)
    with pytest.raises(ValueError):
        CodeParams(n=16, wc=4, wr=4, level=0, max_iter=8)
    with pytest.raises(ValueError):
        CodeParams(n=18, wc=2, wr=4, level=0, max_iter=8)
    with pytest.raises(ValueError):
        CodeParams(n=16, wc=2, wr=4, level=0, max_iter=0)
    assert CodeParams(n=8, wc=2, wr=4, level=0, max_iter=8).m == 4


def test_difficulty_table_shape():
    assert len(DIFFICULTY_TABLE) == 10
    for i, p in enumerate(DIFFICULTY_TABLE):
        assert p.level == i
        assert p.max_iter == 20
    ns = [p.n for p in DIFFICULTY_TABLE]
    assert ns == sorted(ns) and len(set(ns)) == len(ns)


def test_gen_matrix_weights_and_shape():
    params = CodeParams(n=8, wc=2, wr=4, level=0, max_iter=8)
    h = gen_matrix(crypto.sha256(b"seed"), params)
    assert h.shape == (4, 8)
    assert (h.sum(axis=0) == 2).all()
    assert (h.sum(axis=1) == 4).all()
    for table_params in DIFFICULTY_TABLE[:5]:
        h = gen_matrix(crypto.sha256(b"x"), table_params)
        assert h.shape == (table_params.m, table_params.n)
        assert (h.sum(axis=0) == table_params.wc).all()
        assert (h.sum(axis=1) == table_params.wr).all()


def test_gen_matrix_deterministic_and_seed_sensitive():
    params = DIFFICULTY_TABLE[1]
    seed = crypto.sha256(b"fixed")
    assert (gen_matrix(seed, params) == gen_matrix(seed, params)).all()
    differing = 0
    for i in range(100):
        a = crypto.sha256(b"pair" + i.to_bytes(4, "big"))
        b = bytearray(a)
        b[0] ^= 0x01
        if not (gen_matrix(a, params) == gen_matrix(bytes(b), params)).all():
            differing += 1
    assert differing == 100


def test_expand_hash_definitional():
    out = crypto.sha256(b"digest input")
    block0 = hashlib.sha256(out + (0).to_bytes(4, "big")).digest()
    block1 = hashlib.sha256(out + (1).to_bytes(4, "big")).digest()
    full = np.unpackbits(np.frombuffer(block0 + block1, dtype=np.uint8))
    assert (expand_hash(out, 256) == full[:256]).all()
    assert (expand_hash(out, 512) == full[:512]).all()
    assert (expand_hash(out, 300) == full[:300]).all()
    assert (expand_hash(out, 16) == full[:16]).all()
    assert set(np.unique(expand_hash(out, 512))) <= {0, 1}


def brute_force_codewords(h_mat: np.ndarray) -> np.ndarray:
    n = h_mat.shape[1]
    words = ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int32)
    syndromes = (words @ h_mat.T.astype(np.int32)) & 1
    return words[(syndromes == 0).all(axis=1)]


def test_decode_zero_word_converges_immediately():
    h = gen_matrix(crypto.sha256(b"z"), SMALL)
    result = decode(h, np.zeros(SMALL.n, dtype=np.uint8), SMALL.max_iter)
    assert result.converged
    assert result.iterations == 0
    assert result.word == bytes(SMALL.n)


def test_decode_fixes_a_correctable_single_bit_error():
    # brute-force the n=12 code, then flip one bit of a codeword
    corrected = 0
    for trial in range(20):
        h = gen_matrix(crypto.sha256(b"bf" + trial.to_bytes(4, "big")), SMALL)
        codewords = brute_force_codewords(h)
        nonzero = codewords[codewords.sum(axis=1) > 0]
        if len(nonzero) == 0:
            continue
        word = nonzero[0].astype(np.uint8)
        for bit in range(SMALL.n):
            received = word.copy()
            received[bit] ^= 1
            result = decode(h, received, SMALL.max_iter)
            if result.converged and result.word == word.tobytes():
                corrected += 1
    assert corrected > 0


def test_decode_codeword_is_fixed_point():
    for trial in range(10):
        h = gen_matrix(crypto.sha256(b"fp" + trial.to_bytes(4, "big")), SMALL)
        for word in brute_force_codewords(h)[:8]:
            result = decode(h, word.astype(np.uint8), SMALL.max_iter)
            assert result.converged and result.iterations == 0
            assert result.word == word.astype(np.uint8).tobytes()


def test_decode_converged_implies_zero_syndrome():
    rng = np.random.default_rng(17)
    params = DIFFICULTY_TABLE[1]
    h = gen_matrix(rng.bytes(32), params)
    for _ in range(300):
        received = rng.integers(0, 2, size=params.n, dtype=np.uint8)
        result = decode(h, received, params.max_iter)
        word = np.frombuffer(result.word, dtype=np.uint8).astype(np.int32)
        syndrome_zero = not ((h.astype(np.int32) @ word) & 1).any()
        assert result.converged == syndrome_zero
        assert result.iterations <= params.max_iter


def test_decode_matches_independent_reimplementation():
    # word-for-word agreement with the loop-based oracle decoder
    rng = np.random.default_rng(23)
    params = DIFFICULTY_TABLE[1]
    for trial in range(50):
        h = gen_matrix(rng.bytes(32), params)
        received = rng.integers(0, 2, size=params.n, dtype=np.uint8)
        result = decode(h, received, params.max_iter)
        ref_conv, ref_word, ref_iters = reference_decode(h, received, params.max_iter)
        assert result.converged == ref_conv
        assert tuple(result.word) == ref_word
        assert result.iterations == ref_iters


def test_solve_round_trip_and_determinism():
    pair = key_from_int(50)
    template = template_for(crypto.sha256(b"parent0"), pair.public_key)
    proof = solve(template, pair.secret_key, EASY)
    assert proof is not None
    assert verify_poc(template, pair.public_key, proof, EASY)
    again = solve(template, pair.secret_key, EASY)
    assert again == proof


def test_solve_empty_range_returns_none():
    pair = key_from_int(51)
    template = template_for(crypto.sha256(b"parent1"), pair.public_key)
    assert solve(template, pair.secret_key, EASY, nonce_start=5, nonce_limit=5) is None


def test_solve_attempts_track_inverse_probability():
    # fresh matrix per attempt: attempt count is geometric in the
    # marginal solve probability, so the mean is 1/p exactly
    rng = np.random.default_rng(31)
    est = estimate_solve_prob(EASY, 20000, np.random.default_rng(32))
    attempts = []
    for _ in range(1000):
        count = 1
        while True:
            h = gen_matrix(rng.bytes(32), EASY)
            received = expand_hash(rng.bytes(32), EASY.n)
            if decode(h, received, EASY.max_iter).converged:
                break
            count += 1
        attempts.append(count)
    mean = float(np.mean(attempts))
    inv_p = 1.0 / est.p_hat
    geom_se = float(np.sqrt((1 - est.p_hat) / est.p_hat**2 / 1000))
    assert abs(mean - inv_p) < 4 * geom_se + 4 * est.std_err / est.p_hat**2


def test_solve_attempts_fixed_matrix_band():
    # per-template fixed matrix: mean attempts is the harmonic-mean
    # inverse, at least 1/p and within a small constant factor of it
    est = estimate_solve_prob(EASY, 20000, np.random.default_rng(33))
    total = 0
    for i in range(300):
        pair = key_from_int(6000 + i)
        template = template_for(crypto.sha256(b"t" + i.to_bytes(4, "big")), pair.public_key)
        proof = solve(template, pair.secret_key, EASY)
        assert proof is not None
        total += proof.nonce + 1
    mean = total / 300
    assert 0.8 / est.p_hat < mean < 4.0 / est.p_hat


def test_verify_poc_rejects_mutations():
    pair = key_from_int(52)
    other = key_from_int(53)
    template = template_for(crypto.sha256(b"parent2"), pair.public_key)
    proof = solve(template, pair.secret_key, EASY)
    assert proof is not None
    assert verify_poc(template, pair.public_key, proof, EASY)

    bumped = PocProof(proof.nonce + 1, proof.header_signature, proof.codeword)
    assert not verify_poc(template, pair.public_key, bumped, EASY)

    sig = bytearray(proof.header_signature)
    sig[10] ^= 0x01
    tampered = PocProof(proof.nonce, bytes(sig), proof.codeword)
    assert not verify_poc(template, pair.public_key, tampered, EASY)

    word = bytearray(proof.codeword)
    word[0] ^= 0x01
    flipped = PocProof(proof.nonce, proof.header_signature, bytes(word))
    assert not verify_poc(template, pair.public_key, flipped, EASY)

    short = PocProof(proof.nonce, proof.header_signature, proof.codeword[:-1])
    assert not verify_poc(template, pair.public_key, short, EASY)

    assert not verify_poc(template, other.public_key, proof, EASY)


def test_verify_poc_rejects_substituted_valid_codeword():
    # another codeword of the same matrix fails the reproduction check
    pair = key_from_int(54)
    template = template_for(crypto.sha256(b"parent3"), pair.public_key)
    proof = solve(template, pair.secret_key, EASY)
    assert proof is not None
    h = gen_matrix(template.prev_hash, EASY)
    codewords = brute_force_codewords(h)
    mine = np.frombuffer(proof.codeword, dtype=np.uint8).astype(np.int32)
    others = codewords[(codewords != mine).any(axis=1)]
    assert len(others) > 0
    substitute = PocProof(
        proof.nonce, proof.header_signature, others[0].astype(np.uint8).tobytes()
    )
    assert not verify_poc(template, pair.public_key, substitute, EASY)


def test_estimate_solve_prob_basics():
    one = estimate_solve_prob(EASY, 1, np.random.default_rng(40))
    assert one.p_hat in (0.0, 1.0)
    est = estimate_solve_prob(EASY, 400, np.random.default_rng(41))
    assert est.samples == 400
    assert est.std_err == pytest.approx(
        float(np.sqrt(est.p_hat * (1 - est.p_hat) / 400))
    )


def test_difficulty_monotone_along_table():
    # live Monte Carlo for the first three levels, 99% intervals apart
    ests = [
        estimate_solve_prob(DIFFICULTY_TABLE[i], 4000, np.random.default_rng(50 + i))
        for i in range(3)
    ]
    for a, b in zip(ests, ests[1:]):
        assert a.p_hat - 2.576 * a.std_err > b.p_hat + 2.576 * b.std_err
    # shipped table: stored measurement intervals for the resolved levels
    cal = default_calibration()
    measured = [e for e in cal.levels if not e.extrapolated]
    assert len(measured) >= 4
    for a, b in zip(measured, measured[1:]):
        assert a.p_hat - 2.576 * a.std_err > b.p_hat + 2.576 * b.std_err
    # and the full table is non-increasing, extrapolated tail included
    ps = [cal.p_hat(i) for i in range(len(cal.levels))]
    assert all(x > y for x, y in zip(ps, ps[1:]))


def test_difficulty_control_rules():
    target = 600.0
    stamps = lambda gap, count: [(i * gap, 2) for i in range(count)]
    assert difficulty_control([], 2, target, 12) == 2
    assert difficulty_control([(0, 2)], 2, target, 12) == 2
    assert difficulty_control(stamps(600, 13), 2, target, 12) == 2
    assert difficulty_control(stamps(150, 13), 2, target, 12) == 3
    assert difficulty_control(stamps(299, 13), 2, target, 12) == 3
    assert difficulty_control(stamps(301, 13), 2, target, 12) == 2
    assert difficulty_control(stamps(1201, 13), 2, target, 12) == 1
    assert difficulty_control(stamps(1199, 13), 2, target, 12) == 2
    assert difficulty_control(stamps(150, 13), 9, target, 12) == 9
    assert difficulty_control(stamps(5000, 13), 0, target, 12) == 0


def test_difficulty_control_uses_only_the_window():
    # older gaps outside the window must not influence the mean
    target = 600.0
    history = [(0, 0), (10_000, 0)] + [(10_000 + 100 * i, 0) for i in range(1, 13)]
    assert difficulty_control(history, 0, target, 12) == 1
