import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finitekey.mathcore import DomainError
from finitekey.privacy_amp import (
    PRNG_ALGORITHM,
    HashSpec,
    apply_hash,
    apply_hash_batch,
    apply_hash_fft,
    apply_hash_naive,
    build_hash,
    pack_bits,
    philox_generator,
    random_bits,
    unpack_bits,
    verification_tag,
)


def all_specs(n_in, m_out):
    for bits in itertools.product((0, 1), repeat=n_in - 1):
        yield HashSpec.from_bits(n_in, m_out, np.array(bits, dtype=np.uint8))


def all_keys(n):
    return [np.array(b, dtype=np.uint8) for b in itertools.product((0, 1), repeat=n)]


def dense(spec, key):
    return (spec.matrix().astype(int) @ key.astype(int)) % 2


# --- family structure -------------------------------------------------------

def test_matrix_shape_and_identity_block():
    spec = build_hash(9, 4, seed=3)
    M = spec.matrix()
    assert M.shape == (4, 9)
    np.testing.assert_array_equal(M[:, :4], np.eye(4, dtype=np.uint8))
    T = spec.toeplitz_block()
    # constant along diagonals
    for i in range(1, 4):
        np.testing.assert_array_equal(T[i, 1:], T[i - 1, :-1])


@pytest.mark.parametrize("n_in,m_out", [(6, 3), (8, 5)])
def test_universal_two_exhaustive(n_in, m_out):
    specs = list(all_specs(n_in, m_out))
    keys = all_keys(n_in)
    outs = np.array([[dense(s, k) for k in keys] for s in specs])  # (S, K, m)
    codes = outs @ (1 << np.arange(m_out))
    worst = 0.0
    for a, b in itertools.combinations(range(len(keys)), 2):
        worst = max(worst, np.mean(codes[:, a] == codes[:, b]))
    assert worst <= 2.0 ** -m_out + 1e-12


@pytest.mark.parametrize("n_in,m_out", [(6, 3), (7, 2), (10, 4)])
def test_fast_paths_match_dense(n_in, m_out):
    rng = np.random.default_rng(0)
    for spec in itertools.islice(all_specs(n_in, m_out), 0, None, 3):
        for key in rng.integers(0, 2, size=(8, n_in), dtype=np.uint8):
            ref = dense(spec, key)
            np.testing.assert_array_equal(apply_hash_naive(spec, key), ref)
            np.testing.assert_array_equal(apply_hash_fft(spec, key), ref)


def test_surjective_for_every_seed():
    # The identity block makes every output reachable.
    for spec in all_specs(7, 3):
        outs = {tuple(dense(spec, k)) for k in all_keys(7)}
        assert len(outs) == 8


@pytest.mark.parametrize("n_in,m_out", [(8, 3), (12, 4)])
def test_uniform_preimages(n_in, m_out):
    spec = build_hash(n_in, m_out, seed=11)
    keys = np.array(all_keys(n_in))
    codes = np.array([apply_hash(spec, k) for k in keys]) @ (1 << np.arange(m_out))
    counts = np.bincount(codes, minlength=2**m_out)
    assert np.all(counts == 2 ** (n_in - m_out))


@settings(max_examples=40)
@given(st.integers(2, 300), st.data())
def test_linearity(n_in, data):
    m_out = data.draw(st.integers(1, n_in))
    seed = data.draw(st.integers(0, 2**64 - 1))
    spec = build_hash(n_in, m_out, seed)
    rng = np.random.default_rng(seed % 2**32)
    x, y = rng.integers(0, 2, size=(2, n_in), dtype=np.uint8)
    hx, hy, hxy = (apply_hash_fft(spec, v) for v in (x, y, x ^ y))
    np.testing.assert_array_equal(hxy, hx ^ hy)
    np.testing.assert_array_equal(apply_hash_naive(spec, x), hx)


def test_fft_matches_naive_large():
    spec = build_hash(1 << 14, 5000, seed=2024)
    key = random_bits(philox_generator(7), 1 << 14)
    np.testing.assert_array_equal(apply_hash_fft(spec, key), apply_hash_naive(spec, key))


def test_fft_matches_naive_at_one_million():
    spec = build_hash(10**6, 10**6 - 1000, seed=99)
    key = random_bits(philox_generator(8), 10**6)
    np.testing.assert_array_equal(apply_hash_fft(spec, key), apply_hash_naive(spec, key))


def test_batch_matches_single():
    rng = np.random.default_rng(5)
    seeds = rng.integers(0, 2, size=(16, 29), dtype=np.uint8)
    keys = rng.integers(0, 2, size=(16, 30), dtype=np.uint8)
    out = apply_hash_batch(seeds, keys, 6)
    for i in range(16):
        spec = HashSpec.from_bits(30, 6, seeds[i])
        np.testing.assert_array_equal(out[i], apply_hash_naive(spec, keys[i]))
    with pytest.raises(DomainError):
        apply_hash_batch(seeds[:, :5], keys, 6)


# --- determinism and serialization ------------------------------------------

def test_build_hash_is_deterministic():
    a, b = build_hash(100, 40, 123), build_hash(100, 40, 123)
    assert a == b and a.provenance == (PRNG_ALGORITHM, 123, 0)
    assert build_hash(100, 40, 124).seed != a.seed
    assert build_hash(100, 40, 123, stream=1).seed != a.seed


def test_seed_bit_order_is_lsb_first():
    gen = philox_generator(99, 0x48415348)
    word = int(gen.bit_generator.random_raw(1)[0])
    spec = build_hash(65, 1, 99)
    expect = [(word >> i) & 1 for i in range(64)]
    assert list(spec.seed_bits) == expect


def test_roundtrip_serialization():
    spec = build_hash(1001, 300, 42)
    data = spec.to_bytes()
    assert data[:4] == b"MTPZ" and data[4] == 1
    back = HashSpec.from_bytes(data)
    assert (back.n_in, back.m_out, back.seed) == (spec.n_in, spec.m_out, spec.seed)
    assert back.digest() == spec.digest()
    with pytest.raises(DomainError):
        HashSpec.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(DomainError):
        HashSpec.from_bytes(data[:4] + b"\x02" + data[5:])


def test_pack_unpack():
    bits = np.array([1, 0, 1, 1, 0, 0, 0, 0, 1], dtype=np.uint8)
    assert pack_bits(bits) == bytes([0b00001101, 0b1])
    np.testing.assert_array_equal(unpack_bits(pack_bits(bits), 9), bits)
    with pytest.raises(DomainError):
        unpack_bits(b"\x00", 9)


def test_input_validation():
    spec = build_hash(10, 4, 0)
    with pytest.raises(DomainError):
        apply_hash(spec, np.zeros(9, dtype=np.uint8))
    with pytest.raises(DomainError):
        apply_hash(spec, np.full(10, 2))
    with pytest.raises(DomainError):
        build_hash(4, 5, 0)
    with pytest.raises(DomainError):
        HashSpec(10, 4, b"\x00")


def test_identity_when_square():
    spec = build_hash(17, 17, 1)
    key = random_bits(philox_generator(3), 17)
    np.testing.assert_array_equal(apply_hash(spec, key), key)


def test_verification_tag_collision_rate():
    # Two fixed distinct keys collide under a random r-bit tag about 2^-r of the time.
    x = np.zeros(40, dtype=np.uint8)
    y = x.copy()
    y[[3, 17, 38]] = 1
    r, trials = 4, 4000
    hits = sum(np.array_equal(verification_tag(x, build_hash(40, r, t)),
                              verification_tag(y, build_hash(40, r, t)))
               for t in range(trials))
    p = 2.0 ** -r
    assert hits / trials <= p + 4 * np.sqrt(p * (1 - p) / trials)
