import numpy as np

from oracles import gf_inv_bruteforce, gf_mul_peasant
from quadstream.gf256 import INV_TABLE, MUL_TABLE, gf256_inv, gf256_mul


def test_absorbing_and_identity_elements():
    for a in range(256):
        assert gf256_mul(a, 0) == 0
        assert gf256_mul(0, a) == 0
        assert gf256_mul(a, 1) == a
        assert gf256_mul(1, a) == a


def test_single_reduction_step():
    assert gf256_mul(0x80, 0x02) == 0x1B


def test_full_table_matches_peasant_oracle():
    for a in range(256):
        for b in range(a, 256):
            expected = gf_mul_peasant(a, b)
            assert MUL_TABLE[a, b] == expected
            assert MUL_TABLE[b, a] == expected


def test_inverses():
    for a in range(1, 256):
        assert gf256_mul(a, gf256_inv(a)) == 1
        assert gf256_inv(a) == gf_inv_bruteforce(a)
    assert INV_TABLE[0] == 0


def test_distributivity_sampled():
    rng = np.random.default_rng(41)
    for _ in range(2000):
        a, b, c = (int(x) for x in rng.integers(0, 256, size=3))
        assert gf256_mul(a, b ^ c) == gf256_mul(a, b) ^ gf256_mul(a, c)
        assert gf256_mul(gf256_mul(a, b), c) == gf256_mul(a, gf256_mul(b, c))
