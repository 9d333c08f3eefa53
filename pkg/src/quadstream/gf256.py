"""GF(2^8) arithmetic with reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11B).

Exp/log tables run over the primitive element 3 (2 does not generate the
multiplicative group for this polynomial). A full 256x256 product table backs
the vectorized byte-plane operations the fountain code relies on.
"""

from __future__ import annotations

import numpy as np

REDUCTION_POLY = 0x11B


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    exp = np.zeros(510, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int64)
    value = 1
    for power in range(255):
        exp[power] = value
        log[value] = power
        doubled = value << 1
        if doubled & 0x100:
            doubled ^= REDUCTION_POLY
        value = doubled ^ value  # times 3 = times 2 plus times 1
    if value != 1:
        raise AssertionError("generator 3 must have order 255 in GF(256)")
    exp[255:] = exp[:255]
    return exp, log


_EXP, _LOG = _build_tables()

_nz = np.arange(1, 256)
MUL_TABLE = np.zeros((256, 256), dtype=np.uint8)
MUL_TABLE[1:, 1:] = _EXP[(_LOG[_nz][:, None] + _LOG[_nz][None, :]) % 255]

INV_TABLE = np.zeros(256, dtype=np.uint8)
INV_TABLE[1:] = _EXP[(255 - _LOG[_nz]) % 255]


def gf256_mul(a: int, b: int) -> int:
    """Field product of two bytes."""
    if not (0 <= a <= 255 and 0 <= b <= 255):
        raise ValueError("operands must be bytes")
    return int(MUL_TABLE[a, b])


def gf256_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse")
    return int(INV_TABLE[a])


def mul_scalar_vec(coeff: int, vec: np.ndarray) -> np.ndarray:
    """coeff * vec elementwise over the field; vec is uint8."""
    return MUL_TABLE[coeff][vec]
