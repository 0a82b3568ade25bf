"""CRC-24 attachment for DCI payloads.

The 5G downlink-control CRC ("24C") is computed over the payload with 24
ones prepended, which makes the check sensitive to leading zeros and so to
the payload-length hypothesis.  Because the CRC is affine in the payload
bits, checks for many candidate paths reduce to one GF(2) matrix product.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

CRC24C_POLY = 0x1B2B117
CRC_LEN = 24


def _lfsr(bits, poly: int, width: int) -> int:
    reg = 0
    top = 1 << width
    for b in bits:
        reg = (reg << 1) | int(b)
        if reg & top:
            reg ^= poly
    for _ in range(width):
        reg <<= 1
        if reg & top:
            reg ^= poly
    return reg


def crc_remainder(payload, poly: int = CRC24C_POLY, ones_prefix: bool = True) -> np.ndarray:
    """CRC parity bits (MSB first) of ``payload``."""
    width = poly.bit_length() - 1
    bits = list(np.asarray(payload, dtype=np.uint8))
    if ones_prefix:
        bits = [1] * width + bits
    reg = _lfsr(bits, poly, width)
    return np.array([(reg >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def crc_attach(payload, poly: int = CRC24C_POLY) -> np.ndarray:
    payload = np.asarray(payload, dtype=np.uint8)
    return np.concatenate([payload, crc_remainder(payload, poly)])


@lru_cache(maxsize=256)
def _affine(A: int, poly: int):
    # parity(payload) = offset XOR payload @ G  (mod 2)
    offset = crc_remainder(np.zeros(A, np.uint8), poly)
    G = np.empty((A, len(offset)), dtype=np.uint8)
    for i in range(A):
        e = np.zeros(A, np.uint8)
        e[i] = 1
        G[i] = crc_remainder(e, poly) ^ offset
    return offset, G


def crc_check(blocks, poly: int = CRC24C_POLY) -> np.ndarray:
    """Boolean per row of ``blocks`` (payload followed by parity)."""
    blocks = np.atleast_2d(np.asarray(blocks, dtype=np.uint8))
    width = poly.bit_length() - 1
    A = blocks.shape[1] - width
    if A < 0:
        raise ValueError("block shorter than the CRC")
    offset, G = _affine(A, poly)
    parity = (blocks[:, :A].astype(np.int64) @ G) & 1
    return np.all((parity ^ offset) == blocks[:, A:], axis=1)
