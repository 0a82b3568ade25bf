"""Polar code for the control channel: frozen set, encoder, CRC-aided list decoding."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .._backend import kernels
from ..errors import ConfigError
from .crc import CRC24C_POLY, crc_attach, crc_check

MAX_N = 128


@lru_cache(maxsize=1)
def _sequence_128() -> np.ndarray:
    text = resources.files("dcizip").joinpath("data", "polar_reliability_128.txt").read_text()
    seq = np.array([int(t) for line in text.splitlines() if not line.startswith("#") for t in line.split()])
    if sorted(seq.tolist()) != list(range(MAX_N)):
        raise ConfigError("polar reliability table is damaged")
    return seq


def reliability_sequence(N: int) -> np.ndarray:
    """Bit-channel indices of a length-``N`` code, least reliable first (the table is nested)."""
    if N < 2 or N & (N - 1) or N > MAX_N:
        raise ConfigError(f"polar length must be a power of two in 2..{MAX_N}, got {N}")
    seq = _sequence_128()
    return seq[seq < N]


@lru_cache(maxsize=512)
def info_mask(N: int, K: int) -> np.ndarray:
    """1 on the ``K`` most reliable positions, 0 on frozen ones."""
    if not 0 < K <= N:
        raise ConfigError(f"need 0 < K <= N, got K={K}, N={N}")
    mask = np.zeros(N, dtype=np.uint8)
    mask[reliability_sequence(N)[N - K:]] = 1
    mask.setflags(write=False)
    return mask


def polar_transform(u) -> np.ndarray:
    """``u · F^{⊗n}`` over GF(2) along the last axis, F = [[1, 0], [1, 1]]."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    step = 1
    while step < N:
        v = x.reshape(*x.shape[:-1], N // (2 * step), 2, step)
        v[..., 0, :] ^= v[..., 1, :]
        step *= 2
    return x


def polar_encode(bits, N: int) -> np.ndarray:
    """Place ``bits`` (payload plus CRC) on the info positions and transform."""
    bits = np.asarray(bits, dtype=np.uint8)
    K = bits.shape[-1]
    if K > N:
        raise ConfigError(f"{K} info bits do not fit a length-{N} code")
    u = np.zeros(bits.shape[:-1] + (N,), dtype=np.uint8)
    u[..., info_mask(N, K).astype(bool)] = bits
    return polar_transform(u)


def scl_decode(llr, K: int, list_size: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Successive-cancellation list decoding.

    Returns the surviving info-bit vectors ``(P, K)`` sorted by path metric
    (most likely first) and their metrics.  Positive LLR favours bit 0.
    """
    llr = np.asarray(llr, dtype=np.float64)
    mask = info_mask(len(llr), K)
    u, pm = kernels.scl_decode(llr, mask, list_size)
    order = np.argsort(pm, kind="stable")
    return np.asarray(u)[order][:, mask.astype(bool)], np.asarray(pm)[order]


def crc_aided_decode(llr, A: int, list_size: int = 8, poly: int = CRC24C_POLY) -> np.ndarray | None:
    """Payload of length ``A`` from the best CRC-passing path, or ``None``."""
    width = poly.bit_length() - 1
    cands, _ = scl_decode(llr, A + width, list_size)
    ok = np.flatnonzero(crc_check(cands, poly))
    return cands[ok[0], :A].copy() if len(ok) else None


def encode_payload(payload, N: int, poly: int = CRC24C_POLY) -> np.ndarray:
    return polar_encode(crc_attach(payload, poly), N)


def blind_length_decode(llr, candidates: Sequence[int], list_size: int = 8,
                        poly: int = CRC24C_POLY) -> tuple[int, np.ndarray] | None:
    """Try payload lengths in the given (probability) order; the first CRC pass wins."""
    for A in candidates:
        payload = crc_aided_decode(llr, A, list_size, poly)
        if payload is not None:
            return A, payload
    return None
