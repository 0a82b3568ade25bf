"""Binary arithmetic coding driven by externally supplied bit probabilities.

Probabilities are clamped to ``[P_MIN, 1 - P_MIN]`` and quantised to 16
bits before they reach the coder, so encoder and decoder only ever see
integers.  The range registers are 32 bits wide; a finished stream ends
with two disambiguation bits.
"""
from __future__ import annotations

import numpy as np

from .._backend import kernels

P_MIN = 1.0 / 4096
PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS
FLUSH_BITS = 2

_QMIN = int(round(P_MIN * PROB_ONE))
_QMAX = PROB_ONE - _QMIN


def quantize(p1) -> np.ndarray:
    """Map P(bit = 1) onto the coder's integer scale."""
    q = np.rint(np.asarray(p1, dtype=np.float64) * PROB_ONE)
    return np.clip(np.nan_to_num(q, nan=PROB_ONE / 2), _QMIN, _QMAX).astype(np.int32)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / PROB_ONE


class ArithmeticEncoder:
    def __init__(self):
        self._enc = kernels.BinaryArithmeticEncoder()

    def encode_bit(self, bit: int, p1: float) -> None:
        self.encode([bit], [p1])

    def encode(self, bits, p1) -> None:
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        self._enc.encode(bits, np.atleast_1d(quantize(p1)))

    def finish(self) -> np.ndarray:
        """Flush and return the complete bit stream."""
        return self._enc.finish()


class ArithmeticDecoder:
    """Decodes a stream produced by :class:`ArithmeticEncoder`.

    The stream may carry trailing padding; :attr:`consumed` reports how many
    leading bits belong to the message.  Raises ``TruncatedStreamError`` if
    the stream is shorter than the symbols requested.
    """

    def __init__(self, stream):
        self._dec = kernels.BinaryArithmeticDecoder(np.ascontiguousarray(stream, dtype=np.uint8))

    def decode_bit(self, p1: float) -> int:
        return int(self.decode([p1])[0])

    def decode(self, p1) -> np.ndarray:
        return self._dec.decode(np.atleast_1d(quantize(p1)))

    @property
    def consumed(self) -> int:
        return self._dec.consumed


def encode_bits(bits, p1) -> np.ndarray:
    enc = ArithmeticEncoder()
    enc.encode(bits, p1)
    return enc.finish()


def decode_bits(stream, p1) -> np.ndarray:
    return ArithmeticDecoder(stream).decode(p1)


def ideal_length(bits, p1) -> float:
    """Information content ``-sum log2 p(bit)`` under the quantised model."""
    p = dequantize(quantize(p1))
    bits = np.asarray(bits)
    return float(-np.sum(np.where(bits == 1, np.log2(p), np.log2(1 - p))))
