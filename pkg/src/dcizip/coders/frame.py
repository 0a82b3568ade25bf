from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METHODS = ("identity", "huffman", "adaptive", "rnn", "transformer", "joint")


@dataclass(frozen=True)
class CompressedFrame:
    """One compressed message; ``bits`` is the payload, ``K`` its length."""

    method: str
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", np.ascontiguousarray(self.bits, dtype=np.uint8))

    @property
    def K(self) -> int:
        return int(self.bits.shape[0])

    def __len__(self):
        return self.K

    def __eq__(self, other):
        return (isinstance(other, CompressedFrame) and self.method == other.method
                and np.array_equal(self.bits, other.bits))

    __hash__ = None
