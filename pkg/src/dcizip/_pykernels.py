"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Both implementations produce identical bit streams and identical list
decoder outputs for identical inputs.
"""
import numpy as np

from .errors import TruncatedStreamError

TOP = 0xFFFFFFFF
HALF = 0x80000000
QUARTER = 0x40000000
THREE_QUARTERS = 0xC0000000


class BinaryArithmeticEncoder:
    def __init__(self):
        self.low = 0
        self.high = TOP
        self.pending = 0
        self.out = []
        self.finished = False

    def _emit(self, bit):
        self.out.append(bit)
        if self.pending:
            self.out.extend([1 - bit] * self.pending)
            self.pending = 0

    def encode(self, bits, p1q):
        if len(bits) != len(p1q):
            raise ValueError("bits and probabilities differ in length")
        if self.finished:
            raise ValueError("encoder already finished")
        low, high = self.low, self.high
        for bit, p in zip(np.asarray(bits).tolist(), np.asarray(p1q).tolist()):
            split = low + (((high - low + 1) * (65536 - p)) >> 16)
            if bit:
                low = split
            else:
                high = split - 1
            while True:
                if high < HALF:
                    self._emit(0)
                elif low >= HALF:
                    self._emit(1)
                    low -= HALF
                    high -= HALF
                elif low >= QUARTER and high < THREE_QUARTERS:
                    self.pending += 1
                    low -= QUARTER
                    high -= QUARTER
                else:
                    break
                low <<= 1
                high = (high << 1) | 1
        self.low, self.high = low, high

    def finish(self):
        if not self.finished:
            self.pending += 1
            self._emit(0 if self.low < QUARTER else 1)
            self.finished = True
        return np.array(self.out, dtype=np.uint8)

    @property
    def n_bits(self):
        return len(self.out) + self.pending


class BinaryArithmeticDecoder:
    def __init__(self, stream):
        self.stream = np.asarray(stream, dtype=np.uint8).tolist()
        self.n = len(self.stream)
        self.low = 0
        self.high = TOP
        self.pos = 0
        self.shifts = 0
        value = 0
        for _ in range(32):
            value = (value << 1) | self._next()
        self.value = value

    def _next(self):
        b = self.stream[self.pos] if self.pos < self.n else 0
        self.pos += 1
        return b

    def decode(self, p1q):
        low, high, value = self.low, self.high, self.value
        out = np.empty(len(p1q), dtype=np.uint8)
        try:
            for i, p in enumerate(np.asarray(p1q).tolist()):
                split = low + (((high - low + 1) * (65536 - p)) >> 16)
                if value >= split:
                    out[i] = 1
                    low = split
                else:
                    out[i] = 0
                    high = split - 1
                while True:
                    if high < HALF:
                        pass
                    elif low >= HALF:
                        low -= HALF
                        high -= HALF
                        value -= HALF
                    elif low >= QUARTER and high < THREE_QUARTERS:
                        low -= QUARTER
                        high -= QUARTER
                        value -= QUARTER
                    else:
                        break
                    low <<= 1
                    high = (high << 1) | 1
                    value = (value << 1) | self._next()
                    self.shifts += 1
                    if self.shifts + 2 > self.n:
                        raise TruncatedStreamError(
                            f"stream of {self.n} bits exhausted after {self.shifts} renormalisations")
        finally:
            self.low, self.high, self.value = low, high, value
        return out

    @property
    def consumed(self):
        return self.shifts + 2


def _f(a, b):
    m = np.minimum(np.abs(a), np.abs(b))
    return np.where((a < 0) != (b < 0), -m, m)


class _Scl:
    def __init__(self, info, list_size):
        self.info = info
        self.L = list_size
        self.u = np.zeros((1, len(info)), dtype=np.uint8)
        self.pm = np.zeros(1)

    def leaf(self, lam, i):
        # lam: (P,) llr of leaf i per path
        if not self.info[i]:
            self.pm = self.pm + np.where(lam < 0, -lam, 0.0)
            return np.zeros((len(lam), 1), dtype=np.uint8), np.arange(len(lam))
        cand = np.empty(2 * len(lam))
        cand[0::2] = self.pm + np.where(lam < 0, -lam, 0.0)
        cand[1::2] = self.pm + np.where(lam >= 0, lam, 0.0)
        if len(cand) <= self.L:
            sel = np.arange(len(cand))
        else:
            sel = np.sort(np.argsort(cand, kind="stable")[:self.L])
        parents, bits = sel >> 1, (sel & 1).astype(np.uint8)
        self.u = self.u[parents]
        self.u[:, i] = bits
        self.pm = cand[sel]
        return bits[:, None], parents

    def rec(self, alpha, base):
        m = alpha.shape[1]
        if m == 1:
            return self.leaf(alpha[:, 0], base)
        half = m // 2
        a, b = alpha[:, :half], alpha[:, half:]
        xl, p1 = self.rec(_f(a, b), base)
        a, b = a[p1], b[p1]
        xr, p2 = self.rec(np.where(xl == 1, b - a, b + a), base + half)
        xl = xl[p2]
        return np.concatenate([xl ^ xr, xr], axis=1), p1[p2]


def scl_decode(llr, info_mask, list_size):
    llr = np.asarray(llr, dtype=np.float64)
    info = np.asarray(info_mask, dtype=np.uint8)
    N = len(llr)
    if len(info) != N or N & (N - 1) or N < 2:
        raise ValueError("llr and info mask must share a power-of-two length")
    if not 1 <= list_size <= 64:
        raise ValueError("list size must be in 1..64")
    dec = _Scl(info, list_size)
    dec.rec(llr[None, :], 0)
    return dec.u.copy(), dec.pm.copy()
