# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: binary range coder and polar SC-list decoder.

Must stay bit-exact with ``_pykernels``; the test-suite runs both.
"""
import numpy as np

from libc.string cimport memcpy
from libc.math cimport fabs

from .errors import TruncatedStreamError

cdef unsigned long long TOP = 0xFFFFFFFF
cdef unsigned long long HALF = 0x80000000
cdef unsigned long long QUARTER = 0x40000000
cdef unsigned long long THREE_QUARTERS = 0xC0000000


cdef class BinaryArithmeticEncoder:
    cdef unsigned long long low, high
    cdef long pending
    cdef bytearray out
    cdef bint finished

    def __init__(self):
        self.low = 0
        self.high = TOP
        self.pending = 0
        self.out = bytearray()
        self.finished = False

    cdef inline void _emit(self, int bit):
        self.out.append(bit)
        while self.pending > 0:
            self.out.append(1 - bit)
            self.pending -= 1

    def encode(self, const unsigned char[:] bits, const int[:] p1q):
        cdef Py_ssize_t i, n = bits.shape[0]
        cdef unsigned long long r, split
        if p1q.shape[0] != n:
            raise ValueError("bits and probabilities differ in length")
        if self.finished:
            raise ValueError("encoder already finished")
        for i in range(n):
            r = self.high - self.low + 1
            split = self.low + ((r * <unsigned long long>(65536 - p1q[i])) >> 16)
            if bits[i]:
                self.low = split
            else:
                self.high = split - 1
            while True:
                if self.high < HALF:
                    self._emit(0)
                elif self.low >= HALF:
                    self._emit(1)
                    self.low -= HALF
                    self.high -= HALF
                elif self.low >= QUARTER and self.high < THREE_QUARTERS:
                    self.pending += 1
                    self.low -= QUARTER
                    self.high -= QUARTER
                else:
                    break
                self.low = self.low << 1
                self.high = (self.high << 1) | 1

    def finish(self):
        if not self.finished:
            self.pending += 1
            self._emit(0 if self.low < QUARTER else 1)
            self.finished = True
        return np.frombuffer(bytes(self.out), dtype=np.uint8).copy()

    @property
    def n_bits(self):
        return len(self.out) + self.pending


cdef class BinaryArithmeticDecoder:
    cdef unsigned long long low, high, value
    cdef const unsigned char[:] stream
    cdef Py_ssize_t pos, n, shifts

    def __init__(self, stream):
        cdef int i
        self.stream = np.ascontiguousarray(stream, dtype=np.uint8)
        self.n = self.stream.shape[0]
        self.low = 0
        self.high = TOP
        self.value = 0
        self.pos = 0
        self.shifts = 0
        for i in range(32):
            self.value = (self.value << 1) | self._next()

    cdef inline unsigned long long _next(self):
        cdef unsigned long long b = 0
        if self.pos < self.n:
            b = self.stream[self.pos]
        self.pos += 1
        return b

    def decode(self, const int[:] p1q):
        cdef Py_ssize_t i, m = p1q.shape[0]
        cdef unsigned long long r, split
        out = np.empty(m, dtype=np.uint8)
        cdef unsigned char[:] o = out
        for i in range(m):
            r = self.high - self.low + 1
            split = self.low + ((r * <unsigned long long>(65536 - p1q[i])) >> 16)
            if self.value >= split:
                o[i] = 1
                self.low = split
            else:
                o[i] = 0
                self.high = split - 1
            while True:
                if self.high < HALF:
                    pass
                elif self.low >= HALF:
                    self.low -= HALF
                    self.high -= HALF
                    self.value -= HALF
                elif self.low >= QUARTER and self.high < THREE_QUARTERS:
                    self.low -= QUARTER
                    self.high -= QUARTER
                    self.value -= QUARTER
                else:
                    break
                self.low = self.low << 1
                self.high = (self.high << 1) | 1
                self.value = (self.value << 1) | self._next()
                self.shifts += 1
                if self.shifts + 2 > self.n:
                    raise TruncatedStreamError(
                        f"stream of {self.n} bits exhausted after {self.shifts} renormalisations")
        return out

    @property
    def consumed(self):
        """Bits of the stream that belong to the decoded message so far (incl. flush)."""
        return self.shifts + 2


# ----------------------------------------------------------------------------
# Polar successive-cancellation list decoding
# ----------------------------------------------------------------------------

cdef inline double _f(double a, double b) nogil:
    cdef double m = fabs(a)
    if fabs(b) < m:
        m = fabs(b)
    if (a < 0) != (b < 0):
        return -m
    return m


cdef class _SclState:
    cdef int N, n, L, n_act
    cdef double[:, :] alpha
    cdef unsigned char[:, :] xs
    cdef unsigned char[:, :] u
    cdef double[:] pm
    cdef int[:] order
    cdef int[:] aoff
    cdef const unsigned char[:] info

    def __init__(self, int N, int L, const unsigned char[:] info):
        cdef int d, off = 0
        self.N = N
        self.n = 0
        while (1 << self.n) < N:
            self.n += 1
        self.L = L
        self.info = info
        self.aoff = np.zeros(self.n + 1, dtype=np.int32)
        for d in range(self.n + 1):
            self.aoff[d] = off
            off += N >> d
        self.alpha = np.zeros((L, off), dtype=np.float64)
        self.xs = np.zeros((L, off), dtype=np.uint8)
        self.u = np.zeros((L, N), dtype=np.uint8)
        self.pm = np.zeros(L, dtype=np.float64)
        self.order = np.zeros(L, dtype=np.int32)
        self.n_act = 1

    cdef void _copy_slot(self, int dst, int src):
        memcpy(&self.alpha[dst, 0], &self.alpha[src, 0], self.alpha.shape[1] * sizeof(double))
        memcpy(&self.xs[dst, 0], &self.xs[src, 0], self.xs.shape[1])
        memcpy(&self.u[dst, 0], &self.u[src, 0], self.N)

    cdef void _leaf(self, int i):
        cdef int j, s, c, k, b, cnt, nsel, p, nfree
        cdef int ao = self.aoff[self.n]
        cdef double lam
        cdef double cand[128]
        cdef int sel[64]
        cdef int idx[128]
        cdef int children[64]
        cdef int free_slots[64]
        cdef int new_order[64]
        cdef double new_pm[64]
        if not self.info[i]:
            for j in range(self.n_act):
                s = self.order[j]
                lam = self.alpha[s, ao]
                if lam < 0:
                    self.pm[s] += -lam
                self.u[s, i] = 0
                self.xs[s, ao] = 0
            return
        cnt = 2 * self.n_act
        for j in range(self.n_act):
            s = self.order[j]
            lam = self.alpha[s, ao]
            cand[2 * j] = self.pm[s] + (-lam if lam < 0 else 0.0)
            cand[2 * j + 1] = self.pm[s] + (lam if lam >= 0 else 0.0)
        if cnt <= self.L:
            nsel = cnt
            for c in range(cnt):
                sel[c] = c
        else:
            # stable selection of the L smallest metrics, then back to candidate order
            for c in range(cnt):
                idx[c] = c
            for c in range(1, cnt):
                k = idx[c]
                p = c - 1
                while p >= 0 and cand[idx[p]] > cand[k]:
                    idx[p + 1] = idx[p]
                    p -= 1
                idx[p + 1] = k
            nsel = self.L
            for c in range(nsel):
                sel[c] = idx[c]
            for c in range(1, nsel):
                k = sel[c]
                p = c - 1
                while p >= 0 and sel[p] > k:
                    sel[p + 1] = sel[p]
                    p -= 1
                sel[p + 1] = k
        for j in range(self.n_act):
            children[j] = 0
        for c in range(nsel):
            children[sel[c] >> 1] += 1
        nfree = 0
        for j in range(self.n_act):
            if children[j] == 0:
                free_slots[nfree] = self.order[j]
                nfree += 1
        for j in range(self.n_act, self.L):
            free_slots[nfree] = self.order[j]
            nfree += 1
        # first child of a parent keeps the parent's slot, a second child takes a free slot
        for c in range(nsel):
            j = sel[c] >> 1
            b = sel[c] & 1
            s = self.order[j]
            if children[j] == 2 and b == 1:
                nfree -= 1
                p = free_slots[nfree]
                self._copy_slot(p, s)
                s = p
            new_order[c] = s
            new_pm[c] = cand[sel[c]]
        for c in range(nsel):
            s = new_order[c]
            b = sel[c] & 1
            self.u[s, i] = b
            self.xs[s, ao] = b
            self.pm[s] = new_pm[c]
        # keep unused slots listed after the active ones
        k = nsel
        for j in range(nfree):
            new_order[k] = free_slots[j]
            k += 1
        for c in range(self.L):
            self.order[c] = new_order[c]
        self.n_act = nsel

    cdef void _rec(self, int d, int base):
        cdef int m = self.N >> d
        cdef int half = m >> 1
        cdef int j, s, i
        cdef int a0, a1
        if m == 1:
            self._leaf(base)
            return
        a0 = self.aoff[d]
        a1 = self.aoff[d + 1]
        for j in range(self.n_act):
            s = self.order[j]
            for i in range(half):
                self.alpha[s, a1 + i] = _f(self.alpha[s, a0 + i], self.alpha[s, a0 + half + i])
        self._rec(d + 1, base)
        for j in range(self.n_act):
            s = self.order[j]
            for i in range(half):
                self.xs[s, a0 + i] = self.xs[s, a1 + i]
                if self.xs[s, a1 + i]:
                    self.alpha[s, a1 + i] = self.alpha[s, a0 + half + i] - self.alpha[s, a0 + i]
                else:
                    self.alpha[s, a1 + i] = self.alpha[s, a0 + half + i] + self.alpha[s, a0 + i]
        self._rec(d + 1, base + half)
        for j in range(self.n_act):
            s = self.order[j]
            for i in range(half):
                self.xs[s, a0 + half + i] = self.xs[s, a1 + i]
                self.xs[s, a0 + i] ^= self.xs[s, a1 + i]


def scl_decode(llr, info_mask, int list_size):
    """Run SC-list decoding; return ``(u, metrics)`` for surviving paths.

    Rows of ``u`` are full length-N input vectors, in candidate order (not
    sorted by metric).  A smaller metric means a more likely path.
    """
    cdef double[:] lv = np.ascontiguousarray(llr, dtype=np.float64)
    cdef const unsigned char[:] info = np.ascontiguousarray(info_mask, dtype=np.uint8)
    cdef int N = lv.shape[0]
    cdef int i, j
    if info.shape[0] != N or N & (N - 1) or N < 2:
        raise ValueError("llr and info mask must share a power-of-two length")
    if not 1 <= list_size <= 64:
        raise ValueError("list size must be in 1..64")
    st = _SclState(N, list_size, info)
    cdef _SclState state = st
    for j in range(list_size):
        state.order[j] = j
    for i in range(N):
        state.alpha[0, i] = lv[i]
    state._rec(0, 0)
    u = np.empty((state.n_act, N), dtype=np.uint8)
    pm = np.empty(state.n_act, dtype=np.float64)
    for j in range(state.n_act):
        u[j] = np.asarray(state.u[state.order[j]])
        pm[j] = state.pm[state.order[j]]
    return u, pm
