"""Synthetic DCI traces from a single-cell proportional-fair downlink scheduler.

The simulator is small on purpose: per-UE on-off traffic feeding a buffer,
a bounded random walk for the channel (which drives MCS), contiguous RBG
allocation in PF order and a 16-process HARQ entity.  Every scheduled UE
receives one downlink assignment per TTI whose fields are filled from that
state, which gives the traces temporal and spatial structure.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptInputError
from .schema import DciSchema, int_to_bits

# bits one RBG (8 PRB x 12 subcarriers x 12 data symbols) carries per TTI, by MCS
RE_PER_RBG = 8 * 12 * 12
SPECTRAL_EFFICIENCY = np.round(0.15 + 0.2 * np.arange(28), 2)
MAX_MCS = 27
NUM_HARQ = 16
RV_SEQUENCE = (0, 2, 3, 1)
FEEDBACK_WINDOW = 4
BUFFER_CAP_BITS = 400_000

FIELD_WIDTHS = {
    "fdra": None,  # num_rbgs
    "tdra": 4,
    "mcs": 5,
    "ndi": 1,
    "rv": 2,
    "harq_id": 4,
    "dai": 2,
    "tpc": 2,
    "pucch_res": 3,
    "harq_timing": 3,
}


def rbg_capacity(mcs: int) -> int:
    return int(RE_PER_RBG * SPECTRAL_EFFICIENCY[mcs])


@dataclass(frozen=True)
class SimConfig:
    num_ues: int = 3
    num_rbgs: int = 13
    tti_count: int = 20_000
    seed: int = 0
    rate_range_mbps: tuple[float, float] = (10.0, 30.0)
    mean_on_ttis: float = 50.0
    mean_off_ttis: float = 50.0
    pf_window: int = 100
    bler: float = 0.1
    channel_step_prob: float = 0.3
    off_ues: tuple[int, ...] = ()

    def __post_init__(self):
        if self.num_ues < 1 or self.num_rbgs < 1 or self.tti_count < 1:
            raise ConfigError("num_ues, num_rbgs and tti_count must be >= 1")
        if self.num_ues > 0xFFFF:
            raise ConfigError("at most 65535 UEs")
        lo, hi = self.rate_range_mbps
        if not 0 < lo <= hi:
            raise ConfigError("rate range must satisfy 0 < low <= high")
        if self.mean_on_ttis < 1 or self.mean_off_ttis < 1 or self.pf_window < 1:
            raise ConfigError("mean on/off durations and PF window must be >= 1")
        if not 0 <= self.bler < 1:
            raise ConfigError("bler must be in [0, 1)")


@dataclass
class UeTrace:
    ue: int
    tti: np.ndarray   # (n,) int64, strictly increasing
    bits: np.ndarray  # (n, N) uint8

    def __len__(self):
        return len(self.tti)


@dataclass
class DciTrace:
    schema: DciSchema
    ues: list[UeTrace]
    tti_count: int = 0

    def __len__(self):
        return sum(len(u) for u in self.ues)

    def ue(self, ue_id: int) -> UeTrace:
        for u in self.ues:
            if u.ue == ue_id:
                return u
        raise KeyError(ue_id)

    def all_messages(self) -> np.ndarray:
        return np.concatenate([u.bits for u in self.ues]) if self.ues else np.empty((0, self.schema.N), np.uint8)


@dataclass
class _Harq:
    ndi: int = 0
    busy: bool = False
    tx: int = 0
    nrbg: int = 0
    mcs: int = 0
    tdra: int = 0


@dataclass
class _Ue:
    uid: int
    rate_bits: float
    on: bool
    chan: float
    chan_mean: float
    buffer: float = 0.0
    avg_thr: float = 1.0
    harq: list = field(default_factory=lambda: [_Harq() for _ in range(NUM_HARQ)])
    next_hid: int = 0
    last_mcs: int | None = None
    window: int = -1
    dai: int = 0

    def pending_retx(self):
        busy = [h for h in range(NUM_HARQ) if self.harq[h].busy]
        return busy[0] if busy else None


def _check_schema(schema: DciSchema, num_rbgs: int) -> None:
    need = dict(FIELD_WIDTHS, fdra=num_rbgs)
    have = dict(zip(schema.names, schema.widths))
    if have != need:
        raise ConfigError(f"schema fields {have} do not match generator fields {need}")


def simulate(config: SimConfig, schema: DciSchema) -> DciTrace:
    _check_schema(schema, config.num_rbgs)
    rng = np.random.default_rng(config.seed)
    lo, hi = config.rate_range_mbps
    ues = []
    for u in range(config.num_ues):
        mean = float(rng.uniform(6, 22))
        ues.append(_Ue(u, rate_bits=float(rng.uniform(lo, hi)) * 1e3,
                       on=bool(rng.random() < 0.5) and u not in config.off_ues,
                       chan=mean, chan_mean=mean))
    p_on_off = 1.0 / config.mean_on_ttis
    p_off_on = 1.0 / config.mean_off_ttis
    alpha = 1.0 / config.pf_window
    out_tti: list[list[int]] = [[] for _ in ues]
    out_vals: list[list[list[int]]] = [[] for _ in ues]
    col = {name: k for k, name in enumerate(schema.names)}
    D = schema.D

    for t in range(config.tti_count):
        # traffic and channel evolve first
        for ue in ues:
            if ue.uid in config.off_ues:
                ue.on = False
            elif ue.on:
                ue.on = rng.random() >= p_on_off
            else:
                ue.on = rng.random() < p_off_on
            if ue.on:
                ue.buffer = min(ue.buffer + ue.rate_bits, BUFFER_CAP_BITS)
            if rng.random() < config.channel_step_prob:
                p_up = min(max(0.5 + 0.05 * (ue.chan_mean - ue.chan), 0.05), 0.95)
                ue.chan = min(max(ue.chan + (1 if rng.random() < p_up else -1), 0), MAX_MCS)

        demand = [ue for ue in ues if ue.buffer > 0 or ue.pending_retx() is not None]
        metric = {ue.uid: rbg_capacity(int(ue.chan)) / max(ue.avg_thr, 1.0) for ue in demand}
        order = sorted(demand, key=lambda ue: (-metric[ue.uid], ue.uid))
        free = config.num_rbgs
        served = {ue.uid: 0.0 for ue in ues}
        window = t // FEEDBACK_WINDOW
        for ue in order:
            if free == 0:
                break
            hid = ue.pending_retx()
            if hid is not None:
                h = ue.harq[hid]
                if h.nrbg > free:
                    continue
                nrbg, mcs, tdra = h.nrbg, h.mcs, h.tdra
                h.tx += 1
            else:
                mcs = int(ue.chan)
                nrbg = min(math.ceil(ue.buffer / rbg_capacity(mcs)), free)
                tdra = 0 if nrbg >= 3 else 1 + (ue.uid + nrbg) % 4
                hid = _next_free_harq(ue)
                if hid is None:
                    continue
                h = ue.harq[hid]
                h.ndi ^= 1
                h.busy, h.tx, h.nrbg, h.mcs, h.tdra = True, 1, nrbg, mcs, tdra
                ue.buffer = max(ue.buffer - nrbg * rbg_capacity(mcs), 0.0)
                ue.next_hid = (hid + 1) % NUM_HARQ
            start = config.num_rbgs - free
            free -= nrbg
            rv = RV_SEQUENCE[(h.tx - 1) % 4]
            ok = rng.random() >= config.bler
            if ok or h.tx >= len(RV_SEQUENCE):
                h.busy = False
            if ok:
                served[ue.uid] = nrbg * rbg_capacity(mcs)

            if ue.window != window:
                ue.window, ue.dai = window, 0
            dai = ue.dai % 4
            ue.dai += 1
            if ue.last_mcs is None or mcs == ue.last_mcs:
                tpc = 1
            else:
                tpc = 2 if mcs < ue.last_mcs else 0
            if rng.random() < 0.02:
                tpc = 3
            ue.last_mcs = mcs

            vals = [0] * D
            vals[col["fdra"]] = ((1 << nrbg) - 1) << (config.num_rbgs - start - nrbg)
            vals[col["tdra"]] = tdra
            vals[col["mcs"]] = mcs
            vals[col["ndi"]] = h.ndi
            vals[col["rv"]] = rv
            vals[col["harq_id"]] = hid
            vals[col["dai"]] = dai
            vals[col["tpc"]] = tpc
            vals[col["pucch_res"]] = (2 * ue.uid + dai) % 8
            vals[col["harq_timing"]] = FEEDBACK_WINDOW - t % FEEDBACK_WINDOW
            out_tti[ue.uid].append(t)
            out_vals[ue.uid].append(vals)

        for ue in ues:
            ue.avg_thr = (1 - alpha) * ue.avg_thr + alpha * served[ue.uid]

    traces = []
    for ue in ues:
        bits = np.zeros((len(out_vals[ue.uid]), schema.N), dtype=np.uint8)
        for i, vals in enumerate(out_vals[ue.uid]):
            bits[i] = _pack(schema, vals)
        traces.append(UeTrace(ue.uid, np.asarray(out_tti[ue.uid], dtype=np.int64), bits))
    return DciTrace(schema, traces, config.tti_count)


def _next_free_harq(ue: _Ue) -> int | None:
    for i in range(NUM_HARQ):
        hid = (ue.next_hid + i) % NUM_HARQ
        if not ue.harq[hid].busy:
            return hid
    return None


def _pack(schema: DciSchema, vals) -> np.ndarray:
    out = np.empty(schema.N, dtype=np.uint8)
    for k, (v, w) in enumerate(zip(vals, schema.widths)):
        out[schema.field_slice(k)] = int_to_bits(v, w)
    return out


def split_train_test(trace: DciTrace, test_fraction: float) -> tuple[DciTrace, DciTrace]:
    """Temporal split: the last ``ceil(fraction * n)`` messages of every UE go to test."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if len(trace) == 0:
        raise ConfigError("cannot split an empty trace")
    train, test = [], []
    for u in trace.ues:
        n = len(u)
        n_test = min(math.ceil(round(test_fraction * n, 9)), n)
        cut = n - n_test
        train.append(UeTrace(u.ue, u.tti[:cut], u.bits[:cut]))
        test.append(UeTrace(u.ue, u.tti[cut:], u.bits[cut:]))
    return DciTrace(trace.schema, train, trace.tti_count), DciTrace(trace.schema, test, trace.tti_count)


def correlation_report(trace, lag: int) -> np.ndarray:
    """Absolute Pearson correlation between bit ``i`` at ``t`` and bit ``j`` at ``t - lag``.

    ``trace`` is a :class:`DciTrace`, a :class:`UeTrace` or an ``(n, N)``
    bit array; lagged pairs never cross UE boundaries.  Entries involving a
    constant bit are NaN.
    """
    if lag < 0:
        raise ConfigError("lag must be >= 0")
    if isinstance(trace, DciTrace):
        streams = [u.bits for u in trace.ues]
    elif isinstance(trace, UeTrace):
        streams = [trace.bits]
    else:
        streams = [np.asarray(trace)]
    cur, past = [], []
    for s in streams:
        if len(s) > lag:
            cur.append(s[lag:])
            past.append(s[:len(s) - lag])
    if not cur or sum(len(c) for c in cur) < 2:
        raise ConfigError(f"trace too short for lag {lag}")
    x = np.concatenate(cur).astype(np.float64)
    y = np.concatenate(past).astype(np.float64)
    x -= x.mean(axis=0)
    y -= y.mean(axis=0)
    sx = np.sqrt((x * x).sum(axis=0))
    sy = np.sqrt((y * y).sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = (x.T @ y) / np.outer(sx, sy)
    rho[(sx == 0)[:, None] | (sy == 0)[None, :]] = np.nan
    return np.abs(rho)


# -- trace files -----------------------------------------------------------

MAGIC = b"DCIT"
VERSION = 1
_HEADER = struct.Struct(">4sH8sHIHI")
_RECORD_HEAD = struct.Struct(">HI")


def save_trace(trace: DciTrace, path: str | Path) -> None:
    schema = trace.schema
    nbytes = (schema.N + 7) // 8
    records = sorted(((int(t), u.ue, row) for u in trace.ues for t, row in zip(u.tti, u.bits)),
                     key=lambda r: (r[0], r[1]))
    chunks = [_HEADER.pack(MAGIC, VERSION, schema.hash, schema.N, trace.tti_count, len(trace.ues), len(records))]
    chunks.append(struct.pack(f">{len(trace.ues)}H", *[u.ue for u in trace.ues]))
    for t, ue, row in records:
        chunks.append(_RECORD_HEAD.pack(ue, t))
        chunks.append(np.packbits(row).tobytes()[:nbytes])
    Path(path).write_bytes(b"".join(chunks))


def load_trace(path: str | Path, schema: DciSchema) -> DciTrace:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptInputError(f"{path}: too short for a trace header")
    magic, version, shash, N, T, n_ues, n_rec = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CorruptInputError(f"{path}: not a dcizip trace file (v{VERSION})")
    if shash != schema.hash or N != schema.N:
        raise ConfigError(f"{path}: trace was generated with a different schema")
    pos = _HEADER.size
    ue_ids = list(struct.unpack_from(f">{n_ues}H", data, pos))
    pos += 2 * n_ues
    nbytes = (N + 7) // 8
    rec_size = _RECORD_HEAD.size + nbytes
    if len(data) != pos + n_rec * rec_size:
        raise CorruptInputError(f"{path}: truncated or oversized record section")
    tti = {u: [] for u in ue_ids}
    rows = {u: [] for u in ue_ids}
    for i in range(n_rec):
        off = pos + i * rec_size
        ue, t = _RECORD_HEAD.unpack_from(data, off)
        if ue not in tti:
            raise CorruptInputError(f"{path}: record {i} names unknown UE {ue}")
        payload = np.frombuffer(data, np.uint8, nbytes, off + _RECORD_HEAD.size)
        tti[ue].append(t)
        rows[ue].append(np.unpackbits(payload)[:N])
    ues = [UeTrace(u, np.asarray(tti[u], dtype=np.int64),
                   np.asarray(rows[u], dtype=np.uint8).reshape(-1, N)) for u in ue_ids]
    return DciTrace(schema, ues, T)


def trace_to_text(trace: DciTrace) -> str:
    """One ``ue tti hexpayload`` line per message, in TTI order."""
    lines = []
    for t, ue, row in sorted((int(t), u.ue, row) for u in trace.ues for t, row in zip(u.tti, u.bits)):
        lines.append(f"{ue} {t} {np.packbits(row).tobytes().hex()}")
    return "\n".join(lines) + ("\n" if lines else "")
