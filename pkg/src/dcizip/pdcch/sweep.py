"""Monte-Carlo FER of the polar-coded control channel over BPSK/AWGN.

Each frame draws a compressed length from a histogram, pads the payload
with zeros to byte resolution, attaches the CRC, encodes and transmits it.
The receiver does not know the length and runs list decoding over the most
probable padded lengths.  Noise for frame ``i`` of SNR point ``j`` comes from
the substream ``(seed, j, i)`` and is shared by every curve, so curves are
compared on common random numbers.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError
from .crc import CRC24C_POLY
from .polar import blind_length_decode, encode_payload


@dataclass(frozen=True)
class PdcchConfig:
    E: int = 128
    list_size: int = 8
    crc_poly: int = CRC24C_POLY
    snr_db: tuple[float, ...] = (-4.0, -3.0, -2.0, -1.0, 0.0)
    max_frames: int = 20000
    min_errors: int = 100
    seed: int = 0
    resolution: int = 8
    max_candidates: int = 8

    def __post_init__(self):
        if self.list_size < 1:
            raise ConfigError("list size must be >= 1")
        if self.max_frames < 1 or self.min_errors < 1:
            raise ConfigError("frame and error caps must be positive")
        if self.resolution < 1 or self.max_candidates < 1:
            raise ConfigError("resolution and candidate cap must be positive")

    @property
    def crc_len(self) -> int:
        return self.crc_poly.bit_length() - 1

    def to_text(self) -> str:
        return "\n".join([
            f"E {self.E}", f"list_size {self.list_size}", f"crc_poly {self.crc_poly:#x}",
            "snr_db " + " ".join(f"{s:g}" for s in self.snr_db), f"max_frames {self.max_frames}",
            f"min_errors {self.min_errors}", f"seed {self.seed}", f"resolution {self.resolution}",
            f"max_candidates {self.max_candidates}"]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PdcchConfig":
        kw = {}
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *vals = line.split()
            try:
                if key == "snr_db":
                    kw[key] = tuple(float(v) for v in vals)
                elif key == "crc_poly":
                    kw[key] = int(vals[0], 0)
                elif key in cls.__dataclass_fields__:
                    (v,) = vals
                    kw[key] = int(v)
                else:
                    raise ConfigError(f"line {no}: unknown key {key!r}")
            except ValueError as exc:
                raise ConfigError(f"line {no}: bad value for {key}: {exc}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "PdcchConfig":
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None


@dataclass(frozen=True)
class LengthSource:
    """Distribution of compressed payload lengths and the padding granularity."""

    label: str
    lengths: tuple[int, ...]
    probs: tuple[float, ...]
    resolution: int = 8

    def __post_init__(self):
        if not self.lengths or len(self.lengths) != len(self.probs):
            raise ConfigError(f"{self.label}: empty or ragged length histogram")
        if min(self.lengths) < 1 or min(self.probs) < 0 or not math.isclose(sum(self.probs), 1.0, abs_tol=1e-9):
            raise ConfigError(f"{self.label}: histogram must have positive lengths and probabilities summing to 1")

    @classmethod
    def fixed(cls, label: str, length: int) -> "LengthSource":
        return cls(label, (length,), (1.0,), 1)

    @classmethod
    def from_lengths(cls, label: str, lengths: Sequence[int], resolution: int = 8) -> "LengthSource":
        vals, counts = np.unique(np.asarray(lengths, dtype=np.int64), return_counts=True)
        if len(vals) == 0:
            raise ConfigError(f"{label}: no lengths")
        p = counts / counts.sum()
        return cls(label, tuple(int(v) for v in vals), tuple(float(x) for x in p), resolution)

    def padded(self, K: int) -> int:
        return self.resolution * -(-K // self.resolution)

    def padded_histogram(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for K, p in zip(self.lengths, self.probs):
            A = self.padded(K)
            out[A] = out.get(A, 0.0) + p
        return out

    def candidates(self, max_candidates: int) -> list[int]:
        """Padded lengths by decreasing probability (shorter first on ties), capped."""
        hist = self.padded_histogram()
        return sorted(hist, key=lambda A: (-hist[A], A))[:max_candidates]


@dataclass(frozen=True)
class FerPoint:
    snr_db: float
    frames: int
    errors: int

    @property
    def fer(self) -> float:
        return self.errors / self.frames if self.frames else math.nan

    @property
    def ci_halfwidth(self) -> float:
        lo, hi = wilson_interval(self.errors, self.frames)
        return (hi - lo) / 2


@dataclass
class FerCurve:
    label: str
    points: list[FerPoint] = field(default_factory=list)
    candidates: list[int] = field(default_factory=list)


def wilson_interval(errors: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = errors / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def noise_sigma(snr_db: float) -> float:
    """AWGN standard deviation for unit-energy BPSK at Es/N0 = ``snr_db``."""
    return math.sqrt(1.0 / (2.0 * 10 ** (snr_db / 10)))


def simulate_frame(cfg: PdcchConfig, source: LengthSource, candidates: Sequence[int], sigma: float,
                   point: int, frame: int, curve: int) -> bool:
    """One transmission; True when the receiver recovers length and payload."""
    noise = np.random.default_rng([cfg.seed, point, frame]).standard_normal(cfg.E)
    rng = np.random.default_rng([cfg.seed, point, frame, curve + 1])
    K = int(source.lengths[rng.choice(len(source.lengths), p=source.probs)])
    A = source.padded(K)
    if A + cfg.crc_len > cfg.E:
        raise ConfigError(f"{source.label}: padded payload of {A} bits does not fit E={cfg.E}")
    payload = np.zeros(A, dtype=np.uint8)
    payload[:K] = rng.integers(0, 2, K, dtype=np.uint8)
    y = 1.0 - 2.0 * encode_payload(payload, cfg.E, cfg.crc_poly) + sigma * noise
    got = blind_length_decode(2.0 * y / sigma ** 2, candidates, cfg.list_size, cfg.crc_poly)
    return got is not None and got[0] == A and np.array_equal(got[1], payload)


def simulate_point(cfg: PdcchConfig, source: LengthSource, snr_db: float, point: int, curve: int = 0) -> FerPoint:
    sigma = noise_sigma(snr_db)
    cands = source.candidates(cfg.max_candidates)
    frames = errors = 0
    while frames < cfg.max_frames and errors < cfg.min_errors:
        errors += not simulate_frame(cfg, source, cands, sigma, point, frames, curve)
        frames += 1
    return FerPoint(float(snr_db), frames, errors)


def fer_sweep(cfg: PdcchConfig, sources: Sequence[LengthSource], progress=None) -> list[FerCurve]:
    if not cfg.snr_db:
        raise ConfigError("empty SNR grid")
    curves = []
    for c, src in enumerate(sources):
        curve = FerCurve(src.label, candidates=src.candidates(cfg.max_candidates))
        for j, snr in enumerate(cfg.snr_db):
            pt = simulate_point(cfg, src, snr, j, c)
            curve.points.append(pt)
            if progress:
                progress(src.label, pt)
        curves.append(curve)
    return curves


def snr_at_fer(curve: FerCurve, target: float = 1e-2) -> float:
    """SNR where the curve crosses ``target``, interpolating log10(FER) linearly in dB."""
    pts = sorted(curve.points, key=lambda p: p.snr_db)
    for a, b in zip(pts, pts[1:]):
        if a.fer >= target > b.fer:
            if b.fer == 0:
                return b.snr_db
            la, lb, lt = math.log10(a.fer), math.log10(b.fer), math.log10(target)
            return a.snr_db + (la - lt) / (la - lb) * (b.snr_db - a.snr_db)
    return math.nan


def write_fer_csv(curves: Sequence[FerCurve], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snr_db", "frames", "errors", "fer", "ci_halfwidth", "curve_label"])
        for curve in curves:
            for p in curve.points:
                w.writerow([f"{p.snr_db:g}", p.frames, p.errors, f"{p.fer:.6g}", f"{p.ci_halfwidth:.6g}", curve.label])


def with_grid(cfg: PdcchConfig, snr_db: Sequence[float]) -> PdcchConfig:
    return replace(cfg, snr_db=tuple(float(s) for s in snr_db))


def histogram_from_mapping(label: str, hist: Mapping[int, float], resolution: int = 8) -> LengthSource:
    total = float(sum(hist.values()))
    keys = sorted(hist)
    return LengthSource(label, tuple(keys), tuple(hist[k] / total for k in keys), resolution)


__all__ = ["PdcchConfig", "LengthSource", "FerPoint", "FerCurve", "wilson_interval", "noise_sigma",
           "simulate_frame", "simulate_point", "fer_sweep", "snr_at_fer", "write_fer_csv", "with_grid",
           "histogram_from_mapping"]

