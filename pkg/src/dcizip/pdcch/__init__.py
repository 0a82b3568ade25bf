"""Polar-coded control channel with blind payload-length decoding."""
from .crc import CRC24C_POLY, crc_attach, crc_check, crc_remainder
from .polar import (blind_length_decode, crc_aided_decode, encode_payload, info_mask, polar_encode,
                    polar_transform, reliability_sequence, scl_decode)
from .sweep import (FerCurve, FerPoint, LengthSource, PdcchConfig, fer_sweep, histogram_from_mapping, noise_sigma,
                    simulate_point, snr_at_fer, wilson_interval, with_grid, write_fer_csv)

__all__ = [
    "CRC24C_POLY", "crc_attach", "crc_check", "crc_remainder", "blind_length_decode", "crc_aided_decode",
    "encode_payload", "info_mask", "polar_encode", "polar_transform", "reliability_sequence", "scl_decode",
    "FerCurve", "FerPoint", "LengthSource", "PdcchConfig", "fer_sweep", "histogram_from_mapping", "noise_sigma",
    "simulate_point", "snr_at_fer", "wilson_interval", "with_grid", "write_fer_csv",
]
