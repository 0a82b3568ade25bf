import hashlib
import math

import numpy as np
import pytest

from dcizip.errors import ConfigError, CorruptInputError
from dcizip.schema import DciSchema
from dcizip.tracegen import (SimConfig, correlation_report, load_trace, save_trace, simulate, split_train_test,
                             trace_to_text)


def test_default_shape(schema, small_trace):
    assert len(small_trace.ues) == 3
    for u in small_trace.ues:
        assert u.bits.shape == (len(u), schema.N)
        assert np.all(np.diff(u.tti) > 0)
        assert set(np.unique(u.bits)) <= {0, 1}


def test_seeded_determinism(schema):
    a = simulate(SimConfig(tti_count=400, seed=7), schema)
    b = simulate(SimConfig(tti_count=400, seed=7), schema)
    c = simulate(SimConfig(tti_count=400, seed=8), schema)
    assert trace_to_text(a) == trace_to_text(b)
    assert trace_to_text(a) != trace_to_text(c)


def test_fields_are_consistent(schema, small_trace):
    for u in small_trace.ues:
        vals = np.array([schema.field_values(m) for m in u.bits])
        fdra = vals[:, schema.index("fdra")]
        assert np.all(fdra > 0)
        # contiguous allocation: the set bits of fdra form one run
        for v in fdra:
            s = format(int(v), "013b").strip("0")
            assert "0" not in s
        # harq_timing = 4 - t % 4
        assert np.array_equal(vals[:, schema.index("harq_timing")], 4 - u.tti % 4)


def test_off_ue_has_no_messages(schema):
    tr = simulate(SimConfig(tti_count=300, off_ues=(1,)), schema)
    assert len(tr.ue(1)) == 0 and len(tr.ue(0)) > 0


def test_schema_mismatch_is_config_error():
    with pytest.raises(ConfigError):
        simulate(SimConfig(tti_count=10), DciSchema.from_widths([13, 4, 5]))


def test_bad_config():
    with pytest.raises(ConfigError):
        SimConfig(num_ues=0)
    with pytest.raises(ConfigError):
        SimConfig(bler=1.0)


def test_temporal_split(small_trace):
    train, test = split_train_test(small_trace, 0.03)
    for full, a, b in zip(small_trace.ues, train.ues, test.ues):
        assert len(b) == math.ceil(0.03 * len(full))
        assert np.array_equal(np.concatenate([a.bits, b.bits]), full.bits)
        assert a.tti[-1] < b.tti[0]
    with pytest.raises(ConfigError):
        split_train_test(small_trace, 1.0)


def test_correlation_report_oracle(rng):
    x = rng.integers(0, 2, (500, 3)).astype(np.uint8)
    x[:, 2] = 1  # constant bit
    rho = correlation_report(x, lag=1)
    ref = np.corrcoef(x[1:, 0], x[:-1, 1])[0, 1]
    assert rho.shape == (3, 3)
    assert rho[0, 1] == pytest.approx(abs(ref))
    assert np.isnan(rho[2, 0]) and np.isnan(rho[0, 2])
    assert np.allclose(np.diag(correlation_report(x[:, :2], 0)), 1.0)


def test_trace_has_temporal_structure(small_trace):
    rho = correlation_report(small_trace, lag=1)
    assert np.nanmax(rho) > 0.5


def test_file_roundtrip(schema, small_trace, tmp_path):
    p = tmp_path / "t.dcit"
    save_trace(small_trace, p)
    back = load_trace(p, schema)
    assert trace_to_text(back) == trace_to_text(small_trace)
    assert back.tti_count == small_trace.tti_count
    save_trace(back, tmp_path / "u.dcit")
    assert hashlib.sha256(p.read_bytes()).digest() == hashlib.sha256((tmp_path / "u.dcit").read_bytes()).digest()


def test_file_errors(schema, small_trace, tmp_path):
    p = tmp_path / "t.dcit"
    save_trace(small_trace, p)
    data = p.read_bytes()
    (tmp_path / "cut.dcit").write_bytes(data[:-3])
    with pytest.raises(CorruptInputError):
        load_trace(tmp_path / "cut.dcit", schema)
    (tmp_path / "junk.dcit").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CorruptInputError):
        load_trace(tmp_path / "junk.dcit", schema)
    with pytest.raises(ConfigError):
        load_trace(p, DciSchema(schema.fields, eta=4))
