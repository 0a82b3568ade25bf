import numpy as np
import pytest
import torch

from dcizip.schema import default_schema
from dcizip.tracegen import SimConfig, simulate, split_train_test

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def small_trace(schema):
    return simulate(SimConfig(tti_count=1200, seed=3), schema)


@pytest.fixture(scope="session")
def small_split(small_trace):
    return split_train_test(small_trace, 0.1)


@pytest.fixture(scope="session")
def tiny_models(schema, small_split):
    """One briefly trained transformer and RNN for UE 0 (quality irrelevant)."""
    from dcizip.models import RnnConfig, TrainConfig, TransformerConfig, train_rnn, train_transformer
    from dcizip.pipeline import field_entropies, sort_fields

    train, _ = small_split
    bits = train.ues[0].bits
    order = sort_fields(field_entropies(bits, schema)).order
    tcfg = TrainConfig(epochs=1, seed=1)
    tr = train_transformer(schema, bits, TransformerConfig(L=3, d_model=32, heads=4, d_ff=64), tcfg, order)
    rnn = train_rnn(schema, bits, RnnConfig(L=2, hidden=32, embed=8), tcfg)
    return tr, rnn


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record and print one pass/fail line for an acceptance criterion."""
    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
