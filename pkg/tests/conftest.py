import numpy as np
import pytest
from hypothesis import settings

from roga.diffcore import DomainBatch, ModelSpec
from roga.models import InitSpec, init_params

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def random_batch(rng, n, d, domain_id=0):
    x = rng.standard_normal((n, d))
    y = (np.arange(n) % 2).astype(float)
    return DomainBatch(x, rng.permutation(y), domain_id)


def random_mlp(rng, d=None, hidden=None, activation="tanh"):
    d = d or int(rng.integers(2, 5))
    hidden = hidden if hidden is not None else [int(rng.integers(2, 6))]
    spec = ModelSpec.mlp(d, hidden, activation)
    params = init_params(spec, InitSpec("glorot_uniform", int(rng.integers(2**32))))
    # non-zero biases so every coordinate is exercised
    params = params + 0.1 * rng.standard_normal(params.shape[0])
    return spec, params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# (criterion, passed, detail) lines reported by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
