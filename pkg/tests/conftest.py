import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from alchemloop.selfies import ALPHABET, decode

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

token_lists = st.lists(st.sampled_from(ALPHABET), min_size=0, max_size=40)
molecules = token_lists.map(lambda t: decode(tuple(t)))


def random_molecules(n, seed=0, max_len=30, min_atoms=1):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        k = int(rng.integers(1, max_len + 1))
        m = decode(tuple(ALPHABET[i] for i in rng.integers(len(ALPHABET), size=k)))
        if len(m.atoms) >= min_atoms:
            out.append(m)
    return out


@pytest.fixture(scope="session")
def random_mols():
    return random_molecules(2000, seed=11)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in results.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
