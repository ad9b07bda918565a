import sys

import numpy as np
import pytest

from neuralbp import kernels
from neuralbp.codes import bch, hamming74, single_parity_check


@pytest.fixture(scope="session")
def bch63_36():
    return bch(63, 36)


@pytest.fixture(scope="session")
def bch63_45():
    return bch(63, 45)


@pytest.fixture(scope="session")
def hamming():
    return hamming74()


@pytest.fixture(scope="session")
def spc4():
    return single_parity_check(4)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def channel_llr(code, ebn0_db, frames, rng, all_zeros=True):
    """Noisy all-zeros (or random codeword) LLRs, independent of the channel module."""
    sigma2 = 1.0 / (2.0 * code.rate * 10 ** (ebn0_db / 10))
    if all_zeros:
        bits = np.zeros((frames, code.n), dtype=np.uint8)
    else:
        msg = rng.integers(0, 2, size=(frames, code.k))
        bits = (msg @ code.g % 2).astype(np.uint8)
    y = (1.0 - 2.0 * bits) + np.sqrt(sigma2) * rng.standard_normal((frames, code.n))
    return 2.0 * y / sigma2, bits


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
