import numpy as np
import pytest

from trlab import kernels

BACKENDS = ["numpy"] + (["numba"] if kernels.numba is not None else [])
_DISPATCHED = ("rnnt_alpha_beta", "ctc_alpha_beta", "edit_counts")


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the dispatching kernel names to one explicit implementation."""
    suffix = "_nb" if request.param == "numba" else "_np"
    for name in _DISPATCHED:
        monkeypatch.setattr(kernels, name, getattr(kernels, name + suffix))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
