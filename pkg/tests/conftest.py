import numpy as np
import pytest

from wiploc import codec


@pytest.fixture(scope="session")
def books():
    return codec.default_codebooks()


def hadamard_oracle(k: int) -> np.ndarray:
    """Binary Hadamard rows from the parity formula H[i, j] = (-1)^popcount(i & j)."""
    n = 2**k
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    parity = np.vectorize(lambda x: bin(x).count("1") % 2)(i & j)
    return (parity == 0).astype(np.uint8)


_RUNS: dict = {}


def bundled_run(name: str):
    """Cached (report, traces) for a bundled scenario at its own seed."""
    from wiploc.simcore.metrics import run
    from wiploc.simcore.scenario import load_scenario

    if name not in _RUNS:
        _RUNS[name] = run(load_scenario(f"experiments/{name}"))
    return _RUNS[name]


ACCEPTANCE: list[str] = []


def acceptance_line(number: int, ok: bool, text: str) -> str:
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
