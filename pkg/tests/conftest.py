import numpy as np
import pytest

from nadc import array as qarray
from nadc.config import RunConfig
from nadc.core import synth_normalized, synth_scaled
from nadc.dynamics import default_options


@pytest.fixture(scope="session")
def ref_block():
    return synth_scaled()


@pytest.fixture(scope="session")
def ref_opts(ref_block):
    return default_options(ref_block)


@pytest.fixture(scope="session")
def classic2():
    return synth_normalized(2, "classic_signed")


@pytest.fixture(scope="session")
def calibrated(ref_block, ref_opts):
    """Default 6-block array calibrated to the ideal 16-level code boundaries."""
    cfg = RunConfig()
    spec = qarray.default_array(template=ref_block)
    return qarray.calibrate_refs(spec, cfg.target_transitions(), (cfg.vref_lo, cfg.vref_hi, cfg.vref_step),
                                 ref_opts, n_points=cfg.points, restarts=cfg.calibration_restarts,
                                 seed=cfg.seed)


def code_units_grid(n_bits, n_points):
    return np.linspace(-0.5, 2**n_bits - 0.5, n_points)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
