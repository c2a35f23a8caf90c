import numpy as np
import pytest

from milstab.data import SynthConfig, generate_synthetic

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth_small():
    """10+10 bags, 5 instances each, one witness per positive bag."""
    return generate_synthetic(SynthConfig(n_pos_bags=10, n_neg_bags=10, inst_per_bag=5,
                                          d=3, witness_fraction=0.2, cluster_separation=6.0,
                                          seed=3))


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1].split("[")[0]
    if not name.startswith("test_criterion_"):
        return
    failed = report.failed
    if report.when == "call" or failed or report.skipped:
        prev = _ACCEPTANCE.get(name)
        if prev != "FAIL":
            _ACCEPTANCE[name] = "FAIL" if failed else ("SKIP" if report.skipped else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        number = int(name.split("_")[2])
        title = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {number:2d}  {_ACCEPTANCE[name]:4s}  {title}")
