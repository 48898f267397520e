import pytest

from phasekick.config import preset
from phasekick.harness import run

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion():
    """Recorder for the acceptance checklist printed after the run."""

    def record(label, ok):
        line = f"{label}: {'PASS' if ok else 'FAIL'}"
        _criterion_lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def localized_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pair_localized")
    return run(preset("pair-localized"), out_dir=out)


@pytest.fixture(scope="session")
def delocalized_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pair_delocalized")
    return run(preset("pair-delocalized"), out_dir=out)


@pytest.fixture(scope="session")
def weak_pulse_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("weak_pulse")
    return run(preset("weak-pulse"), out_dir=out)
