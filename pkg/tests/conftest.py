import pytest

CRITERIA = pytest.StashKey[dict]()
N_CRITERIA = 9


def pytest_configure(config):
    config.stash[CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """Recorder for acceptance verdicts: ``criterion(number, passed, detail)``."""
    store = request.config.stash[CRITERIA]

    def record(number, passed, detail=""):
        store[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash[CRITERIA]
    if not store:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in store:
            passed, detail = store[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
