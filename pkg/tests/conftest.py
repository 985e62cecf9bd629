import pytest

from hyperfk import acceptance

_RESULTS = {}


@pytest.fixture(scope="session")
def acceptance_results(tmp_path_factory):
    """Run the whole acceptance suite once and index the results by criterion number."""
    if not _RESULTS:
        out = tmp_path_factory.mktemp("acceptance")
        for res in acceptance.run_all(out, workers=1, seed=acceptance.DEFAULT_SEED, echo=False):
            _RESULTS[res.number] = res
    return _RESULTS


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[number].line())
    passed = sum(r.passed for r in _RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(_RESULTS)} acceptance criteria passed")
