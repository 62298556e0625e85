"""Collects acceptance verdicts and prints one line per criterion at the end."""

import pytest

_VERDICTS: dict[str, tuple[str, str, str]] = {}


class Recorder:
    def __call__(self, number: str, title: str, passed: bool, detail: str = "") -> None:
        _VERDICTS[number] = ("PASS" if passed else "FAIL", title, detail)
        assert passed, f"criterion {number} ({title}) failed: {detail}"

    def skip(self, number: str, title: str, reason: str) -> None:
        _VERDICTS[number] = ("SKIP", title, reason)
        pytest.skip(reason)


@pytest.fixture(scope="session")
def accept():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS, key=lambda n: (int("".join(c for c in n if c.isdigit())), n)):
        verdict, title, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:<3} {verdict}  {title}  [{detail}]")


def pytest_runtest_logreport(report):
    # an acceptance test that crashed before reaching its verdict still gets a line
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.when == "call" and report.failed and name.startswith("test_criterion_"):
        number = name.split("_")[2]
        if number not in _VERDICTS:
            _VERDICTS[number] = ("FAIL", name, "error before verdict: " + report.longreprtext.splitlines()[-1][:120])
