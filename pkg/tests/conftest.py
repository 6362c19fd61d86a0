import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


class Verdicts:
    """Collects one verdict per acceptance criterion."""

    def record(self, number: int, ok: bool, detail: str) -> bool:
        prev = _VERDICTS.get(number)
        if prev is not None:
            ok, detail = prev[0] and ok, f"{prev[1]}; {detail}"
        _VERDICTS[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        ok, detail = _VERDICTS[number]
        terminalreporter.write_line(f"{number:2d} {'PASS' if ok else 'FAIL'}  {detail}")
