import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Report one PASS/FAIL line for an acceptance criterion, whatever the assertion outcome."""
    state = {"detail": ""}

    def note(detail):
        state["detail"] = detail

    yield note
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"{status}  {request.node.name}  {state['detail']}".rstrip()
    _LINES.append(line)
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
