import pytest

CRITERIA = [f"A{i}" for i in range(1, 13)]


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    store = request.config.__dict__.setdefault("_acceptance_results", {})

    def record(cid, passed, detail):
        store[cid] = (bool(passed), detail)
        assert passed, f"{cid}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.__dict__.get("_acceptance_results")
    if store is None:
        return
    terminalreporter.section("acceptance criteria")
    for cid in CRITERIA:
        if cid in store:
            ok, detail = store[cid]
            terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"{cid} FAIL  (no result recorded: test errored or was not run)")
