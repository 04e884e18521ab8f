import pytest

from mlqns.sensor import REFERENCE_DEVICE, LevelStructure, solve_levels


@pytest.fixture(scope="session")
def device_levels():
    return solve_levels(REFERENCE_DEVICE)


@pytest.fixture(scope="session")
def qubit_levels(device_levels):
    """Two-level truncation sharing the reference device's 0-1 transition."""
    return LevelStructure.from_arrays([0.0, device_levels.level_freqs[1]], [1.0],
                                      [0.0, device_levels.flux_sens[1]])


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num = mark.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "setup" and not rep.failed:
        return
    _ACCEPTANCE.setdefault(num, []).append(("PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[num]
        status = "PASS" if all(p[0] == "PASS" for p in parts) else "FAIL"
        detail = "; ".join(p[1] for p in parts if p[1])
        line = f"criterion {num:2d}: {status}"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
