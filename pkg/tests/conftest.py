import hypothesis

hypothesis.settings.register_profile(
    "aquacast", max_examples=50, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("aquacast")

_acceptance_results = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_results:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(_acceptance_results):
            status = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{status}  {name}")
