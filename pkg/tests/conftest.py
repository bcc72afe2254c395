def pytest_terminal_summary(terminalreporter):
    """Echo acceptance verdict lines after capture is torn down."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
