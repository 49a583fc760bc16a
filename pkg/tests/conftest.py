from acceptance_registry import RESULTS


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, title, seconds, why = RESULTS[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f} s)"
        terminalreporter.write_line(line + (f"  -- {why}" if why else ""))
