import pytest

# criterion number -> (title, passed, note); filled by the acceptance suite
VERDICTS = {}


class Verdict:
    def __init__(self, number, title):
        self.number, self.title, self.notes = number, title, []

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        VERDICTS[self.number] = (self.title, exc_type is None, "; ".join(self.notes))
        return False


@pytest.fixture
def criterion():
    return Verdict


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        title, ok, note = VERDICTS[number]
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({note})" if note else ""))
