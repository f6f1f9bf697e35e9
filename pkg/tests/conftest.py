import pytest

from chemotaxis.config import build_config

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict; lines are repeated in the terminal summary."""

    def report(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        print(line)
        VERDICTS.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def make_config(**overrides):
    base = dict(dim=1, cells_x=16, chi=1.0, r=1.0, mu=1.0, alpha=1.0, beta=1.0, k=0.5,
                t_end=0.5, ic_kind="constant")
    base.update(overrides)
    return build_config(base)
