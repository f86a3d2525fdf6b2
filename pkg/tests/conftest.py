import numpy as np
import pytest

from taxsim.model import Category, Params, Population, rng_stream


@pytest.fixture
def params():
    return Params(seed=7)


@pytest.fixture
def rng():
    return rng_stream(2024, 0)


def make_population(categories, capital=None, believeness=None):
    cats = np.asarray([int(c) for c in categories], dtype=np.int8)
    n = len(cats)
    cap = np.zeros(n) if capital is None else np.asarray(capital, dtype=float)
    bel = np.ones(n) if believeness is None else np.asarray(believeness, dtype=float)
    return Population(cats, cap, bel)


T, E, M = Category.TAXPAYER, Category.EVADER, Category.MIXED


# one pass/fail line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> bool:
    line = f"[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
