import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conformal_abstention.records import Dataset  # noqa: E402

FOUR_POINT = [("a", 5, True), ("b", 3, False), ("c", 4, True), ("d", 1, False)]


@pytest.fixture
def four_point():
    """Scores {5,3,4,1} with matched {T,F,T,F}."""
    return Dataset.from_arrays([s for _, s, _ in FOUR_POINT], [m for _, _, m in FOUR_POINT],
                               ids=[i for i, _, _ in FOUR_POINT])


@pytest.fixture
def four_point_jsonl(tmp_path):
    path = tmp_path / "four.jsonl"
    path.write_text("".join(
        f'{{"id": "{i}", "score": {s}, "matched": {str(m).lower()}}}\n' for i, s, m in FOUR_POINT
    ))
    return path


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
