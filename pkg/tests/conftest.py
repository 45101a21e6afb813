"""Shared test wiring: the acceptance-criterion recorder.

Each acceptance test reports one line per criterion; at session end the
collected lines are written to ``acceptance_results.txt`` at the repo root.
The file content is deterministic given the pinned seeds, so two runs of the
full suite produce byte-identical results files.
"""

from pathlib import Path

import pytest

_RESULTS = {}
_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def acceptance_record():
    def record(number: int, name: str, passed: bool, detail: str = ""):
        _RESULTS[number] = (name, passed, detail)
        status = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"ACCEPTANCE {number:02d} {name}: {status}{suffix}")

    return record


def pytest_sessionfinish(session, exitstatus):
    if not _RESULTS:
        return
    lines = []
    for number in sorted(_RESULTS):
        name, passed, detail = _RESULTS[number]
        status = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        lines.append(f"{number:02d} {name}: {status}{suffix}")
    (_ROOT / "acceptance_results.txt").write_text("\n".join(lines) + "\n")
