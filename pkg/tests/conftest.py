import json
from pathlib import Path

import pytest

from qha.config import load_config
from qha.runner import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

#: criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="session")
def shipped_run(tmp_path_factory):
    """Run a shipped config once per session; ``shipped_run(name, tag)``."""
    cache = {}

    def _run(name: str, tag: str = "a", **overrides):
        key = (name, tag, json.dumps(overrides, sort_keys=True))
        if key not in cache:
            out = tmp_path_factory.mktemp(f"{name}-{tag}")
            cfg = load_config(str(CONFIGS / f"{name}.json"), out_dir=str(out))
            if overrides:
                cfg = cfg.replace(**overrides)
            cache[key] = run(cfg)
        return cache[key]

    return _run
