import json

import pytest

SMALL_CONFIG = {
    "schema_version": 1,
    "root_seed": 7,
    "sources": {
        "gaussian": {"kind": "iid-marginal", "marginal": "normal"},
        "sphere": {"kind": "sphere-uniform"},
    },
    "grid": {"n": [32], "k": [1], "t": [1.0], "epsilon": [1.0]},
    "budgets": {"reps": 4, "n_outer": 300, "m_inner": 256, "m_samples": 2000, "n_pairs": 2000,
                "n_samples": 2000, "var_reps": 6, "gkp_points": 500, "logdev_samples": 5000},
    "checks": [
        {"name": "thm2_kl", "sources": ["gaussian", "sphere"]},
        {"name": "thm1_w2", "sources": ["gaussian"]},
        {"name": "edkl_alt", "sources": ["sphere"]},
        "gkp_inequality",
        "log_dev",
    ],
    "sweep": {"estimates": ["expected_w2"]},
    "runtime_ceiling_s": 600,
}


@pytest.fixture
def small_config():
    return json.loads(json.dumps(SMALL_CONFIG))


@pytest.fixture
def small_config_path(tmp_path, small_config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_config))
    return path


ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def criterion():
    """Record one pass/fail summary line per acceptance criterion."""
    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
