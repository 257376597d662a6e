import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SCENARIO_YAML = """\
schema_version: 1
n_steps: 300
seed: 21
events:
  - {kind: pl0_shift, step: 150, station: 0, delta_db: 6.0}
"""


@pytest.fixture
def run_dir(tmp_path):
    """A scenario file and a run config referencing it, both small enough for quick tests."""
    (tmp_path / "scenario.yaml").write_text(SCENARIO_YAML)
    (tmp_path / "run.yaml").write_text(
        "schema_version: 1\n"
        "scenario: scenario.yaml\n"
        "grid: {nx: 20, ny: 20}\n"
        "checkpoints: [100, 300]\n"
        "sweep: {lambda_dict: [0.0, 0.01], lambda_kernel: [0.0, 0.001]}\n"
    )
    return tmp_path


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
