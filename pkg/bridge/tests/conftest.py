import os
import sys
from pathlib import Path

import pytest

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

# the selector package lives one level up; contract tests drive its CLI
PRIMARY_SRC = Path(__file__).resolve().parents[2] / "src"


@pytest.fixture()
def primary_env():
    env = dict(os.environ)
    env["PYTHONPATH"] = str(PRIMARY_SRC) + os.pathsep + env.get("PYTHONPATH", "")
    return env


@pytest.fixture()
def primary_cmd():
    return [sys.executable, "-m", "sras.cli"]
