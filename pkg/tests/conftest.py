import os
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import hypothesis
import pytest
import torch

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

torch.set_num_threads(1)

ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rec():
    return record


@dataclass
class PipelineRun:
    root: Path
    seconds: float


def _pipeline(root: Path, seed: int, in_process: bool) -> PipelineRun:
    t0 = time.perf_counter()
    steps = [
        ["synth", "--seed", str(seed), "--out", str(root / "data")],
        ["train", "--data", str(root / "data"), "--out", str(root), "--seed", str(seed)],
        ["score", "--data", str(root / "data"), "--out", str(root)],
        ["eval", "--data", str(root / "data"), "--out", str(root), "--mode", "event"],
    ]
    for argv in steps:
        if in_process:
            from stan.cli import main
            code = main(argv)
        else:
            code = subprocess.run([sys.executable, "-m", "stan.cli", *argv], capture_output=True).returncode
        assert code == 0, f"stan {argv[0]} exited with {code}"
    return PipelineRun(root, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Full synth -> train -> score -> eval pipeline on the seeded desk corpus."""
    return _pipeline(tmp_path_factory.mktemp("desk_run"), 7, in_process=True)


@pytest.fixture(scope="session")
def desk_rerun(tmp_path_factory):
    """The same pipeline again, in a fresh interpreter."""
    return _pipeline(tmp_path_factory.mktemp("desk_rerun"), 7, in_process=False)
