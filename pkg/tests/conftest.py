import json
import sys

import pytest

from turbokoop.cli import main

SMALL = {
    "seed": 3,
    "generator": {"n_train": 2, "train_duration": 30.0, "test_duration": 30.0},
    "dictionary": {"num_functions": 20},
    "narx": {"max_epochs": 3},
    "sweep": {"rbf_counts": [0, 10, 20]},
}


def write_config(path, out_dir, **extra):
    cfg = json.loads(json.dumps(SMALL))
    cfg["out_dir"] = str(out_dir)
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return path


def run_pipeline(root):
    """gen-data, fit, fit-narx, evaluate on a small config rooted at ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    cfg = write_config(root / "config.json", root / "run")
    for cmd in ("gen-data", "fit", "fit-narx", "evaluate"):
        code = main([cmd, "--config", str(cfg)])
        assert code == 0, f"{cmd} exited with {code}"
    return cfg, root / "run"


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("small"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num][1])
