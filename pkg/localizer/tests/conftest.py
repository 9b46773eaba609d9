import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))

CACHE = TESTS_DIR / ".cache" / "dataset.jsonl"


@pytest.fixture(scope="session")
def dataset_path() -> Path:
    """300-run dataset produced by the upstream workbench CLI, cached on disk."""
    if not CACHE.exists():
        from flowloc.cli import main as flowloc_main
        CACHE.parent.mkdir(parents=True, exist_ok=True)
        code = flowloc_main([
            "pipeline", "--out", str(CACHE.parent), "--seed", "17",
            "--n-runs", "300", "--n-devices", "64", "--duration", "1100",
            "--p-trans", "0.7", "--p-det", "0.7",
        ])
        assert code == 0, "dataset generation failed"
    return CACHE
