"""Fixtures build datasets exclusively through the shapeprobe CLI; the
harness is exercised as a downstream consumer of the exchange formats."""
import json
import subprocess

import pytest

POOL = "procedural:7:48"
UNSEEN = "procedural:99:24"
DESK_CONFIG = {"canvas": [64, 64], "size_range": [20.0, 32.0]}


def cli(*args):
    proc = subprocess.run(["shapeprobe", *(str(a) for a in args)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def harness_cli(*args):
    return subprocess.run(["shapeprobe-harness", *(str(a) for a in args)],
                          capture_output=True, text=True)


@pytest.fixture(scope="session")
def mini_sets(tmp_path_factory):
    """Tiny 64x64 splits for mechanics tests (12 train / 8 val scenes)."""
    root = tmp_path_factory.mktemp("mini")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(DESK_CONFIG))
    cli("gen", "--config", cfg, "--seed", 301, "--n", 12,
        "--out", root / "train", "--pool", POOL)
    cli("gen", "--config", cfg, "--seed", 302, "--n", 8,
        "--out", root / "val", "--pool", POOL)
    cli("probe", root / "val", "--kind", "rm", "--seed", 311,
        "--out", root / "rm", "--unseen", UNSEEN)
    return root
