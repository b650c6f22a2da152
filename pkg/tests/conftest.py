"""Shared fixtures: procedural texture pools and a paper-scale shape-only
benchmark reused by probe, oracle and acceptance tests.

Session-scoped datasets are generated once into the pytest tmp factory and
must be treated as read-only; tests derive their own outputs elsewhere.
"""
from __future__ import annotations

import pytest

from shapeprobe.generate import FeatureConfig, generate_dataset
from shapeprobe.probes import make_aff, make_rm, make_shuf
from shapeprobe.textures import procedural_pool

# Desk-scale pools: large enough for partition and coverage statistics,
# small enough that pool construction stays in milliseconds.
SEEN_POOL_SEED, SEEN_POOL_COUNT = 7, 48
UNSEEN_POOL_SEED, UNSEEN_POOL_COUNT = 99, 24

PAPER_N = 200
PAPER_SEED = 1207
TRAIN_SEED = 1206


def desk_config(**kw) -> FeatureConfig:
    """128x128 scenes with proportionally scaled objects; fast to render."""
    base = dict(canvas=(128, 128), size_range=(40.0, 64.0))
    base.update(kw)
    return FeatureConfig(**base)


@pytest.fixture(scope="session")
def seen_pool():
    return procedural_pool(SEEN_POOL_SEED, SEEN_POOL_COUNT)


@pytest.fixture(scope="session")
def unseen_pool():
    return procedural_pool(UNSEEN_POOL_SEED, UNSEEN_POOL_COUNT)


@pytest.fixture(scope="session")
def paper_val(tmp_path_factory, seen_pool):
    """200-scene shape-only validation set at paper scale (256x256)."""
    root = tmp_path_factory.mktemp("bench") / "val"
    manifest = generate_dataset(FeatureConfig(), PAPER_N, PAPER_SEED, root,
                                seen_pool)
    return root, manifest


@pytest.fixture(scope="session")
def paper_train(tmp_path_factory, seen_pool):
    """Shape-only training split from a different master seed; oracles fit
    here and are probed on paper_val."""
    root = tmp_path_factory.mktemp("bench_train") / "train"
    manifest = generate_dataset(FeatureConfig(), 60, TRAIN_SEED, root,
                                seen_pool)
    return root, manifest


@pytest.fixture(scope="session")
def paper_probes(paper_val, unseen_pool, tmp_path_factory):
    """rm/aff/shuf probing sets derived from paper_val."""
    val_dir, _ = paper_val
    root = tmp_path_factory.mktemp("probes")
    make_rm(val_dir, root / "rm", unseen_pool, seed=31)
    make_aff(val_dir, root / "aff", seed=32)
    make_shuf(val_dir, root / "shuf", seed=33)
    return {"val": val_dir, "rm": root / "rm", "aff": root / "aff",
            "shuf": root / "shuf"}
