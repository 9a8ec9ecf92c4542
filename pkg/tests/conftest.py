import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nerfsearch.data import (ProceduralSceneSpec, Sphere, default_scene_spec,
                             generate_procedural)
from nerfsearch.field import ArchitectureDescriptor, CellConfig


@pytest.fixture(scope="session")
def desk_scene():
    """Default procedural scene (64x64, 20 train / 5 eval)."""
    dataset, oracle = generate_procedural(default_scene_spec(seed=0))
    return dataset, oracle


@pytest.fixture(scope="session")
def tiny_scene():
    """Small, cheap scene for fast training tests."""
    spec = ProceduralSceneSpec(
        spheres=[Sphere(center=(0.4, 0.0, 0.0), radius=0.45, rgb=(0.9, 0.2, 0.2),
                        density=8.0),
                 Sphere(center=(-0.4, 0.2, 0.1), radius=0.35, rgb=(0.2, 0.4, 0.9),
                        density=10.0)],
        image_size=(16, 16), n_train=6, n_eval=2, seed=1)
    dataset, oracle = generate_procedural(spec)
    return dataset, oracle


@pytest.fixture
def xxs_descriptor():
    return ArchitectureDescriptor(coarse=CellConfig((2, 1, 1), (9, 11, 12)),
                                  fine=CellConfig((2, 1, 1), (16, 18, 20)))


@pytest.fixture
def unit_dirs():
    def make(n, seed=0):
        d = np.random.default_rng(seed).normal(size=(n, 3))
        return d / np.linalg.norm(d, axis=1, keepdims=True)
    return make
