import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sbde.types import BinaryMask, RasterImage


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240901)


@pytest.fixture
def gray_image(np_rng) -> RasterImage:
    return RasterImage(np_rng.integers(0, 256, (24, 32), dtype=np.uint8))


@pytest.fixture
def rgb_image(np_rng) -> RasterImage:
    return RasterImage(np_rng.integers(0, 256, (24, 32, 3), dtype=np.uint8))


def random_mask(rng, h: int, w: int, density: float = 0.4) -> BinaryMask:
    return BinaryMask((rng.random((h, w)) < density).astype(np.uint8))
