import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedpatch.nn import NetworkSpec, init_weights


@pytest.fixture
def tiny_spec():
    # 8x8 input, two blocks: small enough for loop-based oracles
    return NetworkSpec(8, 3, ((4, 1), (6, 1)), seed=11)


@pytest.fixture
def tiny_weights(tiny_spec):
    return init_weights(tiny_spec)


def random_batch(spec, n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, spec.input_side, spec.input_side, spec.input_channels),
                   dtype=np.float32)
    y = rng.integers(0, 2, n).astype(np.uint8)
    return x, y
