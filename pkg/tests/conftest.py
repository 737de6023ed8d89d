import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from corefkit.config import Config


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_config():
    """Desk-size model config used wherever the defaults would be slow."""
    return Config(
        embed_dim=12,
        ffnn_size=16,
        ffnn_depth=1,
        feature_dim=4,
        dropout=0.0,
        max_span_width=4,
        max_antecedents=8,
        seed=7,
    )
