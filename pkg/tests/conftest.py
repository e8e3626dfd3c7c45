import pytest

from cascadekit.records import assign_folds
from cascadekit.synth import WorldConfig, generate_world


@pytest.fixture(scope="session")
def small_world():
    """400-sample directional world with folds; shared across tests."""
    ds = generate_world(
        WorldConfig(n=400, a_small=0.7, a_large=0.85, layer_signal=1.2, embed_signal=1.2, seed=5)
    )
    return assign_folds(ds, 5, seed=1)
