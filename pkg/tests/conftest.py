import numpy as np
import pytest

from mmwave_handover.config import ScenarioConfig


@pytest.fixture
def tiny_cfg():
    """Short episodes, default physics; fast enough for unit tests."""
    return ScenarioConfig(duration_s=2.0, train_episodes=2, eval_episodes=2,
                          warmup_steps=40)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
