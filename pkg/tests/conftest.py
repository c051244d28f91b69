import numpy as np
import pytest

from critlab.config import EnvConfig, SenseParams


@pytest.fixture
def env():
    return EnvConfig()


@pytest.fixture
def sp():
    return SenseParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY = [
    "network.vision_widths=[16]", "network.head_widths=[16]", "network.fusion_width=16",
    "sac.batch=32", "sac.gradient_steps=2", "sac.buffer_capacity=1024", "sac.update_every=64",
    "train.eval_episodes=4", "train.eval_interval=256", "train.bc_batch=32", "train.bc_gradient_steps=2",
]


@pytest.fixture
def tiny_run():
    """Small network and budgets so that whole runs take a second or two."""
    from critlab.config import load_config
    from critlab.learners import RunSpec

    def make(*extra):
        return RunSpec.from_config(load_config(None, TINY + list(extra)))
    return make
