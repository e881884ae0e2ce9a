import numpy as np
import pytest

from streamrev.ctcdec import TopTwo
from streamrev.encoder import EncoderConfig, EncoderState


@pytest.fixture
def cfg():
    return EncoderConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def feats(rng):
    return rng.standard_normal((24, 16))


@pytest.fixture
def state(cfg):
    return EncoderState.seeded(cfg, 42)


def spike(label, p1=0.9, p2=0.05):
    """A dominant frame for ``label`` (blank runner-up unless label is blank)."""
    return TopTwo(label, p1, 1 if label == 0 else 0, p2)


def stream(labels):
    return [spike(l) for l in labels]
