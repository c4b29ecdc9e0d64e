import numpy as np
import pytest

from amsloc.evaluation import build_training_set, train_model
from amsloc.pipeline import FeaturePipeline
from amsloc.scene import NOISE_TYPES, SceneSpec


def mini_specs(seed=0, snr=20.0, duration_s=10.0):
    """72 directions x 1 file, noise type rotating with direction."""
    return [SceneSpec(float(5 * a), snr, f"synth:{a % 3}", NOISE_TYPES[a % 3], duration_s,
                      int(np.random.SeedSequence([seed, a]).generate_state(1)[0]))
            for a in range(72)]


@pytest.fixture(scope="session")
def mini_training():
    pipe = FeaturePipeline()
    x, az = build_training_set(mini_specs(), pipe)
    return x, az, pipe


@pytest.fixture(scope="session")
def mini_model(mini_training):
    x, az, pipe = mini_training
    return train_model(x, az, pipe, seed=0)


@pytest.fixture(scope="session")
def corpus_model():
    """Ensemble trained on the default 72 x 18 corpus, rendered in memory (several minutes)."""
    from amsloc.scene import corpus_specs
    pipe = FeaturePipeline()
    x, az = build_training_set(corpus_specs(18, seed=0), pipe)
    return train_model(x, az, pipe, seed=0)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
