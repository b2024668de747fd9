import numpy as np
import pytest

from memchan import detector, scenario

# Corpus seed used by the detector and acceptance tests. Building it takes
# about a second, so share one instance across the whole session.
CORPUS_SEED = 2


@pytest.fixture(scope="session")
def corpus():
    return scenario.synthetic_corpus(CORPUS_SEED)


@pytest.fixture(scope="session")
def corpus_split(corpus):
    return detector.split_dataset(corpus, eval_frac=0.2, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
